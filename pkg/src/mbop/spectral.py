"""Block Jacobi truncations, their eigenvalues, and the Gershgorin disk.

The zeros of V^(k)_n are the eigenvalues of the nN x nN truncation
``J^(k)_n`` with diagonal blocks B_{k+i}, superdiagonal A_{k+i} and
subdiagonal C_{k+i+1}.  The limit sets of these zeros are not computable; the
finite proxies are the zero sets themselves and the disk |z| <= M.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import UnboundedCoefficients
from .recurrence import gt_values, v_values

DEFAULT_PROBE_DEPTH = 64
COEFFICIENT_CAP = 1e12


@dataclass(frozen=True)
class BlockJacobi:
    rc: object
    k: int = 0

    def truncate(self, n):
        return truncate(self.rc, self.k, n)


def truncate(rc, k, n):
    """Leading nN x nN section of the shifted block Jacobi matrix."""
    if n < 1:
        raise ValueError("n must be >= 1")
    N = rc.dim
    J = np.zeros((n * N, n * N), dtype=complex)
    for i in range(n):
        rows = slice(i * N, (i + 1) * N)
        J[rows, rows] = rc.b(k + i)
        if i + 1 < n:
            nxt = slice((i + 1) * N, (i + 2) * N)
            J[rows, nxt] = rc.a(k + i)
            J[nxt, rows] = rc.c(k + i + 1)
    return J


@dataclass
class ZeroSet:
    k: int
    n: int
    zeros: list = field(default_factory=list)

    def __len__(self):
        return len(self.zeros)

    def rows(self):
        return [(self.k, self.n, z.real, z.imag) for z in self.zeros]

    def to_csv(self, header=True):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(["k", "n", "re", "im"])
        for row in self.rows():
            w.writerow([row[0], row[1], repr(row[2]), repr(row[3])])
        return buf.getvalue()


def zeros(rc, k, n):
    """Zeros of V^(k)_n (with multiplicity) as eigenvalues of J^(k)_n."""
    return ZeroSet(k, n, linalg.eigenvalues(truncate(rc, k, n)))


def g_zeros(rc, k, n):
    """Zeros of G^(k)_n from the transposed truncation."""
    return ZeroSet(k, n, linalg.eigenvalues(truncate(rc, k, n).T))


def determinant_smallness(rc, k, n, z, side="V"):
    """``|det P(z)| / ‖P(z)‖^N`` for P = V^(k)_n or G^(k)_n: zero at a zero of P."""
    vals = v_values(rc, z, n, k=k) if side == "V" else gt_values(rc, z, n, k=k)
    P = vals[n]
    nrm = np.linalg.norm(P, 2)
    if nrm == 0:
        return 0.0
    return float(abs(np.linalg.det(P / nrm)))


def pair_zero_sets(first, second, tol=1e-8):
    """Greedy nearest-neighbour matching of two multisets of complex numbers.

    Returns ``(matched, worst_distance)``; ``matched`` is True when sizes agree
    and every pair lies within ``tol`` (relative to max(1, |z|)).
    """
    a = list(first.zeros if isinstance(first, ZeroSet) else first)
    b = list(second.zeros if isinstance(second, ZeroSet) else second)
    if len(a) != len(b):
        return False, np.inf
    worst = 0.0
    remaining = b[:]
    for z in a:
        j = min(range(len(remaining)), key=lambda i: abs(remaining[i] - z))
        d = abs(remaining.pop(j) - z) / max(1.0, abs(z))
        worst = max(worst, d)
    return worst <= tol, worst


def _row_bound(A, B, C):
    total = np.abs(B).sum(axis=1) + np.abs(A).sum(axis=1)
    if C is not None:
        total = total + np.abs(C).sum(axis=1)
    return float(total.max())


def gershgorin_bound(rc, probe_depth=None):
    """Radius M of a disk containing every truncation eigenvalue of every shift.

    M is the largest absolute row sum of a scalar row of the block Jacobi
    matrix, taken over the probed block rows and the constant tail.  Without a
    tail the value only covers the probed depth, and growth past
    ``COEFFICIENT_CAP`` raises :class:`UnboundedCoefficients`.
    """
    depth = probe_depth if probe_depth is not None else DEFAULT_PROBE_DEPTH
    if rc.has_tail:
        depth = max(rc.cutoff + 2, probe_depth or 0)
    M = 0.0
    for j in range(depth):
        try:
            C = rc.c(j) if j >= 1 else None
            row = _row_bound(rc.a(j), rc.b(j), C)
        except IndexError:
            break
        if not np.isfinite(row) or row > COEFFICIENT_CAP:
            raise UnboundedCoefficients(f"coefficient row {j} exceeds {COEFFICIENT_CAP:g}")
        M = max(M, row)
    if rc.has_tail:
        M = max(M, _row_bound(*rc.tail))
    return M
