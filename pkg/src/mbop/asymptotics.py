"""Convergence studies for the limit theorems of block polynomial families.

Every studied quantity is a product of a growing and a decaying family
(``V_n^{-1} Q_n``, ``R_n^{-T} V_n^{-1}``, ...).  Forming the factors from raw
values loses about log10 cond(V_n) digits, which is hopeless past n of a
few dozen.  Instead each family is written as a product of one-step ratios

    V_n = P_n ... P_1,   G_n^T = P~_1 ... P~_n,
    Q_n = S_n ... S_0,   R_n^T = T_0 ... T_n,

(forward ratios for the dominant families, backward ratios for the minimal
ones) and the product is accumulated from the middle outward, so every
partial product stays bounded.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import linalg
from .errors import InsideSpectrum, UnboundedCoefficients
from .recurrence import (
    chebyshev_reference,
    forward_ratios,
    generate_family,
    ordered_product,
)
from .secondkind import (
    StieltjesSource,
    associated_transform,
    backward_ratios,
    second_kind,
    stieltjes_fixed_point,
)
from .spectral import gershgorin_bound

__all__ = [
    "Target",
    "ConvergenceStudy",
    "DEFAULT_GRID",
    "run_study",
    "run_studies",
    "decay_study",
    "delta_expansion",
    "scalar_limits",
    "chebyshev_reference",
]

DEFAULT_GRID = (5, 10, 20, 40, 80, 160)
# errors below max(NOISE_FLOOR, ROUNDING * n) * max(1, |limit|) count as round-off
NOISE_FLOOR = 1e-13
ROUNDING = 64 * np.finfo(float).eps
SHRINK = 1e-3


class Target(str, Enum):
    SCALAR_P_RATIO = "SCALAR_P_RATIO"
    SCALAR_Q_RATIO = "SCALAR_Q_RATIO"
    SCALAR_PQ_PRODUCT = "SCALAR_PQ_PRODUCT"
    MARKOV_V = "MARKOV_V"
    MARKOV_G = "MARKOV_G"
    RATIO_V = "RATIO_V"
    RATIO_G = "RATIO_G"
    DECAY_VQ = "DECAY_VQ"
    DECAY_GR = "DECAY_GR"
    DECAY_CROSS = "DECAY_CROSS"
    DECAY_CROSS_A = "DECAY_CROSS_A"
    RATIO_Q = "RATIO_Q"
    RATIO_R = "RATIO_R"
    PRODUCT_RV = "PRODUCT_RV"
    PRODUCT_GQ = "PRODUCT_GQ"
    K_ASSOC_V = "K_ASSOC_V"
    K_ASSOC_G = "K_ASSOC_G"
    UK_TRANSFORM = "UK_TRANSFORM"


SCALAR_TARGETS = {Target.SCALAR_P_RATIO, Target.SCALAR_Q_RATIO, Target.SCALAR_PQ_PRODUCT}
ASSOCIATED_TARGETS = {Target.MARKOV_V, Target.MARKOV_G, Target.K_ASSOC_V, Target.K_ASSOC_G}
DECAY_TARGETS = (Target.DECAY_VQ, Target.DECAY_GR, Target.DECAY_CROSS, Target.DECAY_CROSS_A)


def _matrix_json(m):
    return [[[float(v.real), float(v.imag)] for v in row] for row in np.asarray(m)]


@dataclass
class ConvergenceStudy:
    """Values of one limit sequence on an index grid, with their errors."""

    target_id: Target
    x: complex
    n_grid: list
    values: list
    limit: np.ndarray
    errors: list = field(default_factory=list)
    k: int | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.limit = np.asarray(self.limit, dtype=complex)
        if not self.errors:
            self.errors = [float(np.linalg.norm(v - self.limit, 2)) for v in self.values]
        if not all(np.isfinite(self.errors)):
            raise FloatingPointError(f"non-finite error in {self.target_id.value} study")

    def noise(self, i):
        """Round-off level of grid point i: grows linearly with the product length."""
        scale = max(1.0, float(np.linalg.norm(self.limit, 2)))
        return max(NOISE_FLOOR, ROUNDING * abs(self.n_grid[i])) * scale

    @property
    def decreasing(self):
        """Errors decrease over the last half of the grid (round-off level counts as settled)."""
        e = self.errors
        start = (len(e) - 1) // 2
        return all(e[i + 1] < e[i] or e[i + 1] <= self.noise(i + 1)
                   for i in range(start, len(e) - 1))

    @property
    def converged(self):
        if not self.errors:
            return False
        final, initial = self.errors[-1], self.errors[0]
        return self.decreasing and (final < SHRINK * initial
                                    or final <= self.noise(len(self.errors) - 1))

    @property
    def settled_at(self):
        """First grid index whose error is at round-off level, or None."""
        for i, (n, e) in enumerate(zip(self.n_grid, self.errors)):
            if e <= self.noise(i):
                return n
        return None

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "error"])
        for n, e in zip(self.n_grid, self.errors):
            w.writerow([n, repr(e)])
        return buf.getvalue()

    def summary(self):
        out = {
            "target": self.target_id.value,
            "x": [float(np.real(self.x)), float(np.imag(self.x))],
            "limit": _matrix_json(self.limit),
            "converged": bool(self.converged),
            "n_grid": list(self.n_grid),
            "errors": list(self.errors),
        }
        if self.k is not None:
            out["k"] = self.k
        out.update(self.extra)
        return out

    def to_json(self):
        return json.dumps(self.summary(), indent=2)


# ---------------------------------------------------------------------------
# limits


def scalar_limits(a, b, z):
    """Closed-form limits ``(p-ratio, q-ratio, p*q)`` for constant a, b.

    The square root r of (z-b)^2 - 4a^2 is the one making |z-b+r| the larger
    of the two candidates, so the p-ratio is the dominant root.
    """
    d = complex(z) - complex(b)
    r = np.sqrt(d * d - 4 * complex(a) ** 2)
    if abs(d + r) < abs(d - r):
        r = -r
    if abs(r) == 0:
        raise InsideSpectrum(f"z={z} is a branch point")
    return (d + r) / (2 * a), (d - r) / (2 * a), 1 / r


def _scalar_tail(rc):
    if rc.dim != 1:
        raise ValueError("scalar targets need N = 1")
    A, B, C = rc.tail
    a, b, c = complex(A[0, 0]), complex(B[0, 0]), complex(C[0, 0])
    if not np.isclose(a, c):
        raise ValueError("scalar targets need a symmetric tail (a = c)")
    return a, b


def _check_point(rc, x, force):
    if not rc.has_tail:
        raise UnboundedCoefficients("limit studies need a declared constant tail")
    if force:
        return
    M = gershgorin_bound(rc)
    if abs(x) <= M:
        raise InsideSpectrum(f"|x| = {abs(x):.6g} is inside the disk |z| <= {M:.6g}")


class _Ratios:
    """Lazily built ratio tables for one (rc, x)."""

    def __init__(self, rc, x, n_max):
        self.rc, self.x, self.n_max = rc, x, n_max
        self._fwd = {}
        self._inv = {}
        self._bwd = None
        self._tail = {}

    def forward(self, k=0):
        if k not in self._fwd:
            self._fwd[k] = forward_ratios(self.rc, self.x, self.n_max + 1, k=k)
        return self._fwd[k]

    def inverses(self, k=0):
        if k not in self._inv:
            p, pt = self.forward(k)
            self._inv[k] = ([None] + [linalg.inv(m, f"P_{j}") for j, m in enumerate(p[1:], 1)],
                            [None] + [linalg.inv(m, f"P~_{j}") for j, m in enumerate(pt[1:], 1)])
        return self._inv[k]

    def backward(self):
        if self._bwd is None:
            self._bwd = backward_ratios(self.rc, self.x, self.n_max + 1,
                                        tail_transform=lambda z: self.tail_transform("q"))
        return self._bwd

    def tail_transform(self, side):
        if side not in self._tail:
            self._tail[side] = stieltjes_fixed_point(*self.rc.tail, self.x, side)
        return self._tail[side]


def _value(target, n, k, tables, rc):
    p, pt = tables.forward()
    pi, pti = tables.inverses()
    if target in (Target.SCALAR_P_RATIO,):
        return p[n]
    if target is Target.SCALAR_Q_RATIO:
        return tables.backward().q_ratio(n)
    if target is Target.RATIO_V:
        return pi[n] @ rc.a_inv(n - 1)
    if target is Target.RATIO_G:
        return rc.c_inv(n) @ pti[n]
    if target is Target.RATIO_Q:
        return tables.backward().q_ratio(n) @ rc.c_inv(n)
    if target is Target.RATIO_R:
        return rc.a_inv(n - 1) @ tables.backward().r_ratio(n)
    br = tables.backward()
    if target is Target.PRODUCT_RV:
        # R_n^{-T} V_n^{-1} = A_n P_{n+1} - T_{n+1} C_{n+1}; the long product
        # amplifies rounding by the spread of the dominant growth rates
        return rc.a(n) @ p[n + 1] - br.r_ratio(n + 1) @ rc.c(n + 1)
    if target is Target.PRODUCT_GQ:
        # G_n^{-T} Q_n^{-1} = P~_{n+1} C_{n+1} - A_n S_{n+1}
        return pt[n + 1] @ rc.c(n + 1) - rc.a(n) @ br.q_ratio(n + 1)
    s = [br.q_ratio(j) for j in range(n + 1)]
    t = [br.r_ratio(j) for j in range(n + 1)]
    if target is Target.SCALAR_PQ_PRODUCT:
        return ordered_product(p[n:0:-1] + s[::-1], middle=n)
    if target is Target.DECAY_VQ:
        return ordered_product(pi[1:n + 1] + s[::-1], middle=n)
    if target is Target.DECAY_GR:
        # G_n^{-1} R_n = (R_n^T G_n^{-T})^T
        return ordered_product(t + pti[n:0:-1], middle=n + 1).T
    if target is Target.DECAY_CROSS:
        return ordered_product(pi[1:n] + [rc.c_inv(n)] + pti[n:0:-1], middle=n - 1)
    if target is Target.DECAY_CROSS_A:
        return ordered_product(pi[1:n + 1] + [rc.a_inv(n - 1)] + pti[n - 1:0:-1], middle=n)
    if target in (Target.MARKOV_V, Target.K_ASSOC_V):
        pk, _ = tables.forward(k)
        return ordered_product(pi[1:n + 1] + pk[n - k:0:-1], middle=n)
    if target in (Target.MARKOV_G, Target.K_ASSOC_G):
        _, ptk = tables.forward(k)
        return ordered_product(ptk[1:n - k + 1] + pti[n:0:-1], middle=n - k)
    raise ValueError(f"no value rule for {target}")


def _representation(target, n, k, tables, rc):
    """Associated-family products through the connection with the second kind.

    ``V_n^{-1} V^(k)_{n-k} = alpha_k - (V_n^{-1} Q_n) beta_k`` and its G-side
    mirror.  Only the decaying product is long, so this order is stable; it is
    kept as a second route to expose the rounding drift of the direct product.
    """
    br = tables.backward()
    pi, pti = tables.inverses()
    _, pt = tables.forward()
    p, _ = tables.forward()
    s = [br.q_ratio(j) for j in range(n + 1)]
    t = [br.r_ratio(j) for j in range(n + 1)]
    eye = np.eye(rc.dim, dtype=complex)
    if target in (Target.MARKOV_V, Target.K_ASSOC_V):
        alpha = ordered_product(t[:k], middle=0) @ rc.a(k - 1)
        gt = ordered_product(pt[1:k], middle=0) if k > 1 else eye
        beta = gt @ rc.a(k - 1)
        return alpha - ordered_product(pi[1:n + 1] + s[::-1], middle=n) @ beta
    alpha = rc.c(k) @ ordered_product(s[k - 1::-1], middle=0)
    v = ordered_product(p[k - 1:0:-1], middle=0) if k > 1 else eye
    beta = rc.c(k) @ v
    return alpha - beta @ ordered_product(t + pti[n:0:-1], middle=n + 1)


def _limit(target, k, tables, rc, src, x):
    eye = np.eye(rc.dim)
    if target in SCALAR_TARGETS:
        a, b = _scalar_tail(rc)
        lp, lq, lpq = scalar_limits(a, b, x)
        val = {Target.SCALAR_P_RATIO: lp, Target.SCALAR_Q_RATIO: lq,
               Target.SCALAR_PQ_PRODUCT: lpq}[target]
        return val * eye
    if target in DECAY_TARGETS:
        return np.zeros((rc.dim, rc.dim), dtype=complex)
    A, B, C = rc.tail
    if target in (Target.RATIO_V, Target.RATIO_G):
        return tables.tail_transform("v")
    if target in (Target.RATIO_Q, Target.RATIO_R):
        return tables.tail_transform("q")
    if target in (Target.PRODUCT_RV, Target.PRODUCT_GQ):
        return (linalg.inv(tables.tail_transform("v"), "F_{C,B,A}")
                - A @ tables.tail_transform("q") @ C)
    if target is Target.MARKOV_V:
        return src(x) @ rc.a(0)
    if target is Target.MARKOV_G:
        return rc.c(1) @ src(x)
    br = tables.backward()
    if target is Target.K_ASSOC_V:
        rt = ordered_product([br.r_ratio(j) for j in range(k)], middle=0)
        return rt @ rc.a(k - 1)
    if target is Target.K_ASSOC_G:
        q = ordered_product([br.q_ratio(j) for j in range(k - 1, -1, -1)], middle=0)
        return rc.c(k) @ q
    raise ValueError(f"no limit rule for {target}")


def _uk_study(rc, src, x, grid):
    k_max = max(grid)
    sk = second_kind(rc, src, x, k_max, warn=False)
    values, spread = [], []
    for k in grid:
        est_q, est_r = associated_transform(rc, src, k, x, sk=sk)
        values.append(est_q)
        spread.append(float(np.linalg.norm(est_q - est_r, 2)))
    limit = stieltjes_fixed_point(*rc.tail, x, "q")
    return ConvergenceStudy(Target.UK_TRANSFORM, x, list(grid), values, limit,
                            extra={"estimate_spread": spread})


def run_study(rc, src, target_id, x, n_grid=None, *, k=1, force=False):
    """Evaluate one limit sequence on ``n_grid`` and compare with its limit.

    ``k`` selects the associated family for K_ASSOC_V/K_ASSOC_G (MARKOV_* is
    k = 1).  For UK_TRANSFORM the grid runs over k instead of n.
    """
    target = Target(target_id)
    x = complex(x)
    _check_point(rc, x, force)
    if src is None:
        src = StieltjesSource.nevai_tail(rc)
    grid = list(n_grid) if n_grid is not None else list(DEFAULT_GRID)
    if not grid:
        raise ValueError("empty grid")
    if target is Target.UK_TRANSFORM:
        return _uk_study(rc, src, x, grid)
    if target in (Target.MARKOV_V, Target.MARKOV_G):
        k = 1
    if target in (Target.K_ASSOC_V, Target.K_ASSOC_G) and k < 1:
        raise ValueError("k must be >= 1")
    low = k + 1 if target in (Target.MARKOV_V, Target.MARKOV_G, Target.K_ASSOC_V,
                              Target.K_ASSOC_G) else 1
    if min(grid) < low:
        raise ValueError(f"{target.value} needs n >= {low}")
    tables = _Ratios(rc, x, max(grid))
    values = [_value(target, n, k, tables, rc) for n in grid]
    limit = _limit(target, k, tables, rc, src, x)
    extra = {}
    if target in ASSOCIATED_TARGETS:
        extra["route_gap"] = [float(np.linalg.norm(v - _representation(target, n, k, tables, rc), 2))
                              for n, v in zip(grid, values)]
    kk = k if target in (Target.K_ASSOC_V, Target.K_ASSOC_G) else None
    return ConvergenceStudy(target, x, grid, values, limit, k=kk, extra=extra)


def decay_study(rc, src, x, n_grid=None, *, force=False):
    """Norm sequences of the four products that tend to zero."""
    return [run_study(rc, src, t, x, n_grid, force=force) for t in DECAY_TARGETS]


def _thread_count(threads):
    if threads is not None:
        return max(1, int(threads))
    try:
        return max(1, int(os.environ.get("MBOP_THREADS", "1")))
    except ValueError:
        return 1


def run_studies(rc, src, jobs, n_grid=None, *, threads=None, force=False):
    """Run ``(target_id, x[, k])`` jobs in parallel; results keep job order."""
    def one(job):
        target, x, *rest = job
        return run_study(rc, src, target, x, n_grid, k=rest[0] if rest else 1, force=force)

    jobs = list(jobs)
    n = _thread_count(threads)
    if n == 1:
        return [one(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(one, jobs))


# ---------------------------------------------------------------------------
# expansion of the tail Chebyshev family in the associated basis


def delta_expansion(rc, ell, k):
    """Left coefficients ``Delta_j`` with ``U_ell = sum_j Delta_j V^(k)_j``.

    U is the constant-coefficient family of the declared tail.  Coefficients
    are matched from the top degree down; each V^(k)_j has the nonsingular
    leading coefficient ``(A_{k+j-1} ... A_k)^{-1}``.
    """
    if not rc.has_tail:
        raise UnboundedCoefficients("the expansion needs a declared constant tail")
    if ell < 0 or k < 0:
        raise ValueError("ell and k must be >= 0")
    u, _ = chebyshev_reference(*rc.tail, n_max=ell)
    v = generate_family(rc, "V", k, n_max=ell)
    rem = u[ell]
    deltas = [None] * (ell + 1)
    for j in range(ell, -1, -1):
        top = rem.coeffs[j] if rem.coeffs.shape[0] > j else np.zeros((rc.dim, rc.dim))
        d = linalg.right_solve(top, v[j].coeffs[j])
        deltas[j] = d
        rem = rem - v[j].lmul(d)
    return deltas
