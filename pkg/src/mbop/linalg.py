"""Dense complex matrix kernels.

Everything here works on plain ``numpy`` arrays of shape ``(N, N)`` with a
complex dtype.  Inversions go through a reciprocal-condition test rather than
``det != 0`` so that the verdict does not depend on the scale of the input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import BranchCut, NoConvergence, SingularBlock

RCOND_TOL = 1e-12

SQRT_TOL = 1e-13
SQRT_MAXITER = 100


def as_matrix(m, dim=None):
    """Return ``m`` as a finite complex square matrix.

    Scalars are promoted to 1x1 matrices.  Raises ``ValueError`` on bad shape
    or non-finite entries.
    """
    arr = np.asarray(m, dtype=complex)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise ValueError(f"expected a square matrix, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"expected dimension {dim}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix has non-finite entries")
    return arr


def identity(dim):
    return np.eye(dim, dtype=complex)


def rcond(m):
    """Reciprocal 2-norm condition number, 0 for exactly singular input."""
    s = np.linalg.svd(m, compute_uv=False)
    if s[0] == 0:
        return 0.0
    return float(s[-1] / s[0])


def is_invertible(m, tol=RCOND_TOL):
    return rcond(m) > tol


def inv(m, name="matrix", tol=RCOND_TOL):
    """Inverse of ``m`` guarded by :func:`rcond`; raises :class:`SingularBlock`."""
    rc = rcond(m)
    if not rc > tol:
        raise SingularBlock(name, rc)
    return np.linalg.inv(m)


def right_solve(b, a):
    """Return ``b @ inv(a)`` without forming the inverse."""
    return np.linalg.solve(a.T, b.T).T


@dataclass(frozen=True)
class BlockMatrix2x2:
    """The 2N x 2N matrix ``[[a, b], [c, d]]`` kept as four N x N blocks."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        blocks = [as_matrix(x) for x in (self.a, self.b, self.c, self.d)]
        dims = {x.shape[0] for x in blocks}
        if len(dims) != 1:
            raise ValueError(f"blocks have mismatched dimensions {sorted(dims)}")
        for name, x in zip("abcd", blocks):
            object.__setattr__(self, name, x)

    @property
    def dim(self):
        return self.a.shape[0]

    def assemble(self):
        return np.block([[self.a, self.b], [self.c, self.d]])

    @classmethod
    def from_dense(cls, m):
        m = np.asarray(m, dtype=complex)
        n = m.shape[0] // 2
        if m.shape != (2 * n, 2 * n):
            raise ValueError(f"cannot split shape {m.shape} into 2x2 blocks")
        return cls(m[:n, :n], m[:n, n:], m[n:, :n], m[n:, n:])


def quasidet_last(m: BlockMatrix2x2, tol=RCOND_TOL):
    """Last quasideterminant ``d - c a^{-1} b`` (Schur complement of ``a``)."""
    if not is_invertible(m.a, tol):
        raise SingularBlock("a", rcond(m.a))
    return m.d - m.c @ np.linalg.solve(m.a, m.b)


def block_det(m: BlockMatrix2x2, tol=RCOND_TOL):
    """Determinant of the assembled matrix.

    Uses ``det(a) det(d - c a^{-1} b)`` when ``a`` passes the conditioning
    test and falls back to the dense 2N x 2N determinant otherwise.
    """
    if is_invertible(m.a, tol):
        return complex(np.linalg.det(m.a) * np.linalg.det(quasidet_last(m, tol)))
    return complex(np.linalg.det(m.assemble()))


def block_inverse(m: BlockMatrix2x2, tol=RCOND_TOL):
    """Blockwise inverse through the Schur complement of ``a``."""
    if not is_invertible(m.a, tol):
        raise SingularBlock("a", rcond(m.a))
    ainv = np.linalg.inv(m.a)
    schur = m.d - m.c @ ainv @ m.b
    if not is_invertible(schur, tol):
        raise SingularBlock("d - c a^-1 b", rcond(schur))
    sinv = np.linalg.inv(schur)
    ainv_b = ainv @ m.b
    c_ainv = m.c @ ainv
    return BlockMatrix2x2(
        ainv + ainv_b @ sinv @ c_ainv,
        -ainv_b @ sinv,
        -sinv @ c_ainv,
        sinv,
    )


def eigenvalues(m):
    """Eigenvalues with multiplicity, sorted by (real, imag).

    LAPACK ``geev`` does the balance / Hessenberg / shifted-QR sequence.
    """
    m = as_matrix(m)
    try:
        w = np.linalg.eigvals(m)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence("eigenvalues", 30 * m.shape[0]) from exc
    return sorted((complex(z) for z in w), key=lambda z: (z.real, z.imag))


def _on_branch_cut(w, scale):
    tol = 1e-12 * max(scale, 1e-300)
    return np.any((np.abs(w.imag) <= tol) & (w.real <= tol))


def _is_normal(m):
    mh = m.conj().T
    nrm = np.linalg.norm(m)
    return np.linalg.norm(m @ mh - mh @ m) <= 1e-12 * nrm * nrm


def principal_sqrt(m, tol=SQRT_TOL, maxiter=SQRT_MAXITER):
    """Principal square root: ``S @ S == m`` with spectrum of S in Re > 0.

    Normal matrices go through a unitary Schur diagonalisation; everything
    else uses the determinant-scaled Denman-Beavers iteration.
    """
    m = as_matrix(m)
    n = m.shape[0]
    scale = np.linalg.norm(m, 2)
    w = np.linalg.eigvals(m)
    if scale == 0 or _on_branch_cut(w, scale):
        raise BranchCut("matrix has an eigenvalue on the closed negative real axis")

    if _is_normal(m):
        t, z = scipy.linalg.schur(m, output="complex")
        return (z * np.sqrt(np.diag(t))) @ z.conj().T

    y = m.copy()
    zmat = identity(n)
    scaling = True
    for it in range(1, maxiter + 1):
        if scaling:
            mu = abs(np.linalg.det(y) * np.linalg.det(zmat)) ** (-1.0 / (2 * n))
        else:
            mu = 1.0
        yinv = np.linalg.inv(y)
        zinv = np.linalg.inv(zmat)
        y_next = 0.5 * (mu * y + zinv / mu)
        zmat = 0.5 * (mu * zmat + yinv / mu)
        step = np.linalg.norm(y_next - y) / np.linalg.norm(y_next)
        y = y_next
        if step < 1e-2:
            scaling = False
        if step <= tol:
            # one Newton polish against the original matrix
            y = 0.5 * (y + np.linalg.solve(y, m))
            return y
    res = np.linalg.norm(y @ y - m) / scale
    raise NoConvergence("principal_sqrt", maxiter, res)
