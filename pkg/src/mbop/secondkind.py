"""Second-kind functions Q_n, R_n and Stieltjes transforms.

Two transforms of a constant triple (A, B, C) appear, solving mirrored
quadratic equations::

    side "q":  A F C F + (B - x) F + I = 0     (transform of the functional itself)
    side "v":  C F A F + (B - x) F + I = 0     (limit of polynomial ratios)

Q_n is the minimal solution of the V recurrence off the spectrum, so the
forward recurrence from (Q_{-1}, Q_0) loses digits geometrically and the
combination ``Q_n = V_n Q_0 - V^(1)_{n-1} A_0^{-1}`` cancels just as badly
once the transform is exact.  When the coefficients end in a declared
constant tail, :func:`second_kind` therefore runs the backward ratio
recursion, which is finite and exact here (no truncated continued fraction).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import linalg
from .errors import (
    BranchCut,
    InsideSpectrumWarning,
    NoConvergence,
    NotPositiveDefinite,
    UnboundedCoefficients,
    WrongBranch,
)
from .recurrence import PointValues, gt_values, v_values

SIDES = ("q", "v")

FP_TOL = 1e-12
FP_MAXITER = 500
CERTIFY_RAYS = (4.0, 8.0, 16.0)


def quadratic_residual(A, B, C, x, F, side="q"):
    """``‖A F C F + (B - x) F + I‖`` (side q) or the A<->C mirror (side v)."""
    if side == "q":
        left, right = A, C
    elif side == "v":
        left, right = C, A
    else:
        raise ValueError(f"side must be one of {SIDES}")
    eye = np.eye(F.shape[0])
    return float(np.linalg.norm(left @ F @ right @ F + (B - x * eye) @ F + eye))


def _fixed_point(A, B, C, x, side, tol, maxiter, damping):
    eye = np.eye(A.shape[0])
    left, right = (A, C) if side == "q" else (C, A)
    base = x * eye - B
    F = linalg.inv(base, "x - B")
    prev_step = np.inf
    grow = 0
    theta = damping or 1.0
    for it in range(1, maxiter + 1):
        F_new = linalg.inv(base - left @ F @ right, "x - B - (quadratic term)")
        if theta != 1.0:
            F_new = (1 - theta) * F + theta * F_new
        step = np.linalg.norm(F_new - F) / max(np.linalg.norm(F_new), 1e-300)
        F = F_new
        if step <= tol:
            return F, it
        # oscillating residuals switch on half damping
        grow = grow + 1 if step > prev_step else 0
        if grow >= 3 and theta == 1.0:
            theta = 0.5
        prev_step = step
    raise NoConvergence("stieltjes_fixed_point", maxiter,
                        quadratic_residual(A, B, C, x, F, side))


def stieltjes_fixed_point(A, B, C, x, side="v", *, tol=FP_TOL, maxiter=FP_MAXITER,
                          damping=None, certify=True):
    """Stieltjes-branch root of the quadratic matrix equation for ``side``.

    Iterates ``F <- (x - B - C F A)^{-1}`` (side v) or
    ``F <- (x - B - A F C)^{-1}`` (side q) from ``(x - B)^{-1}``.  With
    ``certify`` the same iteration is run at ``t x`` for t = 4, 8, 16 and
    ``‖t x F(t x) - I‖`` must decrease, which pins the branch decaying like
    I/x.
    """
    A, B, C = (linalg.as_matrix(m) for m in (A, B, C))
    if side not in SIDES:
        raise ValueError(f"side must be one of {SIDES}")
    F, _ = _fixed_point(A, B, C, x, side, tol, maxiter, damping)
    if certify:
        errs = []
        for t in CERTIFY_RAYS:
            Ft, _ = _fixed_point(A, B, C, t * x, side, tol, maxiter, damping)
            errs.append(np.linalg.norm(t * x * Ft - np.eye(A.shape[0])))
        if not all(e1 > e2 for e1, e2 in zip(errs, errs[1:])) and errs[0] > 1e-12:
            raise WrongBranch(f"decay test failed along the ray through {x}: {errs}")
    return F


def quadratic_solvent(A, B, C, x, side="q"):
    """Same root as :func:`stieltjes_fixed_point`, by linearisation.

    The ratio ``S = F C`` (side q) solves ``A S^2 + (B - x) S + C = 0``.  Its
    eigenvalues are the N smallest-modulus roots of
    ``det(A l^2 + (B - x) l + C)``, read off the 2N x 2N companion matrix.
    """
    A, B, C = (linalg.as_matrix(m) for m in (A, B, C))
    if side == "v":
        A, C = C, A
    n = A.shape[0]
    eye = np.eye(n)
    ainv = linalg.inv(A, "A")
    comp = np.block([[np.zeros((n, n)), eye],
                     [-ainv @ C, -ainv @ (B - x * eye)]])
    lam, vecs = np.linalg.eig(comp)
    order = np.argsort(np.abs(lam))
    if abs(lam[order[n - 1]]) >= abs(lam[order[n]]) * (1 - 1e-10):
        raise BranchCut(f"no modulus gap between the solvent roots at {x}")
    pick = vecs[:, order[:n]]
    S = pick[n:] @ linalg.inv(pick[:n], "companion eigenvector block")
    return S @ linalg.inv(C, "C")


def duran_closed_form(A, B, z):
    """Closed-form transform for real symmetric positive definite A, Hermitian B.

    With ``K = A^{-1/2} (B - z) A^{-1/2}``::

        F = -1/2 A^{-1/2} (K + S) A^{-1/2},   S = -K sqrt(I - 4 K^{-2})

    which solves ``A F A F + (B - z) F + I = 0``.  Writing S through
    ``sqrt(I - 4K^{-2})`` rather than ``sqrt(K^2 - 4)`` keeps the decaying
    branch on both sides of the imaginary axis.
    """
    A, B = linalg.as_matrix(A), linalg.as_matrix(B)
    n = A.shape[0]
    if np.abs(A.imag).max() > 0 or not np.allclose(A, A.T, atol=1e-14):
        raise NotPositiveDefinite("A must be real symmetric")
    ev = np.linalg.eigvalsh(A.real)
    if ev.min() <= 0:
        raise NotPositiveDefinite(f"A has eigenvalue {ev.min():.3e} <= 0")
    if not np.allclose(B, B.conj().T, atol=1e-13):
        raise ValueError("B must be Hermitian")
    eye = np.eye(n)
    a_half = linalg.principal_sqrt(A)
    a_mhalf = np.linalg.inv(a_half)
    K = a_mhalf @ (B - z * eye) @ a_mhalf
    kinv = linalg.inv(K, "A^-1/2 (B - z) A^-1/2")
    S = -K @ linalg.principal_sqrt(eye - 4 * kinv @ kinv)
    return -0.5 * a_mhalf @ (K + S) @ a_mhalf


# ---------------------------------------------------------------------------
# sources


@dataclass(frozen=True)
class StieltjesSource:
    """Where Q_0(x) = R_0^T(x) comes from.

    ``closed_form`` and ``fixed_point`` solve the constant-triple quadratic
    (``side`` picks the equation), ``user`` wraps a callable, and
    ``nevai_tail`` runs the exact backward ratio recursion of a coefficient
    set with a declared constant tail.
    """

    variant: str
    A: np.ndarray | None = None
    B: np.ndarray | None = None
    C: np.ndarray | None = None
    side: str = "q"
    func: Callable | None = None
    rc: object = None

    @classmethod
    def closed_form(cls, A, B, C, side="q"):
        return cls("closed_form", *(linalg.as_matrix(m) for m in (A, B, C)), side=side)

    @classmethod
    def fixed_point(cls, A, B, C, side="q"):
        return cls("fixed_point", *(linalg.as_matrix(m) for m in (A, B, C)), side=side)

    @classmethod
    def user(cls, func):
        return cls("user", func=func)

    @classmethod
    def nevai_tail(cls, rc):
        if not rc.has_tail:
            raise UnboundedCoefficients("nevai_tail needs a declared constant tail")
        return cls("nevai_tail", *rc.tail, side="q", rc=rc)

    @property
    def has_equation(self):
        return self.A is not None

    def __call__(self, x):
        if self.variant == "closed_form":
            return quadratic_solvent(self.A, self.B, self.C, x, self.side)
        if self.variant == "fixed_point":
            return stieltjes_fixed_point(self.A, self.B, self.C, x, self.side)
        if self.variant == "user":
            return linalg.as_matrix(self.func(x))
        if self.variant == "nevai_tail":
            return backward_ratios(self.rc, x, 0).q_ratio(0)
        raise ValueError(f"unknown source variant {self.variant!r}")

    def check(self, x, F=None):
        """Quadratic residual of F(x), or None when no equation applies."""
        if not self.has_equation:
            return None
        if F is None:
            F = self(x)
        side = self.side if self.variant != "nevai_tail" else "q"
        return quadratic_residual(self.A, self.B, self.C, x, F, side)


class BackwardRatios:
    """Ratios ``S_n = Q_n Q_{n-1}^{-1}`` and ``T_n = R_{n-1}^{-T} R_n^T``."""

    def __init__(self, x, s, t):
        self.x = x
        self._s = s
        self._t = t

    def q_ratio(self, n):
        return self._s[n]

    def r_ratio(self, n):
        return self._t[n]

    def __len__(self):
        return min(len(self._s), len(self._t))


def backward_ratios(rc, x, n_max, tail_transform=None):
    """Exact minimal-solution ratios for coefficients with a constant tail.

    Below the tail::

        S_{n-1} = (x - B_{n-1} - A_{n-1} S_n)^{-1} C_{n-1}
        T_{n-1} = A_{n-2} (x - B_{n-1} - T_n C_n)^{-1}

    seeded with ``S = F C`` and ``T = A F`` where F is the side-q transform of
    the tail triple.
    """
    if not rc.has_tail:
        raise UnboundedCoefficients("backward ratios need a declared constant tail")
    A, B, C = rc.tail
    if tail_transform is None:
        F = stieltjes_fixed_point(A, B, C, x, "q")
    else:
        F = tail_transform(x)
    eye = np.eye(rc.dim)
    m = rc.cutoff
    s_start = max(m, 1)
    t_start = m + 1
    top = max(n_max, t_start)
    s = [None] * (top + 1)
    t = [None] * (top + 1)
    S, T = F @ C, A @ F
    for n in range(s_start, top + 1):
        s[n] = S
    for n in range(t_start, top + 1):
        t[n] = T
    for n in range(s_start, 0, -1):
        s[n - 1] = linalg.inv(x * eye - rc.b(n - 1) - rc.a(n - 1) @ s[n],
                              f"backward Q ratio at {n - 1}") @ rc.c(n - 1)
    for n in range(t_start, 0, -1):
        t[n - 1] = rc.a(n - 2) @ linalg.inv(x * eye - rc.b(n - 1) - t[n] @ rc.c(n),
                                            f"backward R ratio at {n - 1}")
    return BackwardRatios(x, s, t)


# ---------------------------------------------------------------------------
# second-kind sequences


@dataclass
class SecondKindSequence:
    """Q_n(x) and R_n^T(x) for n = -1..n_max (``q[-1]``, ``rt[-1]`` are I).

    ``method`` records the construction path: ``aso`` (combination of first
    kind polynomials with Q_0), ``minimal`` (backward ratios), ``forward``
    (plain recurrence from the initial pair, checking only).
    """

    x: complex
    q: PointValues
    rt: PointValues
    source: StieltjesSource | None
    method: str
    ratios: BackwardRatios | None = None

    @property
    def r(self):
        return [m.T for m in self.rt.values]

    @property
    def n_max(self):
        return self.q.n_max


def _minimal_applies(rc, src):
    if not rc.has_tail:
        return False
    if src.variant == "nevai_tail":
        return True
    if src.variant in ("closed_form", "fixed_point") and rc.cutoff == 0 and src.side == "q":
        return all(np.array_equal(u, w) for u, w in zip(rc.tail, (src.A, src.B, src.C)))
    return False


def _warn_if_inside(rc, x):
    from .spectral import gershgorin_bound

    try:
        M = gershgorin_bound(rc)
    except UnboundedCoefficients:
        return
    if abs(x) <= M:
        warnings.warn(f"point {x} lies inside the Gershgorin disk of radius {M:.6g}",
                      InsideSpectrumWarning, stacklevel=3)


def second_kind(rc, src, x, n_max, method="auto", warn=True):
    """Second-kind sequences at x.

    ``method="auto"`` takes the backward-ratio route whenever the source is
    the exact transform of a coefficient set with constant tail, and the
    first-kind combination otherwise.
    """
    if warn:
        _warn_if_inside(rc, x)
    if method == "auto":
        method = "minimal" if _minimal_applies(rc, src) else "aso"
    eye = np.eye(rc.dim, dtype=complex)
    if method == "minimal":
        tt = None if src.variant == "nevai_tail" else src
        ratios = backward_ratios(rc, x, n_max, tail_transform=tt)
        q, rt = [ratios.q_ratio(0)], [ratios.r_ratio(0)]
        for n in range(1, n_max + 1):
            q.append(ratios.q_ratio(n) @ q[-1])
            rt.append(rt[-1] @ ratios.r_ratio(n))
        return SecondKindSequence(x, PointValues(x, q, {-1: eye}),
                                  PointValues(x, rt, {-1: eye}), src, method, ratios)
    F = src(x)
    if method == "aso":
        v = v_values(rc, x, n_max)
        v1 = v_values(rc, x, max(n_max - 1, 0), k=1)
        gt = gt_values(rc, x, n_max)
        g1 = gt_values(rc, x, max(n_max - 1, 0), k=1)
        a0inv, c1inv = rc.a_inv(0), rc.c_inv(1)
        q = [v[n] @ F - v1[n - 1] @ a0inv for n in range(n_max + 1)]
        rt = [F @ gt[n] - c1inv @ g1[n - 1] for n in range(n_max + 1)]
    elif method == "forward":
        q, rt = [F], [F]
        qprev, rprev = eye, eye
        for n in range(n_max):
            qn = rc.a_inv(n) @ ((x * eye - rc.b(n)) @ q[n] - rc.c(n) @ qprev)
            rn = (rt[n] @ (x * eye - rc.b(n)) - rprev @ rc.a(n - 1)) @ rc.c_inv(n + 1)
            qprev, rprev = q[n], rt[n]
            q.append(qn)
            rt.append(rn)
    else:
        raise ValueError(f"unknown method {method!r}")
    return SecondKindSequence(x, PointValues(x, q, {-1: eye}),
                              PointValues(x, rt, {-1: eye}), src, method)


def associated_transform(rc, src, k, x, sk=None):
    """Two evaluations of the Stieltjes transform of the k-th associated functional.

    Returns ``(Q_k Q_{k-1}^{-1} C_k^{-1}, A_{k-1}^{-1} R_{k-1}^{-T} R_k^T)``.
    On the backward-ratio route these come from the independent Q-side and
    R-side recursions.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if sk is None or sk.n_max < k:
        sk = second_kind(rc, src, x, k, warn=False)
    if sk.ratios is not None:
        est_q = sk.ratios.q_ratio(k) @ rc.c_inv(k)
        est_r = rc.a_inv(k - 1) @ sk.ratios.r_ratio(k)
        return est_q, est_r
    est_q = sk.q[k] @ linalg.inv(sk.q[k - 1], f"Q_{k - 1}") @ rc.c_inv(k)
    est_r = rc.a_inv(k - 1) @ linalg.inv(sk.rt[k - 1], f"R_{k - 1}^T") @ sk.rt[k]
    return est_q, est_r
