"""Three-term matrix recurrences and the polynomial families they generate.

Conventions (all indices are recurrence indices, ``N`` the block size)::

    x V_n   = A_n V_{n+1} + B_n V_n + C_n V_{n-1}              V_0 = I, V_{-1} = 0
    x G_n^T = G_{n+1}^T C_{n+1} + G_n^T B_n + G_{n-1}^T A_{n-1} G_0 = I, G_{-1} = 0

with ``C_0 = I`` and ``A_{-1} = I``.  The k-th associated families use the
same recurrences with every coefficient index shifted by ``k``.

``G`` is produced by the left recurrence with transposed coefficients
``(C_{n+1}^T, B_n^T, A_{n-1}^T)`` so a single engine serves both sides.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import linalg
from .errors import SingularBlock, SingularCoefficient, SpecError

MODES = ("biorthogonal", "orthonormal", "general")

DEFAULT_N_MAX = 64


def _is_lower(m, tol=1e-14):
    return np.all(np.abs(np.triu(m, 1)) <= tol * max(1.0, np.abs(m).max()))


def _is_upper(m, tol=1e-14):
    return np.all(np.abs(np.tril(m, -1)) <= tol * max(1.0, np.abs(m).max()))


class RecurrenceCoefficients:
    """The sequences ``A_n, B_n, C_n``.

    ``a``, ``b``, ``c`` are either sequences of matrices (the head) or
    callables ``n -> matrix``.  With ``tail=(A, B, C)`` every index
    ``n >= cutoff`` returns the tail triple; ``cutoff`` defaults to the head
    length.  ``C_0`` is the identity by definition and ``A_{-1} = I``.

    Lookups are memoised behind a lock, so concurrent first access is safe.
    """

    def __init__(self, a=(), b=(), c=(), *, tail=None, cutoff=None, dim=None,
                 mode="biorthogonal", validate=True):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
        self.mode = mode
        self._fns = {}
        head_lengths = []
        for name, src in (("A", a), ("B", b), ("C", c)):
            if callable(src):
                self._fns[name] = src
            else:
                seq = [linalg.as_matrix(m) for m in src]
                head_lengths.append(len(seq))
                self._fns[name] = seq
        if tail is not None:
            tail = tuple(linalg.as_matrix(m) for m in tail)
            if len(tail) != 3:
                raise ValueError("tail must be a triple (A, B, C)")
        self.tail = tail
        if cutoff is None:
            cutoff = max(head_lengths) if head_lengths else 0
        self.cutoff = cutoff

        if dim is None:
            probe = None
            for name in ("A", "B"):
                src = self._fns[name]
                if isinstance(src, list) and src:
                    probe = src[0]
                    break
            if probe is None and tail is not None:
                probe = tail[0]
            if probe is None:
                probe = linalg.as_matrix(self._fns["A"](0))
            dim = probe.shape[0]
        self.dim = dim
        self._cache = {}
        self._lock = threading.RLock()
        if validate:
            self.validate()

    @classmethod
    def constant(cls, A, B, C, **kwargs):
        """Pure constant-coefficient (Chebyshev) recurrence."""
        return cls(tail=(A, B, C), cutoff=0, **kwargs)

    @classmethod
    def scalar(cls, a, b, c, tail=None, **kwargs):
        """N = 1 convenience constructor from lists of numbers."""
        wrap = lambda seq: [np.array([[v]], dtype=complex) for v in seq]
        if tail is not None:
            tail = tuple(np.array([[v]], dtype=complex) for v in tail)
        return cls(wrap(a), wrap(b), wrap(c), tail=tail, **kwargs)

    @property
    def has_tail(self):
        return self.tail is not None

    def _raw(self, name, n):
        if self.tail is not None and n >= self.cutoff:
            return self.tail["ABC".index(name)]
        src = self._fns[name]
        if isinstance(src, list):
            if n >= len(src):
                raise IndexError(f"{name}_{n} is beyond the supplied coefficients")
            return src[n]
        return linalg.as_matrix(src(n), self.dim)

    def _get(self, key, make):
        try:
            return self._cache[key]
        except KeyError:
            pass
        with self._lock:
            if key not in self._cache:
                self._cache[key] = make()
            return self._cache[key]

    def a(self, n):
        if n == -1:
            return linalg.identity(self.dim)
        if n < 0:
            raise IndexError(f"A_{n} is undefined")
        return self._get(("A", n), lambda: self._raw("A", n))

    def b(self, n):
        if n < 0:
            raise IndexError(f"B_{n} is undefined")
        return self._get(("B", n), lambda: self._raw("B", n))

    def c(self, n):
        if n == 0:
            return linalg.identity(self.dim)
        if n < 0:
            raise IndexError(f"C_{n} is undefined")
        return self._get(("C", n), lambda: self._raw("C", n))

    def _checked_inv(self, name, n, m):
        rc = linalg.rcond(m)
        if not rc > linalg.RCOND_TOL:
            raise SingularCoefficient(name, n, rc)
        return np.linalg.inv(m)

    def a_inv(self, n):
        return self._get(("Ainv", n), lambda: self._checked_inv("A", n, self.a(n)))

    def c_inv(self, n):
        return self._get(("Cinv", n), lambda: self._checked_inv("C", n, self.c(n)))

    def triple(self, n):
        return self.a(n), self.b(n), self.c(n)

    def validate(self, depth=None):
        """Check C_0 = I, invertibility and the mode's structural constraints.

        Raises :class:`SpecError` naming the first offending coefficient.
        Callable coefficients are probed up to ``depth`` (default: head plus
        two tail entries, or 8 indices).
        """
        src_c = self._fns["C"]
        if isinstance(src_c, list) and src_c:
            if not np.allclose(src_c[0], np.eye(self.dim), rtol=0, atol=1e-14):
                raise SpecError("C_0", "C_0 must be identity")
        if depth is None:
            depth = self.cutoff + 2 if (self.tail is not None or self.cutoff) else 8
        for n in range(depth):
            try:
                A, B, C = self.a(n), self.b(n), self.c(n)
            except IndexError:
                break
            for name, m in (("A", A), ("B", B), ("C", C)):
                if m.shape != (self.dim, self.dim):
                    raise SpecError(f"{name}_{n}", f"expected {self.dim}x{self.dim}")
            for name, m in (("A", A), ("C", C)):
                if not linalg.rcond(m) > linalg.RCOND_TOL:
                    raise SpecError(f"{name}_{n}", "must be nonsingular")
            if self.mode == "biorthogonal":
                if not _is_lower(A):
                    raise SpecError(f"A_{n}", "must be lower triangular in biorthogonal mode")
                if not _is_upper(C):
                    raise SpecError(f"C_{n}", "must be upper triangular in biorthogonal mode")
            elif self.mode == "orthonormal":
                if not np.allclose(B, B.conj().T, atol=1e-13):
                    raise SpecError(f"B_{n}", "must be Hermitian in orthonormal mode")
                if n >= 1 and not np.allclose(C, self.a(n - 1).T, atol=1e-13):
                    raise SpecError(f"C_{n}", "must equal A_{n-1}^T in orthonormal mode")
        return self


def scalar_chebyshev(a=0.5, b=0.0):
    """N = 1 constant recurrence with A_n = C_n = a, B_n = b."""
    return RecurrenceCoefficients.constant([[a]], [[b]], [[a]], mode="orthonormal")


def random_coefficients(dim, seed=0, head=6, radius=1.5, mode="biorthogonal",
                        complex_entries=True, decay=None, spread=0.3, max_cond=3.0):
    """Seeded random Nevai-class coefficients with Gershgorin bound <= ``radius``.

    The head has ``head`` random triples; the tail is a random constant triple.
    A_n and C_n are ``I + spread * noise`` before scaling, redrawn until their
    condition number is at most ``max_cond``.
    With ``decay=r`` the head is ``tail + r**n * perturbation`` instead, so the
    coefficients converge geometrically to the tail.
    """
    rng = np.random.default_rng(seed)

    def rand():
        m = rng.standard_normal((dim, dim))
        if complex_entries:
            m = m + 1j * rng.standard_normal((dim, dim))
        return m

    # identity plus a bounded perturbation keeps the growth rates of the
    # N independent solutions within a narrow band
    def offdiag():
        while True:
            m = np.eye(dim) + spread * rand()
            if mode == "biorthogonal":
                m = np.tril(m)
            if np.linalg.cond(m) <= max_cond:
                return m

    def triple():
        A, B, C = offdiag(), rand(), offdiag()
        if mode == "biorthogonal":
            C = C.T
        elif mode == "orthonormal":
            B = B + B.conj().T
        return [A, B, C]

    def row_bound(A, B, C):
        return float(np.max(np.abs(A).sum(1) + np.abs(B).sum(1) + np.abs(C).sum(1)))

    tail = triple()
    if mode == "orthonormal":
        tail[2] = tail[0].T
    s = 0.75 * radius / row_bound(*tail)
    tail = [m * s for m in tail]

    heads = []
    for n in range(head):
        if decay is None:
            t = triple()
            s = radius / row_bound(*t) * rng.uniform(0.5, 0.95)
            t = [m * s for m in t]
        else:
            p = triple()
            eps = decay ** n * 0.25 * radius / row_bound(*p)
            t = [tail[i] + eps * p[i] for i in range(3)]
        heads.append(t)
    if mode == "orthonormal":
        for n in range(head):
            heads[n][2] = heads[n - 1][0].T if n >= 1 else np.eye(dim)
        if head:
            tail[2] = tail[0].T
            # first tail C must match the last head A
            heads.append([tail[0], tail[1], heads[-1][0].T])
    if heads:
        heads[0][2] = np.eye(dim)
    a = [t[0] for t in heads]
    b = [t[1] for t in heads]
    c = [t[2] for t in heads]
    return RecurrenceCoefficients(a, b, c, tail=tuple(tail), dim=dim, mode=mode)


def perturbed_coefficients(A, B, C, head, amplitude=0.3, rate=0.9, seed=0,
                           mode="biorthogonal"):
    """Constant triple plus a geometrically fading random perturbation.

    Entry n of the head is ``tail + amplitude * rate**n * noise_n`` (noise
    normalised to unit max-norm and shaped to the mode); the tail follows.
    """
    A, B, C = (linalg.as_matrix(m) for m in (A, B, C))
    dim = A.shape[0]
    rng = np.random.default_rng(seed)
    heads = []
    for n in range(head):
        eps = amplitude * rate ** n
        E = [rng.standard_normal((dim, dim)) for _ in range(3)]
        E = [e / np.abs(e).max() for e in E]
        if mode == "biorthogonal":
            E[0], E[2] = np.tril(E[0]), np.triu(E[2])
        heads.append([A + eps * E[0], B + eps * E[1], C + eps * E[2]])
    if mode == "orthonormal":
        for n in range(head):
            heads[n][1] = 0.5 * (heads[n][1] + heads[n][1].conj().T)
            heads[n][2] = heads[n - 1][0].T if n >= 1 else np.eye(dim)
        if head:
            heads.append([A, B, heads[-1][0].T])
    if heads:
        heads[0][2] = np.eye(dim)
    return RecurrenceCoefficients([h[0] for h in heads], [h[1] for h in heads],
                                  [h[2] for h in heads], tail=(A, B, C), dim=dim, mode=mode)


# ---------------------------------------------------------------------------
# matrix polynomials


@dataclass(frozen=True)
class MatrixPolynomial:
    """``sum_j coeffs[j] x**j`` with N x N matrix coefficients."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 3 or c.shape[1] != c.shape[2]:
            raise ValueError(f"coeffs must have shape (deg+1, N, N), got {c.shape}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def constant(cls, m):
        m = linalg.as_matrix(m)
        return cls(m[None])

    @property
    def dim(self):
        return self.coeffs.shape[1]

    @property
    def degree(self):
        nz = [j for j in range(len(self.coeffs)) if np.any(self.coeffs[j] != 0)]
        return nz[-1] if nz else -1

    @property
    def leading(self):
        return self.coeffs[max(self.degree, 0)]

    @property
    def is_monic(self):
        return np.array_equal(self.leading, np.eye(self.dim))

    def __call__(self, x):
        acc = self.coeffs[-1].copy()
        for cj in self.coeffs[-2::-1]:
            acc = acc * x + cj
        return acc

    def eval_naive(self, x):
        return sum(cj * x ** j for j, cj in enumerate(self.coeffs))

    def derivative(self):
        if len(self.coeffs) == 1:
            return MatrixPolynomial(np.zeros_like(self.coeffs))
        powers = np.arange(1, len(self.coeffs))[:, None, None]
        return MatrixPolynomial(self.coeffs[1:] * powers)

    def divided_difference(self, x, y):
        """``(p(x) - p(y)) / (x - y)`` by synthetic division at ``y``.

        Exact in the coefficients, so it stays accurate as ``x -> y``.
        """
        c = self.coeffs
        if len(c) == 1:
            return np.zeros_like(c[0])
        quotient = [None] * (len(c) - 1)
        quotient[-1] = c[-1]
        for j in range(len(c) - 2, 0, -1):
            quotient[j - 1] = c[j] + y * quotient[j]
        return MatrixPolynomial(np.array(quotient))(x)

    def _padded(self, other):
        n = max(len(self.coeffs), len(other.coeffs))
        out = np.zeros((2, n, self.dim, self.dim), dtype=complex)
        out[0, :len(self.coeffs)] = self.coeffs
        out[1, :len(other.coeffs)] = other.coeffs
        return out

    def __add__(self, other):
        p = self._padded(other)
        return MatrixPolynomial(p[0] + p[1])

    def __sub__(self, other):
        p = self._padded(other)
        return MatrixPolynomial(p[0] - p[1])

    def lmul(self, m):
        return MatrixPolynomial(np.einsum("ij,kjl->kil", m, self.coeffs))

    def rmul(self, m):
        return MatrixPolynomial(np.einsum("kij,jl->kil", self.coeffs, m))

    def shift(self):
        """Multiply by the scalar variable x."""
        zero = np.zeros((1, self.dim, self.dim), dtype=complex)
        return MatrixPolynomial(np.concatenate([zero, self.coeffs]))

    @property
    def T(self):
        return MatrixPolynomial(np.transpose(self.coeffs, (0, 2, 1)))


FAMILY_KINDS = ("V", "G", "U", "T")


@dataclass
class FamilyTable:
    """Polynomials ``polys[0..n_max]`` of one family.

    ``kind`` is ``V`` or ``G`` (with ``shift`` > 0 for associated families),
    or ``U``/``T`` for the constant-coefficient Chebyshev families.  For
    ``G`` the stored polynomials are G_n themselves; for ``T`` they are the
    right-orthogonal polynomials T_n (the G^T of the constant problem).
    """

    kind: str
    polys: list
    coeffs: RecurrenceCoefficients
    shift: int = 0

    def __getitem__(self, n):
        if n == -1:
            return MatrixPolynomial(np.zeros((1, self.coeffs.dim, self.coeffs.dim)))
        return self.polys[n]

    def __len__(self):
        return len(self.polys)

    def at(self, x):
        return [p(x) for p in self.polys]

    def recurrence_residuals(self, x):
        """Residual of the defining recurrence at x for n = 0..n_max-1."""
        rc, k = self.coeffs, self.shift
        vals = self.at(x)
        zero = np.zeros_like(vals[0])
        out = []
        for n in range(len(vals) - 1):
            prev = vals[n - 1] if n else zero
            if self.kind in ("V", "U"):
                lhs = x * vals[n]
                terms = [rc.a(n + k) @ vals[n + 1], rc.b(n + k) @ vals[n], rc.c(n + k) @ prev]
            elif self.kind == "G":
                gt, gt1, gtm = vals[n].T, vals[n + 1].T, prev.T
                lhs = x * gt
                terms = [gt1 @ rc.c(n + k + 1), gt @ rc.b(n + k), gtm @ rc.a(n + k - 1)]
            else:  # T: right recurrence with the constant triple
                lhs = x * vals[n]
                terms = [vals[n + 1] @ rc.c(1), vals[n] @ rc.b(0), prev @ rc.a(0)]
            scale = max([np.linalg.norm(lhs)] + [np.linalg.norm(m) for m in terms] + [1e-300])
            out.append(float(np.linalg.norm(lhs - sum(terms)) / scale))
        return out


def _left_coefficient_fns(rc, kind, k):
    """(lead, diag, lower) coefficient getters of the left recurrence."""
    if kind == "V":
        return (lambda n: rc.a(n + k), lambda n: rc.a_inv(n + k),
                lambda n: rc.b(n + k), lambda n: rc.c(n + k))
    if kind == "G":
        return (lambda n: rc.c(n + k + 1).T, lambda n: rc.c_inv(n + k + 1).T,
                lambda n: rc.b(n + k).T, lambda n: rc.a(n + k - 1).T)
    raise ValueError(f"unknown family kind {kind!r}")


def generate_family(rc, kind="V", k=0, n_max=DEFAULT_N_MAX):
    """Coefficient form of V^(k)_n or G^(k)_n for n = 0..n_max.

    Each step solves the recurrence for its top term,
    ``P_{n+1} = lead_n^{-1} ((x - diag_n) P_n - lower_n P_{n-1})``.
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    if kind in ("U", "T"):
        raise ValueError("use chebyshev_reference for U/T families")
    _, lead_inv, diag, lower = _left_coefficient_fns(rc, kind, k)
    dim = rc.dim
    prev = MatrixPolynomial(np.zeros((1, dim, dim)))
    cur = MatrixPolynomial.constant(np.eye(dim))
    polys = [cur]
    for n in range(n_max):
        nxt = (cur.shift() - cur.lmul(diag(n)) - prev.lmul(lower(n))).lmul(lead_inv(n))
        polys.append(nxt)
        prev, cur = cur, nxt
    return FamilyTable(kind, polys, rc, k)


def chebyshev_reference(A, B, C, n_max=DEFAULT_N_MAX):
    """Left (U) and right (T) second-kind Chebyshev matrix polynomials.

    ``x U_n = A U_{n+1} + B U_n + C U_{n-1}`` and
    ``x T_n = T_{n+1} C + T_n B + T_{n-1} A``, both starting from I.
    """
    rc = RecurrenceCoefficients.constant(A, B, C, mode="general")
    u = generate_family(rc, "V", 0, n_max)
    g = generate_family(rc, "G", 0, n_max)
    return (FamilyTable("U", u.polys, rc, 0),
            FamilyTable("T", [p.T for p in g.polys], rc, 0))


# ---------------------------------------------------------------------------
# pointwise values


class PointValues:
    """Values ``f_n(x)`` for n = lo..hi with explicit negative-index members."""

    def __init__(self, x, values, before=None, derivs=None):
        self.x = x
        self.values = values
        self.before = dict(before or {})
        self.derivs = derivs

    def __getitem__(self, n):
        if n < 0:
            return self.before[n]
        return self.values[n]

    def d(self, n):
        """Derivative in x; zero for the constant negative-index members."""
        if n < 0:
            return np.zeros_like(self.values[0])
        return self.derivs[n]

    def __len__(self):
        return len(self.values)

    @property
    def n_max(self):
        return len(self.values) - 1


def _left_values(x, dim, n_max, lead_inv, diag, lower, deriv=False):
    eye = np.eye(dim, dtype=complex)
    prev, cur = np.zeros((dim, dim), dtype=complex), eye
    vals = [cur]
    dprev, dcur = np.zeros_like(eye), np.zeros_like(eye)
    ders = [dcur]
    for n in range(n_max):
        xb = x * eye - diag(n)
        nxt = lead_inv(n) @ (xb @ cur - lower(n) @ prev)
        if deriv:
            dnxt = lead_inv(n) @ (xb @ dcur + cur - lower(n) @ dprev)
            ders.append(dnxt)
            dprev, dcur = dcur, dnxt
        vals.append(nxt)
        prev, cur = cur, nxt
    return vals, (ders if deriv else None)


def v_values(rc, x, n_max, k=0, deriv=False):
    """V^(k)_n(x) for n = 0..n_max, with V^(k)_{-1} = 0 and
    V^(k)_{-2} = -C_{k-1}^{-1} A_{k-1} (k >= 1).

    ``deriv=True`` also differentiates the recurrence, which is exact.
    """
    _, lead_inv, diag, lower = _left_coefficient_fns(rc, "V", k)
    vals, ders = _left_values(x, rc.dim, n_max, lead_inv, diag, lower, deriv)
    before = {-1: np.zeros_like(vals[0])}
    if k >= 1:
        before[-2] = -rc.c_inv(k - 1) @ rc.a(k - 1)
    return PointValues(x, vals, before, ders)


def gt_values(rc, x, n_max, k=0, deriv=False):
    """G^(k)T_n(x) (already transposed) for n = 0..n_max, with
    G^(k)T_{-1} = 0 and G^(k)T_{-2} = -C_k A_{k-2}^{-1} (k >= 1)."""
    _, lead_inv, diag, lower = _left_coefficient_fns(rc, "G", k)
    vals, ders = _left_values(x, rc.dim, n_max, lead_inv, diag, lower, deriv)
    vals = [v.T for v in vals]
    if ders is not None:
        ders = [d.T for d in ders]
    before = {-1: np.zeros_like(vals[0])}
    if k >= 1:
        before[-2] = -rc.c(k) @ rc.a_inv(k - 2)
    return PointValues(x, vals, before, ders)


def solution_values(rc, x, init_prev, init_cur, n_max):
    """Solution y_{-1}, y_0, ..., y_{n_max} of the V-side recurrence from
    arbitrary initial data (y_{-1}, y_0)."""
    prev = linalg.as_matrix(init_prev, rc.dim)
    cur = linalg.as_matrix(init_cur, rc.dim)
    vals = [cur]
    eye = np.eye(rc.dim)
    for n in range(n_max):
        nxt = rc.a_inv(n) @ ((x * eye - rc.b(n)) @ cur - rc.c(n) @ prev)
        vals.append(nxt)
        prev, cur = cur, nxt
    return PointValues(x, vals, {-1: linalg.as_matrix(init_prev, rc.dim)})


def shifted(values, offset):
    """Callable ``n -> values[n - offset]`` (e.g. n -> V^(1)_{n-1})."""
    return lambda n: values[n - offset]


# ---------------------------------------------------------------------------
# difference equations and Casorati matrices


def solve_difference_equation(k, coeff_fn, init, n_max):
    """Forward solution of ``y_{n+k} + sum_i coeff_fn(n)[i] y_{n+i} = 0``.

    ``coeff_fn(n)`` returns the k matrices multiplying y_n, ..., y_{n+k-1};
    ``init`` holds y_0..y_{k-1}.  Returns y_0..y_{n_max}.
    """
    if len(init) != k:
        raise ValueError(f"need exactly {k} initial values, got {len(init)}")
    ys = [linalg.as_matrix(c) for c in init]
    dim = ys[0].shape[0]
    for m in ys:
        if m.shape != (dim, dim):
            raise ValueError("initial values have mismatched dimensions")
    n = 0
    while len(ys) <= n_max:
        coeffs = coeff_fn(n)
        if len(coeffs) != k:
            raise ValueError(f"coeff_fn({n}) returned {len(coeffs)} matrices, expected {k}")
        acc = np.zeros((dim, dim), dtype=complex)
        for i, cm in enumerate(coeffs):
            acc += linalg.as_matrix(cm, dim) @ ys[n + i]
        ys.append(-acc)
        n += 1
    return ys[:n_max + 1]


@dataclass
class CasoratiMatrix:
    """k x k grid with block (i, j) = f_j(n + i)."""

    blocks: list
    n: int = 0

    @property
    def order(self):
        return len(self.blocks)

    def assemble(self):
        return np.block(self.blocks)

    def det(self):
        return complex(np.linalg.det(self.assemble()))

    def hadamard_ratio(self):
        """|det| divided by the product of column norms; scale-free in [0, 1]."""
        m = self.assemble()
        norms = np.linalg.norm(m, axis=0)
        if np.any(norms == 0):
            return 0.0
        sign, logdet = np.linalg.slogdet(m)
        if sign == 0:
            return 0.0
        return float(np.exp(logdet - np.log(norms).sum()))


def casorati(fs, n):
    """Block Casorati matrix of the sequences ``fs`` (callables) at index n."""
    k = len(fs)
    return CasoratiMatrix([[fs[j](n + i) for j in range(k)] for i in range(k)], n)


def casorati_det_step(rc, w_prev, n):
    """Predicted det W at n from det W at n - 1: det(A_n^{-1}) det(C_n) w_prev."""
    if n < 0:
        raise ValueError("n must be >= 0")
    return complex(np.linalg.det(rc.a_inv(n)) * np.linalg.det(rc.c(n)) * w_prev)


def assoc_casorati_det(rc, n):
    """det W(V_n, V^(1)_{n-1}) from the product of step factors.

    Starting value det W(V_{-1}, V^(1)_{-2}) = det(A_0), then one factor
    det(A_j^{-1}) det(C_j) for every j = 0..n.  With C_0 = I this is
    prod_{j=1..n} det(A_j^{-1} C_j).
    """
    w = complex(np.linalg.det(rc.a(0)))
    for j in range(0, n + 1):
        w = casorati_det_step(rc, w, j)
    return w


def q_casorati_det(rc, k, n, q_km1):
    """det W(Q_n, V^(k)_{n-k}) = prod_{j=k..n} det(A_j^{-1}) det(C_j) det(Q_{k-1})."""
    w = complex(np.linalg.det(q_km1))
    for j in range(k, n + 1):
        w = casorati_det_step(rc, w, j)
    return w


class IndependenceResult(NamedTuple):
    independent: bool
    n_hat: int | None
    det: complex
    ratio: float


def independence_test(fs, n_probe, tol=1e-10):
    """Sufficient test for right-linear independence of k sequences.

    Returns at the first probed n whose Casorati matrix has a Hadamard ratio
    above ``tol``; otherwise reports the best probe with ``independent=False``.
    """
    best = IndependenceResult(False, None, 0j, 0.0)
    for n in n_probe:
        w = casorati(fs, n)
        ratio = w.hadamard_ratio()
        if ratio > tol:
            return IndependenceResult(True, n, w.det(), ratio)
        if best.n_hat is None or ratio > best.ratio:
            best = IndependenceResult(False, n, w.det(), ratio)
    return best


# ---------------------------------------------------------------------------
# connection coefficients


def _theta_inv(a, b, c, d, name):
    """Inverse of the last quasideterminant of [[a, b], [c, d]]."""
    try:
        q = linalg.quasidet_last(linalg.BlockMatrix2x2(a, b, c, d))
    except SingularBlock as exc:
        raise SingularBlock(f"{name}: {exc.which}", exc.rcond) from None
    return linalg.inv(q, name)


def forward_ratios(rc, x, n_max, k=0):
    """Dominant-solution ratios ``P_n = V^(k)_n V^(k)_{n-1}^{-1}`` and
    ``P~_n = G^(k)_{n-1}^{-T} G^(k)T_n`` for n = 1..n_max (index 0 unused).

    The forward ratio recursion contracts perturbations, unlike the raw
    values whose condition number grows geometrically.
    """
    eye = np.eye(rc.dim)
    p = [None, rc.a_inv(k) @ (x * eye - rc.b(k))]
    pt = [None, (x * eye - rc.b(k)) @ rc.c_inv(k + 1)]
    for n in range(1, n_max):
        m = n + k
        p.append(rc.a_inv(m) @ (x * eye - rc.b(m) - rc.c(m) @ linalg.inv(p[n], f"P_{n}")))
        pt.append((x * eye - rc.b(m) - linalg.inv(pt[n], f"P~_{n}") @ rc.a(m - 1))
                  @ rc.c_inv(m + 1))
    return p, pt


def ordered_product(factors, middle=None):
    """Product ``f_0 f_1 ... f_{m-1}`` accumulated from ``middle`` outward.

    When the factors pair up as growth/decay (``V_n^{-1}`` against ``Q_n``)
    the partial products stay of moderate size, which keeps the relative
    accuracy of each factor.
    """
    m = len(factors)
    if m == 0:
        raise ValueError("empty product")
    if middle is None:
        middle = m // 2
    acc = np.eye(factors[0].shape[0], dtype=complex)
    i, j = middle - 1, middle
    while i >= 0 or j < m:
        if j < m:
            acc = acc @ factors[j]
            j += 1
        if i >= 0:
            acc = factors[i] @ acc
            i -= 1
    return acc


def _product_inverse(factors, dim, reverse):
    """Inverse of a product of well-conditioned factors, one factor at a time."""
    out = np.eye(dim, dtype=complex)
    seq = factors[::-1] if reverse else factors
    for f in seq:
        out = out @ linalg.inv(f, "ratio factor")
    return out


def quasidet_inverses(rc, x, k, sk, v=None, gt=None, fr=None):
    """Inverses of the four last quasideterminants at index k.

    With backward ratios available the Schur complements are evaluated in
    factored form, e.g. ``Q_k - V_k V_{k-1}^{-1} Q_{k-1} = (S_k - P_k) Q_{k-1}``
    where S are the minimal and P the dominant ratios.  Forming
    ``V_k V_{k-1}^{-1}`` from the values instead costs about cond(V_{k-1})
    digits.  Returns the inverses of Theta(Q,V), Theta(V,Q), Theta(R,G),
    Theta(G,R) in that order.
    """
    q, rt = sk.q, sk.rt
    v = v if v is not None else v_values(rc, x, k)
    gt = gt if gt is not None else gt_values(rc, x, k)
    if sk.ratios is None:
        return (_theta_inv(q[k - 1], v[k - 1], q[k], v[k], "Theta(Q, V)"),
                _theta_inv(v[k - 1], q[k - 1], v[k], q[k], "Theta(V, Q)"),
                _theta_inv(rt[k - 1], rt[k], gt[k - 1], gt[k], "Theta(R, G)"),
                _theta_inv(gt[k - 1], gt[k], rt[k - 1], rt[k], "Theta(G, R)"))
    p, pt = fr if fr is not None else forward_ratios(rc, x, k)
    S = [sk.ratios.q_ratio(j) for j in range(k + 1)]
    T = [sk.ratios.r_ratio(j) for j in range(k + 1)]
    # V_{k-1} = P_{k-1} ... P_1, G^T_{k-1} = P~_1 ... P~_{k-1}
    v_inv = _product_inverse(p[1:k], rc.dim, reverse=False)
    g_inv = _product_inverse(pt[1:k], rc.dim, reverse=True)
    # Q_{k-1} = S_{k-1} ... S_0, R^T_{k-1} = T_0 ... T_{k-1}
    q_inv = _product_inverse(S[:k], rc.dim, reverse=False)
    r_inv = _product_inverse(T[:k], rc.dim, reverse=True)
    gap = linalg.inv(p[k] - S[k], "P_k - S_k")
    gap_t = linalg.inv(pt[k] - T[k], "P~_k - T_k")
    return (v_inv @ gap, -q_inv @ gap, gap_t @ g_inv, -gap_t @ r_inv)


class Connection(NamedTuple):
    gamma: np.ndarray
    eta: np.ndarray
    gamma_t: np.ndarray
    eta_t: np.ndarray
    alpha: np.ndarray | None
    beta: np.ndarray | None
    alpha_t: np.ndarray | None
    beta_t: np.ndarray | None


def connection_coefficients(rc, k, x, sk=None, method="quasidet"):
    """Matrices expressing the k-th associated families in two bases.

    ``V^(k)_{n-k} = V_n gamma + V^(1)_{n-1} eta``,
    ``G^(k)T_{n-k} = gamma_t G^T_n + eta_t G^(1)T_{n-1}``,
    ``V^(k)_{n-k} = V_n alpha - Q_n beta`` and
    ``G^(k)T_{n-k} = alpha_t G^T_n - beta_t R^T_n``.

    ``method="quasidet"`` takes each as the inverse of a last
    quasideterminant of values at k - 1, k; for ``beta`` and ``beta_t`` the
    inverse carries a minus sign (forced at k = 1).  The gamma/eta
    quasideterminants subtract two dominant solutions and lose about
    (growth ratio)^k digits, so ``method="closed"`` offers the equivalent
    polynomial forms::

        gamma   = -C_1^{-1} G^(1)T_{k-2} A_{k-1}    eta   = A_0^{-1} G^T_{k-1} A_{k-1}
        gamma_t = -C_k V^(1)_{k-2} A_0^{-1}         eta_t = C_k V_{k-1} C_1^{-1}
        alpha   = R^T_{k-1} A_{k-1}                  beta  = G^T_{k-1} A_{k-1}
        alpha_t = C_k Q_{k-1}                        beta_t = C_k V_{k-1}

    The Q/R variants need a :class:`~mbop.secondkind.SecondKindSequence`
    ``sk`` at the same x and are ``None`` otherwise.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if method not in ("quasidet", "closed"):
        raise ValueError(f"unknown method {method!r}")
    dim = rc.dim
    eye, zero = np.eye(dim, dtype=complex), np.zeros((dim, dim), dtype=complex)
    v = v_values(rc, x, k)
    gt = gt_values(rc, x, k)
    v1 = v_values(rc, x, max(k - 1, 0), k=1)
    g1 = gt_values(rc, x, max(k - 1, 0), k=1)
    if method == "closed":
        Ak = rc.a(k - 1)
        gamma = -rc.c_inv(1) @ g1[k - 2] @ Ak
        eta = rc.a_inv(0) @ gt[k - 1] @ Ak
        gamma_t = -rc.c(k) @ v1[k - 2] @ rc.a_inv(0)
        eta_t = rc.c(k) @ v[k - 1] @ rc.c_inv(1)
        alpha = beta = alpha_t = beta_t = None
        if sk is not None:
            alpha, beta = sk.rt[k - 1] @ Ak, gt[k - 1] @ Ak
            alpha_t, beta_t = rc.c(k) @ sk.q[k - 1], rc.c(k) @ v[k - 1]
        return Connection(gamma, eta, gamma_t, eta_t, alpha, beta, alpha_t, beta_t)
    if k == 1:
        gamma, eta, gamma_t, eta_t = zero, eye, zero, eye
    else:
        gamma = _theta_inv(v1[k - 2], v[k - 1], v1[k - 1], v[k], "gamma")
        eta = _theta_inv(v[k - 1], v1[k - 2], v[k], v1[k - 1], "eta")
        gamma_t = _theta_inv(g1[k - 2], g1[k - 1], gt[k - 1], gt[k], "gamma_t")
        eta_t = _theta_inv(gt[k - 1], gt[k], g1[k - 2], g1[k - 1], "eta_t")
    alpha = beta = alpha_t = beta_t = None
    if sk is not None:
        alpha, th_vq, alpha_t, th_gr = quasidet_inverses(rc, x, k, sk, v, gt)
        beta, beta_t = -th_vq, -th_gr
    return Connection(gamma, eta, gamma_t, eta_t, alpha, beta, alpha_t, beta_t)


class Residual(NamedTuple):
    residual: float
    scale: float

    @property
    def relative(self):
        return self.residual / self.scale if self.scale > 0 else self.residual


def residual_of(lhs, rhs_terms):
    """Norm of lhs - sum(rhs_terms) with scale = max norm of the pieces."""
    rhs = sum(rhs_terms)
    scale = max([np.linalg.norm(lhs)] + [np.linalg.norm(t) for t in rhs_terms])
    return Residual(float(np.linalg.norm(lhs - rhs)), float(scale))


def associated_shift_relation_check(rc, k, x, n):
    """Residuals of the shift-in-k relations for the V and G sides.

    V side::

        x V^(k)_{n-1} = V^(k-1)_n A_{k-1} + V^(k)_{n-1} A_{k-1}^{-1} B_{k-1} A_{k-1}
                        + V^(k+1)_{n-2} A_k^{-1} C_k A_{k-1}

    G side::

        x G^(k)T_{n-1} = C_k G^(k-1)T_n + C_k B_{k-1} C_k^{-1} G^(k)T_{n-1}
                         + C_k A_{k-1} C_{k+1}^{-1} G^(k+1)T_{n-2}
    """
    if k < 1 or n < 1:
        raise ValueError("need k >= 1 and n >= 1")
    vk, vkm, vkp = (v_values(rc, x, n, k=j) for j in (k, k - 1, k + 1))
    gk, gkm, gkp = (gt_values(rc, x, n, k=j) for j in (k, k - 1, k + 1))
    A, Am, B, C = rc.a(k), rc.a(k - 1), rc.b(k - 1), rc.c(k)
    Ainv, Aminv, Cinv, Cpinv = rc.a_inv(k), rc.a_inv(k - 1), rc.c_inv(k), rc.c_inv(k + 1)
    v_side = residual_of(x * vk[n - 1], [
        vkm[n] @ Am,
        vk[n - 1] @ Aminv @ B @ Am,
        vkp[n - 2] @ Ainv @ C @ Am,
    ])
    g_side = residual_of(x * gk[n - 1], [
        C @ gkm[n],
        C @ B @ Cinv @ gk[n - 1],
        C @ Am @ Cpinv @ gkp[n - 2],
    ])
    return v_side, g_side
