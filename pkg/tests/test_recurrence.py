import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mbop.errors import SingularCoefficient, SpecError
from mbop.recurrence import (
    MatrixPolynomial,
    RecurrenceCoefficients,
    assoc_casorati_det,
    associated_shift_relation_check,
    casorati,
    casorati_det_step,
    chebyshev_reference,
    connection_coefficients,
    forward_ratios,
    generate_family,
    gt_values,
    independence_test,
    ordered_product,
    perturbed_coefficients,
    q_casorati_det,
    random_coefficients,
    scalar_chebyshev,
    solution_values,
    solve_difference_equation,
    v_values,
)
from mbop.secondkind import StieltjesSource, second_kind

from conftest import rand_matrix


# --- coefficients -----------------------------------------------------------

def test_conventions(cheb):
    assert np.allclose(cheb.c(0), 1)
    assert np.allclose(cheb.a(-1), 1)
    rc = random_coefficients(2, seed=4)
    assert np.allclose(rc.c(0), np.eye(2))
    assert np.allclose(rc.a(-1), np.eye(2))


def test_validation_messages():
    with pytest.raises(SpecError, match="C_0 must be identity"):
        RecurrenceCoefficients.scalar([0.5], [0], [0.7], tail=(0.5, 0, 0.5))
    lower = np.array([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(SpecError, match="lower triangular"):
        RecurrenceCoefficients([lower], [np.zeros((2, 2))], [np.eye(2)], mode="biorthogonal")
    with pytest.raises(SpecError, match="Hermitian"):
        RecurrenceCoefficients([np.eye(2)], [np.array([[0, 1], [0, 0]])], [np.eye(2)],
                               mode="orthonormal")


def test_singular_coefficient_raises():
    rc = RecurrenceCoefficients.scalar([0.5, 0.0], [0, 0], [1, 0.5], tail=(0.5, 0, 0.5),
                                       validate=False)
    with pytest.raises(SingularCoefficient):
        rc.a_inv(1)


def test_tail_lookup():
    rc = perturbed_coefficients(np.eye(2) / 2, np.zeros((2, 2)), np.eye(2) / 2, head=5)
    assert rc.cutoff >= 5
    assert np.allclose(rc.a(1000), np.eye(2) / 2)
    assert rc.has_tail


# --- polynomials --------------------------------------------------------------

def test_horner_matches_naive():
    rng = np.random.default_rng(1)
    p = MatrixPolynomial(np.stack([rand_matrix(rng, 2) for _ in range(6)]))
    for x in (0.3, -1.7 + 0.4j, 2.0):
        assert np.linalg.norm(p(x) - p.eval_naive(x)) <= 1e-12 * max(1, np.linalg.norm(p(x)))


def test_monic_flag_and_derivative():
    p = MatrixPolynomial(np.stack([np.zeros((2, 2)), np.zeros((2, 2)), np.eye(2)]))
    assert p.is_monic and p.degree == 2
    d = p.derivative()
    assert np.allclose(d(1.5), 3.0 * np.eye(2))


@pytest.mark.parametrize("n", [1, 3, 6])
def test_derivative_finite_difference(n):
    coeffs = np.zeros((n + 1, 2, 2))
    coeffs[n] = np.eye(2)
    p = MatrixPolynomial(coeffs)
    h = 1e-6
    fd = (p(1.1 + h) - p(1.1 - h)) / (2 * h)
    assert np.linalg.norm(p.derivative()(1.1) - fd) < 1e-7 * n


def test_divided_difference_coincident_points():
    rng = np.random.default_rng(2)
    p = MatrixPolynomial(np.stack([rand_matrix(rng, 2) for _ in range(5)]))
    x, y = 0.7, 0.7 + 1e-9
    assert np.linalg.norm(p.divided_difference(x, y) - p.derivative()(x)) < 1e-7
    x, y = 0.7, -0.4
    assert np.allclose(p.divided_difference(x, y), (p(x) - p(y)) / (x - y))


# --- families -----------------------------------------------------------------

def test_scalar_chebyshev_family(cheb):
    fam = generate_family(cheb, "V", 0, 4)
    assert np.allclose(fam[0].coeffs, [[[1]]])
    assert np.allclose(fam[1].coeffs[:, 0, 0], [0, 2])
    assert np.allclose(fam[2].coeffs[:, 0, 0], [-1, 0, 4])
    assert np.allclose(fam[-1](0.3), 0)


def test_identity_coefficients_family():
    rc = RecurrenceCoefficients.constant(np.eye(2), np.zeros((2, 2)), np.eye(2), mode="general")
    p2 = generate_family(rc, "V", 0, 2)[2]
    for x in (0.0, 1.5, -2.0):
        assert np.allclose(p2(x), (x * x - 1) * np.eye(2))


def test_family_recurrence_residuals(random_rc):
    for kind in ("V", "G"):
        for k in (0, 2):
            fam = generate_family(random_rc, kind, k, 10)
            assert max(fam.recurrence_residuals(0.4 + 0.3j)) < 1e-10


def test_values_agree_with_polynomials(random_rc):
    x = 1.3 - 0.2j
    v = v_values(random_rc, x, 8, k=1)
    fam = generate_family(random_rc, "V", 1, 8)
    for n in range(9):
        assert np.allclose(v[n], fam[n](x))
    gt = gt_values(random_rc, x, 8)
    gfam = generate_family(random_rc, "G", 0, 8)
    for n in range(9):
        assert np.allclose(gt[n], gfam[n](x).T)


def test_chebyshev_reference():
    u, t = chebyshev_reference([[0.5]], [[0]], [[0.5]], 5)
    x = 0.3
    assert np.isclose(u[1](x)[0, 0], 2 * x)
    x = np.cos(np.pi / 4)
    assert abs(u[3](x)[0, 0]) < 1e-12
    theta = 0.7
    for n in range(6):
        assert np.isclose(u[n](np.cos(theta))[0, 0], np.sin((n + 1) * theta) / np.sin(theta))
    A = np.array([[0.5, 0], [0.2, 0.4]])
    B = np.array([[0.1, 0.3], [0.3, -0.2]])
    C = np.array([[0.6, 0.1], [0, 0.3]])
    u2, t2 = chebyshev_reference(A, B, C, 8)
    assert max(u2.recurrence_residuals(0.9)) < 1e-12
    assert max(t2.recurrence_residuals(0.9)) < 1e-12


# --- difference equations -----------------------------------------------------

def test_difference_equation_examples():
    ys = solve_difference_equation(2, lambda n: [0, 0], [1, 1], 4)
    assert [complex(y[0, 0]) for y in ys] == [1, 1, 0, 0, 0]
    fib = solve_difference_equation(2, lambda n: [-1, -1], [1, 1], 5)
    assert [y[0, 0].real for y in fib] == [1, 1, 2, 3, 5, 8]


def test_difference_equation_superposition():
    rng = np.random.default_rng(5)
    coeffs = [[rand_matrix(rng, 2) * 0.5 for _ in range(2)] for _ in range(10)]
    fn = lambda n: coeffs[n]
    e = [np.eye(2), np.zeros((2, 2))]
    f = [np.zeros((2, 2)), np.eye(2)]
    c0, c1 = rand_matrix(rng, 2), rand_matrix(rng, 2)
    full = solve_difference_equation(2, fn, [c0, c1], 9)
    y_e = solve_difference_equation(2, fn, e, 9)
    y_f = solve_difference_equation(2, fn, f, 9)
    for n in range(10):
        assert np.allclose(full[n], y_e[n] @ c0 + y_f[n] @ c1)


def test_difference_equation_rejects_bad_init():
    with pytest.raises(ValueError):
        solve_difference_equation(2, lambda n: [0, 0], [1], 3)


# --- Casorati -----------------------------------------------------------------

def test_casorati_layout_and_scalar_value(cheb):
    v = v_values(cheb, 2.0, 5)
    v1 = v_values(cheb, 2.0, 5, k=1)
    fs = [lambda m: v[m], lambda m: v1[m - 1]]
    w = casorati(fs, 1)
    assert np.allclose(w.assemble(), [[4, 1], [15, 4]])
    assert np.isclose(w.det(), 1)
    assert casorati([lambda m: v[m]], 2).order == 1
    assert np.allclose(casorati([lambda m: v[m]], 2).assemble(), v[2])
    for n in (1, 2, 3):
        assert np.isclose(casorati(fs, n).det(), assoc_casorati_det(cheb, n))


def test_casorati_step_constant_when_a_equals_c():
    rc = RecurrenceCoefficients.scalar([1, 0.7, 0.3], [0.1, 0, 0.2], [1, 0.7, 0.3],
                                       tail=(0.4, 0, 0.4), mode="general")
    x = 0.2
    s1 = solution_values(rc, x, np.eye(1), 2 * np.eye(1), 8)
    s2 = solution_values(rc, x, np.eye(1), -np.eye(1), 8)
    fs = [lambda m: s1[m], lambda m: s2[m]]
    dets = [casorati(fs, n).det() for n in range(1, 7)]
    assert np.allclose(dets, dets[0])


def test_casorati_step_random_n2():
    rc = perturbed_coefficients(np.eye(2) / 2, np.array([[0.05, 0.02], [0.02, -0.03]]),
                                np.eye(2) / 2, head=10, amplitude=0.2, rate=0.8, seed=3,
                                mode="orthonormal")
    rng = np.random.default_rng(3)
    x = 0.1
    s1 = solution_values(rc, x, rng.standard_normal((2, 2)), rng.standard_normal((2, 2)), 12)
    s2 = solution_values(rc, x, rng.standard_normal((2, 2)), rng.standard_normal((2, 2)), 12)
    fs = [lambda m: s1[m], lambda m: s2[m]]
    for n in range(1, 11):
        w = casorati(fs, n).det()
        assert abs(w - casorati_det_step(rc, casorati(fs, n - 1).det(), n)) < 1e-9 * abs(w)


def test_q_casorati_det(cheb):
    x = 2.0
    sk = second_kind(cheb, StieltjesSource.nevai_tail(cheb), x, 10)
    v1 = v_values(cheb, x, 10, k=1)
    fs = [lambda m: sk.q[m], lambda m: v1[m - 1]]
    for n in (1, 3, 5):
        assert np.isclose(casorati(fs, n).det(), q_casorati_det(cheb, 1, n, sk.q[0]))


def test_independence(cheb):
    v = v_values(cheb, 2.0, 10)
    v1 = v_values(cheb, 2.0, 10, k=1)
    res = independence_test([lambda m: v[m], lambda m: v1[m - 1]], range(1, 5))
    assert res.independent and np.isclose(res.det, 1)
    res = independence_test([lambda m: v[m], lambda m: 2 * v[m]], range(0, 6))
    assert not res.independent
    sk = second_kind(cheb, StieltjesSource.nevai_tail(cheb), 2.0, 10)
    res = independence_test([lambda m: v[m], lambda m: sk.q[m]], range(0, 6))
    assert res.independent


# --- connection coefficients --------------------------------------------------

def test_connection_k1_is_trivial(random_rc):
    con = connection_coefficients(random_rc, 1, 2.5, method="closed")
    N = random_rc.dim
    assert np.allclose(con.gamma, 0) and np.allclose(con.eta, np.eye(N))


@pytest.mark.parametrize("method", ["quasidet", "closed"])
def test_connection_reconstructs_scalar(cheb, method):
    x = 2.0
    con = connection_coefficients(cheb, 2, x, method=method)
    v = v_values(cheb, x, 6)
    v1 = v_values(cheb, x, 6, k=1)
    v2 = generate_family(cheb, "V", 2, 4)
    for n in (3, 4, 5):
        recon = v[n] @ con.gamma + v1[n - 1] @ con.eta
        assert np.linalg.norm(recon - v2[n - 2](x)) < 1e-10


def test_alpha_beta_reconstruction(cheb):
    x = 3.0
    src = StieltjesSource.nevai_tail(cheb)
    sk = second_kind(cheb, src, x, 20)
    v = v_values(cheb, x, 20)
    for k in (1, 2, 4):
        con = connection_coefficients(cheb, k, x, sk=sk)
        vk = v_values(cheb, x, 20, k=k)
        for n in range(k, 21):
            target = vk[n - k]
            recon = v[n] @ con.alpha - sk.q[n] @ con.beta
            assert np.linalg.norm(recon - target) <= 1e-9 * max(1, np.linalg.norm(target))


def test_connection_routes_agree_small_k():
    rc = random_coefficients(2, seed=3)
    x = 3.0 + 0.5j
    sk = second_kind(rc, StieltjesSource.nevai_tail(rc), x, 6)
    a = connection_coefficients(rc, 2, x, sk=sk, method="quasidet")
    b = connection_coefficients(rc, 2, x, sk=sk, method="closed")
    for u, w in zip(a, b):
        assert np.linalg.norm(u - w) <= 1e-8 * max(1, np.linalg.norm(w))


def test_associated_shift_relation(cheb):
    for side in associated_shift_relation_check(cheb, 2, 1.7, 4):
        assert side.residual < 1e-12
    for side in associated_shift_relation_check(cheb, 1, 0.3, 1):
        assert side.residual < 1e-14


def test_associated_shift_relation_random():
    rc = random_coefficients(2, seed=8)
    worst = 0.0
    for x in (0.5, 2.0 + 1j, -3.0):
        for k in (1, 2, 3):
            for n in range(1, 7):
                for side in associated_shift_relation_check(rc, k, x, n):
                    worst = max(worst, side.relative)
    assert worst < 1e-9


# --- ratios -------------------------------------------------------------------

def test_forward_ratios_match_values(random_rc):
    x = 3.0
    p, pt = forward_ratios(random_rc, x, 8, k=1)
    v = v_values(random_rc, x, 8, k=1)
    gt = gt_values(random_rc, x, 8, k=1)
    for n in range(1, 8):
        assert np.allclose(p[n], v[n] @ np.linalg.inv(v[n - 1]))
        assert np.allclose(pt[n], np.linalg.inv(gt[n - 1]) @ gt[n])


def test_ordered_product_is_plain_product():
    rng = np.random.default_rng(0)
    fs = [rand_matrix(rng, 3) for _ in range(7)]
    ref = np.linalg.multi_dot(fs)
    for mid in range(8):
        assert np.allclose(ordered_product(fs, middle=mid), ref)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(0, 10 ** 6), st.floats(-3, 3), st.floats(-3, 3))
def test_recurrence_property(dim, seed, xr, xi):
    rc = random_coefficients(dim, seed=seed, head=4)
    fam = generate_family(rc, "V", 0, 8)
    assert max(fam.recurrence_residuals(complex(xr, xi))) < 1e-10
