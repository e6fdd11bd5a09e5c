"""Acceptance suite: one printed PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines.
"""

import time

import numpy as np

from conftest import delta_problem, outer_ratio_problem
from mbop.asymptotics import Target, decay_study, delta_expansion, run_study
from mbop.identities import battery
from mbop.recurrence import (
    RecurrenceCoefficients,
    assoc_casorati_det,
    casorati,
    casorati_det_step,
    perturbed_coefficients,
    random_coefficients,
    scalar_chebyshev,
    solution_values,
    v_values,
)
from mbop.secondkind import (
    StieltjesSource,
    duran_closed_form,
    quadratic_residual,
    stieltjes_fixed_point,
)
from mbop.spectral import g_zeros, gershgorin_bound, pair_zero_sets, zeros

SQRT3 = np.sqrt(3.0)


def report(number, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
    assert ok, detail


def test_criterion_1_scalar_limits():
    t0 = time.perf_counter()
    rc = scalar_chebyshev()
    errs = {}
    for target, ref in ((Target.SCALAR_P_RATIO, 2 + SQRT3), (Target.SCALAR_Q_RATIO, 2 - SQRT3),
                        (Target.SCALAR_PQ_PRODUCT, 1 / SQRT3)):
        st = run_study(rc, None, target, 2.0, [200])
        # compare with the closed-form numbers directly, not only the study's limit
        errs[target.value] = abs(st.values[0][0, 0] - ref)
    elapsed = time.perf_counter() - t0
    ok = max(errs.values()) < 1e-4 and elapsed < 1.0
    detail = ", ".join(f"{k}={v:.1e}" for k, v in errs.items())
    report(1, ok, f"scalar limits at n=200: {detail}; {elapsed:.2f}s")


def test_criterion_2_identity_battery():
    t0 = time.perf_counter()
    points = [2.0, 3 + 0.5j, -4.0]
    worst, worst_id, count, bad = 0.0, None, 0, 0
    for dim in (1, 2, 3):
        for seed in range(5):
            rc = random_coefficients(dim, seed=seed, mode="biorthogonal")
            assert gershgorin_bound(rc) < 2.0
            reps = battery(rc, StieltjesSource.nevai_tail(rc), points, 15, tol=1e-9)
            for r in reps:
                if r.informational:
                    continue
                count += 1
                bad += not r.passed
                if r.relative > worst:
                    worst, worst_id = r.relative, f"{r.identity_id} N={dim} seed={seed} n={r.n}"
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and elapsed < 30
    report(2, ok, f"{count} residuals, {bad} above 1e-9*scale, worst {worst:.1e} ({worst_id}); "
                  f"{elapsed:.1f}s")


def _banded_problem(dim, seed):
    """Real orthonormal set whose solutions stay bounded at in-band points."""
    rng = np.random.default_rng(100 + dim)
    g = rng.standard_normal((dim, dim))
    B = 0.05 * (g + g.T)
    A = np.eye(dim) / 2
    rc = perturbed_coefficients(A, B, A, head=10, amplitude=0.2, rate=0.8, seed=seed,
                                mode="orthonormal")
    beta = np.linalg.eigvalsh(B)
    lo, hi = beta.max() - 1, beta.min() + 1
    return rc, np.linspace(lo, hi, 6)[1:-1]


def test_criterion_3_casorati():
    worst_step = worst_prod = 0.0
    for dim in (1, 2, 3):
        for seed in range(3):
            rc, xs = _banded_problem(dim, seed)
            rng = np.random.default_rng(seed)
            for x in xs:
                s1 = solution_values(rc, x, rng.standard_normal((dim, dim)),
                                     rng.standard_normal((dim, dim)), 22)
                s2 = solution_values(rc, x, rng.standard_normal((dim, dim)),
                                     rng.standard_normal((dim, dim)), 22)
                fs = [lambda m, s=s1: s[m], lambda m, s=s2: s[m]]
                prev = casorati(fs, 0).det()
                for n in range(1, 21):
                    w = casorati(fs, n).det()
                    worst_step = max(worst_step,
                                     abs(w - casorati_det_step(rc, prev, n)) / abs(w))
                    prev = w
                v = v_values(rc, x, 22)
                v1 = v_values(rc, x, 22, k=1)
                fam = [lambda m: v[m], lambda m: v1[m - 1]]
                for n in range(0, 21):
                    direct = casorati(fam, n).det()
                    formula = assoc_casorati_det(rc, n)
                    worst_prod = max(worst_prod, abs(direct - formula) / abs(formula))
    ok = worst_step < 1e-9 and worst_prod < 1e-9
    report(3, ok, f"Casorati step worst rel {worst_step:.1e}, product formula worst rel "
                  f"{worst_prod:.1e} (n<=20)")


def test_criterion_4_spectral():
    rc = scalar_chebyshev()
    cheb_err = 0.0
    for n in (2, 5, 10):
        got = np.sort(np.real(zeros(rc, 0, n).zeros))
        ref = np.sort(np.cos(np.arange(1, n + 1) * np.pi / (n + 1)))
        cheb_err = max(cheb_err, np.max(np.abs(got - ref)),
                       np.max(np.abs(np.imag(zeros(rc, 0, n).zeros))))
    pair_worst, outside, all_paired = 0.0, 0, True
    for seed in range(5):
        rc2 = random_coefficients(2, seed=seed)
        M = gershgorin_bound(rc2)
        for k in (0, 1, 2):
            for n in (1, 3, 6, 10):
                zv = zeros(rc2, k, n)
                matched, worst = pair_zero_sets(zv, g_zeros(rc2, k, n))
                all_paired &= matched
                pair_worst = max(pair_worst, worst)
                outside += sum(abs(z) > M + 1e-9 for z in zv.zeros)
    ok = cheb_err < 1e-9 and all_paired and pair_worst < 1e-8 and outside == 0
    report(4, ok, f"Chebyshev zeros err {cheb_err:.1e}; V/G pairing worst {pair_worst:.1e}; "
                  f"{outside} zeros outside the Gershgorin disk")


def _outside_points(M):
    return [1.5 * M * np.exp(1j * t) for t in (0.0, 0.7, 1.9, np.pi, 4.4)]


def test_criterion_5_quadratic_equations():
    fp_worst = duran_worst = scalar_worst = 0.0
    for dim in (1, 2, 3):
        rc = random_coefficients(dim, seed=dim)
        A, B, C = rc.tail
        M = gershgorin_bound(RecurrenceCoefficients.constant(A, B, C, mode="general"))
        for z in _outside_points(M):
            for side in ("q", "v"):
                F = stieltjes_fixed_point(A, B, C, z, side)
                fp_worst = max(fp_worst, quadratic_residual(A, B, C, z, F, side))
        rng = np.random.default_rng(dim)
        g = rng.standard_normal((dim, dim))
        As = g @ g.T / dim + 0.5 * np.eye(dim)
        h = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        Bh = 0.3 * (h + h.conj().T)
        M = gershgorin_bound(RecurrenceCoefficients.constant(As, Bh, As, mode="orthonormal"))
        for z in _outside_points(M):
            F = duran_closed_form(As, Bh, z)
            duran_worst = max(duran_worst, quadratic_residual(As, Bh, As, z, F, "q"))
    for z in _outside_points(1.0):
        ref = 2 * (z - z * np.sqrt(1 - 1 / z ** 2))
        half, zero = np.array([[0.5]]), np.zeros((1, 1))
        F1 = stieltjes_fixed_point(half, zero, half, z, "q")[0, 0]
        F2 = duran_closed_form(half, zero, z)[0, 0]
        scalar_worst = max(scalar_worst, abs(F1 - ref), abs(F2 - ref))
    ok = fp_worst < 1e-9 and duran_worst < 1e-9 and scalar_worst < 1e-10
    report(5, ok, f"fixed-point residual {fp_worst:.1e}, closed-form residual {duran_worst:.1e}, "
                  f"scalar agreement {scalar_worst:.1e}")


def test_criterion_6_outer_ratios():
    rc = outer_ratio_problem()
    grid = [10, 20, 40, 80, 160]
    parts, ok = [], True
    for target in ("RATIO_V", "RATIO_G", "RATIO_Q", "RATIO_R", "PRODUCT_RV", "PRODUCT_GQ"):
        st = run_study(rc, None, target, 3.0, grid)
        good = st.converged and st.errors[-1] < 1e-3 * st.errors[0]
        ok &= good
        parts.append(f"{target} {st.errors[0]:.1e}->{st.errors[-1]:.1e}{'' if good else ' (no)'}")
    report(6, ok, "; ".join(parts))


def test_criterion_7_associated_limit_proxy():
    rc = delta_problem()
    eye = np.eye(rc.dim)
    ks = [0, 5, 10, 20, 30, 40]
    ok, parts = True, []
    for ell in range(5):
        dev = [np.linalg.norm(delta_expansion(rc, ell, k)[0] - (eye if ell == 0 else 0), 2)
               for k in ks]
        good = dev[-1] == 0 if ell == 0 else dev[-1] < 1e-2 * dev[0]
        ok &= good
        parts.append(f"l={ell} {dev[0]:.1e}->{dev[-1]:.1e}")
    st = run_study(rc, None, "UK_TRANSFORM", 3.0, list(range(0, 41)))
    spread = max(st.extra["estimate_spread"])
    ok &= spread < 1e-8
    parts.append(f"transform estimate spread {spread:.1e}")
    report(7, ok, "; ".join(parts))


def test_criterion_8_decay():
    rc = scalar_chebyshev()
    ratios = {st.target_id.value: st.errors[0] / st.errors[1]
              for st in decay_study(rc, None, 2.0, [5, 40])}
    ok = min(ratios.values()) > 1e3
    report(8, ok, ", ".join(f"{k} shrink {v:.1e}" for k, v in ratios.items()))
