import numpy as np
import pytest

from mbop.recurrence import perturbed_coefficients, random_coefficients, scalar_chebyshev


def rand_matrix(rng, n, complex_entries=True):
    m = rng.standard_normal((n, n))
    if complex_entries:
        m = m + 1j * rng.standard_normal((n, n))
    return m


def block_diagonal_rc(*scalars):
    """N-dim constant rc assembled from scalar (a, b) Chebyshev problems."""
    from mbop.recurrence import RecurrenceCoefficients

    A = np.diag([a for a, _ in scalars]).astype(complex)
    B = np.diag([b for _, b in scalars]).astype(complex)
    return RecurrenceCoefficients.constant(A, B, A.copy(), mode="orthonormal")


# tail used by the outer-ratio problems
TAIL_A = np.array([[0.5, 0.0], [0.1, 0.4]])
TAIL_B = np.array([[0.0, 0.1], [0.1, 0.2]])
TAIL_C = np.array([[0.45, 0.05], [0.0, 0.5]])


def outer_ratio_problem():
    return perturbed_coefficients(TAIL_A, TAIL_B, TAIL_C, head=200, amplitude=0.3,
                                  rate=0.9, seed=1)


def delta_problem():
    return perturbed_coefficients(TAIL_A, TAIL_B, TAIL_C, head=50, amplitude=0.3,
                                  rate=0.7, seed=2)


@pytest.fixture
def cheb():
    return scalar_chebyshev()


@pytest.fixture(params=[1, 2, 3])
def random_rc(request):
    return random_coefficients(request.param, seed=request.param + 10)
