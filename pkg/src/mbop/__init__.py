"""Matrix biorthogonal polynomials from block three-term recurrences.

Families V_n, G_n and their second-kind companions Q_n, R_n, the identities
tying them together, zeros via block Jacobi truncations, and convergence
studies for their ratio limits.
"""

from .errors import (
    BranchCut,
    InsideSpectrum,
    InsideSpectrumWarning,
    MBOPError,
    NoConvergence,
    NotPositiveDefinite,
    SingularBlock,
    SingularCoefficient,
    SpecError,
    UnboundedCoefficients,
    WrongBranch,
)
from .recurrence import (
    MatrixPolynomial,
    RecurrenceCoefficients,
    chebyshev_reference,
    connection_coefficients,
    generate_family,
    gt_values,
    perturbed_coefficients,
    random_coefficients,
    scalar_chebyshev,
    v_values,
)
from .secondkind import (
    StieltjesSource,
    associated_transform,
    duran_closed_form,
    second_kind,
    stieltjes_fixed_point,
)
from .identities import IdentityReport, all_passed, battery
from .spectral import gershgorin_bound, zeros
from .asymptotics import ConvergenceStudy, Target, decay_study, delta_expansion, run_study

__version__ = "0.1.0"
