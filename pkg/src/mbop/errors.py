"""Exception and warning types shared across the package."""


class MBOPError(Exception):
    """Base class for numerical failures raised by this package."""


class SingularBlock(MBOPError):
    """A block that has to be inverted failed the conditioning test.

    ``which`` names the offending block or quasideterminant.
    """

    def __init__(self, which, rcond=None):
        self.which = which
        self.rcond = rcond
        msg = f"singular block: {which}"
        if rcond is not None:
            msg += f" (rcond={rcond:.3e})"
        super().__init__(msg)


class SingularCoefficient(MBOPError):
    """A recurrence coefficient A_n or C_n is not invertible."""

    def __init__(self, name, n, rcond=None):
        self.name = name
        self.n = n
        self.rcond = rcond
        super().__init__(f"recurrence coefficient {name}_{n} is singular")


class BranchCut(MBOPError):
    """Principal square root requested for a matrix with spectrum on (-inf, 0]."""


class NoConvergence(MBOPError):
    """An iteration hit its cap before meeting the tolerance."""

    def __init__(self, what, iterations, residual=None):
        self.what = what
        self.iterations = iterations
        self.residual = residual
        msg = f"{what} did not converge after {iterations} iterations"
        if residual is not None:
            msg += f" (last residual {residual:.3e})"
        super().__init__(msg)


class WrongBranch(MBOPError):
    """A converged Stieltjes-type root does not decay like I/x at infinity."""


class NotPositiveDefinite(MBOPError):
    pass


class UnboundedCoefficients(MBOPError):
    pass


class InsideSpectrum(MBOPError):
    """The evaluation point lies inside the Gershgorin disk of the operator."""


class InsideSpectrumWarning(UserWarning):
    pass


class SpecError(ValueError):
    """Invalid problem specification (CLI input)."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
