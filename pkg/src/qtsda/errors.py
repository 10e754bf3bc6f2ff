"""Exception hierarchy shared by the algebra backends, solvers and models."""


class QtsdaError(Exception):
    """Base class for all errors raised by this package."""


class BackendMismatch(QtsdaError, TypeError):
    """Operands belong to different algebra backends or have different orders."""


class Breakdown(QtsdaError, ArithmeticError):
    """A matrix that must be inverted is singular to working precision."""


class SpectralError(Breakdown):
    """A Toeplitz symbol vanishes (to tolerance) on the unit circle."""


class WindingError(Breakdown):
    """A Toeplitz symbol has nonzero winding number, so T(a) is not invertible."""


class NotReducible(QtsdaError):
    """The pencil cannot be brought to SSF-I form (S = [N1, M2] is singular)."""


class PreconditionError(QtsdaError, ValueError):
    """An input violates a documented precondition."""


class ModelInvalid(QtsdaError, ValueError):
    """Random-walk model data are not valid probabilities."""


class BranchAmbiguous(QtsdaError):
    """The two roots of the scalar quadratic have (nearly) equal modulus."""


class NoWienerSolution(QtsdaError):
    """Symbol coefficients fail to decay within the maximum grid size."""


class NotSubstochastic(QtsdaError, ValueError):
    """A symbol expected to be substochastic has g(1) > 1."""


class OracleInapplicable(QtsdaError, ValueError):
    """The brute-force oracle cannot be applied to these coefficients."""
