"""Exception and warning types shared across the package."""


class ParameterError(ValueError):
    """A model parameter lies outside its admissible range."""


class InfeasibleAsymmetryError(ParameterError):
    """The asymmetric jump law would leave (0, 1) at displacement +-1."""


class DivergenceError(ArithmeticError):
    """A partition-function type series does not converge."""


class AbsorbingStateError(RuntimeError):
    """Total jump rate is zero; the dynamics cannot move."""


class EnumerationError(MemoryError):
    """Canonical state space exceeds the enumeration budget."""


class AccuracyError(ArithmeticError):
    """A quadrature or iterative solver missed its accuracy target."""


class ResolutionError(ValueError):
    """A mollifier is narrower than the lattice can resolve."""


class PreconditionError(ValueError):
    """An estimator was called outside its stated preconditions."""


class InstabilityError(FloatingPointError):
    """A surrogate time stepper blew up."""


class AliasingWarning(UserWarning):
    """Test function support is comparable to the torus size."""


class QuadratureWarning(UserWarning):
    """Snapshot spacing is too coarse for the requested tolerance."""


class HorizonWarning(UserWarning):
    """Horizon exceeds the time for a typical jump to cross the torus."""


class PartialTrajectoryWarning(UserWarning):
    """A run stopped early because the event budget ran out."""
