"""Long-range weakly asymmetric zero-range processes: simulation and fluctuation-field diagnostics."""

from .equilibrium import Thermo, sample_configuration, thermo
from .errors import (
    AbsorbingStateError,
    AccuracyError,
    AliasingWarning,
    DivergenceError,
    EnumerationError,
    HorizonWarning,
    InfeasibleAsymmetryError,
    InstabilityError,
    ParameterError,
    PartialTrajectoryWarning,
    PreconditionError,
    QuadratureWarning,
    ResolutionError,
)
from .kmc import Configuration, Trajectory, run
from .model_core import JumpKernel, ModelParams, RateFunction, build_kernel, make_rate, normalize_kernel

__version__ = "0.1.0"

__all__ = [
    "AbsorbingStateError", "AccuracyError", "AliasingWarning", "Configuration", "DivergenceError",
    "EnumerationError", "HorizonWarning", "InfeasibleAsymmetryError", "InstabilityError", "JumpKernel",
    "ModelParams", "ParameterError", "PartialTrajectoryWarning", "PreconditionError", "QuadratureWarning",
    "RateFunction", "ResolutionError", "Thermo", "Trajectory", "build_kernel", "make_rate", "normalize_kernel",
    "run", "sample_configuration", "thermo",
]
