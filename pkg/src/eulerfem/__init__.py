"""Invariant-domain-preserving continuous-FE solver for the compressible Euler equations."""

from .errors import (
    CFLViolationError,
    ConfigError,
    EulerFEMError,
    InadmissibleStateError,
    MeshFormatError,
    SolverFailure,
)
from .physics import EquationOfState

__version__ = "0.1.0"

__all__ = [
    "EquationOfState",
    "EulerFEMError",
    "InadmissibleStateError",
    "CFLViolationError",
    "MeshFormatError",
    "ConfigError",
    "SolverFailure",
    "__version__",
]
