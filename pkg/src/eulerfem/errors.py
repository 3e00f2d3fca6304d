"""Exception types shared across the solver."""


class EulerFEMError(Exception):
    """Base class for all solver errors."""


class InadmissibleStateError(EulerFEMError):
    """A conservative state left the admissible set (rho > 0, rho*e > 0, b*rho < 1)."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class CFLViolationError(EulerFEMError):
    """The forward-Euler convexity hypothesis 1 + 2*dt*d_ii/m_i >= 0 failed."""


class MeshFormatError(EulerFEMError):
    """Mesh file parse or topology error."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(EulerFEMError):
    """Invalid solver configuration."""


class SolverFailure(EulerFEMError):
    """A run aborted mid-integration; carries the failing step."""

    def __init__(self, message, step=None, time=None):
        super().__init__(message)
        self.step = step
        self.time = time
