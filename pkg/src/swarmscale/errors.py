"""Exception types shared across the package."""


class SwarmscaleError(Exception):
    """Base class for all package errors."""


class NormalizationError(SwarmscaleError):
    """An angular density does not integrate to one within tolerance."""


class QuadratureError(SwarmscaleError):
    """Adaptive quadrature failed to converge at the maximum refinement."""


class GridError(SwarmscaleError):
    """Invalid spatial grid or mismatched field shapes."""


class CFLError(SwarmscaleError):
    """A stability precondition on the time step is violated."""


class SolverError(SwarmscaleError):
    """A solver produced an invalid state (NaN, negative density, no sweep)."""


class ConfigError(SwarmscaleError):
    """Invalid or unknown configuration input."""


class AuditError(SwarmscaleError):
    """A conservation or reproducibility audit failed."""
