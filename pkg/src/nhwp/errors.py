"""Exception hierarchy shared by all modules."""


class NHWPError(Exception):
    """Base class for all package errors."""


class InvalidShapeMatrix(NHWPError, ValueError):
    """Shape matrix B is not symmetric or its imaginary part is not positive definite."""


class DegenerateMetric(NHWPError, ArithmeticError):
    """Metric G is singular, badly conditioned or not positive definite."""


class NotSymplectic(NHWPError, ValueError):
    """Metric violates G Omega G = Omega beyond tolerance."""


class StepFailure(NHWPError, RuntimeError):
    """Adaptive integrator could not take a step."""


class NoConvergence(NHWPError, RuntimeError):
    """Iterative solver did not converge."""


class PacketOutsideGrid(NHWPError, ValueError):
    pass


class MomentumAliasing(NHWPError, ValueError):
    pass


class AliasingDetected(NHWPError, RuntimeError):
    """Probability reached the edge of the position or momentum grid."""


class NonFinite(NHWPError, FloatingPointError):
    pass


class GridMismatch(NHWPError, ValueError):
    pass


class DegenerateCovariance(NHWPError, ArithmeticError):
    pass


class ConfigError(NHWPError, ValueError):
    """Invalid run configuration."""


class NotSeparable(NHWPError, ValueError):
    """Model cannot be written as T(p) + V(q) on a one-dimensional grid."""
