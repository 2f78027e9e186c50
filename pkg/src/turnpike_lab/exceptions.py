class TurnpikeLabError(Exception):
    """Base class for errors raised by turnpike_lab."""


class ConfigError(TurnpikeLabError, ValueError):
    pass


class EllipticityError(TurnpikeLabError, ValueError):
    pass


class ResolutionError(TurnpikeLabError, ValueError):
    pass


class SingularSystemError(TurnpikeLabError, ArithmeticError):
    pass


class ConvergenceError(TurnpikeLabError, RuntimeError):
    """An iterative solver hit its iteration cap before reaching tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class DimensionError(TurnpikeLabError, ValueError):
    pass
