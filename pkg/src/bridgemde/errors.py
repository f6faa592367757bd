"""Exception hierarchy shared by all modules."""


class BridgeMDEError(Exception):
    """Base class for library errors."""


class InvalidArgument(BridgeMDEError, ValueError):
    pass


class NotFound(BridgeMDEError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "not found"


class NumericalBlowup(BridgeMDEError, ArithmeticError):
    """Integration produced a non-finite value.

    Attributes
    ----------
    time : float
        First grid time at which the state was not finite.
    """

    def __init__(self, time, message=None):
        self.time = float(time)
        super().__init__(message or f"non-finite state at t={self.time:.6g}")


class OptimizationFailed(BridgeMDEError, RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class NotPositiveDefinite(BridgeMDEError, ArithmeticError):
    def __init__(self, min_eigenvalue):
        self.min_eigenvalue = float(min_eigenvalue)
        super().__init__(
            f"Fisher information is not positive definite "
            f"(smallest eigenvalue {self.min_eigenvalue:.3e})")


class ExperimentFailed(BridgeMDEError, RuntimeError):
    pass


class ConfigError(BridgeMDEError, ValueError):
    """Invalid run configuration; ``key`` names the offending entry."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)
