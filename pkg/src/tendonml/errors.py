"""Exception hierarchy shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for every error raised by tendonml."""


class EmptyInput(ToolkitError, ValueError):
    pass


class LengthMismatch(ToolkitError, ValueError):
    pass


class NonFiniteInput(ToolkitError, ValueError):
    pass


class NotPositiveDefinite(ToolkitError, ArithmeticError):
    """Cholesky hit a non-positive pivot; the caller should raise jitter."""


class RankDeficient(ToolkitError, ArithmeticError):
    pass


class NoConvergence(ToolkitError, ArithmeticError):
    def __init__(self, residual: float, message: str | None = None):
        self.residual = float(residual)
        super().__init__(message or f"no convergence, final residual {self.residual:.3e}")


class BadGridSpec(ToolkitError, ValueError):
    pass


class DatasetTooSparse(ToolkitError):
    pass


class TooFewSamples(ToolkitError, ValueError):
    pass


class SchemaMismatch(ToolkitError, ValueError):
    pass


class FitDiverged(ToolkitError, ArithmeticError):
    pass


class NonFiniteLoss(FitDiverged):
    pass


class MissingOrderingMetadata(ToolkitError, ValueError):
    pass


class UnknownHyperparameter(ToolkitError, KeyError):
    def __str__(self):
        # KeyError quotes its message; keep it readable
        return str(self.args[0]) if self.args else ""


class ConfigError(ToolkitError, ValueError):
    pass


class MaxIterExceeded(UserWarning):
    """Warning category: an iterative solver stopped at its iteration cap."""
