"""Exception hierarchy shared across the package."""


class FabError(Exception):
    """Base class for all errors raised by fabcorr."""


class DegenerateInputError(FabError, ValueError):
    """Input data cannot support the requested statistic (e.g. a constant column)."""


class ConfigError(FabError, ValueError):
    """Invalid or inconsistent configuration."""


class EstimationError(FabError, RuntimeError):
    """An iterative estimator failed to converge.

    ``diagnostics`` carries whatever state the estimator had when it gave up.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class NumericalError(FabError, RuntimeError):
    """A linear-algebra step hit a singular or indefinite matrix."""
