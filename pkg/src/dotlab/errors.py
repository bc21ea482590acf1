"""Exception types shared across the package."""


class DotlabError(Exception):
    """Base class for all domain errors raised by dotlab."""


class ConfigError(DotlabError):
    """Invalid device configuration: schema or invariant violation."""


class ConvergenceError(DotlabError):
    """An iterative solver failed to converge."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class MergedDotsError(DotlabError):
    """The two localized orbitals cannot be distinguished (single well)."""


class FitError(DotlabError):
    """A fit could not be performed or did not converge."""
