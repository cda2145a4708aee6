class SynthError(Exception):
    """Base class for every error raised by this package."""


class GrammarError(SynthError):
    pass


class EvaluationError(SynthError):
    """A program could not be evaluated (unbound variable, type mismatch, overflow)."""

    def __init__(self, message, node=None, index=None):
        self.node = node
        self.index = index
        if index is not None:
            message = f"example {index}: {message}"
        super().__init__(message)


class ConfigError(SynthError):
    """Invalid parameters for a noise model, loss, distance or experiment."""
