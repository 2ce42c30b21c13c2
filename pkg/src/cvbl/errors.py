"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A numeric parameter is outside its admissible range."""


class DimensionError(ValueError):
    """Array sizes do not match the operator they are applied to."""


class ConvergenceError(RuntimeError):
    """An iterative solver stopped before reaching its tolerance.

    The final residual and iteration count are kept on the instance so
    callers can report them.
    """

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class TruncationError(RuntimeError):
    """The nonnegative-orthant sampler exhausted its proposal budget."""


class ConfigError(ValueError):
    """An experiment configuration could not be parsed or validated."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
