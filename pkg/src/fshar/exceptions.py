"""Exception hierarchy shared by all fshar modules."""


class FSHARError(Exception):
    """Base class for every error raised by this package."""


class InvalidConfigurationError(FSHARError, ValueError):
    """Sizes, shapes or hyperparameters are inconsistent."""


class InvalidInputError(FSHARError, ValueError):
    """Data passed to an operation violates its preconditions."""


class NumericInputError(InvalidInputError):
    """Input contains NaN or infinite values."""


class DegenerateEmbeddingError(InvalidInputError):
    """An embedding row has zero norm so its direction is undefined."""


class InsufficientSamplesError(InvalidInputError):
    """A class holds fewer samples than the operation requires."""

    def __init__(self, message, label=None):
        super().__init__(message)
        self.label = label


class ParseError(InvalidInputError):
    """A line of a delimited recording could not be parsed."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class UnknownTermError(FSHARError, KeyError):
    """A term or term pair is missing from the hit-count table."""
