"""Exception types shared across the package."""


class NumericalFailure(RuntimeError):
    """A positive-definite factorization failed even after jitter escalation.

    ``jitter`` holds the largest jitter that was attempted before giving up.
    """

    def __init__(self, message: str, jitter: float | None = None):
        super().__init__(message)
        self.jitter = jitter


class DegenerateWeights(RuntimeError):
    """All unnormalized walk weights collapsed to zero (performance underflow)."""


class CsvFormatError(ValueError):
    """A CSV file failed to parse; ``line`` is the 1-based offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line
