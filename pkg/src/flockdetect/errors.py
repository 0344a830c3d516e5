"""Exception types shared across the package."""


class FlockDetectError(Exception):
    """Base class for all package errors."""


class InvalidPair(FlockDetectError):
    """A pair of agent ids is degenerate (a == b)."""


class InvalidAngle(FlockDetectError):
    """Angle input is not a finite number."""


class IngestFailure(FlockDetectError):
    """Too many malformed rows to trust the input file."""

    def __init__(self, message, bad_lines=None):
        super().__init__(message)
        self.bad_lines = list(bad_lines or [])


class InvalidBinWidth(FlockDetectError):
    """Time-bin width must be a positive number of milliseconds."""


class InsufficientNegatives(FlockDetectError):
    """Not enough singleton pairs to reach the requested negative count."""

    def __init__(self, needed, available):
        super().__init__(
            f"need {needed} negative pairs but only {available} distinct "
            f"singleton pairs are available"
        )
        self.needed = needed
        self.available = available


class CannotInterpolate(FlockDetectError):
    """Synthetic interpolation needs at least two positive samples."""


class InvalidInput(FlockDetectError):
    """Operation received input outside its contract (empty, non-finite, mismatched)."""


class CannotFit(FlockDetectError):
    """Scaler fitting requires a non-empty training set."""


class NumericalFailure(FlockDetectError):
    """NaN/Inf appeared in activations or gradients."""


class TrainingDiverged(FlockDetectError):
    """Validation loss became NaN during training."""

    def __init__(self, epoch):
        super().__init__(f"validation loss diverged (NaN) at epoch {epoch}")
        self.epoch = epoch


class CheckpointError(FlockDetectError):
    """Checkpoint file is corrupt, truncated, or has an unsupported version."""


class ConfigMismatch(FlockDetectError):
    """Model and data disagree on a structural parameter (e.g. sequence length)."""
