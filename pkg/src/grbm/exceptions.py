"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Array shapes are inconsistent with the model dimensions."""


class CapabilityError(ValueError):
    """Requested exact computation is too large to enumerate."""


class ChainError(RuntimeError):
    """A Markov chain produced a non-finite state.

    Attributes:
        step: 1-based index of the sampling step that failed.
    """

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (at step {step})")
        self.step = step


class GradientError(RuntimeError):
    """A gradient contained non-finite entries."""


class TrainingAbort(RuntimeError):
    """Training stopped because a chain or gradient failed.

    Attributes:
        epoch: epoch index at failure.
        batch: batch index within the epoch.
    """

    def __init__(self, message: str, epoch: int, batch: int):
        super().__init__(f"epoch {epoch}, batch {batch}: {message}")
        self.epoch = epoch
        self.batch = batch


class FormatError(ValueError):
    """A binary file does not match its declared format.

    Attributes:
        offset: byte offset at which parsing failed, when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(ValueError):
    """A run configuration is missing, malformed, or contradictory."""
