"""Exception hierarchy. Everything raised on purpose derives from LayerForgeError."""


class LayerForgeError(Exception):
    """Base class for all domain errors."""


class ConfigError(LayerForgeError):
    """Bad or unknown configuration value (template id, color word, style list...)."""


class DecodeError(LayerForgeError):
    """Malformed serialized data; message names the offending field."""


class EmptyInputError(LayerForgeError):
    """An operation that requires a non-empty input got an empty one."""


class InvalidBBoxError(LayerForgeError):
    """Zero-area or otherwise unusable bounding box."""


class AlignmentError(LayerForgeError):
    """Layer list does not line up with layout slots; message names the index."""


class DimensionMismatchError(LayerForgeError):
    """Two grids that must share dimensions do not."""


class BackendError(LayerForgeError):
    """A model backend answered with an error (non-2xx, bad payload...)."""


class TransportError(BackendError):
    """Retriable transport-level failure (timeout, connection refused)."""

    retriable = True


class QualityRejectError(LayerForgeError):
    """Generated layer failed a quality gate; retriable with a new seed."""

    retriable = True


class UndefinedBackgroundError(LayerForgeError):
    """No background pixels to measure."""


class UndefinedRegionError(LayerForgeError):
    """A mask region needed for an aggregate is empty."""


class MissingInputError(LayerForgeError):
    """A required score or embedding is absent; message names what is missing."""


class TrainingFailureError(LayerForgeError):
    """Training diverged; message names the epoch."""


class SampleSynthesisError(LayerForgeError):
    """One or more slots failed after all retries."""

    def __init__(self, message: str, failed_slots: list[int]):
        super().__init__(message)
        self.failed_slots = failed_slots


class UnknownSampleError(LayerForgeError):
    """Review decision references sample ids that do not exist."""

    def __init__(self, message: str, unknown_ids: list[str]):
        super().__init__(message)
        self.unknown_ids = unknown_ids


class JournalWriteError(LayerForgeError):
    """The decision journal could not be persisted."""


class StageOrderError(LayerForgeError):
    """Attempted a non-monotone curation stage transition."""
