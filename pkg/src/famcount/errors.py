"""Exception types shared across the package."""


class FamcountError(Exception):
    """Base class for all errors raised by this package."""


class DatasetLoadError(FamcountError):
    """A dataset file is missing or unreadable."""


class AnnotationValidationError(FamcountError):
    """An annotation record violates the data-model invariants."""

    def __init__(self, image_id: str, field: str, message: str):
        self.image_id = image_id
        self.field = field
        super().__init__(f"image '{image_id}', field '{field}': {message}")


class SplitIntegrityError(FamcountError):
    """Dataset splits share object categories."""


class DegenerateExemplarError(FamcountError):
    """An exemplar box collapsed below 1x1 pixel."""


class EmptyAnnotationError(FamcountError):
    """An operation that needs at least one dot received none."""


class OutOfBoundsError(FamcountError):
    """A dot or box lies outside the image frame."""


class ImageTooSmallError(FamcountError):
    """Input image is below the minimum size the backbone supports."""


class KernelTooLargeError(FamcountError):
    """An exemplar kernel is spatially larger than the feature grid."""


class ConfigurationError(FamcountError):
    """Incompatible model configuration (channel counts, fingerprints, ...)."""


class CheckpointError(FamcountError):
    """A checkpoint file is missing, malformed, or incompatible."""
