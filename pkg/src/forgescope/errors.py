"""Exception types shared across the detection pipeline."""


class ForgescopeError(Exception):
    """Base class for all library errors."""


class DecodeError(ForgescopeError):
    """Malformed image file. Carries the byte offset of the first bad structure."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class UnsupportedFormatError(ForgescopeError):
    """File is not a PNG or baseline JPEG, or uses an unsupported variant."""


class ImageTooSmall(ForgescopeError):
    """Image dimensions below the minimum an operation requires."""


class PatchSizeError(ForgescopeError):
    """Patch does not have the expected fixed dimensions."""


class ShapeError(ForgescopeError):
    """Array shape incompatible with a model or operation."""


class SingleClassError(ForgescopeError):
    """Labelled data contains only one class."""


class DegenerateHistogram(ForgescopeError):
    """Score histogram collapses to a single bin; no threshold exists."""


class MissingSeeds(ForgescopeError):
    """Random-walker seed set is empty."""


class SeedConflict(ForgescopeError):
    """Foreground and background seeds overlap."""


class TruncatedModel(ForgescopeError):
    """Model file ends before the declared parameters."""


class VersionMismatch(ForgescopeError):
    """Model file magic or version byte does not match this reader."""


class MissingModel(ForgescopeError):
    """A required per-task classifier was not supplied."""

    def __init__(self, task):
        super().__init__(f"no model for task {task}")
        self.task = task


class ParamRange(ForgescopeError):
    """Transform parameter outside its documented range."""


class InsufficientTexture(ForgescopeError):
    """Not enough textured content to match or synthesize."""
