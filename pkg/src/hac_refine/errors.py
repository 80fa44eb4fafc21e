"""Exception taxonomy shared by all modules.

Every recoverable failure mode raises one of these; plain ValueError is
reserved for caller bugs (violated preconditions that code should never
hit with validated inputs).
"""


class HacRefineError(Exception):
    """Base class for all package errors."""


class MetaMismatchError(HacRefineError):
    """Two volumes that must share a grid do not."""


class EmptyMaskError(HacRefineError):
    """An operation that needs foreground voxels got an all-zero mask."""


class OutOfBoundsError(HacRefineError):
    """A voxel-space crop box exceeds the grid."""


class NoOverlapError(HacRefineError):
    """A world-space box does not intersect the volume extent."""


class BadSpacingError(HacRefineError):
    """Resampling target spacing is nonpositive or non-finite."""


class BadMagicError(HacRefineError):
    """File is not a single-file NIfTI-1 stream."""


class UnsupportedDatatypeError(HacRefineError):
    """NIfTI datatype code or payload layout outside the supported set."""


class UnsupportedOrientationError(HacRefineError):
    """NIfTI affine is not an axis-aligned permutation/flip."""


class TruncatedFileError(HacRefineError):
    """NIfTI stream ended before header or payload was complete."""


class IoFailureError(HacRefineError):
    """Underlying OS write/read failure."""


class MalformedRowError(HacRefineError):
    """Bounding-box CSV row has wrong arity or non-numeric fields."""


class InvertedBoxError(HacRefineError):
    """Bounding box with lo >= hi on some axis."""


class CollapseError(HacRefineError):
    """Refinement mask collapsed to all-zero or all-one.

    Carries the solver diagnostics collected up to the collapse in the
    ``diagnostics`` attribute (None when raised before any are known).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class BadSpecError(HacRefineError):
    """Phantom specification violates its invariants."""


class EmptyInputError(HacRefineError):
    """An aggregate over zero cases was requested."""


class ConfigError(HacRefineError):
    """Pipeline configuration is malformed (unknown keys, bad values)."""
