"""Exception hierarchy shared across the package.

Everything raised on purpose derives from PureSearchError so the CLI can
map "data problems" to a single exit code.
"""


class PureSearchError(Exception):
    """Base class for all errors raised by this package."""


class DecodeError(PureSearchError):
    """Blob is not a decodable image in a supported format."""


class ValidationError(PureSearchError):
    """Input violates a store or record invariant."""


class NotFound(PureSearchError):
    """Referenced query, image, or file does not exist."""


class AcquisitionError(PureSearchError):
    """Search provider is unreachable or returned an unusable listing."""


class MetadataNotFound(PureSearchError):
    """The image URL is not referenced anywhere in the page HTML."""


class DegenerateImage(PureSearchError):
    """Image has no pixels."""


class InvalidK(PureSearchError):
    """Requested cluster count is outside [1, n]."""


class InvalidInput(PureSearchError):
    """Numeric input is malformed (wrong dimension, non-finite, ...)."""


class NoPrototypes(PureSearchError):
    """Every top-ranked candidate was filtered out as symbolic."""


class DegenerateTraining(PureSearchError):
    """Training rows are all one class."""


class InsufficientData(PureSearchError):
    """Not enough labeled rows for the requested cross-validation."""


class UndefinedMetric(PureSearchError):
    """Metric has no defined value (e.g. empty relevant set)."""
