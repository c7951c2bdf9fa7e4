"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Array shapes or model dimensions do not agree."""


class DegenerateAlignmentError(ValueError):
    """Predicted landmarks have zero spread, so no scale can be solved."""


class MalformedFileError(ValueError):
    """A serialized artifact could not be parsed."""


class FormatVersionError(ValueError):
    """A serialized artifact carries an unsupported ``format_version``."""


class StaleTapeError(ValueError):
    """A forward tape no longer matches the network it is replayed against."""
