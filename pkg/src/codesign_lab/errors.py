"""Exception types shared across the toolkit."""

from __future__ import annotations


class CodesignError(ValueError):
    """Base class. ``code`` is a stable machine-readable identifier."""

    code = "ERROR"


class LengthMismatchError(CodesignError):
    code = "LENGTH_MISMATCH"


class DimNotMultipleError(CodesignError):
    code = "DIM_NOT_MULTIPLE_OF_128"


class EmptyBlockError(CodesignError):
    code = "EMPTY_BLOCK"


class UnsupportedAttentionError(CodesignError):
    code = "UNSUPPORTED_ATTENTION_KIND"


class ScoreLengthMismatchError(CodesignError):
    code = "SCORE_LENGTH_MISMATCH"


class OddRadixError(CodesignError):
    code = "ODD_RADIX"


class ZeroEndpointsError(CodesignError):
    code = "ZERO_ENDPOINTS"


class RelationNotApplicableError(CodesignError):
    code = "RELATION_NOT_APPLICABLE"


class ConfigError(CodesignError):
    """Raised while loading an analysis config. Maps to exit status 2."""

    code = "CONFIG_INVALID"

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}" if field else message)


class ConfigParseError(ConfigError):
    code = "CONFIG_PARSE"


class UnknownPresetError(ConfigError):
    code = "UNKNOWN_PRESET"
