"""Exception hierarchy shared by every stage of the pipeline."""


class MprError(Exception):
    """Base class for all errors raised by this package."""


# dataset
class MissingModality(MprError):
    pass


class MalformedGnss(MprError):
    pass


class DecodeError(MprError):
    pass


class InvalidFix(MprError, ValueError):
    pass


class IndexOutOfRange(MprError, ValueError):
    pass


class IncompleteGroundTruth(MprError, ValueError):
    pass


# descriptors
class WrongChannelCount(MprError, ValueError):
    pass


class EmptyImage(MprError, ValueError):
    pass


class InsufficientFeatures(MprError, ValueError):
    pass


class DimensionMismatch(MprError, ValueError):
    pass


class ParseError(MprError, ValueError):
    """Malformed input file (descriptor payload or configuration)."""


class InvalidChannel(MprError, ValueError):
    pass


# matching
class ChannelMismatch(MprError, ValueError):
    pass


class AllWeightsZero(MprError, ValueError):
    pass


# tuning
class EmptyList(MprError, ValueError):
    pass


class InvalidRange(MprError, ValueError):
    pass


# evaluation
class MissingGroundTruth(MprError, LookupError):
    pass


# configuration
class UnknownKey(ParseError):
    pass


class MissingRequired(ParseError):
    pass
