"""Exception hierarchy shared by every module."""


class MspeError(Exception):
    """Base class for all engine errors."""


class ShapeError(MspeError, ValueError):
    pass


class ConfigError(MspeError, ValueError):
    pass


class ValidationError(MspeError, ValueError):
    pass


class AssignmentCoverageError(MspeError, KeyError):
    """A MultiScale assignment does not cover a requested (layer, head)."""

    def __str__(self):
        return Exception.__str__(self)


class SnapshotIncompleteError(MspeError, ValueError):
    pass


class SequenceLengthError(MspeError, ValueError):
    pass


class VocabError(MspeError, ValueError):
    pass


# weight-file errors; each failure mode gets its own type
class WeightFileNotFoundError(MspeError, FileNotFoundError):
    pass


class BadHeaderError(MspeError, ValueError):
    pass


class WeightShapeError(ShapeError):
    pass


class NonFiniteWeightsError(MspeError, ValueError):
    pass
