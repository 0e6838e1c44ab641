"""Exception hierarchy.

Each family carries the process exit code the CLI reports for it:

====  ===============================================
code  family
====  ===============================================
1     unexpected failure
2     ConfigError (bad config file, flags, paths)
3     DataError (ingestion, channels, labels)
4     SignalError (filter design, spectral features)
5     ModelError (tensors, training, checkpoints)
6     EvalError (folds, metrics, vote aggregation)
====  ===============================================
"""


class CogloadError(Exception):
    exit_code = 1


class ConfigError(CogloadError, ValueError):
    exit_code = 2


class DataError(CogloadError, ValueError):
    exit_code = 3


class MalformedCsv(DataError):
    pass


class ChannelCountMismatch(DataError):
    pass


class LabelCountMismatch(DataError):
    pass


class LabelOutOfRange(DataError):
    pass


class UnknownChannel(DataError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class RecordingTooShort(DataError):
    pass


class SignalError(CogloadError, ValueError):
    exit_code = 4


class InvalidBand(SignalError):
    pass


class NonFiniteInput(SignalError):
    pass


class SegmentTooShort(SignalError):
    pass


class EmptyBand(SignalError):
    pass


class ModelError(CogloadError, ValueError):
    exit_code = 5


class ShapeMismatch(ModelError):
    pass


class MissingGrad(ModelError):
    pass


class EmptyCorpus(ModelError):
    pass


class MissingEncoder(ModelError):
    pass


class AlreadyMasked(ModelError):
    pass


class CheckpointError(ModelError):
    pass


class EvalError(CogloadError, ValueError):
    exit_code = 6


class TooFewGroups(EvalError):
    pass


class LengthMismatch(EvalError):
    pass


class DuplicateSequence(EvalError):
    pass


class DegenerateVariance(UserWarning):
    """Band variance fell below the floor; a floored entropy was returned."""
