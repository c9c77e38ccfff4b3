"""Exception hierarchy.

Each leaf derives from one of three categories so the CLI can map failures
onto exit codes: configuration (2), data (3) and numeric (4).
"""


class ReconError(Exception):
    exit_code = 1


class ConfigError(ReconError):
    exit_code = 2


class DataError(ReconError):
    exit_code = 3


class NumericError(ReconError):
    exit_code = 4


# geometry
class DegenerateConfiguration(NumericError):
    pass


class InsufficientInliers(NumericError):
    pass


class PointAtInfinity(NumericError):
    pass


class SingularMatrix(NumericError):
    pass


# tracking
class DimensionMismatch(DataError):
    pass


class AnchorFitFailed(NumericError):
    pass


# localization
class WrongClass(DataError):
    pass


class WrongCount(DataError):
    pass


class OutOfFrame(DataError):
    pass


class IncompleteFrame(DataError):
    pass


class MissingTip(DataError):
    pass


class UnknownSeat(DataError):
    pass


class NoCompleteFrames(DataError):
    pass


# kinematics / strokerate
class BadTaps(ConfigError):
    pass


class TooShort(DataError):
    pass


class NoOverlap(DataError):
    pass


class TooSparse(DataError):
    pass


class MissingRaster(DataError):
    pass


class NoPeaks(DataError):
    pass


class TooFewPeaks(DataError):
    pass


# simulator / harness
class InvalidScript(ConfigError):
    pass


class DegenerateRanks(NumericError):
    pass


class ClassMismatch(DataError):
    pass


class SingleAthleteClass(DataError):
    pass


class IngestError(DataError):
    pass
