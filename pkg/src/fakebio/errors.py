"""Exception types raised across the package.

Everything derives from :class:`FakebioError`. Errors caused by bad input
data (malformed files, inconsistent shapes, degenerate label sets) derive
from :class:`DataError`; the CLI maps those to exit code 2.
"""


class FakebioError(Exception):
    pass


class DataError(FakebioError):
    pass


# feature_store
class MalformedRecord(DataError):
    def __init__(self, line, field, message=""):
        self.line = line
        self.field = field
        super().__init__(f"line {line}: bad field {field!r}" + (f": {message}" if message else ""))


class DuplicateVideoId(DataError):
    pass


class MissingFeatureFile(DataError):
    pass


class BadMagic(DataError):
    pass


class VersionMismatch(DataError):
    pass


class TruncatedPayload(DataError):
    pass


class NonFiniteValue(DataError):
    pass


class TooFewVideos(DataError):
    def __init__(self, identity, count):
        self.identity = identity
        super().__init__(f"identity {identity!r} has {count} real video(s); need at least 2")


class TooShort(DataError):
    pass


# metric_learning / biometrics
class ZeroVector(DataError):
    pass


class NonUnitInput(DataError):
    pass


class DegenerateVector(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class InsufficientIdentities(DataError):
    pass


class NonFiniteLoss(FakebioError):
    def __init__(self, iteration):
        self.iteration = iteration
        super().__init__(f"non-finite loss at iteration {iteration}")


# authentication
class EmptyEnrollment(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class EmptyReferenceSet(DataError):
    pass


# evaluation
class DegenerateLabels(DataError):
    pass


class NoCrossover(FakebioError):
    pass


class UnknownIdentity(DataError):
    pass


class InsufficientGroups(DataError):
    pass


class InsufficientClips(DataError):
    pass


# synthetic world
class SameIdentity(FakebioError):
    pass
