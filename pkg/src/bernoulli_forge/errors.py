"""Exception hierarchy shared by all modules."""


class BernoulliError(Exception):
    """Base class for every error raised by the package."""


class InvalidArc(BernoulliError, ValueError):
    pass


class PeriodMismatch(BernoulliError, ValueError):
    pass


class NonPositiveField(BernoulliError, ValueError):
    pass


class SolveFailed(BernoulliError):
    """Base for failures of the Laplace solve."""


class GapUnresolved(SolveFailed):
    pass


class NoConvergence(BernoulliError):
    def __init__(self, msg, last=None):
        super().__init__(msg)
        self.last = last


class DisconnectedLevelSet(BernoulliError):
    pass


class DegenerateNormal(BernoulliError):
    pass


class EmptyRegion(BernoulliError):
    pass


class InvalidBracket(BernoulliError, ValueError):
    pass


class MonotonicityViolation(BernoulliError):
    pass


class RootNotBracketed(BernoulliError):
    pass


class StepUnstable(BernoulliError):
    pass


class CurveDegenerate(BernoulliError):
    pass


class OriginTouched(BernoulliError, ValueError):
    pass


class LevelOutOfWindow(BernoulliError, ValueError):
    pass


class CommonCurveMissing(BernoulliError):
    pass


class PreconditionFailed(BernoulliError, ValueError):
    pass


class SeedNotAtMuZero(BernoulliError, ValueError):
    pass


class ConfigInvalid(BernoulliError, ValueError):
    pass
