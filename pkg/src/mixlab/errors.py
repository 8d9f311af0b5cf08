"""Exception types raised across mixlab."""


class MixlabError(Exception):
    """Base class for all package errors."""


class PointOnBoundary(MixlabError):
    pass


class OutOfDomain(MixlabError):
    pass


class NoSuchBranch(MixlabError):
    pass


class GridMismatch(MixlabError):
    pass


class SolverDiverged(MixlabError):
    pass


class CutoffTooSmall(MixlabError):
    pass


class RoofNotBoundedBelow(MixlabError):
    pass


class EqInfViolated(MixlabError):
    pass


class AmbientOrbitEscapes(MixlabError):
    pass


class DivergentTail(MixlabError):
    pass


class WindowBelowNoise(MixlabError):
    pass


class ZeroMeanObservable(MixlabError):
    pass


class NoConvergence(MixlabError):
    pass


class SingularResolvent(MixlabError):
    pass


class CellStraddlesBranch(MixlabError):
    pass


class ContourUndersampled(MixlabError):
    pass


class DegenerateTriple(MixlabError):
    pass


class PrecisionExhausted(MixlabError):
    """Continued fraction ran out of trustworthy digits; verdict is UNKNOWN."""


class FitDegenerate(MixlabError):
    pass


class WindowTooShort(MixlabError):
    pass


class ScaleRangeTooNarrow(MixlabError):
    pass


class ConfigInvalid(MixlabError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
