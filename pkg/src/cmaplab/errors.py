"""Exception hierarchy shared by all cmaplab modules."""


class CmapError(Exception):
    """Base class; `code` is the machine-readable name used in CLI error reports."""

    @property
    def code(self):
        return type(self).__name__


class DegeneratePoint(CmapError):
    pass


class OutsideTubularNeighborhood(CmapError):
    pass


class NotOnBoundary(CmapError):
    pass


class GridTooSmall(CmapError):
    pass


class NonConvergence(CmapError):
    """Raised when an iterative solve hits max_iter; `best` holds the last iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class NegativeSource(CmapError):
    pass


class EmptySet(CmapError):
    pass


class NotFreeBoundaryPoint(CmapError):
    pass


class BoundaryDataOutsideTarget(CmapError):
    pass


class InsufficientNodes(CmapError):
    pass


class EmptyScaleWindow(CmapError):
    pass


class InvalidConic(CmapError):
    pass


class BranchCut(CmapError):
    pass


class PathBlocked(CmapError):
    pass


class OriginSingularity(CmapError):
    pass


class KernelSingularity(CmapError):
    pass


class QuadratureTooCoarse(CmapError):
    pass


class HypothesisViolated(CmapError):
    pass


class ConfigParse(CmapError):
    pass


class Io(CmapError):
    pass
