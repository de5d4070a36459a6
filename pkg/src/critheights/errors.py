"""Exception types raised by the critheights modules."""


class CritHeightsError(Exception):
    """Base class for domain errors (CLI exit code 1)."""


class NonCenteredInput(CritHeightsError, ValueError):
    pass


class BelowCriticalLevel(CritHeightsError):
    pass


class BranchAmbiguity(CritHeightsError):
    pass


class RayObstructed(CritHeightsError):
    """Ray continuation stalled; ``path`` holds the points accepted so far."""

    def __init__(self, message, path=None, height=None):
        super().__init__(message)
        self.path = list(path or [])
        self.height = height


class NotInDomain(CritHeightsError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NewtonDiverged(CritHeightsError):
    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class LeftDomain(CritHeightsError):
    pass


class StepTooLarge(CritHeightsError):
    pass


class UnstableAtResolution(CritHeightsError):
    def __init__(self, message, tree=None):
        super().__init__(message)
        self.tree = tree


class LevelMismatch(CritHeightsError):
    pass


class InsufficientDepth(CritHeightsError):
    pass


class ZeroHeight(CritHeightsError):
    pass


class DegenerateLift(CritHeightsError):
    pass


class NotNormalized(CritHeightsError):
    pass


class InsufficientSeeds(CritHeightsError):
    pass


class TargetOutsideDomain(CritHeightsError):
    pass


class TreeTooLarge(CritHeightsError):
    """The truncation window holds more vertices than the configured cap."""
