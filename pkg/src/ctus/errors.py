"""Exception types shared across the ctus package."""


class CtusError(Exception):
    """Base class for all ctus errors."""


class MissingSidecar(CtusError):
    pass


class SizeMismatch(CtusError):
    pass


class NonOrthonormalDirection(CtusError):
    pass


class NonPositiveSpacing(CtusError):
    pass


class ShapeMismatch(CtusError):
    pass


class NonPositiveImpedance(CtusError):
    pass


class EmptyRegion(CtusError):
    pass


class LeftRegion(CtusError):
    pass


class EmptyMask(CtusError):
    pass


class NoPoints(CtusError):
    pass


class DegenerateCloud(CtusError):
    pass


class NoConvergence(CtusError):
    """ICP hit max_iter with RMS above the warn threshold; result is attached."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class EmptyDataset(CtusError):
    pass


class ConfigError(CtusError):
    pass
