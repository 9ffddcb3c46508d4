"""Exception types raised across the package."""


class BsacError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(BsacError, ValueError):
    pass


class UsageError(BsacError, RuntimeError):
    pass


class NumericError(BsacError, FloatingPointError):
    pass


class DomainError(BsacError, ValueError):
    pass


class NotReadyError(BsacError, RuntimeError):
    pass


class ConfigError(BsacError, ValueError):
    pass


class BsnError(BsacError, ValueError):
    """Invalid strategy-network declaration."""


class CycleError(BsnError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("cycle in strategy network: " + " -> ".join(self.cycle))


class BsnReferenceError(BsnError):
    pass


class PartitionError(BsnError):
    pass
