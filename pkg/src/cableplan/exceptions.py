"""Exception types raised by cableplan."""


class InputError(ValueError):
    """Raised when user-supplied data (rasters, configs, indices) is invalid."""


class ConsistencyError(RuntimeError):
    """Raised when two independent computations of the same quantity disagree."""


class SolverError(RuntimeError):
    """Raised when the optimizer cannot produce a solution."""
