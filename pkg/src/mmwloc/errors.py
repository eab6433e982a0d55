"""Exception hierarchy shared by all mmwloc modules."""


class MmwlocError(Exception):
    """Base class for every error raised by this package."""


class DegenerateGeometry(MmwlocError):
    pass


class EmptyParamSet(MmwlocError):
    pass


class DelayExceedsCp(MmwlocError):
    pass


class ZeroSignal(MmwlocError):
    pass


class SingularInput(MmwlocError):
    pass


class DimensionMismatch(MmwlocError):
    pass


class SingularFim(MmwlocError):
    """The Fisher information matrix cannot be inverted.

    ``condition`` carries the condition number of the diagonally equilibrated
    matrix (``inf`` when the matrix is structurally rank deficient).
    """

    def __init__(self, message, condition=float("inf")):
        super().__init__(message)
        self.condition = condition


class NoPathDetected(MmwlocError):
    pass


class ZeroKernel(MmwlocError):
    pass


class NonFinite(MmwlocError):
    def __init__(self, message, path_index=None):
        super().__init__(message)
        self.path_index = path_index


class ZeroResponse(MmwlocError):
    pass


class LinesNearParallel(MmwlocError):
    pass


class LmDiverged(MmwlocError):
    pass


class InsufficientPaths(MmwlocError):
    pass


class SingularLinearSystem(MmwlocError):
    pass
