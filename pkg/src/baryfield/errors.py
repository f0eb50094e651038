"""Exception types shared across the package."""


class BaryfieldError(Exception):
    """Base class for all package-specific errors."""


class DegenerateSimplex(BaryfieldError):
    """Simplex vertices are (numerically) affinely dependent."""


class SamplingExhausted(BaryfieldError):
    """Rejection sampler hit its attempt budget before collecting enough points."""


class UncoverableRegion(BaryfieldError):
    """Coverage pass found an interior sample no candidate simplex contains."""

    def __init__(self, point, message=None):
        self.point = point
        super().__init__(message or f"no candidate simplex covers interior sample {point}")


class NotCovered(BaryfieldError):
    """Query point lies in no retained simplex; the field cannot be evaluated there."""

    def __init__(self, message, indices=None):
        self.indices = indices
        super().__init__(message)


class ShapeError(BaryfieldError):
    """Array dimensions disagree with the cage or weight matrix."""


class EmptyBatch(BaryfieldError):
    """No usable sample survived margin filtering."""


class BoundaryPoint(BaryfieldError):
    """Query point lies on the cage boundary where the formula is singular."""


class TrainingDiverged(BaryfieldError):
    """Optimization produced a non-finite loss or monotonically increasing energy."""

    def __init__(self, message, diagnostics=None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)
