"""Exception hierarchy shared by all polyq modules."""


class PolyqError(Exception):
    """Base class for every error raised by polyq."""


# -- polygon geometry -------------------------------------------------------

class PolygonError(PolyqError, ValueError):
    pass


class NotClosed(PolygonError):
    pass


class SelfIntersecting(PolygonError):
    pass


class AngleCertificateMismatch(PolygonError):
    def __init__(self, index, certified, measured):
        self.index = index
        self.certified = certified
        self.measured = measured
        super().__init__(
            f"vertex {index}: certified angle {certified!r} rad, "
            f"measured {measured!r} rad"
        )


class GroupNotFinite(PolyqError):
    pass


class RegionError(PolyqError, ValueError):
    pass


# -- billiard dynamics ------------------------------------------------------

class StuckAtBoundary(PolyqError):
    pass


class VertexEncounter(PolyqError):
    """A trajectory struck a polygon vertex; carries the partial trajectory."""

    def __init__(self, vertex_index, time, trajectory=None):
        self.vertex_index = vertex_index
        self.time = time
        self.trajectory = trajectory
        super().__init__(f"trajectory hit vertex {vertex_index} at t={time!r}")


class MaxBouncesExceeded(PolyqError):
    pass


class TooManyVertexEvents(PolyqError):
    pass


# -- mesh / solver ----------------------------------------------------------

class DegenerateInput(PolyqError, ValueError):
    pass


class MeshQualityError(PolyqError):
    pass


class SingularElement(PolyqError):
    pass


class NoConvergence(PolyqError):
    def __init__(self, message, residuals=None):
        self.residuals = residuals
        super().__init__(message)


class TooManyModes(PolyqError, ValueError):
    pass


# -- analysis ---------------------------------------------------------------

class EmptyWindow(PolyqError, ValueError):
    pass


class RegionOutsideDomain(PolyqError, ValueError):
    pass


# -- orchestration ----------------------------------------------------------

class ConfigInvalid(PolyqError, ValueError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class StageFailed(PolyqError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")
