"""Exception types shared across the toolkit."""


class InsufficientPointsError(ValueError):
    """A regression or fit was asked for more than its point count supports."""


class DegenerateRegressionError(ValueError):
    """All accumulated points are coincident; no plane can be synthesized."""


class NoIntersectionError(ValueError):
    """Planes are parallel or near-singular; no stable intersection exists."""


class TooFewPointsError(ValueError):
    """A seed region or polygon input holds fewer points than required."""


class NoPlaneFoundError(ValueError):
    """RANSAC could not find a plane with the minimum inlier support."""


class InvalidViewError(ValueError):
    """A view-dependent computation was asked for a point behind the camera."""


class DegeneratePolygonError(ValueError):
    """Polygon vertices are collinear or form a self-intersecting loop."""


class CellNotFoundError(KeyError):
    """The requested octree cell has no stored payload."""


class PointFormatError(ValueError):
    """A point stream could not be decoded, or too many records were malformed."""
