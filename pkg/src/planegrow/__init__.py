"""Interactive planar geometry reconstruction from large 3D point clouds."""

from .eigen import eig_sym3
from .growing import (
    GrowParams,
    GrowResult,
    GrowSession,
    Segment,
    SegmentSnapshot,
    grow,
    ransac_planes,
)
from .octree import CellIndex, Octree, build_octree
from .polygons import BoundaryPolygon, alpha_shape, extract_polygon
from .regression import Plane, PlaneRegression

__all__ = [
    "eig_sym3",
    "GrowParams",
    "GrowResult",
    "GrowSession",
    "Segment",
    "SegmentSnapshot",
    "grow",
    "ransac_planes",
    "CellIndex",
    "Octree",
    "build_octree",
    "BoundaryPolygon",
    "alpha_shape",
    "extract_polygon",
    "Plane",
    "PlaneRegression",
]

__version__ = "0.1.0"
