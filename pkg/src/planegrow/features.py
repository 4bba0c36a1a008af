"""Edges and corners synthesized from grown segments.

All two- and threefold combinations of segment planes are intersected when
the planes are not parallel, the segment polygons have non-vanishing area,
and the polygons actually come near the intersection. Edges carry a support
range derived from the border points next to the intersection line; corners
carry the three regression variances of their parent planes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import NoIntersectionError
from .growing import Segment
from .regression import Plane

PARALLEL_TOLERANCE_DEG = 1.0      # planes closer than this angle never intersect
PROXIMITY_FACTOR = 4.0            # polygon vertex must come this close (times r)
SUPPORT_FACTOR = 2.0              # border points this close (times r) support an edge
# central-95% interval of the projected border distribution, widened so the
# reported range estimates the full extent instead of 95% of it
SUPPORT_PERCENTILES = (2.5, 97.5)
SUPPORT_DEBIAS = 1.0 / 0.95


@dataclass(frozen=True)
class EdgeFeature:
    origin: np.ndarray          # point on the line
    direction: np.ndarray       # unit vector
    start: np.ndarray
    end: np.ndarray
    parent_segments: tuple[int, int]
    support_range: float        # |end - start|
    variances: tuple[float, float]

    def to_dict(self) -> dict:
        return {
            "start": self.start.tolist(),
            "end": self.end.tolist(),
            "segments": list(self.parent_segments),
            "support": {"range": self.support_range, "variances": list(self.variances)},
        }


@dataclass(frozen=True)
class CornerFeature:
    position: np.ndarray
    parent_segments: tuple[int, int, int]
    variances: tuple[float, float, float]

    def to_dict(self) -> dict:
        return {
            "position": self.position.tolist(),
            "segments": list(self.parent_segments),
            "support": {"variances": list(self.variances)},
        }


@dataclass
class FeatureSet:
    edges: list[EdgeFeature] = field(default_factory=list)
    corners: list[CornerFeature] = field(default_factory=list)
    generation: int = 0

    def to_dict(self) -> dict:
        return {
            "generation": self.generation,
            "edges": [e.to_dict() for e in self.edges],
            "corners": [c.to_dict() for c in self.corners],
        }


def plane_angle(a: Plane, b: Plane) -> float:
    """Unsigned angle between plane normals in degrees, folded to [0, 90]."""
    d = min(1.0, abs(float(a.normal @ b.normal)))
    return float(np.degrees(np.arccos(d)))


def intersect_planes2(a: Plane, b: Plane) -> tuple[np.ndarray, np.ndarray]:
    """Intersection line of two planes as (origin, unit direction)."""
    if plane_angle(a, b) < PARALLEL_TOLERANCE_DEG:
        raise NoIntersectionError("planes are parallel within tolerance")
    direction = np.cross(a.normal, b.normal)
    direction = direction / np.linalg.norm(direction)
    m = np.vstack([a.normal, b.normal, direction])
    rhs = np.array([a.normal @ a.origin, b.normal @ b.origin, 0.0])
    origin = np.linalg.solve(m, rhs)
    return origin, direction


def intersect_planes3(a: Plane, b: Plane, c: Plane) -> np.ndarray:
    """Intersection point of three planes."""
    for u, v in combinations((a, b, c), 2):
        if plane_angle(u, v) < PARALLEL_TOLERANCE_DEG:
            raise NoIntersectionError("planes are pairwise parallel within tolerance")
    m = np.vstack([a.normal, b.normal, c.normal])
    if abs(float(np.linalg.det(m))) < 1e-6:
        raise NoIntersectionError("plane triple is near-singular")
    rhs = np.array([a.normal @ a.origin, b.normal @ b.origin, c.normal @ c.origin])
    return np.linalg.solve(m, rhs)


def line_distances(origin: np.ndarray, direction: np.ndarray, pts: np.ndarray) -> np.ndarray:
    rel = np.asarray(pts, dtype=float) - origin
    t = rel @ direction
    return np.linalg.norm(rel - np.outer(t, direction), axis=1)


def edge_support_range(origin: np.ndarray, direction: np.ndarray,
                       border_a: np.ndarray, border_b: np.ndarray,
                       r: float) -> tuple[float, float] | None:
    """Central-95% extent of border points projected onto the edge line.

    Points of either segment farther than 2r from the line do not qualify;
    fewer than two qualifying points on either side rejects the edge.
    Returns raw (t_start, t_end) line parameters, t_start <= t_end.
    """
    limit = SUPPORT_FACTOR * r
    qualifying = []
    for border in (border_a, border_b):
        border = np.asarray(border, dtype=float).reshape(-1, 3)
        if border.shape[0] == 0:
            return None
        near = border[line_distances(origin, direction, border) <= limit]
        if near.shape[0] < 2:
            return None
        qualifying.append((near - origin) @ direction)
    pooled = np.concatenate(qualifying)
    lo, hi = np.percentile(pooled, SUPPORT_PERCENTILES)
    return float(lo), float(hi)


def _polygon_near(segment: Segment, point_fn) -> bool:
    """True if any polygon loop vertex is within the proximity bound."""
    loops = segment.polygon.loops_3d()
    if not loops:
        return False
    verts = np.concatenate(loops)
    return bool(point_fn(verts).min() <= 0.0)


def synthesize_features(segments: list[Segment], r: float, generation: int = 0) -> FeatureSet:
    """Maximum-likelihood edges and corners from the active segments."""
    feats = FeatureSet(generation=generation)
    if len(segments) < 2:
        return feats
    usable = [s for s in segments if not s.polygon.is_empty]
    prox = PROXIMITY_FACTOR * r

    for sa, sb in combinations(usable, 2):
        if plane_angle(sa.plane, sb.plane) < PARALLEL_TOLERANCE_DEG:
            continue
        origin, direction = intersect_planes2(sa.plane, sb.plane)
        near_line = lambda pts: line_distances(origin, direction, pts) - prox
        if not (_polygon_near(sa, near_line) and _polygon_near(sb, near_line)):
            continue
        span = edge_support_range(origin, direction, sa.border_points,
                                  sb.border_points, r)
        if span is None:
            continue
        lo, hi = span
        center = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo) * SUPPORT_DEBIAS
        start = origin + (center - half) * direction
        end = origin + (center + half) * direction
        feats.edges.append(EdgeFeature(
            origin=origin, direction=direction, start=start, end=end,
            parent_segments=(sa.segment_id, sb.segment_id),
            support_range=float(np.linalg.norm(end - start)),
            variances=(sa.plane.variance, sb.plane.variance)))

    for sa, sb, sc in combinations(usable, 3):
        try:
            corner = intersect_planes3(sa.plane, sb.plane, sc.plane)
        except NoIntersectionError:
            continue
        near_pt = lambda pts: np.linalg.norm(pts - corner, axis=1) - prox
        if not all(_polygon_near(s, near_pt) for s in (sa, sb, sc)):
            continue
        feats.corners.append(CornerFeature(
            position=corner,
            parent_segments=(sa.segment_id, sb.segment_id, sc.segment_id),
            variances=(sa.plane.variance, sb.plane.variance, sc.plane.variance)))
    return feats
