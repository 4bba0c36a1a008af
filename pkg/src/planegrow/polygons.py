"""Boundary polygons for grown segments.

Border points are projected into the segment's plane frame and carved into a
triangulated outline: Delaunay triangles whose circumradius exceeds the
carving radius are dropped, the rest form the polygon. Boundary edges are
walked into closed loops; exterior loops come out counterclockwise, holes
clockwise, so consumers can tell them apart from the sign of the loop area.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay, QhullError

from .regression import Plane


@dataclass
class BoundaryPolygon:
    """Triangulated 2-D outline of a segment's border points."""

    loops: list[np.ndarray] = field(default_factory=list)  # (k, 2) vertex loops
    area: float = 0.0
    points: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))
    triangles: np.ndarray = field(default_factory=lambda: np.empty((0, 3), dtype=int))
    plane: Plane | None = None

    @property
    def is_empty(self) -> bool:
        return self.area == 0.0 or not self.loops

    def loops_3d(self) -> list[np.ndarray]:
        """Loops lifted back onto the plane (empty if no plane attached)."""
        if self.plane is None:
            return []
        return [self.plane.from_plane_coords(lp) for lp in self.loops]


def _triangle_geometry(uv: np.ndarray, tris: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Signed areas and circumradii for all triangles at once."""
    a = uv[tris[:, 0]]
    b = uv[tris[:, 1]]
    c = uv[tris[:, 2]]
    ab = b - a
    ac = c - a
    cross = ab[:, 0] * ac[:, 1] - ab[:, 1] * ac[:, 0]
    signed_area = 0.5 * cross
    la = np.linalg.norm(b - c, axis=1)
    lb = np.linalg.norm(c - a, axis=1)
    lc = np.linalg.norm(a - b, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        circum = (la * lb * lc) / (4.0 * np.abs(signed_area))
    circum[~np.isfinite(circum)] = np.inf
    return signed_area, circum


def _walk_loops(uv: np.ndarray, tris: np.ndarray) -> list[np.ndarray]:
    """Boundary edges (owned by exactly one kept triangle) walked into loops.

    Each directed edge keeps its triangle's interior on the left, so the walk
    yields counterclockwise exterior loops and clockwise hole loops.
    """
    directed: set[tuple[int, int]] = set()
    for t in tris:
        directed.add((int(t[0]), int(t[1])))
        directed.add((int(t[1]), int(t[2])))
        directed.add((int(t[2]), int(t[0])))
    boundary = [(a, b) for (a, b) in directed if (b, a) not in directed]
    nxt: dict[int, list[int]] = {}
    for a, b in sorted(boundary):
        nxt.setdefault(a, []).append(b)
    for outs in nxt.values():
        outs.sort(reverse=True)  # pop() takes the smallest target first

    loops = []
    used = set()
    for start, _ in sorted(boundary):
        if start not in nxt or not nxt[start]:
            continue
        if (start, nxt[start][-1]) in used:
            continue
        loop = [start]
        cur = start
        while True:
            outs = nxt.get(cur)
            if not outs:
                break  # open chain from a pinched vertex; drop it
            step = outs.pop()
            used.add((cur, step))
            if step == start:
                loops.append(np.asarray(uv[loop]))
                break
            loop.append(step)
            cur = step
    return loops


def alpha_shape(uv: np.ndarray, alpha: float) -> tuple[list[np.ndarray], float, np.ndarray]:
    """Carved outline of a 2-D point set.

    Returns (loops, area, kept triangle indices). Collinear input or a
    carving radius too small to keep any triangle yields an empty result.
    Exactly three non-collinear points always produce their triangle.
    """
    uv = np.asarray(uv, dtype=float).reshape(-1, 2)
    if uv.shape[0] < 3:
        return [], 0.0, np.empty((0, 3), dtype=int)
    if uv.shape[0] == 3:
        e1, e2 = uv[1] - uv[0], uv[2] - uv[0]
        area = 0.5 * abs(e1[0] * e2[1] - e1[1] * e2[0])
        if area <= 0.0:
            return [], 0.0, np.empty((0, 3), dtype=int)
        tri = np.array([[0, 1, 2]])
        signed, _ = _triangle_geometry(uv, tri)
        order = tri if signed[0] > 0 else np.array([[0, 2, 1]])
        return [uv[order[0]]], float(area), order
    try:
        dela = Delaunay(uv)
    except QhullError:
        return [], 0.0, np.empty((0, 3), dtype=int)
    tris = dela.simplices
    signed, circum = _triangle_geometry(uv, tris)
    # normalize orientation to counterclockwise
    flip = signed < 0
    tris = tris.copy()
    tris[flip] = tris[flip][:, [0, 2, 1]]
    keep = (circum < alpha) & (np.abs(signed) > 0)
    tris = tris[keep]
    if tris.shape[0] == 0:
        return [], 0.0, np.empty((0, 3), dtype=int)
    area = float(np.sum(np.abs(signed[keep])))
    loops = _walk_loops(uv, tris)
    return loops, area, tris


def extract_polygon(plane: Plane, border_points: np.ndarray, alpha: float) -> BoundaryPolygon:
    """Alpha-carved outline of 3-D border points projected onto a plane."""
    pts = np.asarray(border_points, dtype=float).reshape(-1, 3)
    if pts.shape[0] < 3:
        return BoundaryPolygon(plane=plane)
    uv = plane.to_plane_coords(pts)
    loops, area, tris = alpha_shape(uv, alpha)
    return BoundaryPolygon(loops=loops, area=area, points=uv, triangles=tris, plane=plane)


def loop_signed_area(loop: np.ndarray) -> float:
    x = loop[:, 0]
    y = loop[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
