"""Feature-assisted modeling tools.

Headless implementations of the interaction layer: cursor snapping against
synthesized features, direction finding by pointing, polygon construction,
move/copy, extrusion, and view-dependent estimation of growing parameters.
A reconstruction document records polygons and prisms together with an undo
journal whose replay reproduces the document exactly; line-based session
scripts drive all of it deterministically without a UI.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneratePolygonError, InvalidViewError, NoIntersectionError
from .features import FeatureSet, synthesize_features
from .growing import GrowParams, Segment, grow
from .regression import Plane, PlaneRegression

DENSITY_NEAR = 10000.0   # points per cubic meter right at the camera
DENSITY_FAR = 100.0      # and at the far reference distance
Z_NEAR_DEFAULT = 1.0
Z_FAR_DEFAULT = 100.0
SNAP_RADIUS_PX = 12.0
COPLANAR_CONSTRUCT_TOL = 1e-3
COPLANAR_RESULT_TOL = 1e-6


class NoDirectionError(ValueError):
    """The pointer ray hit neither a feature nor a segment polygon."""


@dataclass
class ViewPose:
    """Camera pose plus projection parameters (vertical FOV in radians)."""

    eye: np.ndarray
    forward: np.ndarray
    up: np.ndarray
    fov_y: float
    width: int
    height: int

    def __post_init__(self):
        self.eye = np.asarray(self.eye, dtype=float).reshape(3)
        fwd = np.asarray(self.forward, dtype=float).reshape(3)
        self.forward = fwd / np.linalg.norm(fwd)
        up = np.asarray(self.up, dtype=float).reshape(3)
        up = up - (up @ self.forward) * self.forward
        self.up = up / np.linalg.norm(up)
        self.right = np.cross(self.forward, self.up)

    @property
    def aspect(self) -> float:
        return self.width / self.height

    def depth_of(self, p) -> float:
        return float((np.asarray(p, dtype=float) - self.eye) @ self.forward)

    def world_width_at(self, depth: float) -> float:
        return 2.0 * depth * math.tan(self.fov_y / 2.0) * self.aspect

    def project(self, pts) -> np.ndarray:
        """World points to pixel coordinates; points behind the eye map to nan."""
        rel = np.atleast_2d(np.asarray(pts, dtype=float)) - self.eye
        x = rel @ self.right
        y = rel @ self.up
        z = rel @ self.forward
        t = math.tan(self.fov_y / 2.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            px = (x / (z * t * self.aspect) * 0.5 + 0.5) * self.width
            py = (0.5 - y / (z * t) * 0.5) * self.height
        px = np.where(z > 0, px, np.nan)
        py = np.where(z > 0, py, np.nan)
        return np.column_stack([px, py])

    def ray_through(self, px: float, py: float) -> tuple[np.ndarray, np.ndarray]:
        t = math.tan(self.fov_y / 2.0)
        x = (2.0 * px / self.width - 1.0) * t * self.aspect
        y = (1.0 - 2.0 * py / self.height) * t
        direction = self.forward + x * self.right + y * self.up
        return self.eye.copy(), direction / np.linalg.norm(direction)


def estimate_params(view: ViewPose, p0, plane_threshold: float, tree=None,
                    z_near: float = Z_NEAR_DEFAULT, z_far: float = Z_FAR_DEFAULT,
                    seed: int = 0) -> GrowParams:
    """Derive growing parameters from the camera pose around a picked point.

    The seed radius is 10% of the world-space viewport width at the depth of
    the pick; the target density falls off logarithmically with that depth
    between the near and far reference values; the search radius is twice the
    estimated point spacing near the pick (from the octree when given,
    otherwise from the target density). The plane threshold passes through
    as the user's precision knob.
    """
    p0 = np.asarray(p0, dtype=float).reshape(3)
    z = view.depth_of(p0)
    if z <= 0:
        raise InvalidViewError("picked point lies behind the camera")
    seed_radius = 0.1 * view.world_width_at(z)
    frac = (math.log(max(z, 1e-12)) - math.log(z_near)) / (math.log(z_far) - math.log(z_near))
    frac = min(1.0, max(0.0, frac))
    density = DENSITY_NEAR * (DENSITY_FAR / DENSITY_NEAR) ** frac
    spacing = density ** (-1.0 / 3.0)
    if tree is not None:
        from .growing import _median_spacing

        probes = []
        for level in range(tree.max_level, -1, -1):
            pts = tree.query_sphere(p0, seed_radius, level)
            if pts.shape[0] >= 8:
                probes.append(_median_spacing(pts))
                break
        if probes and np.isfinite(probes[0]):
            spacing = probes[0]
    return GrowParams(
        seed_point=p0,
        seed_radius=seed_radius,
        density=density,
        search_radius=2.0 * spacing,
        plane_threshold=plane_threshold,
        seed=seed,
    )


# -- snapping ----------------------------------------------------------------


@dataclass(frozen=True)
class SnapResult:
    kind: str                      # corner | edge | plane | rawPoint | miss
    position: np.ndarray | None
    feature_id: int | None
    screen_distance: float

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "position": None if self.position is None else self.position.tolist(),
            "feature_id": self.feature_id,
            "screen_distance": self.screen_distance,
        }


def _closest_point_on_segment(a: np.ndarray, b: np.ndarray, origin: np.ndarray,
                              direction: np.ndarray) -> np.ndarray:
    """Point on segment [a, b] closest to the infinite ray line."""
    u = b - a
    uu = u @ u
    if uu == 0.0:
        return a.copy()
    w = a - origin
    uv = u @ direction
    denom = uu - uv * uv
    if abs(denom) < 1e-15:
        t = 0.0
    else:
        t = (uv * (w @ direction) - (w @ u)) / denom
    t = min(1.0, max(0.0, t))
    return a + t * u


def _point_in_loops(uv: np.ndarray, loops: list[np.ndarray]) -> bool:
    """Even-odd test across all loops (holes traced clockwise cancel out)."""
    x, y = float(uv[0]), float(uv[1])
    inside = False
    for loop in loops:
        xs = loop[:, 0]
        ys = loop[:, 1]
        j = len(loop) - 1
        for i in range(len(loop)):
            if (ys[i] > y) != (ys[j] > y):
                xint = (xs[j] - xs[i]) * (y - ys[i]) / (ys[j] - ys[i]) + xs[i]
                if x < xint:
                    inside = not inside
            j = i
    return inside


def _ray_segment_hit(view: ViewPose, px: float, py: float, segment: Segment):
    """Ray-polygon intersection with the segment's boundary polygon."""
    origin, direction = view.ray_through(px, py)
    denom = float(segment.plane.normal @ direction)
    if abs(denom) < 1e-12:
        return None
    t = float(segment.plane.normal @ (segment.plane.origin - origin)) / denom
    if t <= 0:
        return None
    hit = origin + t * direction
    uv = segment.plane.to_plane_coords(hit)[0]
    if segment.polygon.loops and _point_in_loops(uv, segment.polygon.loops):
        return t, hit
    return None


def snap_cursor(view: ViewPose, cursor_px, features: FeatureSet,
                segments: list[Segment], snap_radius_px: float = SNAP_RADIUS_PX,
                raw_points: np.ndarray | None = None) -> SnapResult:
    """Snap the cursor to the best feature under it.

    Priority among candidates within the snap radius: corners beat edges
    beat plane hits beat raw points; ties resolve by screen distance, then
    by feature id. With nothing in range the result is a miss.
    """
    cursor = np.asarray(cursor_px, dtype=float).reshape(2)
    origin, direction = view.ray_through(cursor[0], cursor[1])

    corners = []
    for fid, corner in enumerate(features.corners):
        px = view.project(corner.position)[0]
        if np.any(np.isnan(px)):
            continue
        dist = float(np.linalg.norm(px - cursor))
        if dist <= snap_radius_px:
            corners.append((dist, fid, corner.position.copy()))
    if corners:
        dist, fid, pos = min(corners, key=lambda c: (c[0], c[1]))
        return SnapResult("corner", pos, fid, dist)

    edges = []
    for fid, edge in enumerate(features.edges):
        pos = _closest_point_on_segment(edge.start, edge.end, origin, direction)
        px = view.project(pos)[0]
        if np.any(np.isnan(px)):
            continue
        dist = float(np.linalg.norm(px - cursor))
        if dist <= snap_radius_px:
            edges.append((dist, fid, pos))
    if edges:
        dist, fid, pos = min(edges, key=lambda c: (c[0], c[1]))
        return SnapResult("edge", pos, fid, dist)

    hits = []
    for segment in segments:
        hit = _ray_segment_hit(view, cursor[0], cursor[1], segment)
        if hit is not None:
            hits.append((hit[0], segment.segment_id, hit[1]))
    if hits:
        _, sid, pos = min(hits, key=lambda h: (h[0], h[1]))
        return SnapResult("plane", pos, sid, 0.0)

    if raw_points is not None and len(raw_points):
        px = view.project(raw_points)
        dist = np.linalg.norm(px - cursor, axis=1)
        dist = np.where(np.isnan(dist), np.inf, dist)
        best = int(np.argmin(dist))
        if dist[best] <= snap_radius_px:
            return SnapResult("rawPoint", np.asarray(raw_points[best], dtype=float),
                              best, float(dist[best]))
    return SnapResult("miss", None, None, float("inf"))


def find_direction(view: ViewPose, cursor_px, features: FeatureSet,
                   segments: list[Segment], gesture_px=(0.0, 0.0),
                   snap_radius_px: float = SNAP_RADIUS_PX) -> np.ndarray:
    """Pick a 3-D direction by pointing.

    Pointing at a plane returns its normal oriented toward the viewer.
    Pointing at an edge or corner returns the parent planes' tangent,
    bitangent, or edge direction whose screen-space motion best aligns with
    the pointer gesture; a zero gesture on an edge defaults to the edge
    direction itself.
    """
    snap = snap_cursor(view, cursor_px, features, segments, snap_radius_px)
    if snap.kind == "plane":
        segment = next(s for s in segments if s.segment_id == snap.feature_id)
        normal = segment.plane.normal.copy()
        if normal @ (view.eye - snap.position) < 0:
            normal = -normal
        return normal
    if snap.kind not in ("edge", "corner"):
        raise NoDirectionError("pointer ray hits neither feature nor segment")

    by_id = {s.segment_id: s for s in segments}
    candidates: list[np.ndarray] = []
    if snap.kind == "edge":
        edge = features.edges[snap.feature_id]
        candidates.append(edge.direction)
        parent_ids = edge.parent_segments
    else:
        parent_ids = features.corners[snap.feature_id].parent_segments
    for sid in parent_ids:
        seg = by_id.get(sid)
        if seg is not None:
            candidates.append(seg.plane.tangent)
            candidates.append(seg.plane.bitangent)

    gesture = np.asarray(gesture_px, dtype=float).reshape(2)
    if np.linalg.norm(gesture) < 1e-12:
        return candidates[0].copy()
    gesture = gesture / np.linalg.norm(gesture)

    anchor = snap.position
    base_px = view.project(anchor)[0]
    eps = 1e-3 * max(1.0, float(np.linalg.norm(anchor - view.eye)))
    best_dir, best_score = None, -np.inf
    for cand in candidates:
        tip_px = view.project(anchor + eps * cand)[0]
        screen_vec = tip_px - base_px
        norm = np.linalg.norm(screen_vec)
        if not np.isfinite(norm) or norm < 1e-12:
            continue
        screen_vec = screen_vec / norm
        for sign in (1.0, -1.0):
            score = float(sign * screen_vec @ gesture)
            if score > best_score:
                best_score, best_dir = score, sign * cand
    if best_dir is None:
        return candidates[0].copy()
    return best_dir.copy()


# -- polygons and document -----------------------------------------------------


@dataclass
class WorkPolygon:
    polygon_id: str
    vertices: np.ndarray            # (n, 3), coplanar
    plane: Plane
    provenance: str = "constructed"

    def to_dict(self) -> dict:
        return {
            "id": self.polygon_id,
            "vertices": self.vertices.tolist(),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "WorkPolygon":
        # vertices were projected when first constructed; fitting the frame
        # again without re-projecting keeps journal replay bit-exact
        verts = np.asarray(data["vertices"], dtype=float)
        reg = PlaneRegression.from_seed(verts[0])
        reg.add_many(verts[1:])
        return cls(data["id"], verts, reg.synthesize(), data["provenance"])


@dataclass
class Prism:
    prism_id: str
    base_id: str
    direction: np.ndarray
    length: float
    cap_vertices: np.ndarray

    def to_dict(self) -> dict:
        return {
            "id": self.prism_id,
            "base": self.base_id,
            "direction": self.direction.tolist(),
            "length": self.length,
            "cap_vertices": self.cap_vertices.tolist(),
        }


def _loop_is_simple(uv: np.ndarray) -> bool:
    """No two non-adjacent loop edges intersect."""
    n = len(uv)

    def cross2(a, b) -> float:
        return float(a[0] * b[1] - a[1] * b[0])

    def seg_intersect(p1, p2, p3, p4) -> bool:
        d1 = cross2(p4 - p3, p1 - p3)
        d2 = cross2(p4 - p3, p2 - p3)
        d3 = cross2(p2 - p1, p3 - p1)
        d4 = cross2(p2 - p1, p4 - p1)
        return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))

    for i in range(n):
        a1, a2 = uv[i], uv[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if seg_intersect(a1, a2, uv[j], uv[(j + 1) % n]):
                return False
    return True


def polygon_construct(snap_positions, polygon_id: str = "p0",
                      working_plane: Plane | None = None) -> WorkPolygon:
    """Build a planar polygon from an ordered snap sequence.

    Vertices must be coplanar within 1 mm after the best fit (or an explicit
    working plane is given); they are projected exactly onto the plane and
    the resulting loop must be simple.
    """
    verts = np.asarray([np.asarray(p, dtype=float).reshape(3) for p in snap_positions])
    if verts.shape[0] < 3:
        raise DegeneratePolygonError("polygon needs at least 3 vertices")
    if working_plane is None:
        reg = PlaneRegression.from_seed(verts[0])
        reg.add_many(verts[1:])
        plane = reg.synthesize()
        if plane.rank_deficient:
            raise DegeneratePolygonError("vertices are collinear")
        working_plane = plane
    dists = working_plane.distances(verts)
    if float(dists.max()) > COPLANAR_CONSTRUCT_TOL:
        raise DegeneratePolygonError(
            f"vertices deviate {dists.max():.2g} m from the working plane")
    uv = working_plane.to_plane_coords(verts)
    if not _loop_is_simple(uv):
        raise DegeneratePolygonError("polygon loop self-intersects")
    projected = working_plane.from_plane_coords(uv)
    return WorkPolygon(polygon_id, projected, working_plane)


def polygon_move_copy(poly: WorkPolygon, translation=None, anchor=None, target=None,
                      direction=None, copy: bool = False,
                      new_id: str | None = None) -> WorkPolygon:
    """Rigidly translate (or copy) a polygon.

    The shift is either given directly or taken as target minus anchor from a
    snap pair; an optional unit direction constrains the shift to its span.
    """
    if translation is None:
        if anchor is None or target is None:
            raise ValueError("need either translation or an anchor/target pair")
        translation = np.asarray(target, dtype=float) - np.asarray(anchor, dtype=float)
    shift = np.asarray(translation, dtype=float).reshape(3)
    if direction is not None:
        u = np.asarray(direction, dtype=float).reshape(3)
        u = u / np.linalg.norm(u)
        shift = float(shift @ u) * u
    plane = Plane(poly.plane.origin + shift, poly.plane.normal.copy(),
                  poly.plane.tangent.copy(), poly.plane.bitangent.copy(),
                  poly.plane.eigenvalues.copy(), poly.plane.rank_deficient)
    return WorkPolygon(
        new_id if new_id is not None else poly.polygon_id,
        poly.vertices + shift, plane,
        provenance="copied" if copy else "moved")


def polygon_extrude(poly: WorkPolygon, direction, length: float | None = None,
                    snap_target=None, prism_id: str = "x0") -> Prism:
    """Extrude a polygon along a fixed direction into a prism.

    The length is explicit or solved so the translated cap plane passes
    through the snap target. The direction must not lie in the polygon
    plane and the resulting length must be positive.
    """
    u = np.asarray(direction, dtype=float).reshape(3)
    u = u / np.linalg.norm(u)
    n = poly.plane.normal
    if abs(float(n @ u)) <= 1e-6:
        raise NoIntersectionError("extrusion direction is parallel to the polygon")
    if length is None:
        if snap_target is None:
            raise ValueError("need either a length or a snap target")
        target = np.asarray(snap_target, dtype=float).reshape(3)
        length = float(n @ (target - poly.vertices[0])) / float(n @ u)
    if not length > 0:
        raise ValueError(f"extrusion length must be positive, got {length!r}")
    cap = poly.vertices + length * u
    return Prism(prism_id, poly.polygon_id, u, float(length), cap)


class ReconstructionDocument:
    """Polygons and prisms plus an undo journal that reproduces the state."""

    VERSION = "planegrow-document/1"

    def __init__(self) -> None:
        self.polygons: dict[str, WorkPolygon] = {}
        self.prisms: dict[str, Prism] = {}
        self.journal: list[dict] = []

    # journal entries are plain dicts so replay needs no live snap context
    def add_polygon(self, poly: WorkPolygon) -> WorkPolygon:
        self.polygons[poly.polygon_id] = poly
        self.journal.append({"op": "add_polygon", "polygon": poly.to_dict()})
        return poly

    def move_polygon(self, polygon_id: str, translation, direction=None,
                     copy: bool = False, new_id: str | None = None) -> WorkPolygon:
        if copy and new_id is None:
            raise ValueError("copy requires a new polygon id")
        poly = self.polygons[polygon_id]
        moved = polygon_move_copy(poly, translation=translation, direction=direction,
                                  copy=copy, new_id=new_id)
        self.polygons[moved.polygon_id] = moved
        self.journal.append({
            "op": "move_polygon", "id": polygon_id,
            "translation": np.asarray(translation, dtype=float).tolist(),
            "direction": None if direction is None else np.asarray(direction, dtype=float).tolist(),
            "copy": copy, "new_id": new_id,
        })
        return moved

    def extrude_polygon(self, polygon_id: str, direction, length: float,
                        prism_id: str) -> Prism:
        prism = polygon_extrude(self.polygons[polygon_id], direction,
                                length=length, prism_id=prism_id)
        self.prisms[prism_id] = prism
        self.journal.append({
            "op": "extrude_polygon", "id": polygon_id, "prism_id": prism_id,
            "direction": np.asarray(direction, dtype=float).tolist(),
            "length": float(length),
        })
        return prism

    def undo(self) -> None:
        if not self.journal:
            return
        self.journal.pop()
        replayed = ReconstructionDocument.replay(self.journal)
        self.polygons = replayed.polygons
        self.prisms = replayed.prisms

    @classmethod
    def replay(cls, journal: list[dict]) -> "ReconstructionDocument":
        doc = cls()
        for entry in journal:
            op = entry["op"]
            if op == "add_polygon":
                doc.add_polygon(WorkPolygon.from_dict(entry["polygon"]))
            elif op == "move_polygon":
                doc.move_polygon(entry["id"], entry["translation"],
                                 direction=entry["direction"], copy=entry["copy"],
                                 new_id=entry["new_id"])
            elif op == "extrude_polygon":
                doc.extrude_polygon(entry["id"], entry["direction"],
                                    entry["length"], entry["prism_id"])
            else:
                raise ValueError(f"unknown journal op {op!r}")
        return doc

    def to_text(self) -> str:
        return json.dumps({
            "format": self.VERSION,
            "journal": self.journal,
        }, indent=2, sort_keys=True)

    @classmethod
    def from_text(cls, text: str) -> "ReconstructionDocument":
        data = json.loads(text)
        if data.get("format") != cls.VERSION:
            raise ValueError(f"unsupported document format {data.get('format')!r}")
        doc = cls.replay(data["journal"])
        return doc


# -- session scripts ----------------------------------------------------------


class SessionScript:
    """Headless deterministic replay of user interactions.

    One command per line; blank lines and ``#`` comments are skipped:

        view EX,EY,EZ FX,FY,FZ UX,UY,UZ FOV_DEG W H
        tp METERS
        seed X,Y,Z [key=value overrides for GrowParams]
        construct NAME SNAP [SNAP ...]
        move NAME ANCHOR TARGET [dir=X,Y,Z]
        copy NAME NEWNAME ANCHOR TARGET [dir=X,Y,Z]
        extrude NAME DIR len=L | target=SNAP

    where SNAP is ``corner:<i>``, ``edge:<i>[:<t>]`` (t in [0, 1] along the
    support range) or ``raw:X,Y,Z``.
    """

    def __init__(self, tree, base_seed: int = 0):
        self.tree = tree
        self.view: ViewPose | None = None
        self.plane_threshold = 0.01
        self.segments: list[Segment] = []
        self.features = FeatureSet()
        self.document = ReconstructionDocument()
        self.base_seed = base_seed
        self.search_radius = 0.05
        self.log: list[str] = []

    @staticmethod
    def _vec(token: str) -> np.ndarray:
        return np.array([float(x) for x in token.split(",")], dtype=float)

    def _snap_position(self, token: str) -> np.ndarray:
        kind, _, rest = token.partition(":")
        if kind == "corner":
            return self.features.corners[int(rest)].position.copy()
        if kind == "edge":
            idx, _, t = rest.partition(":")
            edge = self.features.edges[int(idx)]
            frac = float(t) if t else 0.5
            return edge.start + frac * (edge.end - edge.start)
        if kind == "raw":
            return self._vec(rest)
        raise ValueError(f"unknown snap reference {token!r}")

    def run_line(self, line: str) -> None:
        line = line.strip()
        if not line or line.startswith("#"):
            return
        parts = line.split()
        cmd, args = parts[0], parts[1:]
        if cmd == "view":
            self.view = ViewPose(self._vec(args[0]), self._vec(args[1]),
                                 self._vec(args[2]), math.radians(float(args[3])),
                                 int(args[4]), int(args[5]))
        elif cmd == "tp":
            self.plane_threshold = float(args[0])
        elif cmd == "seed":
            if self.view is None:
                raise ValueError("seed before view")
            p0 = self._vec(args[0])
            params = estimate_params(self.view, p0, self.plane_threshold,
                                     tree=self.tree, seed=self.base_seed)
            overrides = dict(kv.split("=", 1) for kv in args[1:])
            for key, value in overrides.items():
                current = getattr(params, key)
                if isinstance(current, bool):
                    setattr(params, key, value.lower() in ("1", "true", "on"))
                elif key in ("level", "seed", "max_seed_planes"):
                    setattr(params, key, int(value))
                else:
                    setattr(params, key, float(value))
            result = grow(self.tree, params)
            offset = len(self.segments)
            for seg in result.segments:
                seg.segment_id += offset
                self.segments.append(seg)
            self.search_radius = params.search_radius
            self.features = synthesize_features(
                self.segments, self.search_radius,
                generation=self.features.generation + 1)
            self.log.append(f"seed {args[0]} -> {len(result.segments)} segments, "
                            f"{len(self.features.edges)} edges, "
                            f"{len(self.features.corners)} corners")
        elif cmd == "construct":
            name = args[0]
            verts = [self._snap_position(t) for t in args[1:]]
            self.document.add_polygon(polygon_construct(verts, polygon_id=name))
            self.log.append(f"construct {name} ({len(verts)} vertices)")
        elif cmd in ("move", "copy"):
            is_copy = cmd == "copy"
            name = args[0]
            rest = args[2:] if is_copy else args[1:]
            new_id = args[1] if is_copy else None
            direction = None
            snaps = []
            for token in rest:
                if token.startswith("dir="):
                    direction = self._vec(token[4:])
                else:
                    snaps.append(self._snap_position(token))
            anchor, target = snaps
            self.document.move_polygon(name, target - anchor, direction=direction,
                                       copy=is_copy, new_id=new_id)
            self.log.append(f"{cmd} {name}")
        elif cmd == "extrude":
            name = args[0]
            direction = self._vec(args[1])
            length = None
            for token in args[2:]:
                if token.startswith("len="):
                    length = float(token[4:])
                elif token.startswith("target="):
                    target = self._snap_position(token[7:])
                    poly = self.document.polygons[name]
                    u = direction / np.linalg.norm(direction)
                    n = poly.plane.normal
                    length = float(n @ (target - poly.vertices[0])) / float(n @ u)
            prism_id = f"x{len(self.document.prisms)}"
            self.document.extrude_polygon(name, direction, length, prism_id)
            self.log.append(f"extrude {name} -> {prism_id} length {length:.6f}")
        else:
            raise ValueError(f"unknown session command {cmd!r}")

    def run(self, text: str) -> ReconstructionDocument:
        for line in text.splitlines():
            self.run_line(line)
        return self.document
