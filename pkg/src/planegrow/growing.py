"""On-demand seeded region growing over the octree.

A session starts from RANSAC-initialized plane regressions inside a spherical
seed region, then walks octree cells outward from the seed in order of
distance. Inside each cell, points join the closest regression whose plane
lies within the plane threshold, discovered breadth-first through the search
radius from the current border. After a cell with any additions completes, an
immutable snapshot of every segment is handed to the progress callback.

Cell levels adapt to point density on the fly: when the running average
neighbor distance leaves the acceptance band around the target spacing, the
session swaps queued cells for their children (finer) or, after finishing all
cells inside partially visited parents, for their parents (coarser).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import NoPlaneFoundError, TooFewPointsError
from .octree import CellIndex, Octree
from .polygons import BoundaryPolygon, extract_polygon
from .regression import Plane, PlaneRegression

# density adaptation, in units of target spacing
EMA_WEIGHT = 0.05
INCREASE_RATIO = 4.0   # observed spacing above this band edge: refine (finer cells)
DECREASE_RATIO = 0.5   # observed spacing below this band edge: coarsen
ADAPT_WARMUP = 30      # neighbor samples required before adapting at all
ADAPT_COOLDOWN = 60    # samples to absorb after a transition before re-adapting

RANSAC_ITERATIONS = 100
RANSAC_MIN_INLIER_FRACTION = 0.10

# in-cell discovery graph: nearest neighbors per point, capped by the search
# radius; bounds the graph size when r spans many point spacings
GRAPH_DEGREE = 16


@dataclass
class GrowParams:
    """User-facing knobs of a growing session (distances in meters)."""

    seed_point: np.ndarray
    seed_radius: float          # radius of the spherical seed region
    density: float              # desired point density, points per cubic meter
    search_radius: float        # neighbor discovery radius
    plane_threshold: float      # max point-to-plane distance for inliers
    max_seed_planes: int = 3
    otsu_prune: bool = False
    max_radius: float | None = None   # optional cap on growth distance from seed
    level: int | None = None          # explicit start level (None: pick by density)
    adaptive: bool = True
    seed: int = 0                     # RANSAC / tie-break determinism

    def __post_init__(self):
        self.seed_point = np.asarray(self.seed_point, dtype=float).reshape(3)
        for name in ("seed_radius", "density", "search_radius", "plane_threshold"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def target_spacing(self) -> float:
        """Desired density converted to a point spacing."""
        return self.density ** (-1.0 / 3.0)


@dataclass(frozen=True)
class SegmentStats:
    point_count: int
    polygon_area: float
    variance: float  # smallest covariance eigenvalue


@dataclass(frozen=True)
class SegmentSnapshot:
    """Immutable progress payload; also the service wire payload."""

    segment_id: int
    plane: Plane
    stats: SegmentStats
    polygon: BoundaryPolygon

    def to_dict(self) -> dict:
        return {
            "id": self.segment_id,
            "origin": self.plane.origin.tolist(),
            "normal": self.plane.normal.tolist(),
            "tangent": self.plane.tangent.tolist(),
            "bitangent": self.plane.bitangent.tolist(),
            "variance": self.stats.variance,
            "point_count": self.stats.point_count,
            "polygon_area": self.stats.polygon_area,
            "polygon_loops": [lp.tolist() for lp in self.polygon.loops_3d()],
        }


@dataclass
class Segment:
    """A regression with its border points, outline, and summary statistics."""

    segment_id: int
    regression: PlaneRegression
    plane: Plane
    border_points: np.ndarray
    inlier_count: int
    polygon: BoundaryPolygon
    stats: SegmentStats

    def snapshot(self) -> SegmentSnapshot:
        return SegmentSnapshot(self.segment_id, self.plane, self.stats, self.polygon)


@dataclass(frozen=True)
class TraceEvent:
    kind: str               # cell | increase | lock | decrease | unlock
    cell: CellIndex | None
    level: int
    d_avg: float
    spacing_ratio: float    # d_avg over target spacing (nan before warmup)
    joined: int = 0


@dataclass
class GrowResult:
    segments: list[Segment]
    trace: list[TraceEvent]
    level_history: list[int]
    cells_processed: int
    cancelled: bool = False


class _CellMarks:
    __slots__ = ("visited", "claim")

    def __init__(self, n: int):
        self.visited = np.zeros(n, dtype=bool)
        self.claim = np.full(n, -1, dtype=np.int32)


def _scatter_min(target: np.ndarray, idx: np.ndarray, vals: np.ndarray) -> None:
    """target[idx] = min(target[idx], vals) with repeated indices allowed.

    Sort-and-reduce formulation; much faster than the unbuffered ufunc.at.
    """
    if idx.size == 0:
        return
    order = np.argsort(idx, kind="stable")
    idx_s = idx[order]
    val_s = vals[order]
    starts = np.concatenate([[0], np.flatnonzero(np.diff(idx_s)) + 1])
    mins = np.minimum.reduceat(val_s, starts)
    uniq = idx_s[starts]
    target[uniq] = np.minimum(target[uniq], mins)


class _SegState:
    def __init__(self, sid: int, regression: PlaneRegression):
        self.sid = sid
        self.regression = regression
        self.border: dict[CellIndex, np.ndarray] = {}
        self._plane_cache: tuple[int, Plane] | None = None

    def current_plane(self) -> Plane:
        if self._plane_cache is None or self._plane_cache[0] != self.regression.c:
            self._plane_cache = (self.regression.c, self.regression.synthesize())
        return self._plane_cache[1]

    def border_near(self, tree: Octree, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        parts = []
        for idx, pts in self.border.items():
            cmin, size = tree.cell_bounds(idx)
            cmin = cmin + tree.manifest.offset
            if np.all(cmin <= hi) and np.all(cmin + size >= lo):
                parts.append(pts)
        if not parts:
            return np.empty((0, 3))
        return np.concatenate(parts)

    def all_border(self) -> np.ndarray:
        if not self.border:
            return np.empty((0, 3))
        return np.concatenate(list(self.border.values()))


def otsu_threshold(values) -> float:
    """Split threshold maximizing between-class variance; ties keep more."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size < 2:
        return v[0] if v.size else 0.0
    best_t, best_score = v[0], -1.0
    for i in range(1, v.size):
        w0 = i / v.size
        w1 = 1.0 - w0
        score = w0 * w1 * (v[:i].mean() - v[i:].mean()) ** 2
        if score > best_score:
            best_score, best_t = score, v[i]
    return float(best_t)


def ransac_planes(pts: np.ndarray, threshold: float, max_planes: int,
                  rng: np.random.Generator, min_inlier_fraction: float = RANSAC_MIN_INLIER_FRACTION,
                  iterations: int = RANSAC_ITERATIONS, otsu: bool = False) -> list[np.ndarray]:
    """Greedy multi-plane RANSAC; returns inlier index arrays ranked by count.

    Each detected plane is refined with a least-squares fit before its
    inliers are removed from the remaining set. With ``otsu`` set, candidates
    whose inlier counts fall below the variance-minimizing split of the count
    distribution are discarded.
    """
    pts = np.asarray(pts, dtype=float).reshape(-1, 3)
    n = pts.shape[0]
    remaining = np.arange(n)
    results: list[np.ndarray] = []
    min_count = max(3, int(math.ceil(min_inlier_fraction * n)))
    while len(results) < max_planes and remaining.size >= 3:
        sub = pts[remaining]
        best_count = 0
        best_mask = None
        for _ in range(iterations):
            tri = rng.choice(sub.shape[0], size=3, replace=False)
            p0, p1, p2 = sub[tri]
            nvec = np.cross(p1 - p0, p2 - p0)
            norm = np.linalg.norm(nvec)
            if norm < 1e-12:
                continue
            nvec = nvec / norm
            mask = np.abs((sub - p0) @ nvec) < threshold
            count = int(mask.sum())
            if count > best_count:
                best_count, best_mask = count, mask
        if best_mask is None or best_count < 3:
            break
        # least-squares refinement iterated until the inlier set stabilizes,
        # kept only while it does not lose support; this keeps the seed
        # regression free of the winning sample's tilt
        for _ in range(10):
            inl = sub[best_mask]
            reg = PlaneRegression.from_seed(inl[0])
            reg.add_many(inl[1:])
            try:
                plane = reg.synthesize()
            except ValueError:
                break
            refined = plane.distances(sub) < threshold
            count = int(refined.sum())
            if count < int(best_mask.sum()):
                break
            stable = np.array_equal(refined, best_mask)
            best_mask = refined
            if stable:
                break
        if int(best_mask.sum()) < min_count:
            break
        results.append(remaining[best_mask])
        remaining = remaining[~best_mask]
    if otsu and len(results) >= 2:
        counts = np.array([len(r) for r in results], dtype=float)
        cut = otsu_threshold(counts)
        results = [r for r in results if len(r) >= cut]
    return results


class GrowSession:
    """One growing run against a read-only octree. Single-owner, cancellable.

    ``extra_picks`` seeds additional regressions from further pick points in
    the same session, so their segments compete for points exactly like the
    multiple regressions of an edge or corner seed.
    """

    def __init__(self, tree: Octree, params: GrowParams, extra_picks=None):
        self.tree = tree
        self.params = params
        self.extra_picks = [np.asarray(p, dtype=float).reshape(3)
                            for p in (extra_picks or [])]
        self.rng = np.random.default_rng(params.seed)
        self.segments: list[_SegState] = []
        self.marks: dict[CellIndex, _CellMarks] = {}
        self.queue: dict[CellIndex, float] = {}
        self.enqueued: set[CellIndex] = set()
        self.processed: set[CellIndex] = set()
        self.covered_ancestors: set[CellIndex] = set()
        self.parents_with_processed: set[CellIndex] = set()
        self.trace: list[TraceEvent] = []
        self.level_history: list[int] = []
        self.d_avg = float("nan")
        self._samples = 0
        self._cooldown = 0
        self._locked = False
        self._marked: set[CellIndex] = set()
        self._cancelled = False
        self.level = 0
        self._init_seed()

    # -- seeding -----------------------------------------------------------

    def _choose_level(self) -> int:
        target = self.params.target_spacing
        best_level, best_score, fallback = None, None, None
        for lv in range(self.tree.max_level + 1):
            pts = self.tree.query_sphere(self.params.seed_point,
                                         self.params.seed_radius, lv)
            if pts.shape[0] >= 3 and fallback is None:
                fallback = lv
            if pts.shape[0] < 8:
                continue
            spacing = _median_spacing(pts)
            if spacing <= 0:
                continue
            score = abs(math.log(spacing / target))
            if best_score is None or score < best_score:
                best_level, best_score = lv, score
        if best_level is not None:
            return best_level
        if fallback is not None:
            return fallback
        raise TooFewPointsError("seed region holds fewer than 3 points at every level")

    def _init_seed(self) -> None:
        p = self.params
        self.level = p.level if p.level is not None else self._choose_level()
        self._seed_at(p.seed_point, required=True)
        for pick in self.extra_picks:
            self._seed_at(pick, required=False)
        self.level_history.append(self.level)

    def _seed_at(self, pick: np.ndarray, required: bool) -> None:
        """RANSAC-initialize regressions from the seed region around a pick."""
        p = self.params
        hits = self.tree.query_sphere_cells(pick, p.seed_radius, self.level)
        pts_parts, id_parts = [], []
        for idx, sel in hits:
            cell = self.tree.load_cell(idx)
            marks = self._marks_for(idx, cell.payload.shape[0])
            sel = sel[~marks.visited[sel]]  # a later pick never re-claims
            if sel.size == 0:
                continue
            pts_parts.append(cell.payload[sel].astype(float) + self.tree.manifest.offset)
            id_parts.append((idx, sel))
        total = sum(part.shape[0] for part in pts_parts)
        if total < 3:
            if required:
                raise TooFewPointsError(
                    f"seed region holds {total} points at level {self.level}, need 3")
            return
        pts = np.concatenate(pts_parts)
        planes = ransac_planes(pts, p.plane_threshold, p.max_seed_planes,
                               self.rng, otsu=p.otsu_prune)
        if not planes:
            if required:
                raise NoPlaneFoundError("no plane with the minimum inlier support")
            return

        if not np.isfinite(self.d_avg):
            self.d_avg = _median_spacing(pts)
        base_sid = len(self.segments)
        owner = np.full(pts.shape[0], -1, dtype=np.int32)
        for k, inlier_idx in enumerate(planes):
            inl = pts[inlier_idx]
            reg = PlaneRegression.from_seed(inl[0])
            if inl.shape[0] > 1:
                reg.add_many(inl[1:])
            self.segments.append(_SegState(base_sid + k, reg))
            owner[inlier_idx] = base_sid + k

        # mark the claimed seed points visited per cell, stash them as border
        cursor = 0
        for (idx, sel), part in zip(id_parts, pts_parts):
            n_here = part.shape[0]
            marks = self.marks[idx]
            local_owner = owner[cursor:cursor + n_here]
            claimed = local_owner >= 0
            marks.visited[sel[claimed]] = True
            marks.claim[sel[claimed]] = local_owner[claimed]
            for seg in self.segments[base_sid:]:
                mine = part[local_owner == seg.sid]
                if mine.shape[0]:
                    seg.border.setdefault(idx, np.empty((0, 3)))
                    seg.border[idx] = np.concatenate([seg.border[idx], mine])
            cursor += n_here
            self._enqueue(idx)

    # -- bookkeeping ---------------------------------------------------------

    def _marks_for(self, idx: CellIndex, n: int) -> _CellMarks:
        marks = self.marks.get(idx)
        if marks is None:
            marks = _CellMarks(n)
            self.marks[idx] = marks
        return marks

    def _box_distance(self, idx: CellIndex) -> float:
        cmin, size = self.tree.cell_bounds(idx)
        cmin = cmin + self.tree.manifest.offset
        nearest = np.clip(self.params.seed_point, cmin, cmin + size)
        return float(np.linalg.norm(nearest - self.params.seed_point))

    def _enqueue(self, idx: CellIndex) -> None:
        if idx in self.enqueued or idx in self.processed:
            return
        if idx in self.covered_ancestors:
            return  # a descendant region was already processed at a finer level
        dist = self._box_distance(idx)
        if self.params.max_radius is not None and dist > self.params.max_radius:
            return
        self.queue[idx] = dist
        self.enqueued.add(idx)

    def _resolve(self, idx: CellIndex) -> CellIndex | None:
        """Map a lattice index to the cell that stores its region, if any."""
        if self.tree.exists(idx):
            return idx
        probe = idx
        while probe.level > 0:
            probe = probe.parent()
            if self.tree.exists(probe):
                rec = self.tree.records[probe]
                return probe if rec.is_leaf else None
        return None

    def _parent_partial(self, idx: CellIndex) -> bool:
        return idx.level > 0 and idx.parent() in self.parents_with_processed

    # -- adaptive resolution ---------------------------------------------------

    def _spacing_ratio(self) -> float:
        if self._samples < ADAPT_WARMUP or not np.isfinite(self.d_avg):
            return float("nan")
        return self.d_avg / self.params.target_spacing

    def _may_adapt(self) -> bool:
        return (self.params.adaptive and self._samples >= ADAPT_WARMUP
                and self._cooldown <= 0)

    def _pop_next(self) -> CellIndex | None:
        while True:
            if self._locked:
                marked = [i for i in self.queue if i in self._marked]
                if marked:
                    idx = min(marked, key=lambda i: (self.queue[i], i))
                    del self.queue[idx]
                else:
                    self._finish_decrease()
                    continue
            else:
                if not self.queue:
                    return None
                idx = min(self.queue, key=lambda i: (self.queue[i], i))
                del self.queue[idx]

            # converge cells left behind by an earlier refinement
            if idx.level < self.level and not self.tree.records[idx].is_leaf:
                for child in self.tree.children_of(idx):
                    self._enqueue(child)
                continue

            if self._may_adapt() and not self._locked:
                ratio = self._spacing_ratio()
                if ratio > INCREASE_RATIO and not self.tree.records[idx].is_leaf:
                    # too sparse: replace this cell by its children
                    self.level += 1
                    self.level_history.append(self.level)
                    self._cooldown = ADAPT_COOLDOWN
                    self.trace.append(TraceEvent("increase", idx, self.level,
                                                 self.d_avg, ratio))
                    for child in self.tree.children_of(idx):
                        self._enqueue(child)
                    continue
                if ratio < DECREASE_RATIO and self.level > 0:
                    # too dense: finish the cells inside partially visited
                    # parents at the current level, then coarsen
                    self.queue[idx] = self._box_distance(idx)  # put it back
                    self._marked = {i for i in self.queue if self._parent_partial(i)}
                    self._locked = True
                    self.trace.append(TraceEvent("lock", idx, self.level,
                                                 self.d_avg, ratio))
                    continue
            return idx

    def _finish_decrease(self) -> None:
        self._locked = False
        self._marked = set()
        ratio = self._spacing_ratio()
        if not (self.params.adaptive and self._samples >= ADAPT_WARMUP
                and ratio < DECREASE_RATIO and self.level > 0):
            self.trace.append(TraceEvent("unlock", None, self.level, self.d_avg, ratio))
            return
        old_level = self.level
        old_queue = list(self.queue)
        self.queue.clear()
        self.level -= 1
        self.level_history.append(self.level)
        self._cooldown = ADAPT_COOLDOWN
        self.trace.append(TraceEvent("decrease", None, self.level, self.d_avg, ratio))
        for idx in old_queue:
            self.enqueued.discard(idx)
            if idx.level < old_level:
                # substituted coarser leaves are already at or below the new level
                self._enqueue(idx)
                continue
            parent = idx.parent() if idx.level > 0 else idx
            if parent in self.processed or parent in self.parents_with_processed:
                # the parent region is partially done; keep the original cell
                self._enqueue(idx)
            else:
                self._enqueue(parent)

    # -- growth ------------------------------------------------------------------

    def _update_d_avg(self, dists: np.ndarray) -> None:
        k = dists.size
        if k == 0:
            return
        if not np.isfinite(self.d_avg):
            self.d_avg = float(dists[0])
        decay = (1.0 - EMA_WEIGHT) ** np.arange(k - 1, -1, -1, dtype=float)
        self.d_avg = float(self.d_avg * (1.0 - EMA_WEIGHT) ** k
                           + EMA_WEIGHT * np.sum(decay * dists))
        self._samples += k
        self._cooldown = max(0, self._cooldown - k)

    def _grow_in_cell(self, idx: CellIndex, pts: np.ndarray, marks: _CellMarks) -> int:
        p = self.params
        r = p.search_radius
        m = pts.shape[0]
        cmin, size = self.tree.cell_bounds(idx)
        lo = cmin + self.tree.manifest.offset - r
        hi = cmin + self.tree.manifest.offset + size + r

        frontiers: dict[int, np.ndarray] = {}
        for seg in self.segments:
            f = seg.border_near(self.tree, lo, hi)
            if f.shape[0]:
                frontiers[seg.sid] = f
        if not frontiers:
            return 0

        # neighbor graph of the cell payload, built once as CSR arrays;
        # BFS waves afterwards are plain array operations. Degree is capped
        # at the nearest neighbors inside the search radius, which bounds the
        # graph size even when r spans many point spacings.
        kdt = cKDTree(pts)
        k = min(GRAPH_DEGREE + 1, m)
        qd, qj = kdt.query(pts, k=k, distance_upper_bound=r)
        qd = np.atleast_2d(qd)[:, 1:]  # drop self matches
        qj = np.atleast_2d(qj)[:, 1:]
        valid = np.isfinite(qd)
        src = np.repeat(np.arange(m), valid.sum(axis=1))
        dst = qj[valid]
        dv = qd[valid]
        if src.size:
            rows = np.concatenate([src, dst])
            cols = np.concatenate([dst, src])
            dists = np.concatenate([dv, dv])
            order = np.argsort(rows, kind="stable")
            rows, cols, dists = rows[order], cols[order], dists[order]
            indptr = np.searchsorted(rows, np.arange(m + 1))
        else:
            cols = np.empty(0, dtype=int)
            dists = np.empty(0)
            indptr = np.zeros(m + 1, dtype=int)

        # reach[sid][i]: smallest discovery distance from the segment's
        # border to point i seen so far (inf = not yet reachable);
        # pending[sid]: points to examine against that segment next round
        reach: dict[int, np.ndarray] = {}
        pending: dict[int, np.ndarray] = {}
        for sid, front in frontiers.items():
            dmin, _ = cKDTree(front).query(pts, k=1, distance_upper_bound=r)
            reach[sid] = dmin
            pending[sid] = np.flatnonzero(np.isfinite(dmin))

        examined_by = {sid: np.zeros(m, dtype=bool) for sid in frontiers}
        scratch = np.zeros(m, dtype=bool)
        joined_total = 0
        joined_by_seg: dict[int, list[np.ndarray]] = {s.sid: [] for s in self.segments}
        by_sid = {s.sid: s for s in self.segments}

        while True:
            round_cand: dict[int, np.ndarray] = {}
            for sid, cand in pending.items():
                if cand.size == 0:
                    continue
                cand = cand[~marks.visited[cand] & ~examined_by[sid][cand]]
                if cand.size:
                    round_cand[sid] = cand
            if not round_cand:
                break
            candidates = (np.unique(np.concatenate(list(round_cand.values())))
                          if len(round_cand) > 1 else next(iter(round_cand.values())))

            planes = {sid: by_sid[sid].current_plane() for sid in round_cand}
            best_sid = np.full(candidates.size, -1, dtype=np.int32)
            best_plane_dist = np.full(candidates.size, np.inf)
            discovery = np.full(candidates.size, np.inf)
            within_count = np.zeros(candidates.size, dtype=np.int8)
            for sid, cand in round_cand.items():
                examined_by[sid][cand] = True
                scratch[cand] = True
                reachable = scratch[candidates]
                scratch[cand] = False
                pd = planes[sid].distances(pts[candidates])
                hit = reachable & (pd < p.plane_threshold)
                within_count[hit] += 1
                ok = hit & (pd < best_plane_dist)
                best_plane_dist[ok] = pd[ok]
                best_sid[ok] = sid
                discovery[ok] = reach[sid][candidates][ok]

            # points inside the threshold band of several planes sit on an
            # edge; counting them into either regression would bias it, so
            # they are visited without joining any segment
            ambiguous = within_count >= 2
            if ambiguous.any():
                marks.visited[candidates[ambiguous]] = True
                best_sid[ambiguous] = -1

            joins = best_sid >= 0
            pending = {sid: np.empty(0, dtype=int) for sid in reach}
            if not joins.any():
                break
            order = np.argsort(candidates[joins], kind="stable")
            join_idx = candidates[joins][order]
            join_sid = best_sid[joins][order]
            join_disc = discovery[joins][order]
            marks.visited[join_idx] = True
            marks.claim[join_idx] = join_sid
            for sid in reach:
                mine = join_idx[join_sid == sid]
                if mine.size == 0:
                    continue
                by_sid[sid].regression.add_many(pts[mine])
                joined_by_seg[sid].append(mine)
                starts = indptr[mine]
                lens = indptr[mine + 1] - starts
                total = int(lens.sum())
                if total:
                    base = np.repeat(starts, lens)
                    offs = np.arange(total) - np.repeat(np.cumsum(lens) - lens, lens)
                    take = base + offs
                    _scatter_min(reach[sid], cols[take], dists[take])
                    pending[sid] = np.unique(cols[take])
            self._update_d_avg(join_disc)
            joined_total += int(join_idx.size)

        # points examined but never joined are visited (rejected)
        for seen in examined_by.values():
            marks.visited |= seen

        # retain border points: stalled next to unvisited points, or near the
        # cell boundary where neighbors may still be unprocessed
        unvisited_nb = np.bincount(
            np.repeat(np.arange(m), np.diff(indptr))[~marks.visited[cols]],
            minlength=m) if cols.size else np.zeros(m, dtype=int)
        for seg in self.segments:
            if not joined_by_seg[seg.sid]:
                continue
            mine = np.concatenate(joined_by_seg[seg.sid])
            ptsm = pts[mine]
            near_face = np.min(np.minimum(ptsm - (lo + r), (hi - r) - ptsm), axis=1) < r
            keep = near_face | (unvisited_nb[mine] > 0)
            if keep.any():
                existing = seg.border.get(idx)
                fresh_pts = ptsm[keep]
                seg.border[idx] = (fresh_pts if existing is None
                                   else np.concatenate([existing, fresh_pts]))
        return joined_total

    # -- main loop ------------------------------------------------------------

    def cancel(self) -> None:
        self._cancelled = True

    def snapshots(self) -> list[SegmentSnapshot]:
        out = []
        for seg in self.segments:
            plane = seg.current_plane()
            poly = extract_polygon(plane, seg.all_border(),
                                   alpha=2.0 * self.params.search_radius)
            stats = SegmentStats(seg.regression.c, poly.area, plane.variance)
            out.append(SegmentSnapshot(seg.sid, plane, stats, poly))
        return out

    def run(self, callback=None, compute_polygons: bool = True) -> GrowResult:
        cells = 0
        while not self._cancelled:
            idx = self._pop_next()
            if idx is None:
                break
            self._assert_region_fresh(idx)
            cell = self.tree.load_cell(idx)
            pts = cell.payload.astype(float) + self.tree.manifest.offset
            marks = self._marks_for(idx, pts.shape[0])
            joined = self._grow_in_cell(idx, pts, marks) if pts.shape[0] else 0
            self.processed.add(idx)
            probe = idx
            while probe.level > 0:
                probe = probe.parent()
                self.covered_ancestors.add(probe)
            if idx.level > 0:
                self.parents_with_processed.add(idx.parent())
            cells += 1
            self.trace.append(TraceEvent("cell", idx, idx.level, self.d_avg,
                                         self._spacing_ratio(), joined))
            if joined:
                for nb in idx.lattice_neighbors():
                    resolved = self._resolve(nb)
                    if resolved is not None:
                        self._enqueue(resolved)
                if callback is not None:
                    callback(self.snapshots())
        return GrowResult(self._finalize(compute_polygons), self.trace,
                          self.level_history, cells, self._cancelled)

    def _assert_region_fresh(self, idx: CellIndex) -> None:
        if idx in self.processed or idx in self.covered_ancestors:
            raise AssertionError(f"region {idx} would be processed twice")
        probe = idx
        while probe.level > 0:
            probe = probe.parent()
            if probe in self.processed:
                raise AssertionError(
                    f"region {idx} lies inside already processed {probe}")

    def _finalize(self, compute_polygons: bool = True) -> list[Segment]:
        out = []
        for seg in self.segments:
            plane = seg.current_plane()
            border = seg.all_border()
            if compute_polygons:
                poly = extract_polygon(plane, border,
                                       alpha=2.0 * self.params.search_radius)
            else:
                poly = BoundaryPolygon(plane=plane)
            stats = SegmentStats(seg.regression.c, poly.area, plane.variance)
            out.append(Segment(seg.sid, seg.regression, plane, border,
                               seg.regression.c, poly, stats))
        return out


def _median_spacing(pts: np.ndarray, sample: int = 4000) -> float:
    """Median nearest-neighbor distance, estimated on a subsample."""
    pts = np.asarray(pts, dtype=float)
    if pts.shape[0] < 2:
        return float("nan")
    if pts.shape[0] > sample:
        step = pts.shape[0] // sample
        probe = pts[::step]
    else:
        probe = pts
    kdt = cKDTree(pts)
    d, _ = kdt.query(probe, k=2)
    return float(np.median(d[:, 1]))


def grow(tree: Octree, params: GrowParams, callback=None) -> GrowResult:
    """Run one full growing session and return its segments and trace."""
    return GrowSession(tree, params).run(callback)
