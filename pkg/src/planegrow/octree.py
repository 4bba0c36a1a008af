"""Out-of-core octree over a point cloud.

Leaf cells store the original points; inner cells store a uniform random
subsample of their descendants, capped at a per-cell budget. Cells live on
disk as little-endian float32 blobs with a fixed 16-byte header, next to a
text manifest and a cell index, so arbitrarily large clouds can be navigated
by loading only the cells a session touches.

Coordinates are stored relative to a global offset (the bounding-box center)
recorded in the manifest, which keeps float32 payloads accurate for clouds
with large absolute coordinates.
"""

from __future__ import annotations

import math
import struct
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from threading import RLock
from typing import Callable, Iterable, Iterator, NamedTuple

import numpy as np

from .errors import CellNotFoundError

BLOB_MAGIC = b"PGC1"
BLOB_HEADER = struct.Struct("<4sIII")  # magic, count, flags, reserved
FLAG_LEAF = 1
FLAG_INNER = 2

MANIFEST_FORMAT = "planegrow-octree/1"
DEFAULT_BUDGET = 8192
# Buckets larger than this many points are split on disk instead of in memory.
_MEM_SPLIT_LIMIT = 6_000_000
# Coincident points can never be separated; stop subdividing at this depth.
_MAX_LEVEL = 20


class CellIndex(NamedTuple):
    level: int
    i: int
    j: int
    k: int

    def parent(self) -> "CellIndex":
        if self.level == 0:
            raise ValueError("root cell has no parent")
        return CellIndex(self.level - 1, self.i // 2, self.j // 2, self.k // 2)

    def children(self) -> list["CellIndex"]:
        """All 8 potential child indices (existence not checked)."""
        out = []
        for di in (0, 1):
            for dj in (0, 1):
                for dk in (0, 1):
                    out.append(CellIndex(self.level + 1, 2 * self.i + di,
                                         2 * self.j + dj, 2 * self.k + dk))
        return out

    def lattice_neighbors(self) -> list["CellIndex"]:
        """The 26 same-level lattice neighbors inside the root box."""
        n = 1 << self.level
        out = []
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                for dk in (-1, 0, 1):
                    if di == dj == dk == 0:
                        continue
                    i, j, k = self.i + di, self.j + dj, self.k + dk
                    if 0 <= i < n and 0 <= j < n and 0 <= k < n:
                        out.append(CellIndex(self.level, i, j, k))
        return out

    def blob_name(self) -> str:
        return f"c{self.level}_{self.i}_{self.j}_{self.k}.bin"


@dataclass(frozen=True)
class CellRecord:
    descendant_count: int
    payload_count: int
    flags: int

    @property
    def is_leaf(self) -> bool:
        return bool(self.flags & FLAG_LEAF)


@dataclass
class OctreeCell:
    index: CellIndex
    bounds_min: np.ndarray  # relative to the manifest offset
    size: float
    payload: np.ndarray  # (N, 3) float32, read-only, relative coordinates
    is_leaf: bool
    point_count: int  # descendants below (== payload size for leaves)


@dataclass
class OctreeManifest:
    root_min: np.ndarray
    root_size: float
    point_count: int
    budget: int
    seed: int
    offset: np.ndarray
    cell_count: int
    format_version: str = MANIFEST_FORMAT


def encode_cell_blob(points_f32: np.ndarray, flags: int) -> bytes:
    pts = np.ascontiguousarray(points_f32, dtype="<f4").reshape(-1, 3)
    return BLOB_HEADER.pack(BLOB_MAGIC, pts.shape[0], flags, 0) + pts.tobytes()


def decode_cell_blob(blob: bytes) -> tuple[np.ndarray, int]:
    magic, count, flags, _ = BLOB_HEADER.unpack_from(blob, 0)
    if magic != BLOB_MAGIC:
        raise ValueError("bad cell blob magic")
    pts = np.frombuffer(blob, dtype="<f4", count=3 * count, offset=BLOB_HEADER.size)
    pts = pts.reshape(count, 3)
    pts.flags.writeable = False
    return pts, flags


def _cell_rng(seed: int, idx: CellIndex) -> np.random.Generator:
    return np.random.default_rng((seed, idx.level + 1, idx.i, idx.j, idx.k))


def _normalize_chunks(points) -> Callable[[], Iterator[np.ndarray]]:
    """Accepts an array, a chunk-factory callable, or an iterable of chunks."""
    if callable(points):
        return points
    if isinstance(points, np.ndarray):
        arr = points

        def from_array():
            step = 1 << 20
            for lo in range(0, len(arr), step):
                yield arr[lo:lo + step]

        return from_array
    chunks = list(points)  # small iterables only; large inputs use a factory

    def from_list():
        return iter(chunks)

    return from_list


def build_octree(points, out_dir, budget: int = DEFAULT_BUDGET, seed: int = 0,
                 bounds: tuple | None = None, count_hint: int | None = None) -> "Octree":
    """Stream points into an on-disk octree and return the opened tree.

    ``points`` may be an (N, 3) array, an iterable of (n, 3) chunks, or a
    zero-argument callable producing such an iterable (the callable form is
    re-invoked for the bounds pass, so nothing is ever held in memory).
    ``bounds`` as ((min_xyz), (max_xyz)) plus ``count_hint`` skip the bounds
    pass entirely, which lets one-shot generators feed the build.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    out = Path(out_dir)
    (out / "cells").mkdir(parents=True, exist_ok=True)
    chunk_factory = _normalize_chunks(points)

    if bounds is None:
        lo = np.full(3, np.inf)
        hi = np.full(3, -np.inf)
        count = 0
        for chunk in chunk_factory():
            arr = np.asarray(chunk, dtype=float).reshape(-1, 3)
            if arr.size == 0:
                continue
            np.minimum(lo, arr.min(axis=0), out=lo)
            np.maximum(hi, arr.max(axis=0), out=hi)
            count += arr.shape[0]
        if count == 0:
            raise ValueError("empty point stream")
    else:
        lo = np.asarray(bounds[0], dtype=float)
        hi = np.asarray(bounds[1], dtype=float)
        count = count_hint if count_hint else -1

    offset = 0.5 * (lo + hi)
    extent = float(np.max(hi - lo))
    root_size = max(extent, 1e-9) * (1.0 + 1e-7)
    root_min = -0.5 * root_size * np.ones(3)

    builder = _Builder(out, budget, seed, offset, root_min, root_size)
    total = builder.route_and_split(chunk_factory, count)
    builder.compose_upper_levels()
    builder.write_index_and_manifest(total)
    return Octree(out)


class _Builder:
    def __init__(self, out: Path, budget: int, seed: int, offset, root_min, root_size):
        self.out = out
        self.budget = budget
        self.seed = seed
        self.offset = np.asarray(offset, dtype=float)
        self.root_min = np.asarray(root_min, dtype=float)
        self.root_size = float(root_size)
        self.records: dict[CellIndex, CellRecord] = {}

    # -- routing ---------------------------------------------------------

    def route_and_split(self, chunk_factory, declared_count: int) -> int:
        # Route into at most 8^3 coarse buckets in one pass; deeper levels are
        # reached by recursive splitting, mostly in memory.
        level0 = 0
        if declared_count > 0:
            level0 = max(0, math.ceil(math.log(max(declared_count / self.budget, 1.0), 8)))
        level0 = min(level0, 3)
        dim = 1 << level0
        cell_size = self.root_size / dim
        scratch = self.out / "scratch"
        scratch.mkdir(exist_ok=True)

        buffers: dict[int, list[np.ndarray]] = {}
        buffered: dict[int, int] = {}
        counts: dict[int, int] = {}
        total = 0

        def flush(key: int):
            arrs = buffers.pop(key, None)
            if not arrs:
                return
            data = np.concatenate(arrs) if len(arrs) > 1 else arrs[0]
            with open(scratch / f"b{key}.raw", "ab") as fh:
                fh.write(data.tobytes())
            buffered.pop(key, None)

        for chunk in chunk_factory():
            arr = np.asarray(chunk, dtype=float).reshape(-1, 3)
            if arr.size == 0:
                continue
            total += arr.shape[0]
            rel = (arr - self.offset).astype(np.float32)
            ijk = np.floor((rel.astype(float) - self.root_min) / cell_size).astype(np.int64)
            np.clip(ijk, 0, dim - 1, out=ijk)
            keys = (ijk[:, 0] * dim + ijk[:, 1]) * dim + ijk[:, 2]
            order = np.argsort(keys, kind="stable")
            keys_sorted = keys[order]
            rel_sorted = rel[order]
            edges = np.flatnonzero(np.diff(keys_sorted)) + 1
            starts = np.concatenate([[0], edges])
            ends = np.concatenate([edges, [len(keys_sorted)]])
            for s, e in zip(starts, ends):
                key = int(keys_sorted[s])
                part = rel_sorted[s:e].copy()  # detach from the chunk buffer
                buffers.setdefault(key, []).append(part)
                counts[key] = counts.get(key, 0) + (e - s)
                buffered[key] = buffered.get(key, 0) + part.nbytes
                if buffered[key] > (1 << 18):
                    flush(key)
        if total == 0:
            raise ValueError("empty point stream")
        for key in list(buffers):
            flush(key)

        for key in sorted(counts):
            i, rem = divmod(key, dim * dim)
            j, k = divmod(rem, dim)
            idx = CellIndex(level0, int(i), int(j), int(k))
            path = scratch / f"b{key}.raw"
            n = counts[key]
            if n <= _MEM_SPLIT_LIMIT:
                pts = np.fromfile(path, dtype="<f4").reshape(-1, 3)
                path.unlink()
                self._split_in_memory(idx, pts)
            else:
                self._split_on_disk(idx, path, n)
        scratch.rmdir()
        return total

    # -- splitting -------------------------------------------------------

    def _cell_geometry(self, idx: CellIndex) -> tuple[np.ndarray, float]:
        size = self.root_size / (1 << idx.level)
        cmin = self.root_min + np.array([idx.i, idx.j, idx.k], dtype=float) * size
        return cmin, size

    def _write_cell(self, idx: CellIndex, payload: np.ndarray, flags: int,
                    descendant_count: int) -> None:
        blob = encode_cell_blob(payload, flags)
        (self.out / "cells" / idx.blob_name()).write_bytes(blob)
        self.records[idx] = CellRecord(descendant_count, payload.shape[0], flags)

    def _split_in_memory(self, idx: CellIndex, pts: np.ndarray) -> None:
        if pts.shape[0] <= self.budget or idx.level >= _MAX_LEVEL:
            self._write_cell(idx, pts, FLAG_LEAF, pts.shape[0])
            return
        cmin, size = self._cell_geometry(idx)
        half = size / 2.0
        octant = ((pts[:, 0].astype(float) - cmin[0]) >= half).astype(np.int8) * 4
        octant += ((pts[:, 1].astype(float) - cmin[1]) >= half).astype(np.int8) * 2
        octant += ((pts[:, 2].astype(float) - cmin[2]) >= half).astype(np.int8)
        for code in range(8):
            mask = octant == code
            if not mask.any():
                continue
            child = CellIndex(idx.level + 1, 2 * idx.i + (code >> 2),
                              2 * idx.j + ((code >> 1) & 1), 2 * idx.k + (code & 1))
            self._split_in_memory(child, pts[mask])
        self._compose_inner(idx)

    def _split_on_disk(self, idx: CellIndex, path: Path, n: int) -> None:
        if n <= _MEM_SPLIT_LIMIT:
            pts = np.fromfile(path, dtype="<f4").reshape(-1, 3)
            path.unlink()
            self._split_in_memory(idx, pts)
            return
        cmin, size = self._cell_geometry(idx)
        half = size / 2.0
        child_paths = {}
        child_counts = {}
        with open(path, "rb") as fh:
            while True:
                raw = fh.read(12 * (1 << 20))
                if not raw:
                    break
                pts = np.frombuffer(raw, dtype="<f4").reshape(-1, 3)
                octant = ((pts[:, 0].astype(float) - cmin[0]) >= half).astype(np.int8) * 4
                octant += ((pts[:, 1].astype(float) - cmin[1]) >= half).astype(np.int8) * 2
                octant += ((pts[:, 2].astype(float) - cmin[2]) >= half).astype(np.int8)
                for code in range(8):
                    mask = octant == code
                    if not mask.any():
                        continue
                    cpath = child_paths.get(code)
                    if cpath is None:
                        cpath = path.with_name(path.stem + f"_{code}.raw")
                        child_paths[code] = cpath
                        child_counts[code] = 0
                    with open(cpath, "ab") as out:
                        out.write(pts[mask].tobytes())
                    child_counts[code] += int(mask.sum())
        path.unlink()
        for code in sorted(child_paths):
            child = CellIndex(idx.level + 1, 2 * idx.i + (code >> 2),
                              2 * idx.j + ((code >> 1) & 1), 2 * idx.k + (code & 1))
            self._split_on_disk(child, child_paths[code], child_counts[code])
        self._compose_inner(idx)

    # -- inner payload composition ----------------------------------------

    def _compose_inner(self, idx: CellIndex) -> None:
        """Inner payload: uniform subsample of descendants, composed from the
        children's stored payloads with hypergeometric per-child allocation."""
        children = [c for c in idx.children() if c in self.records]
        n_desc = [self.records[c].descendant_count for c in children]
        total = int(sum(n_desc))
        k = min(self.budget, total)
        rng = _cell_rng(self.seed, idx)
        take = rng.multivariate_hypergeometric(n_desc, k)
        parts = []
        for child, m in zip(children, take):
            if m == 0:
                continue
            payload, _ = decode_cell_blob(
                (self.out / "cells" / child.blob_name()).read_bytes())
            sel = rng.choice(payload.shape[0], size=int(m), replace=False)
            sel.sort()
            parts.append(np.asarray(payload)[sel])
        merged = np.concatenate(parts) if parts else np.empty((0, 3), dtype="<f4")
        self._write_cell(idx, merged, FLAG_INNER, total)

    def compose_upper_levels(self) -> None:
        if not self.records:
            return
        top = min(idx.level for idx in self.records)
        for level in range(top, 0, -1):
            parents = sorted({idx.parent() for idx in self.records if idx.level == level})
            for parent in parents:
                if parent not in self.records:
                    self._compose_inner(parent)

    # -- manifest ----------------------------------------------------------

    def write_index_and_manifest(self, total: int) -> None:
        lines = []
        for idx in sorted(self.records):
            rec = self.records[idx]
            lines.append(f"{idx.level} {idx.i} {idx.j} {idx.k} "
                         f"{rec.descendant_count} {rec.payload_count} {rec.flags}")
        (self.out / "cells.idx").write_text("\n".join(lines) + "\n")
        rm = [float(x) for x in self.root_min]
        off = [float(x) for x in self.offset]
        manifest = [
            f"format: {MANIFEST_FORMAT}",
            f"root_min: {rm[0]!r} {rm[1]!r} {rm[2]!r}",
            f"root_size: {float(self.root_size)!r}",
            f"point_count: {total}",
            f"budget: {self.budget}",
            f"seed: {self.seed}",
            f"offset: {off[0]!r} {off[1]!r} {off[2]!r}",
            f"cell_count: {len(self.records)}",
        ]
        (self.out / "manifest.txt").write_text("\n".join(manifest) + "\n")


class Octree:
    """Read-only view over a built octree directory.

    Cell payloads are loaded on demand and kept in a bounded LRU cache that
    is safe to share across reader threads. ``cells_loaded`` counts blob
    reads (cache misses) so tests can assert locality.
    """

    def __init__(self, root_dir, cache_cells: int = 256) -> None:
        self.root_dir = Path(root_dir)
        self.manifest = self._read_manifest()
        self.records = self._read_index()
        self._cache: OrderedDict[CellIndex, np.ndarray] = OrderedDict()
        self._cache_cells = cache_cells
        self._lock = RLock()
        self.cells_loaded = 0
        self.touched: set[CellIndex] = set()

    def _read_manifest(self) -> OctreeManifest:
        kv = {}
        for line in (self.root_dir / "manifest.txt").read_text().splitlines():
            key, _, value = line.partition(":")
            kv[key.strip()] = value.strip()
        if kv.get("format") != MANIFEST_FORMAT:
            raise ValueError(f"unsupported octree format: {kv.get('format')}")
        return OctreeManifest(
            root_min=np.array([float(x) for x in kv["root_min"].split()]),
            root_size=float(kv["root_size"]),
            point_count=int(kv["point_count"]),
            budget=int(kv["budget"]),
            seed=int(kv["seed"]),
            offset=np.array([float(x) for x in kv["offset"].split()]),
            cell_count=int(kv["cell_count"]),
        )

    def _read_index(self) -> dict[CellIndex, CellRecord]:
        records = {}
        for line in (self.root_dir / "cells.idx").read_text().splitlines():
            parts = line.split()
            idx = CellIndex(int(parts[0]), int(parts[1]), int(parts[2]), int(parts[3]))
            records[idx] = CellRecord(int(parts[4]), int(parts[5]), int(parts[6]))
        return records

    # -- navigation --------------------------------------------------------

    @property
    def root(self) -> CellIndex:
        return CellIndex(0, 0, 0, 0)

    @property
    def max_level(self) -> int:
        return max(idx.level for idx in self.records)

    def exists(self, idx: CellIndex) -> bool:
        return idx in self.records

    def children_of(self, idx: CellIndex) -> list[CellIndex]:
        return [c for c in idx.children() if c in self.records]

    def parent_of(self, idx: CellIndex) -> CellIndex | None:
        if idx.level == 0:
            return None
        return idx.parent()

    def cell_neighbors(self, idx: CellIndex) -> list[CellIndex]:
        """Existing same-level lattice neighbors (up to 26)."""
        return [n for n in idx.lattice_neighbors() if n in self.records]

    def cell_bounds(self, idx: CellIndex) -> tuple[np.ndarray, float]:
        size = self.manifest.root_size / (1 << idx.level)
        cmin = self.manifest.root_min + np.array([idx.i, idx.j, idx.k], dtype=float) * size
        return cmin, size

    def cells_at_level(self, level: int) -> list[CellIndex]:
        return sorted(idx for idx in self.records if idx.level == level)

    def cell_for_point(self, p, level: int) -> CellIndex:
        """Index of the level cell containing an absolute-coordinate point."""
        rel = np.asarray(p, dtype=float) - self.manifest.offset
        dim = 1 << level
        size = self.manifest.root_size / dim
        ijk = np.floor((rel - self.manifest.root_min) / size).astype(int)
        ijk = np.clip(ijk, 0, dim - 1)
        return CellIndex(level, int(ijk[0]), int(ijk[1]), int(ijk[2]))

    # -- payload access -----------------------------------------------------

    def load_cell(self, idx: CellIndex) -> OctreeCell:
        if idx not in self.records:
            raise CellNotFoundError(idx)
        rec = self.records[idx]
        with self._lock:
            payload = self._cache.get(idx)
            if payload is not None:
                self._cache.move_to_end(idx)
            else:
                blob = (self.root_dir / "cells" / idx.blob_name()).read_bytes()
                payload, _ = decode_cell_blob(blob)
                self._cache[idx] = payload
                self.cells_loaded += 1
                self.touched.add(idx)
                while len(self._cache) > self._cache_cells:
                    self._cache.popitem(last=False)
        cmin, size = self.cell_bounds(idx)
        return OctreeCell(idx, cmin, size, payload, rec.is_leaf, rec.descendant_count)

    def payload_absolute(self, idx: CellIndex) -> np.ndarray:
        """Cell payload in absolute float64 coordinates."""
        cell = self.load_cell(idx)
        return cell.payload.astype(float) + self.manifest.offset

    def reset_io_stats(self) -> None:
        with self._lock:
            self.cells_loaded = 0
            self.touched = set()

    # -- queries -------------------------------------------------------------

    def _level_cover(self, level: int) -> list[CellIndex]:
        """Cells whose payload represents the cloud at ``level``: all cells at
        that level plus leaves above it covering regions the tree never split."""
        cover = []
        stack = [self.root]
        while stack:
            idx = stack.pop()
            rec = self.records[idx]
            if idx.level == level or rec.is_leaf:
                cover.append(idx)
            elif idx.level < level:
                stack.extend(self.children_of(idx))
        return cover

    def query_sphere_cells(self, center, radius: float, level: int
                           ) -> list[tuple[CellIndex, np.ndarray]]:
        """(cell, local point indices) pairs for payload points in a sphere."""
        if radius <= 0:
            raise ValueError("radius must be positive")
        c_rel = np.asarray(center, dtype=float) - self.manifest.offset
        hits = []
        stack = [self.root]
        while stack:
            idx = stack.pop()
            cmin, size = self.cell_bounds(idx)
            nearest = np.clip(c_rel, cmin, cmin + size)
            if np.dot(nearest - c_rel, nearest - c_rel) > radius * radius:
                continue
            rec = self.records[idx]
            if idx.level == level or rec.is_leaf or idx.level > level:
                cell = self.load_cell(idx)
                d2 = np.sum((cell.payload.astype(float) - c_rel) ** 2, axis=1)
                sel = np.flatnonzero(d2 <= radius * radius)
                if sel.size:
                    hits.append((idx, sel))
            else:
                stack.extend(self.children_of(idx))
        hits.sort(key=lambda h: h[0])
        return hits

    def query_sphere(self, center, radius: float, level: int) -> np.ndarray:
        """Absolute-coordinate points of level payloads inside a sphere."""
        parts = []
        for idx, sel in self.query_sphere_cells(center, radius, level):
            cell = self.load_cell(idx)
            parts.append(cell.payload[sel].astype(float) + self.manifest.offset)
        if not parts:
            return np.empty((0, 3))
        return np.concatenate(parts)
