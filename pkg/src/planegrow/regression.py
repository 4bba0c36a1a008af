"""Single-pass incremental plane regression.

The regression keeps four running sums (coordinate sums S, squared sums Sq,
point count c, cross-product sums D) relative to a reference point. Adding a
point costs constant time and memory; the point set itself is never retained.
A best-fit plane frame can be synthesized at any time from the covariance
matrix these sums encode.

Large absolute coordinates would make the squared sums lose precision, so a
regression is normally started at its first point (relative coordinate zero)
and rebased onto its centroid before synthesis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .eigen import eig_sym3
from .errors import DegenerateRegressionError, InsufficientPointsError

# lam1/lam0 below this marks the point set as collinear (rank deficient).
COLLINEAR_RATIO = 1e-12


def as_point(p) -> np.ndarray:
    q = np.asarray(p, dtype=float).reshape(3)
    if not np.all(np.isfinite(q)):
        raise ValueError(f"non-finite point: {p!r}")
    return q


@dataclass
class Plane:
    """Orthonormal plane frame with the covariance eigenvalues that made it.

    ``normal`` is the eigenvector of the smallest eigenvalue, ``tangent`` and
    ``bitangent`` belong to the two larger ones and span the plane. The
    eigenvalues are sorted descending; the last one is the mean squared
    error of the accumulated points along the normal direction.
    """

    origin: np.ndarray
    normal: np.ndarray
    tangent: np.ndarray
    bitangent: np.ndarray
    eigenvalues: np.ndarray
    rank_deficient: bool = False

    @property
    def variance(self) -> float:
        """Mean squared inlier error along the normal."""
        return float(self.eigenvalues[2])

    def distance(self, p) -> float:
        """Unsigned Euclidean distance from ``p`` to the plane."""
        q = np.asarray(p, dtype=float)
        return float(abs(np.dot(self.normal, q - self.origin)))

    def distances(self, pts: np.ndarray) -> np.ndarray:
        """Unsigned distances for an (N, 3) array of points."""
        return np.abs((np.asarray(pts, dtype=float) - self.origin) @ self.normal)

    def to_plane_coords(self, pts: np.ndarray) -> np.ndarray:
        """Project points into 2-D (tangent, bitangent) coordinates."""
        rel = np.atleast_2d(np.asarray(pts, dtype=float)) - self.origin
        return np.column_stack([rel @ self.tangent, rel @ self.bitangent])

    def from_plane_coords(self, uv: np.ndarray) -> np.ndarray:
        """Lift 2-D plane coordinates back to 3-D points on the plane."""
        uv = np.atleast_2d(np.asarray(uv, dtype=float))
        return self.origin + np.outer(uv[:, 0], self.tangent) + np.outer(uv[:, 1], self.bitangent)


class PlaneRegression:
    """Running sums for an incrementally updated plane fit.

    State is ``(S, Sq, c, D)`` relative to ``ref``. Start a regression from
    a seed point so the first relative coordinate is (0, 0, 0), which keeps
    the squared sums small regardless of absolute coordinates.
    """

    __slots__ = ("S", "Sq", "c", "D", "ref", "last_point")

    def __init__(self, ref) -> None:
        self.ref = as_point(ref)
        self.S = np.zeros(3)
        self.Sq = np.zeros(3)
        self.D = np.zeros(3)
        self.c = 0
        self.last_point = self.ref.copy()

    @classmethod
    def from_seed(cls, p0) -> "PlaneRegression":
        """Start a regression at ``p0``; the seed counts as the first point."""
        reg = cls(p0)
        reg.c = 1
        return reg

    def copy(self) -> "PlaneRegression":
        dup = PlaneRegression.__new__(PlaneRegression)
        dup.S = self.S.copy()
        dup.Sq = self.Sq.copy()
        dup.D = self.D.copy()
        dup.c = self.c
        dup.ref = self.ref.copy()
        dup.last_point = self.last_point.copy()
        return dup

    def add(self, p) -> None:
        """Add one point; constant time and memory."""
        q = as_point(p) - self.ref
        self.S += q
        self.Sq += q * q
        self.D += (q[1] * q[2], q[0] * q[2], q[0] * q[1])
        self.c += 1
        self.last_point = q + self.ref

    def add_many(self, pts) -> None:
        """Add an (N, 3) batch of points in one vectorized update."""
        arr = np.asarray(pts, dtype=float).reshape(-1, 3)
        if arr.shape[0] == 0:
            return
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite point in batch")
        q = arr - self.ref
        self.S += q.sum(axis=0)
        self.Sq += (q * q).sum(axis=0)
        self.D += np.array([q[:, 1] @ q[:, 2], q[:, 0] @ q[:, 2], q[:, 0] @ q[:, 1]])
        self.c += arr.shape[0]
        self.last_point = arr[-1].copy()

    @property
    def centroid(self) -> np.ndarray:
        """Absolute centroid of the accumulated points."""
        if self.c == 0:
            return self.ref.copy()
        return self.ref + self.S / self.c

    def covariance(self) -> np.ndarray:
        """3x3 sample covariance of the accumulated points (needs c >= 2)."""
        if self.c < 2:
            raise InsufficientPointsError(
                f"covariance needs at least 2 points, regression has {self.c}"
            )
        s, sq, d, c = self.S, self.Sq, self.D, self.c
        pb = s / c
        cxx = sq[0] - pb[0] * s[0]
        cyy = sq[1] - pb[1] * s[1]
        czz = sq[2] - pb[2] * s[2]
        cxy = d[2] - pb[0] * s[1]
        cxz = d[1] - pb[0] * s[2]
        cyz = d[0] - pb[1] * s[2]
        return np.array([
            [cxx, cxy, cxz],
            [cxy, cyy, cyz],
            [cxz, cyz, czz],
        ]) / (c - 1)

    def rebase(self, r) -> None:
        """Re-express the sums relative to a new reference point.

        Equivalent (up to floating point) to having accumulated every point
        relative to ``r`` from the start; used to pull the reference onto the
        centroid before synthesis so precision does not depend on absolute
        coordinates.
        """
        new_ref = as_point(r)
        d = self.ref - new_ref
        if not d.any():
            self.ref = new_ref
            return
        s = self.S.copy()
        c = self.c
        dx, dy, dz = d
        sx, sy, sz = s
        self.Sq += 2.0 * d * s + c * d * d
        # D stores (sum yz, sum xz, sum xy); the shift terms pair accordingly.
        self.D += np.array([
            dy * sz + dz * sy + c * dy * dz,
            dx * sz + dz * sx + c * dx * dz,
            dx * sy + dy * sx + c * dx * dy,
        ])
        self.S = s + c * d
        self.ref = new_ref

    def synthesize(self) -> Plane:
        """Best-fit plane frame via eigendecomposition of the covariance.

        Works on a rebased copy whose reference sits at the centroid, which
        keeps the covariance accurate even when the regression accumulated
        far from its reference; the regression itself is left untouched so
        snapshots taken mid-growth never perturb later results. The plane
        origin is the most recently added point.
        """
        if self.c < 3:
            raise InsufficientPointsError(
                f"plane synthesis needs at least 3 points, regression has {self.c}"
            )
        work = self.copy()
        work.rebase(work.centroid)
        cov = work.covariance()
        lam, vecs = eig_sym3(cov)
        floor = 1e-20 * max(1.0, float(work.ref @ work.ref))
        if not np.isfinite(lam[0]) or lam[0] <= floor:
            raise DegenerateRegressionError(
                "all accumulated points are coincident; covariance has rank 0"
            )
        rank_deficient = lam[1] / lam[0] < COLLINEAR_RATIO
        return Plane(
            origin=self.last_point.copy(),
            normal=vecs[:, 2].copy(),
            tangent=vecs[:, 0].copy(),
            bitangent=vecs[:, 1].copy(),
            eigenvalues=lam.copy(),
            rank_deficient=bool(rank_deficient),
        )

    def __repr__(self) -> str:
        return f"PlaneRegression(c={self.c}, ref={self.ref.tolist()})"
