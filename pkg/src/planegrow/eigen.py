"""Closed-form eigendecomposition of symmetric 3x3 matrices.

Eigenvalues come from the trigonometric solution of the characteristic
polynomial; eigenvectors from row cross products with an orthogonal
complement fallback for clustered eigenvalues. A single cyclic Jacobi
sweep refines the frame so residuals stay near machine precision even
for ill-separated spectra.
"""

from __future__ import annotations

import math

import numpy as np


def _orthogonal_complement(w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Builds {u, v} so that (u, v, w) is a right-handed orthonormal basis.
    if abs(w[0]) > abs(w[2]):
        inv = 1.0 / math.hypot(w[0], w[1])
        u = np.array([-w[1] * inv, w[0] * inv, 0.0])
    else:
        inv = 1.0 / math.hypot(w[1], w[2])
        u = np.array([0.0, -w[2] * inv, w[1] * inv])
    return u, np.cross(w, u)


def _eigvec_isolated(a: np.ndarray, lam: float) -> np.ndarray:
    """Eigenvector for the best-separated eigenvalue via row cross products."""
    m = a - lam * np.eye(3)
    crosses = np.array([
        np.cross(m[0], m[1]),
        np.cross(m[0], m[2]),
        np.cross(m[1], m[2]),
    ])
    norms = np.linalg.norm(crosses, axis=1)
    k = int(np.argmax(norms))
    if norms[k] == 0.0:
        # Repeated eigenvalue filling the whole space; any direction works.
        return np.array([1.0, 0.0, 0.0])
    return crosses[k] / norms[k]


def _eigvec_in_complement(a: np.ndarray, lam: float, w: np.ndarray) -> np.ndarray:
    """Eigenvector for ``lam`` restricted to the plane orthogonal to ``w``."""
    u, v = _orthogonal_complement(w)
    au = a @ u
    av = a @ v
    m00 = float(u @ au) - lam
    m01 = float(u @ av)
    m11 = float(v @ av) - lam
    if abs(m00) >= abs(m11):
        if max(abs(m00), abs(m01)) > 0.0:
            inv = 1.0 / math.hypot(m00, m01)
            return (m01 * inv) * u - (m00 * inv) * v
    else:
        if max(abs(m11), abs(m01)) > 0.0:
            inv = 1.0 / math.hypot(m11, m01)
            return (m11 * inv) * u - (m01 * inv) * v
    return u


def _jacobi_sweep(a: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    """One cyclic Jacobi sweep over B = V^T A V; refines V in place."""
    b = vecs.T @ a @ vecs
    for p, q in ((0, 1), (0, 2), (1, 2)):
        apq = b[p, q]
        if apq == 0.0:
            continue
        theta = 0.5 * math.atan2(2.0 * apq, b[q, q] - b[p, p])
        c, s = math.cos(theta), math.sin(theta)
        rot = np.eye(3)
        rot[p, p] = c
        rot[q, q] = c
        rot[p, q] = s
        rot[q, p] = -s
        b = rot.T @ b @ rot
        vecs[:] = vecs @ rot
    return np.diag(b).copy()


def eig_sym3(c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and eigenvectors of a symmetric 3x3 matrix.

    Returns ``(lam, vecs)`` where ``vecs[:, i]`` is the unit eigenvector for
    ``lam[i]``. The sign of each eigenvector is fixed so its largest-magnitude
    component is positive, which makes results reproducible across runs.
    """
    a = np.asarray(c, dtype=float)
    if a.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {a.shape}")
    a = 0.5 * (a + a.T)

    scale = float(np.max(np.abs(a)))
    if scale == 0.0:
        return np.zeros(3), np.eye(3)
    a = a / scale

    off = a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2
    if off == 0.0:
        order = np.argsort(np.diag(a))[::-1]
        lam = np.diag(a)[order] * scale
        vecs = np.eye(3)[:, order]
        _fix_signs(vecs)
        return lam, vecs

    q = float(np.trace(a)) / 3.0
    p2 = float(np.sum((np.diag(a) - q) ** 2)) + 2.0 * off
    p = math.sqrt(p2 / 6.0)
    b = (a - q * np.eye(3)) / p
    r = float(np.linalg.det(b)) / 2.0
    r = min(1.0, max(-1.0, r))
    phi = math.acos(r) / 3.0
    lam0 = q + 2.0 * p * math.cos(phi)
    lam2 = q + 2.0 * p * math.cos(phi + 2.0 * math.pi / 3.0)
    lam1 = 3.0 * q - lam0 - lam2

    vecs = np.empty((3, 3))
    if lam0 - lam1 >= lam1 - lam2:
        # lam0 is the best separated eigenvalue; anchor the frame on it.
        vecs[:, 0] = _eigvec_isolated(a, lam0)
        vecs[:, 1] = _eigvec_in_complement(a, lam1, vecs[:, 0])
        vecs[:, 2] = np.cross(vecs[:, 0], vecs[:, 1])
    else:
        vecs[:, 2] = _eigvec_isolated(a, lam2)
        vecs[:, 1] = _eigvec_in_complement(a, lam1, vecs[:, 2])
        vecs[:, 0] = np.cross(vecs[:, 1], vecs[:, 2])

    lam = _jacobi_sweep(a, vecs)
    order = np.argsort(lam)[::-1]
    lam = lam[order] * scale
    vecs = vecs[:, order]
    _fix_signs(vecs)
    return lam, vecs


def _fix_signs(vecs: np.ndarray) -> None:
    for k in range(3):
        j = int(np.argmax(np.abs(vecs[:, k])))
        if vecs[j, k] < 0.0:
            vecs[:, k] = -vecs[:, k]
