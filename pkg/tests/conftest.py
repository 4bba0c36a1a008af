import numpy as np
import pytest


def jittered_grid(x0, x1, y0, y1, spacing, rng, jitter=0.25):
    """Jittered grid sampling of an axis-aligned rectangle in 2D."""
    xs = np.arange(x0 + spacing / 2, x1, spacing)
    ys = np.arange(y0 + spacing / 2, y1, spacing)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    if jitter:
        pts = pts + rng.uniform(-jitter * spacing, jitter * spacing, size=pts.shape)
        pts[:, 0] = np.clip(pts[:, 0], x0, x1)
        pts[:, 1] = np.clip(pts[:, 1], y0, y1)
    return pts


def plane_patch(extent=1.0, spacing=0.01, noise=0.0, seed=0, z=0.0):
    """Points on the z=const plane over [0, extent]^2, optional normal noise."""
    rng = np.random.default_rng(seed)
    uv = jittered_grid(0, extent, 0, extent, spacing, rng)
    zs = np.full(len(uv), float(z))
    if noise:
        zs = zs + rng.normal(0, noise, size=len(uv))
    return np.column_stack([uv, zs])


def l_shape(extent=1.0, spacing=0.01, noise=0.0, seed=0):
    """Two perpendicular half-planes meeting along the y axis."""
    rng = np.random.default_rng(seed)
    uv_a = jittered_grid(0, extent, 0, extent, spacing, rng)
    a = np.column_stack([uv_a[:, 0], uv_a[:, 1], np.zeros(len(uv_a))])
    uv_b = jittered_grid(0, extent, 0, extent, spacing, rng)
    b = np.column_stack([np.zeros(len(uv_b)), uv_b[:, 1], uv_b[:, 0]])
    pts = np.vstack([a, b])
    if noise:
        pts = pts + rng.normal(0, noise, size=pts.shape)
    return pts


def corner_cloud(extent=1.0, spacing=0.01, noise=0.0, seed=0):
    """Three mutually orthogonal quarter-planes meeting at the origin."""
    rng = np.random.default_rng(seed)
    planes = []
    for axis in range(3):
        uv = jittered_grid(0, extent, 0, extent, spacing, rng)
        pts = np.zeros((len(uv), 3))
        other = [a for a in range(3) if a != axis]
        pts[:, other[0]] = uv[:, 0]
        pts[:, other[1]] = uv[:, 1]
        planes.append(pts)
    pts = np.vstack(planes)
    if noise:
        pts = pts + rng.normal(0, noise, size=pts.shape)
    return pts


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
