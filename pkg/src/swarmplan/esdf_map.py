"""Local Euclidean signed distance field over a moving window.

Each agent rebuilds a small voxel grid around itself every planning cycle by
direct evaluation against the cylinders in range (exact distances, no
wavefront propagation). Queries interpolate trilinearly and return the
analytic gradient of the interpolant. Space outside the window is treated as
free: out-of-bounds queries return (d_max, zero gradient) with a flag.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .scenario import Obstacle

DEFAULT_RESOLUTION = 0.1
DEFAULT_WINDOW = (6.0, 6.0, 2.0)
DEFAULT_DMAX = 5.0


def cylinder_distance(points: np.ndarray, obstacle: Obstacle) -> np.ndarray:
    """Exact Euclidean distance from points (…,3) to a solid vertical cylinder.

    Zero inside the cylinder (obstacles are forbidden volumes, the field is
    unsigned and truncated at the surface).
    """
    p = np.asarray(points, dtype=float)
    cx, cy = obstacle.center
    radial = np.hypot(p[..., 0] - cx, p[..., 1] - cy) - obstacle.radius
    below = -p[..., 2]
    above = p[..., 2] - obstacle.height
    dz = np.maximum(np.maximum(below, above), 0.0)
    return np.hypot(np.maximum(radial, 0.0), dz)


class EsdfQuery(NamedTuple):
    distance: np.ndarray
    gradient: np.ndarray
    inside: np.ndarray  # False where the query fell outside the window


@dataclass
class EsdfGrid:
    """Dense truncated distance field on a voxel grid.

    ``distances[i, j, k]`` is the clamped distance at the voxel center
    ``origin + (i+0.5, j+0.5, k+0.5) * resolution``.
    """

    origin: np.ndarray
    resolution: float
    dims: tuple[int, int, int]
    distances: np.ndarray
    d_max: float
    window_extent: tuple[float, float, float]

    def voxel_center(self, idx: Sequence[int]) -> np.ndarray:
        return self.origin + (np.asarray(idx, dtype=float) + 0.5) * self.resolution

    def query(self, p: Sequence[float]) -> tuple[float, np.ndarray, bool]:
        """Distance and gradient at a single point."""
        d, g, ok = query_many(self, np.asarray(p, dtype=float)[None, :])
        return float(d[0]), g[0], bool(ok[0])


def build_local_esdf(
    obstacles: Sequence[Obstacle],
    agent_position: Sequence[float],
    window_extent: float | Sequence[float] = DEFAULT_WINDOW,
    resolution: float = DEFAULT_RESOLUTION,
    d_max: float = DEFAULT_DMAX,
) -> EsdfGrid:
    """Build the local window grid centered on the agent.

    Obstacles that cannot influence any voxel (farther than d_max from the
    window) are skipped. ``window_extent`` is the half-extent per axis; a
    scalar applies to all three axes.
    """
    if resolution <= 0:
        raise ValueError(f"resolution must be > 0, got {resolution}")
    ext = np.broadcast_to(np.asarray(window_extent, dtype=float), (3,)).copy()
    if np.any(ext <= 0):
        raise ValueError(f"window_extent must be > 0, got {window_extent}")
    center = np.asarray(agent_position, dtype=float)
    dims = np.maximum(np.ceil(2.0 * ext / resolution).astype(int), 2)
    origin = center - dims * resolution / 2.0

    nx, ny, nz = (int(d) for d in dims)
    xs = origin[0] + (np.arange(nx) + 0.5) * resolution
    ys = origin[1] + (np.arange(ny) + 0.5) * resolution
    zs = origin[2] + (np.arange(nz) + 0.5) * resolution

    field2d = None  # shared x-y field for cylinders spanning the full z window
    field3d = None
    lo = origin
    hi = origin + dims * resolution
    for obs in obstacles:
        cx, cy = obs.center
        # Closest approach of the window box to the cylinder axis, minus radius.
        gap_x = max(lo[0] - cx, cx - hi[0], 0.0)
        gap_y = max(lo[1] - cy, cy - hi[1], 0.0)
        gap_z = max(lo[2] - obs.height, -hi[2], 0.0)
        if np.hypot(np.hypot(gap_x, gap_y), gap_z) - obs.radius > d_max:
            continue
        radial = np.hypot(xs[:, None] - cx, ys[None, :] - cy) - obs.radius
        radial = np.maximum(radial, 0.0)
        if obs.height >= hi[2] and lo[2] >= 0.0:
            # Cylinder spans the whole window vertically: distance is z-free.
            field2d = radial if field2d is None else np.minimum(field2d, radial)
        else:
            below = -zs
            above = zs - obs.height
            dz = np.maximum(np.maximum(below, above), 0.0)
            d = np.hypot(radial[:, :, None], dz[None, None, :])
            field3d = d if field3d is None else np.minimum(field3d, d)

    if field2d is None and field3d is None:
        values = np.full((nx, ny, nz), d_max, dtype=float)
    elif field3d is None:
        values = np.broadcast_to(field2d[:, :, None], (nx, ny, nz)).copy()
    else:
        if field2d is not None:
            field3d = np.minimum(field3d, field2d[:, :, None])
        values = field3d
    np.clip(values, 0.0, d_max, out=values)

    return EsdfGrid(
        origin=origin,
        resolution=resolution,
        dims=(nx, ny, nz),
        distances=values,
        d_max=d_max,
        window_extent=tuple(float(e) for e in ext),
    )


def query_many(grid: EsdfGrid, points: np.ndarray) -> EsdfQuery:
    """Trilinear distance and analytic interpolant gradient for (n,3) points.

    Points outside the interpolable interior (one half-voxel margin inside
    the grid) get (d_max, zero gradient) and inside=False.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    res = grid.resolution
    u = (p - grid.origin) / res - 0.5
    dims = np.asarray(grid.dims)
    base = np.floor(u).astype(int)
    inside = np.all((base >= 0) & (base <= dims - 2), axis=1)

    n = p.shape[0]
    dist = np.full(n, grid.d_max, dtype=float)
    grad = np.zeros((n, 3), dtype=float)
    if not np.any(inside):
        return EsdfQuery(dist, grad, inside)

    b = base[inside]
    f = u[inside] - b
    fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]
    D = grid.distances
    i, j, k = b[:, 0], b[:, 1], b[:, 2]

    c000 = D[i, j, k]
    c100 = D[i + 1, j, k]
    c010 = D[i, j + 1, k]
    c110 = D[i + 1, j + 1, k]
    c001 = D[i, j, k + 1]
    c101 = D[i + 1, j, k + 1]
    c011 = D[i, j + 1, k + 1]
    c111 = D[i + 1, j + 1, k + 1]

    # Collapse x, then y, then z.
    c00 = c000 + (c100 - c000) * fx
    c10 = c010 + (c110 - c010) * fx
    c01 = c001 + (c101 - c001) * fx
    c11 = c011 + (c111 - c011) * fx
    c0 = c00 + (c10 - c00) * fy
    c1 = c01 + (c11 - c01) * fy
    dist[inside] = c0 + (c1 - c0) * fz

    # Analytic gradient of the trilinear interpolant.
    dx00 = c100 - c000
    dx10 = c110 - c010
    dx01 = c101 - c001
    dx11 = c111 - c011
    gx = ((dx00 * (1 - fy) + dx10 * fy) * (1 - fz) + (dx01 * (1 - fy) + dx11 * fy) * fz) / res
    gy = ((c10 - c00) * (1 - fz) + (c11 - c01) * fz) / res
    gz = (c1 - c0) / res
    grad[inside, 0] = gx
    grad[inside, 1] = gy
    grad[inside, 2] = gz
    return EsdfQuery(dist, grad, inside)


def dump_slice_csv(grid: EsdfGrid, z: float, path: str) -> None:
    """Debug dump of one horizontal slice as x,y,d rows."""
    k = int(round((z - grid.origin[2]) / grid.resolution - 0.5))
    k = min(max(k, 0), grid.dims[2] - 1)
    with open(path, "w", encoding="utf-8") as f:
        f.write("x,y,d\n")
        for i in range(grid.dims[0]):
            for j in range(grid.dims[1]):
                c = grid.voxel_center((i, j, k))
                f.write(f"{c[0]!r},{c[1]!r},{grid.distances[i, j, k]!r}\n")
