"""Omnidirectional range sensor feeding the occupancy map."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .worlds import World

GOLDEN = (1.0 + np.sqrt(5.0)) / 2.0
GOLDEN_ANGLE = 2.0 * np.pi * (1.0 - 1.0 / GOLDEN)


@lru_cache(maxsize=8)
def _directions(n: int) -> np.ndarray:
    i = np.arange(n, dtype=float)
    z = 1.0 - (2.0 * i + 1.0) / n
    theta = 2.0 * np.pi * i / GOLDEN
    r = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    d = np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)
    d.setflags(write=False)
    return d


def fibonacci_directions(n: int) -> np.ndarray:
    """n unit vectors spread evenly over the sphere (golden-angle spiral)."""
    if n <= 0:
        return np.zeros((0, 3))
    return _directions(n)


def sense(world: World, vmap, pose, sensor_radius: float, rays: int,
          phase: float = 0.0) -> None:
    """Cast one sensor frame from pose and fuse it into the map.

    Each ray ends at the first obstacle or arena-boundary intersection, or
    at sensor_radius when nothing is in range.  The frame is applied
    atomically so occupied returns win over free space within it.

    The pattern leaves voxel-sized gaps at range, so callers should spin it
    between frames: phase rotates all rays about the vertical axis, and
    advancing it by GOLDEN_ANGLE per frame interleaves successive frames so
    their union fills in quickly.
    """
    if rays <= 0:
        return
    pose = np.asarray(pose, dtype=float).reshape(3)
    dirs = fibonacci_directions(rays)
    if phase != 0.0:
        c, s = np.cos(phase), np.sin(phase)
        dirs = dirs @ np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
    t, hit = world.first_hit(pose, dirs, sensor_radius)
    endpoints = pose + dirs * t[:, None]
    vmap.apply_frame(pose, endpoints, hit)
