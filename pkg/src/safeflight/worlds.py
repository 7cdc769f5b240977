"""Analytic test worlds: procedural generation, file I/O, exact raycasting.

A world is a closed arena: rays that reach the extent boundary report a hit
there, so floors, ceilings and outer walls enter the map as real obstacles
and the vehicle can never plan its way outside.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class World:
    """Ground truth the simulator flies against.

    extent is a (3, 2) array of [min, max] per axis.  Boxes are (n, 3, 2)
    axis-aligned blocks in the same layout, cylinders are (n, 5) rows of
    (cx, cy, radius, z0, z1) standing parallel to the z axis.  Obstacles may
    overlap each other and the boundary; only their union matters.
    """

    extent: np.ndarray
    boxes: np.ndarray = field(default_factory=lambda: np.zeros((0, 3, 2)))
    cylinders: np.ndarray = field(default_factory=lambda: np.zeros((0, 5)))
    start: np.ndarray = field(default_factory=lambda: np.zeros(3))
    goal: np.ndarray = field(default_factory=lambda: np.zeros(3))
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "extent",
                           np.asarray(self.extent, dtype=float).reshape(3, 2))
        object.__setattr__(self, "boxes",
                           np.asarray(self.boxes, dtype=float).reshape(-1, 3, 2))
        object.__setattr__(self, "cylinders",
                           np.asarray(self.cylinders, dtype=float).reshape(-1, 5))
        object.__setattr__(self, "start",
                           np.asarray(self.start, dtype=float).reshape(3))
        object.__setattr__(self, "goal",
                           np.asarray(self.goal, dtype=float).reshape(3))
        if np.any(self.extent[:, 1] <= self.extent[:, 0]):
            raise ValueError("extent must have positive size on every axis")

    @property
    def center(self) -> np.ndarray:
        return self.extent.mean(axis=1)

    @property
    def size(self) -> np.ndarray:
        return self.extent[:, 1] - self.extent[:, 0]

    def contains(self, p) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= self.extent[:, 0])
                    and np.all(p <= self.extent[:, 1]))

    # -- ground truth queries ----------------------------------------------

    def occupied(self, p, margin: float = 0.0) -> bool:
        """True when p is inside any obstacle or outside the arena."""
        p = np.asarray(p, dtype=float).reshape(3)
        if np.any(p < self.extent[:, 0] - 1e-12) or \
                np.any(p > self.extent[:, 1] + 1e-12):
            return True
        for box in self.boxes:
            if np.all(p >= box[:, 0] - margin) and np.all(p <= box[:, 1] + margin):
                return True
        if len(self.cylinders):
            c = self.cylinders
            d2 = (p[0] - c[:, 0]) ** 2 + (p[1] - c[:, 1]) ** 2
            inside = (d2 <= (c[:, 2] + margin) ** 2) \
                & (p[2] >= c[:, 3] - margin) & (p[2] <= c[:, 4] + margin)
            if np.any(inside):
                return True
        return False

    def first_hit(self, origin, dirs, max_range: float):
        """First obstacle or boundary intersection along each unit ray.

        Returns (t, hit): distances clipped to max_range, and a boolean per
        ray that is True when something solid sits within range.  The origin
        must be inside the arena.
        """
        o = np.asarray(origin, dtype=float).reshape(3)
        d = np.asarray(dirs, dtype=float).reshape(-1, 3)
        n = d.shape[0]
        best = np.full(n, np.inf)

        with np.errstate(divide="ignore", invalid="ignore"):
            # arena shell: the ray's exit from the extent box is a hit
            t1 = (self.extent[:, 0] - o) / d
            t2 = (self.extent[:, 1] - o) / d
            exit_t = np.nanmin(np.where(np.isnan(np.maximum(t1, t2)),
                                        np.inf, np.maximum(t1, t2)), axis=1)
            best = np.minimum(best, np.where(exit_t > 0, exit_t, np.inf))

            for box in self.boxes:
                t1 = (box[:, 0] - o) / d
                t2 = (box[:, 1] - o) / d
                lo = np.minimum(t1, t2)
                hi = np.maximum(t1, t2)
                lo = np.where(np.isnan(lo), -np.inf, lo)
                hi = np.where(np.isnan(hi), np.inf, hi)
                tmin = lo.max(axis=1)
                tmax = hi.min(axis=1)
                # degenerate slab (d == 0 with o outside the slab) never hits
                off = (d == 0) & ((o < box[:, 0]) | (o > box[:, 1]))
                valid = (tmax >= np.maximum(tmin, 0.0)) & ~off.any(axis=1)
                entry = np.where(tmin > 0.0, tmin, 0.0)
                best = np.minimum(best, np.where(valid, entry, np.inf))

            for cx, cy, r, z0, z1 in self.cylinders:
                px, py = o[0] - cx, o[1] - cy
                a = d[:, 0] ** 2 + d[:, 1] ** 2
                b = 2.0 * (px * d[:, 0] + py * d[:, 1])
                c0 = px * px + py * py - r * r
                disc = b * b - 4.0 * a * c0
                sq = np.sqrt(np.maximum(disc, 0.0))
                for sgn in (-1.0, 1.0):
                    t = (-b + sgn * sq) / (2.0 * a)
                    z = o[2] + t * d[:, 2]
                    ok = (disc >= 0) & (a > 0) & (t >= 0) & (z >= z0) & (z <= z1)
                    best = np.minimum(best, np.where(ok, t, np.inf))
                for zc in (z0, z1):
                    t = (zc - o[2]) / d[:, 2]
                    x = px + t * d[:, 0]
                    y = py + t * d[:, 1]
                    ok = (t >= 0) & (x * x + y * y <= r * r)
                    best = np.minimum(best, np.where(ok, t, np.inf))

        hit = best <= max_range
        return np.where(hit, best, max_range), hit

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "extent": self.extent.tolist(),
            "boxes": self.boxes.tolist(),
            "cylinders": self.cylinders.tolist(),
            "start": self.start.tolist(),
            "goal": self.goal.tolist(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "World":
        return cls(extent=data["extent"],
                   boxes=data.get("boxes", []),
                   cylinders=data.get("cylinders", []),
                   start=data.get("start", (0.0, 0.0, 0.0)),
                   goal=data.get("goal", (0.0, 0.0, 0.0)),
                   seed=data.get("seed"))


def save_world(world: World, path) -> None:
    with open(path, "w") as fh:
        json.dump(world.to_dict(), fh, indent=2)
        fh.write("\n")


def load_world(path) -> World:
    with open(path) as fh:
        return World.from_dict(json.load(fh))


def generate_forest(extent: float = 20.0, density: float = 0.1,
                    seed: int = 0, height: float = 3.0,
                    clearance: float = 1.5) -> World:
    """Random cylinder forest in a square arena of the given side length.

    Places floor(density * extent^2) full-height cylinders with radii drawn
    uniformly from [0.2, 0.5] m, uniformly over the arena, rejecting draws
    that intrude on the clearance disks around start and goal.  The same
    seed always yields the identical world.
    """
    if density < 0:
        raise ValueError("density cannot be negative")
    half = extent / 2.0
    start = np.array([-half + clearance, 0.0, 1.0])
    goal = np.array([half - clearance, 0.0, 1.0])
    count = int(np.floor(density * extent * extent))

    rng = np.random.default_rng(seed)
    rows = []
    while len(rows) < count:
        x = rng.uniform(-half, half)
        y = rng.uniform(-half, half)
        r = rng.uniform(0.2, 0.5)
        d_start = np.hypot(x - start[0], y - start[1])
        d_goal = np.hypot(x - goal[0], y - goal[1])
        if d_start > clearance + r and d_goal > clearance + r:
            rows.append((x, y, r, 0.0, height))

    return World(extent=[[-half, half], [-half, half], [0.0, height]],
                 cylinders=np.array(rows, dtype=float).reshape(-1, 5),
                 start=start, goal=goal, seed=seed)


def generate_bugtrap(opening_width: float = 2.0, trap_size: float = 8.0,
                     extent: float = 20.0, height: float = 3.0,
                     wall_thickness: float = 0.3,
                     clearance: float = 1.5) -> World:
    """C-shaped enclosure whose mouth faces the start.

    The straight start-goal line passes through the opening and dead-ends on
    the far wall, so a greedy flight enters the trap and must back out and
    go around.  Walls reach the ceiling; openings wider than a wall simply
    leave that side fully open.
    """
    half = extent / 2.0
    s = trap_size / 2.0
    t = wall_thickness
    w = opening_width / 2.0
    walls = [
        [[s - t, s], [-s, s], [0.0, height]],       # back, blocks the line
        [[-s, s], [s - t, s], [0.0, height]],       # sides
        [[-s, s], [-s, -s + t], [0.0, height]],
    ]
    # mouth wall, split around the centered opening
    for y0, y1 in ((w, s), (-s, -w)):
        if y1 - y0 > 1e-9:
            walls.append([[-s, -s + t], [y0, y1], [0.0, height]])

    return World(extent=[[-half, half], [-half, half], [0.0, height]],
                 boxes=np.array(walls, dtype=float),
                 start=np.array([-half + clearance, 0.0, 1.0]),
                 goal=np.array([half - clearance, 0.0, 1.0]),
                 seed=0)
