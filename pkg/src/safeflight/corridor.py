"""Convex safe-flight corridors around polyline segments.

Each path segment gets one convex polyhedron: a segment-aligned bounding box
cut down by separating planes, one per nearby voxel whose state falls in the
excluded set.  A plane sits normal to the shortest line from the segment and
is pulled back from the voxel center by the classification radius (less
where that would cut the segment itself), so positions admitted by the
polyhedron also classify as free at that radius.  Cells are processed
nearest first and only generate a plane when no earlier plane already keeps
the whole classification ball around them out, which keeps polyhedra small.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PLANE_MARGIN = 1e-6


class CorridorError(Exception):
    """A segment cannot be given a corridor (obstacle on the segment)."""


@dataclass(frozen=True)
class Polyhedron:
    """Intersection of half-spaces {x : normals @ x <= offsets}."""

    normals: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.normals, dtype=float).reshape(-1, 3)
        b = np.asarray(self.offsets, dtype=float).reshape(-1)
        if n.shape[0] != b.shape[0]:
            raise ValueError("normals and offsets disagree in length")
        lens = np.linalg.norm(n, axis=1)
        if np.any(lens < 1e-12):
            raise ValueError("zero-length plane normal")
        object.__setattr__(self, "normals", n / lens[:, None])
        object.__setattr__(self, "offsets", b / lens)

    def __len__(self) -> int:
        return self.normals.shape[0]

    def contains(self, points, tol: float = 0.0):
        """Boolean per point (or scalar for a single point)."""
        p = np.asarray(points, dtype=float)
        single = p.ndim == 1
        inside = np.all(
            p.reshape(-1, 3) @ self.normals.T <= self.offsets + tol, axis=1)
        return bool(inside[0]) if single else inside

    def margin(self, point) -> float:
        """Smallest slack over all planes; positive strictly inside."""
        p = np.asarray(point, dtype=float).reshape(3)
        return float(np.min(self.offsets - self.normals @ p))

    def to_text(self) -> str:
        rows = [f"  [{n[0]: .4f} {n[1]: .4f} {n[2]: .4f}] . x <= {b: .4f}"
                for n, b in zip(self.normals, self.offsets)]
        return f"Polyhedron({len(self)} planes)\n" + "\n".join(rows)


@dataclass(frozen=True)
class Corridor:
    """One polyhedron per path segment, in order."""

    polyhedra: tuple

    def __len__(self) -> int:
        return len(self.polyhedra)

    def __getitem__(self, i) -> Polyhedron:
        return self.polyhedra[i]

    def __iter__(self):
        return iter(self.polyhedra)

    def contains(self, point, tol: float = 0.0) -> bool:
        return any(p.contains(point, tol) for p in self.polyhedra)

    def to_text(self) -> str:
        return "\n".join(f"segment {i}:\n{p.to_text()}"
                         for i, p in enumerate(self.polyhedra))


def _segment_frame(a, b):
    """Right-handed frame with e1 along the segment; e3 as upright as the
    segment allows."""
    u = b - a
    L = np.linalg.norm(u)
    if L < 1e-12:
        raise ValueError("degenerate segment")
    e1 = u / L
    ref = np.array([0.0, 0.0, 1.0])
    if abs(float(e1 @ ref)) > 0.9:
        ref = np.array([1.0, 0.0, 0.0])
    e2 = np.cross(e1, ref)
    e2 /= np.linalg.norm(e2)
    e3 = np.cross(e1, e2)
    return e1, e2, e3


def segment_box(a, b, halfwidths) -> Polyhedron:
    """Bounding box aligned to segment ab.

    halfwidths = (along, lateral, vertical): the box runs from a to b plus
    `along` beyond each end, `lateral` to each side, `vertical` up and down.
    """
    a = np.asarray(a, dtype=float).reshape(3)
    b = np.asarray(b, dtype=float).reshape(3)
    h1, h2, h3 = (float(h) for h in halfwidths)
    if min(h1, h2, h3) <= 0:
        raise ValueError("halfwidths must be positive")
    e1, e2, e3 = _segment_frame(a, b)
    normals = np.array([e1, -e1, e2, -e2, e3, -e3])
    offsets = np.array([
        float(e1 @ b) + h1, -float(e1 @ a) + h1,
        float(e2 @ a) + h2, -float(e2 @ a) + h2,
        float(e3 @ a) + h3, -float(e3 @ a) + h3,
    ])
    return Polyhedron(normals, offsets)


def _closest_on_segment(a, b, q):
    u = b - a
    L2 = float(u @ u)
    t = 0.0 if L2 <= 0 else min(max(float((q - a) @ u) / L2, 0.0), 1.0)
    return a + t * u


def _lattice_in_box(vmap, a, b, box: Polyhedron, halfwidths, pad: float):
    """Voxel-lattice centers inside the box grown by pad, including virtual
    cells beyond the map bounds (their classification is Unknown)."""
    res = vmap.resolution
    e1, e2, e3 = _segment_frame(a, b)
    mid = (a + b) / 2
    half = np.array([np.linalg.norm(b - a) / 2 + halfwidths[0],
                     halfwidths[1], halfwidths[2]]) + pad
    signs = np.array(np.meshgrid([-1, 1], [-1, 1], [-1, 1])).reshape(3, -1).T
    corners = mid + (signs * half) @ np.stack([e1, e2, e3])
    lo = corners.min(axis=0)
    hi = corners.max(axis=0)
    k_lo = np.floor((lo - vmap.lower) / res - 0.5).astype(np.int64)
    k_hi = np.ceil((hi - vmap.lower) / res - 0.5).astype(np.int64)
    ks = np.stack(np.meshgrid(*(np.arange(k_lo[i], k_hi[i] + 1)
                                for i in range(3)), indexing="ij"), axis=-1)
    centers = vmap.lower + (ks.reshape(-1, 3) + 0.5) * res
    return centers[box.contains(centers, tol=pad)]


def segment_polyhedron(vmap, a, b, excluded, radius,
                       halfwidths=(2.0, 2.0, 1.0)) -> Polyhedron:
    """Convex region around segment ab clear of excluded voxels.

    Every voxel center in the padded bounding box whose state is in
    `excluded` ends up outside the polyhedron together with the `radius`
    ball around it, wherever that ball does not reach the segment; the
    segment itself is always inside.  Raises CorridorError if an excluded
    center lies on the segment.
    """
    a = np.asarray(a, dtype=float).reshape(3)
    b = np.asarray(b, dtype=float).reshape(3)
    box = segment_box(a, b, halfwidths)
    pad = np.sqrt(3.0) / 2.0 * vmap.resolution + radius
    centers = _lattice_in_box(vmap, a, b, box, halfwidths, pad)
    if centers.shape[0]:
        states = vmap.classify_points(centers, 0.0)
        centers = centers[np.isin(states, list(excluded))]
    if not centers.shape[0]:
        return box
    closest = np.array([_closest_on_segment(a, b, q) for q in centers])
    dists = np.linalg.norm(centers - closest, axis=1)
    seg_order = np.lexsort(
        (centers[:, 2], centers[:, 1], centers[:, 0], dists))
    normals = [r for r in box.normals]
    offsets = list(box.offsets)
    for i in seg_order:
        q = centers[i]
        # skip only cells whose whole classification ball is already out
        if any(float(n @ q) > off + radius
               for n, off in zip(normals[6:], offsets[6:])):
            continue
        d = dists[i]
        if d <= PLANE_MARGIN:
            raise CorridorError(f"excluded voxel center {q} on segment")
        n = (q - closest[i]) / d
        offsets.append(float(n @ q) - min(radius, d - PLANE_MARGIN))
        normals.append(n)
    return Polyhedron(np.array(normals), np.array(offsets))


def decompose(vmap, vertices, excluded, radius,
              halfwidths=(2.0, 2.0, 1.0)) -> Corridor:
    """Corridor for a polyline: one polyhedron per segment."""
    v = np.asarray(vertices, dtype=float).reshape(-1, 3)
    if v.shape[0] < 2:
        raise ValueError("need at least two vertices")
    polys = tuple(
        segment_polyhedron(vmap, v[i], v[i + 1], excluded, radius, halfwidths)
        for i in range(v.shape[0] - 1))
    return Corridor(polys)
