"""Sliding-window occupancy voxel map.

Cells hold one of three states: Unknown (never observed), Free (a sensor ray
passed through) or Occupied (a ray ended on it).  The map is a fixed-size
grid of `dims` cells at `resolution` metres that recenters on the vehicle;
cells sliding out of the window are dropped, cells sliding in start Unknown.

Occupied is sticky: a cell never reverts to Free.  Worlds here are static, so
conservative fusion only ever strengthens the safety argument, and it
resolves same-frame ties between rays as Occupied-wins.

Classification is point-based: a query point is Occupied if any occupied cell
center lies within inflation_radius of it, else Unknown if any unknown cell
center does (or the point leaves the map), else Free.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numba import njit

UNKNOWN = 0
FREE = 1
OCCUPIED = 2

_STATE_CHARS = {UNKNOWN: "?", FREE: ".", OCCUPIED: "#"}

# half of a cell's body diagonal, in units of resolution
HALF_DIAG = float(np.sqrt(3.0) / 2.0)


class VoxelState:
    """Cell states; plain ints so numba kernels can use them directly."""

    UNKNOWN = UNKNOWN
    FREE = FREE
    OCCUPIED = OCCUPIED


@lru_cache(maxsize=64)
def _ball_offsets(radius_cells: float) -> np.ndarray:
    """Integer offsets o with |o| <= radius_cells, sorted by norm then lex."""
    r = int(np.floor(radius_cells + 1e-12))
    rng = np.arange(-r, r + 1)
    ox, oy, oz = np.meshgrid(rng, rng, rng, indexing="ij")
    offs = np.stack([ox.ravel(), oy.ravel(), oz.ravel()], axis=1)
    norms = np.sqrt((offs.astype(float) ** 2).sum(axis=1))
    keep = norms <= radius_cells + 1e-12
    offs, norms = offs[keep], norms[keep]
    order = np.lexsort((offs[:, 2], offs[:, 1], offs[:, 0], norms))
    return np.ascontiguousarray(offs[order], dtype=np.int64)


@njit(cache=True)
def _ray_cells(lower, res, dims, o, e, out):
    """Exact voxel traversal of segment o->e.  Returns (count, reached).

    out rows get the visited in-bounds cells in order.  reached is True when
    the endpoint's cell was reached inside the bounds.  Corner-exact boundary
    ties step multiple axes at once, matching floor() point sampling.
    """
    ix = int(np.floor((o[0] - lower[0]) / res))
    iy = int(np.floor((o[1] - lower[1]) / res))
    iz = int(np.floor((o[2] - lower[2]) / res))
    tx = int(np.floor((e[0] - lower[0]) / res))
    ty = int(np.floor((e[1] - lower[1]) / res))
    tz = int(np.floor((e[2] - lower[2]) / res))

    dx = e[0] - o[0]
    dy = e[1] - o[1]
    dz = e[2] - o[2]

    sx = 1 if dx > 0 else -1
    sy = 1 if dy > 0 else -1
    sz = 1 if dz > 0 else -1

    big = 1e30
    # parametric distance to the next boundary crossing per axis
    if dx != 0.0:
        nbx = lower[0] + (ix + (1 if sx > 0 else 0)) * res
        tmx = (nbx - o[0]) / dx
        tdx = res / abs(dx)
    else:
        tmx, tdx = big, big
    if dy != 0.0:
        nby = lower[1] + (iy + (1 if sy > 0 else 0)) * res
        tmy = (nby - o[1]) / dy
        tdy = res / abs(dy)
    else:
        tmy, tdy = big, big
    if dz != 0.0:
        nbz = lower[2] + (iz + (1 if sz > 0 else 0)) * res
        tmz = (nbz - o[2]) / dz
        tdz = res / abs(dz)
    else:
        tmz, tdz = big, big

    n = 0
    reached = False
    max_steps = abs(tx - ix) + abs(ty - iy) + abs(tz - iz) + 3
    for _ in range(max_steps):
        inb = 0 <= ix < dims[0] and 0 <= iy < dims[1] and 0 <= iz < dims[2]
        if inb:
            out[n, 0] = ix
            out[n, 1] = iy
            out[n, 2] = iz
            n += 1
        if ix == tx and iy == ty and iz == tz:
            reached = inb
            break
        tmin = min(tmx, tmy, tmz)
        if tmin > 1.0 + 1e-12:
            break
        eps = 1e-12 * (1.0 + abs(tmin))
        if tmx <= tmin + eps:
            ix += sx
            tmx += tdx
        if tmy <= tmin + eps:
            iy += sy
            tmy += tdy
        if tmz <= tmin + eps:
            iz += sz
            tmz += tdz
    return n, reached


@njit(cache=True)
def _apply_rays(cells, lower, res, dims, origin, endpoints, hits, scratch):
    """One sensor frame: mark Free along every ray, then Occupied endpoints."""
    nrays = endpoints.shape[0]
    occ_end = np.empty((nrays, 3), dtype=np.int64)
    occ_n = 0
    for r in range(nrays):
        n, reached = _ray_cells(lower, res, dims, origin, endpoints[r], scratch)
        last = n - 1 if reached else n
        for i in range(last):
            if cells[scratch[i, 0], scratch[i, 1], scratch[i, 2]] != OCCUPIED:
                cells[scratch[i, 0], scratch[i, 1], scratch[i, 2]] = FREE
        if reached:
            if hits[r]:
                occ_end[occ_n] = scratch[n - 1]
                occ_n += 1
            else:
                c = scratch[n - 1]
                if cells[c[0], c[1], c[2]] != OCCUPIED:
                    cells[c[0], c[1], c[2]] = FREE
    for i in range(occ_n):
        cells[occ_end[i, 0], occ_end[i, 1], occ_end[i, 2]] = OCCUPIED


@njit(cache=True)
def _classify_point(cells, lower, res, dims, p, radius, offsets):
    """Point classification with exact center-distance checks.

    The containing cell always participates, so radius zero degenerates to
    a plain cell lookup and a point outside the map is always Unknown.
    """
    cx = int(np.floor((p[0] - lower[0]) / res))
    cy = int(np.floor((p[1] - lower[1]) / res))
    cz = int(np.floor((p[2] - lower[2]) / res))
    r2 = radius * radius
    any_unknown = False
    for k in range(offsets.shape[0]):
        ix = cx + offsets[k, 0]
        iy = cy + offsets[k, 1]
        iz = cz + offsets[k, 2]
        own = ix == cx and iy == cy and iz == cz
        if not own:
            wx = lower[0] + (ix + 0.5) * res - p[0]
            wy = lower[1] + (iy + 0.5) * res - p[1]
            wz = lower[2] + (iz + 0.5) * res - p[2]
            d2 = wx * wx + wy * wy + wz * wz
            if d2 > r2 + 1e-12:
                continue
        if 0 <= ix < dims[0] and 0 <= iy < dims[1] and 0 <= iz < dims[2]:
            s = cells[ix, iy, iz]
            if s == OCCUPIED:
                return OCCUPIED
            if s == UNKNOWN:
                any_unknown = True
        else:
            any_unknown = True
    if any_unknown:
        return UNKNOWN
    return FREE


@njit(cache=True)
def _classify_many(cells, lower, res, dims, pts, radius, offsets, out):
    for i in range(pts.shape[0]):
        out[i] = _classify_point(cells, lower, res, dims, pts[i], radius, offsets)


@njit(cache=True)
def _dilate_masks(cells, offsets, occ_out, unk_out):
    """occ_out / unk_out: any occupied / unknown center within the offset ball.

    Cells beyond the map boundary count as unknown.
    """
    nx, ny, nz = cells.shape
    for ix in range(nx):
        for iy in range(ny):
            for iz in range(nz):
                occ = False
                unk = False
                for k in range(offsets.shape[0]):
                    jx = ix + offsets[k, 0]
                    jy = iy + offsets[k, 1]
                    jz = iz + offsets[k, 2]
                    if 0 <= jx < nx and 0 <= jy < ny and 0 <= jz < nz:
                        s = cells[jx, jy, jz]
                        if s == OCCUPIED:
                            occ = True
                            if unk:
                                break
                        elif s == UNKNOWN:
                            unk = True
                            if occ:
                                break
                    else:
                        unk = True
                        if occ:
                            break
                occ_out[ix, iy, iz] = occ
                unk_out[ix, iy, iz] = unk


class VoxelMap:
    """Vehicle-centered occupancy grid with inflation-aware queries."""

    def __init__(self, center=(0.0, 0.0, 0.0), dims=(80, 80, 80),
                 resolution=0.25, inflation_radius=0.3):
        self.resolution = float(resolution)
        self.inflation_radius = float(inflation_radius)
        self.dims = np.array(dims, dtype=np.int64)
        if np.any(self.dims <= 0) or self.resolution <= 0:
            raise ValueError("dims and resolution must be positive")
        if self.inflation_radius < 0:
            raise ValueError("inflation radius cannot be negative")
        center = np.asarray(center, dtype=float).reshape(3)
        # center lives on the cell-corner lattice so shifts are whole cells
        self.center = np.round(center / self.resolution) * self.resolution
        self.cells = np.full(tuple(self.dims), UNKNOWN, dtype=np.uint8)
        self._cache = {}

    # -- geometry ---------------------------------------------------------

    @property
    def lower(self) -> np.ndarray:
        return self.center - self.dims * self.resolution / 2.0

    @property
    def upper(self) -> np.ndarray:
        return self.center + self.dims * self.resolution / 2.0

    def world_to_voxel(self, p):
        """Cell index containing p, or None when p is out of bounds."""
        idx = np.floor((np.asarray(p, dtype=float) - self.lower) / self.resolution)
        idx = idx.astype(np.int64)
        if np.any(idx < 0) or np.any(idx >= self.dims):
            return None
        return tuple(int(i) for i in idx)

    def voxel_center(self, idx) -> np.ndarray:
        return self.lower + (np.asarray(idx, dtype=float) + 0.5) * self.resolution

    def is_inside(self, p) -> bool:
        return self.world_to_voxel(p) is not None

    # -- updates ----------------------------------------------------------

    def set_state(self, idx, state: int):
        self.cells[tuple(idx)] = state
        self._cache.clear()

    def raycast_update(self, origin, endpoint, hit: bool) -> bool:
        """Apply one sensor ray.  Returns False when the origin is outside."""
        origin = np.asarray(origin, dtype=float).reshape(3)
        endpoint = np.asarray(endpoint, dtype=float).reshape(3)
        if not self.is_inside(origin):
            return False
        scratch = np.empty((int(self.dims.sum()) + 3, 3), dtype=np.int64)
        _apply_rays(self.cells, self.lower, self.resolution, self.dims,
                    origin, endpoint.reshape(1, 3),
                    np.array([hit], dtype=np.bool_), scratch)
        self._cache.clear()
        return True

    def apply_frame(self, origin, endpoints, hits):
        """Apply a whole sensor frame at once (Occupied wins within the frame)."""
        origin = np.asarray(origin, dtype=float).reshape(3)
        if not self.is_inside(origin):
            return False
        endpoints = np.ascontiguousarray(endpoints, dtype=np.float64)
        hits = np.ascontiguousarray(hits, dtype=np.bool_)
        scratch = np.empty((int(self.dims.sum()) + 3, 3), dtype=np.int64)
        _apply_rays(self.cells, self.lower, self.resolution, self.dims,
                    origin, endpoints, hits, scratch)
        self._cache.clear()
        return True

    def recenter(self, new_center):
        """Slide the window to the cell-aligned position nearest new_center."""
        new_center = np.asarray(new_center, dtype=float).reshape(3)
        shift = np.round((new_center - self.center) / self.resolution).astype(np.int64)
        if np.all(shift == 0):
            return
        fresh = np.full(tuple(self.dims), UNKNOWN, dtype=np.uint8)
        src_lo = np.maximum(shift, 0)
        src_hi = np.minimum(self.dims + shift, self.dims)
        dst_lo = np.maximum(-shift, 0)
        if np.all(src_hi > src_lo):
            fresh[dst_lo[0]:dst_lo[0] + src_hi[0] - src_lo[0],
                  dst_lo[1]:dst_lo[1] + src_hi[1] - src_lo[1],
                  dst_lo[2]:dst_lo[2] + src_hi[2] - src_lo[2]] = \
                self.cells[src_lo[0]:src_hi[0], src_lo[1]:src_hi[1], src_lo[2]:src_hi[2]]
        self.cells = fresh
        self.center = self.center + shift * self.resolution
        self._cache.clear()

    # -- queries ----------------------------------------------------------

    def _offsets_for(self, radius: float) -> np.ndarray:
        # the ball must cover any point inside the query cell
        return _ball_offsets(radius / self.resolution + HALF_DIAG + 1e-9)

    def classify_inflated(self, p, radius: float | None = None) -> int:
        r = self.inflation_radius if radius is None else float(radius)
        p = np.asarray(p, dtype=float).reshape(3)
        return int(_classify_point(self.cells, self.lower, self.resolution,
                                   self.dims, p, r, self._offsets_for(r)))

    def classify_points(self, pts, radius: float | None = None) -> np.ndarray:
        r = self.inflation_radius if radius is None else float(radius)
        pts = np.ascontiguousarray(pts, dtype=np.float64).reshape(-1, 3)
        out = np.empty(pts.shape[0], dtype=np.uint8)
        _classify_many(self.cells, self.lower, self.resolution, self.dims,
                       pts, r, self._offsets_for(r), out)
        return out

    def segment_classify(self, p0, p1, states, radius: float | None = None) -> bool:
        """True when any sample of [p0, p1] classifies into `states`.

        Samples are spaced at most resolution/2 apart, endpoints included.
        """
        p0 = np.asarray(p0, dtype=float).reshape(3)
        p1 = np.asarray(p1, dtype=float).reshape(3)
        length = float(np.linalg.norm(p1 - p0))
        n = max(int(np.ceil(length / (self.resolution / 2.0))), 1)
        ts = np.linspace(0.0, 1.0, n + 1)
        pts = p0[None, :] + ts[:, None] * (p1 - p0)[None, :]
        cls = self.classify_points(pts, radius)
        return bool(np.any(np.isin(cls, list(states))))

    def inflated_masks(self, radius: float):
        """Boolean grids (occupied-inflated, unknown-inflated) at `radius`.

        Cell-center based: cell c is set when a matching center lies within
        radius of c's center; out-of-bounds neighborhood counts as unknown.
        """
        key = ("masks", round(radius, 9))
        if key not in self._cache:
            offs = _ball_offsets(radius / self.resolution + 1e-9)
            occ = np.empty(tuple(self.dims), dtype=np.bool_)
            unk = np.empty(tuple(self.dims), dtype=np.bool_)
            _dilate_masks(self.cells, offs, occ, unk)
            self._cache[key] = (occ, unk)
        return self._cache[key]

    def snapshot(self) -> "VoxelMap":
        """Independent copy for the planner to read while sensing continues."""
        m = VoxelMap.__new__(VoxelMap)
        m.resolution = self.resolution
        m.inflation_radius = self.inflation_radius
        m.dims = self.dims.copy()
        m.center = self.center.copy()
        m.cells = self.cells.copy()
        m._cache = {}
        return m

    # -- debug ------------------------------------------------------------

    def dump_slices(self) -> str:
        """Text rendering, one block per z slice ('.', '#', '?')."""
        lines = []
        for iz in range(int(self.dims[2])):
            lines.append(f"z={iz}")
            for iy in range(int(self.dims[1]) - 1, -1, -1):
                row = "".join(_STATE_CHARS[int(self.cells[ix, iy, iz])]
                              for ix in range(int(self.dims[0])))
                lines.append(row)
            lines.append("")
        return "\n".join(lines)

    def ray_cells(self, origin, endpoint):
        """Cells the segment traverses, in visit order (for tests/debug)."""
        origin = np.asarray(origin, dtype=float).reshape(3)
        endpoint = np.asarray(endpoint, dtype=float).reshape(3)
        scratch = np.empty((int(self.dims.sum()) + 3, 3), dtype=np.int64)
        n, reached = _ray_cells(self.lower, self.resolution, self.dims,
                                origin, endpoint, scratch)
        return [tuple(int(v) for v in scratch[i]) for i in range(n)], bool(reached)
