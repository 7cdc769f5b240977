"""3D grid pathfinding and polyline utilities.

Search runs on a boolean traversability grid, 26-connected, with diagonal
moves allowed through cell corners.  The primary algorithm is jump point
search.  Its pruning tables are not hand-coded: at import time, for every
(arrival direction, neighbor) pair, all local detours around the current
cell that are cheaper than going through it (or tie while being canonically
preferred) are enumerated.  Neighbors with no such detour are natural;
the rest are expanded at runtime only when every recorded detour is
blocked.  A reference A* over identical move semantics backs JPS in tests.

Paths come back as world-space polylines through cell centers, with the
query points attached at the ends.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from numba import njit

SQRT2 = float(np.sqrt(2.0))
SQRT3 = float(np.sqrt(3.0))


class PathError(Exception):
    pass


class InvalidStartError(PathError):
    """Start point lies outside the grid or in a non-traversable cell."""


class NoPathError(PathError):
    """No traversable route to the goal (after any goal snapping)."""


# -- pruning tables -------------------------------------------------------

DIRS = np.array([d for d in itertools.product((-1, 0, 1), repeat=3)
                 if d != (0, 0, 0)], dtype=np.int64)
DIR_INDEX = {tuple(d): i for i, d in enumerate(DIRS)}
ORDER = np.array([int(np.sum(np.abs(d))) for d in DIRS], dtype=np.int64)
STEP_COST = np.sqrt(ORDER.astype(np.float64))


def _valid_move(v):
    return v != (0, 0, 0) and max(abs(c) for c in v) == 1


def _diff(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def _build_tables():
    """Derive pruning data from local shortest-path reasoning.

    For an arrival direction d at cell x (parent p = x - d) and a candidate
    neighbor m, enumerate every detour p -> ... -> m that stays inside x's
    closed 3x3x3 neighborhood, avoids x, and costs no more than going
    through x.  A detour is recorded when it is strictly cheaper, or ties
    while being canonically preferred (its move sequence ranks higher under
    order-then-index lexicographic comparison, so canonical paths run their
    most diagonal moves first).

    Two prunes are unconditional and leave no routes to block: stepping back
    onto the parent, and any m reachable from p in a single move (that move
    costs at most sqrt(3), always beating the two-move through-path, and
    with corner cutting it can never be obstructed).  Such neighbors are
    never natural and never forced.

    Otherwise m is natural exactly when no detour exists: x is then on the
    canonical optimum and m must always be expanded.  A non-natural m is
    forced at runtime exactly when every recorded detour has a blocked
    cell.  Any route longer than three moves costs more than the most
    expensive through-path, so one or two intermediate cells suffice.
    """
    natural = np.zeros((26, 26), dtype=np.bool_)
    cells = [tuple(int(v) for v in DIRS[k]) for k in range(26)]
    route_lists = {}
    for di in range(26):
        d = cells[di]
        p = (-d[0], -d[1], -d[2])
        pi = DIR_INDEX[p]
        for mi in range(26):
            if mi == pi:
                continue
            m = cells[mi]
            if _valid_move(_diff(m, p)):
                continue
            thru = STEP_COST[di] + STEP_COST[mi]
            key0 = ((int(ORDER[di]), int(ORDER[mi])), (di, mi))
            found = []

            def consider(route_cells, moves):
                c = sum(STEP_COST[DIR_INDEX[mv]] for mv in moves)
                if c < thru - 1e-9:
                    found.append(route_cells)
                elif abs(c - thru) <= 1e-9:
                    key = (tuple(int(ORDER[DIR_INDEX[mv]]) for mv in moves),
                           tuple(DIR_INDEX[mv] for mv in moves))
                    if key > key0:
                        found.append(route_cells)

            for q1i in range(26):
                q1 = cells[q1i]
                if q1 == p or q1 == m:
                    continue
                d1 = _diff(q1, p)
                d2 = _diff(m, q1)
                if _valid_move(d1) and _valid_move(d2):
                    consider((q1i,), (d1, d2))
                for q2i in range(26):
                    q2 = cells[q2i]
                    if q2 == p or q2 == m or q2i == q1i:
                        continue
                    e1 = _diff(q1, p)
                    e2 = _diff(q2, q1)
                    e3 = _diff(m, q2)
                    if _valid_move(e1) and _valid_move(e2) and _valid_move(e3):
                        consider((q1i, q2i), (e1, e2, e3))
            if found:
                route_lists[(di, mi)] = found
            else:
                natural[di, mi] = True

    # flatten routes: rt_ptr indexes (di * 26 + mi) into rt_mask, one bitmask
    # of intermediate cells per route (bit k = neighbor DIRS[k])
    rt_ptr = np.zeros(26 * 26 + 1, dtype=np.int64)
    flat_mask = []
    for di in range(26):
        for mi in range(26):
            for rc in route_lists.get((di, mi), ()):
                bits = 0
                for c in rc:
                    bits |= 1 << c
                flat_mask.append(bits)
            rt_ptr[di * 26 + mi + 1] = len(flat_mask)
    rt_mask = np.array(flat_mask, dtype=np.int64)

    # candidate forced directions per arrival = those with recorded routes
    nn_ptr = np.zeros(27, dtype=np.int64)
    nn_flat = []
    for di in range(26):
        for mi in range(26):
            if (di, mi) in route_lists:
                nn_flat.append(mi)
        nn_ptr[di + 1] = len(nn_flat)
    nn_list = np.array(nn_flat, dtype=np.int64)

    # sub-directions scanned from inside a diagonal move: the component
    # straights, and for a 3D diagonal also the three component 2D diagonals
    subs = [[] for _ in range(26)]
    for di in range(26):
        d = DIRS[di]
        if ORDER[di] == 1:
            continue
        for ax in range(3):
            if d[ax] != 0:
                s = [0, 0, 0]
                s[ax] = int(d[ax])
                subs[di].append(DIR_INDEX[tuple(s)])
        if ORDER[di] == 3:
            for ax in range(3):
                s = [int(v) for v in d]
                s[ax] = 0
                subs[di].append(DIR_INDEX[tuple(s)])
    s_ptr = np.zeros(27, dtype=np.int64)
    for di in range(26):
        s_ptr[di + 1] = s_ptr[di] + len(subs[di])
    s_code = np.zeros(s_ptr[-1], dtype=np.int64)
    k = 0
    for di in range(26):
        for c in subs[di]:
            s_code[k] = c
            k += 1
    return natural, rt_ptr, rt_mask, nn_ptr, nn_list, s_code, s_ptr


NATURAL, RT_PTR, RT_MASK, NN_PTR, NN_LIST, SUB, SUB_PTR = _build_tables()


# -- numba kernels --------------------------------------------------------

@njit(cache=True)
def _trav(mask, x, y, z):
    return (0 <= x < mask.shape[0] and 0 <= y < mask.shape[1]
            and 0 <= z < mask.shape[2] and mask[x, y, z])


@njit(cache=True)
def _h3(ax, ay, az):
    a = abs(ax)
    b = abs(ay)
    c = abs(az)
    if a < b:
        a, b = b, a
    if b < c:
        b, c = c, b
    if a < b:
        a, b = b, a
    return (a - b) + SQRT2 * (b - c) + SQRT3 * c


@njit(cache=True)
def _blocked_bits(mask, x, y, z, dirs):
    """Bitmask of the 26 neighbors that are not traversable."""
    b = np.int64(0)
    one = np.int64(1)
    for k in range(26):
        if not _trav(mask, x + dirs[k, 0], y + dirs[k, 1], z + dirs[k, 2]):
            b |= one << k
    return b


@njit(cache=True)
def _is_forced(bits, adi, di, rt_ptr, rt_mask):
    """True when every recorded local detour for (arrival adi, move di) has a
    blocked cell, so the canonical optimum must turn here."""
    lo = rt_ptr[adi * 26 + di]
    hi = rt_ptr[adi * 26 + di + 1]
    if lo == hi:
        return False
    if bits & (np.int64(1) << di):
        return False
    for r in range(lo, hi):
        if bits & rt_mask[r] == 0:
            return False
    return True


@njit(cache=True)
def _has_forced(mask, x, y, z, di, dirs, rt_ptr, rt_mask, nn_ptr, nn_list):
    bits = _blocked_bits(mask, x, y, z, dirs)
    if bits == 0:
        return False
    for k in range(nn_ptr[di], nn_ptr[di + 1]):
        if _is_forced(bits, di, nn_list[k], rt_ptr, rt_mask):
            return True
    return False


@njit(cache=True)
def _jump_straight(mask, x, y, z, di, gx, gy, gz, dirs, rt_ptr, rt_mask,
                   nn_ptr, nn_list):
    dx = dirs[di, 0]
    dy = dirs[di, 1]
    dz = dirs[di, 2]
    while True:
        x += dx
        y += dy
        z += dz
        if not _trav(mask, x, y, z):
            return -1, -1, -1
        if x == gx and y == gy and z == gz:
            return x, y, z
        if _has_forced(mask, x, y, z, di, dirs, rt_ptr, rt_mask, nn_ptr, nn_list):
            return x, y, z


@njit(cache=True)
def _jump_diag2(mask, x, y, z, di, gx, gy, gz, dirs, rt_ptr, rt_mask,
                nn_ptr, nn_list, sub, s_ptr):
    dx = dirs[di, 0]
    dy = dirs[di, 1]
    dz = dirs[di, 2]
    while True:
        x += dx
        y += dy
        z += dz
        if not _trav(mask, x, y, z):
            return -1, -1, -1
        if x == gx and y == gy and z == gz:
            return x, y, z
        if _has_forced(mask, x, y, z, di, dirs, rt_ptr, rt_mask, nn_ptr, nn_list):
            return x, y, z
        for k in range(s_ptr[di], s_ptr[di + 1]):
            jx, _, _ = _jump_straight(mask, x, y, z, sub[k], gx, gy, gz,
                                      dirs, rt_ptr, rt_mask, nn_ptr, nn_list)
            if jx >= 0:
                return x, y, z


@njit(cache=True)
def _jump_diag3(mask, x, y, z, di, gx, gy, gz, dirs, order, rt_ptr, rt_mask,
                nn_ptr, nn_list, sub, s_ptr):
    dx = dirs[di, 0]
    dy = dirs[di, 1]
    dz = dirs[di, 2]
    while True:
        x += dx
        y += dy
        z += dz
        if not _trav(mask, x, y, z):
            return -1, -1, -1
        if x == gx and y == gy and z == gz:
            return x, y, z
        if _has_forced(mask, x, y, z, di, dirs, rt_ptr, rt_mask, nn_ptr, nn_list):
            return x, y, z
        for k in range(s_ptr[di], s_ptr[di + 1]):
            sd = sub[k]
            if order[sd] == 1:
                jx, _, _ = _jump_straight(mask, x, y, z, sd, gx, gy, gz, dirs,
                                          rt_ptr, rt_mask, nn_ptr, nn_list)
            else:
                jx, _, _ = _jump_diag2(mask, x, y, z, sd, gx, gy, gz, dirs,
                                       rt_ptr, rt_mask, nn_ptr, nn_list,
                                       sub, s_ptr)
            if jx >= 0:
                return x, y, z


@njit(cache=True)
def _jump(mask, x, y, z, di, gx, gy, gz, dirs, order, rt_ptr, rt_mask,
          nn_ptr, nn_list, sub, s_ptr):
    o = order[di]
    if o == 1:
        return _jump_straight(mask, x, y, z, di, gx, gy, gz, dirs,
                              rt_ptr, rt_mask, nn_ptr, nn_list)
    if o == 2:
        return _jump_diag2(mask, x, y, z, di, gx, gy, gz, dirs,
                           rt_ptr, rt_mask, nn_ptr, nn_list, sub, s_ptr)
    return _jump_diag3(mask, x, y, z, di, gx, gy, gz, dirs, order,
                       rt_ptr, rt_mask, nn_ptr, nn_list, sub, s_ptr)


@njit(cache=True)
def _hpush(hf, hs, hn, hd, size, f, s, n, d):
    i = size
    hf[i] = f
    hs[i] = s
    hn[i] = n
    hd[i] = d
    while i > 0:
        p = (i - 1) >> 1
        if hf[p] > hf[i] or (hf[p] == hf[i] and hs[p] > hs[i]):
            hf[p], hf[i] = hf[i], hf[p]
            hs[p], hs[i] = hs[i], hs[p]
            hn[p], hn[i] = hn[i], hn[p]
            hd[p], hd[i] = hd[i], hd[p]
            i = p
        else:
            break
    return size + 1


@njit(cache=True)
def _hpop(hf, hs, hn, hd, size):
    f0 = hf[0]
    s0 = hs[0]
    n0 = hn[0]
    d0 = hd[0]
    size -= 1
    hf[0] = hf[size]
    hs[0] = hs[size]
    hn[0] = hn[size]
    hd[0] = hd[size]
    i = 0
    while True:
        l = 2 * i + 1
        r = l + 1
        m = i
        if l < size and (hf[l] < hf[m] or (hf[l] == hf[m] and hs[l] < hs[m])):
            m = l
        if r < size and (hf[r] < hf[m] or (hf[r] == hf[m] and hs[r] < hs[m])):
            m = r
        if m == i:
            break
        hf[m], hf[i] = hf[i], hf[m]
        hs[m], hs[i] = hs[i], hs[m]
        hn[m], hn[i] = hn[i], hn[m]
        hd[m], hd[i] = hd[i], hd[m]
        i = m
    return f0, s0, n0, d0, size


@njit(cache=True)
def _jps_search(mask, sx, sy, sz, gx, gy, gz, dirs, order, step_cost, natural,
                rt_ptr, rt_mask, nn_ptr, nn_list, sub, s_ptr):
    nx, ny, nz = mask.shape
    ncells = nx * ny * nz
    g = np.full(ncells, np.inf)
    parent = np.full(ncells, -1, dtype=np.int64)
    closed = np.zeros(ncells, dtype=np.uint8)
    cap = 1024
    hf = np.empty(cap)
    hs = np.empty(cap, dtype=np.int64)
    hn = np.empty(cap, dtype=np.int64)
    hd = np.empty(cap, dtype=np.int64)
    sflat = (sx * ny + sy) * nz + sz
    gflat = (gx * ny + gy) * nz + gz
    g[sflat] = 0.0
    size = _hpush(hf, hs, hn, hd, 0, _h3(gx - sx, gy - sy, gz - sz), 0, sflat, -1)
    seq = 1
    while size > 0:
        _, _, node, adi, size = _hpop(hf, hs, hn, hd, size)
        if closed[node]:
            continue
        closed[node] = 1
        if node == gflat:
            break
        x = node // (ny * nz)
        rem = node % (ny * nz)
        y = rem // nz
        z = rem % nz
        bits = np.int64(0)
        if adi >= 0:
            bits = _blocked_bits(mask, x, y, z, dirs)
        for di in range(26):
            if adi >= 0 and not natural[adi, di]:
                if bits == 0 or not _is_forced(bits, adi, di, rt_ptr, rt_mask):
                    continue
            jx, jy, jz = _jump(mask, x, y, z, di, gx, gy, gz, dirs, order,
                               rt_ptr, rt_mask, nn_ptr, nn_list, sub, s_ptr)
            if jx < 0:
                continue
            jflat = (jx * ny + jy) * nz + jz
            if closed[jflat]:
                continue
            steps = max(abs(jx - x), abs(jy - y), abs(jz - z))
            ng = g[node] + steps * step_cost[di]
            if ng < g[jflat] - 1e-12:
                g[jflat] = ng
                parent[jflat] = node
                if size >= hf.shape[0]:
                    hf2 = np.empty(2 * size)
                    hs2 = np.empty(2 * size, dtype=np.int64)
                    hn2 = np.empty(2 * size, dtype=np.int64)
                    hd2 = np.empty(2 * size, dtype=np.int64)
                    hf2[:size] = hf[:size]
                    hs2[:size] = hs[:size]
                    hn2[:size] = hn[:size]
                    hd2[:size] = hd[:size]
                    hf, hs, hn, hd = hf2, hs2, hn2, hd2
                size = _hpush(hf, hs, hn, hd, size,
                              ng + _h3(gx - jx, gy - jy, gz - jz), seq, jflat, di)
                seq += 1
    if not np.isfinite(g[gflat]) or not closed[gflat]:
        return np.inf, np.empty(0, dtype=np.int64)
    cnt = 0
    cur = gflat
    while cur >= 0:
        cnt += 1
        cur = parent[cur]
    out = np.empty(cnt, dtype=np.int64)
    i = cnt - 1
    cur = gflat
    while cur >= 0:
        out[i] = cur
        i -= 1
        cur = parent[cur]
    return g[gflat], out


@njit(cache=True)
def _astar_search(mask, sx, sy, sz, gx, gy, gz, dirs, step_cost):
    nx, ny, nz = mask.shape
    ncells = nx * ny * nz
    g = np.full(ncells, np.inf)
    parent = np.full(ncells, -1, dtype=np.int64)
    closed = np.zeros(ncells, dtype=np.uint8)
    cap = 4096
    hf = np.empty(cap)
    hs = np.empty(cap, dtype=np.int64)
    hn = np.empty(cap, dtype=np.int64)
    hd = np.empty(cap, dtype=np.int64)
    sflat = (sx * ny + sy) * nz + sz
    gflat = (gx * ny + gy) * nz + gz
    g[sflat] = 0.0
    size = _hpush(hf, hs, hn, hd, 0, _h3(gx - sx, gy - sy, gz - sz), 0, sflat, -1)
    seq = 1
    while size > 0:
        _, _, node, _, size = _hpop(hf, hs, hn, hd, size)
        if closed[node]:
            continue
        closed[node] = 1
        if node == gflat:
            break
        x = node // (ny * nz)
        rem = node % (ny * nz)
        y = rem // nz
        z = rem % nz
        for di in range(26):
            vx = x + dirs[di, 0]
            vy = y + dirs[di, 1]
            vz = z + dirs[di, 2]
            if not _trav(mask, vx, vy, vz):
                continue
            vflat = (vx * ny + vy) * nz + vz
            if closed[vflat]:
                continue
            ng = g[node] + step_cost[di]
            if ng < g[vflat] - 1e-12:
                g[vflat] = ng
                parent[vflat] = node
                if size >= hf.shape[0]:
                    hf2 = np.empty(2 * size)
                    hs2 = np.empty(2 * size, dtype=np.int64)
                    hn2 = np.empty(2 * size, dtype=np.int64)
                    hd2 = np.empty(2 * size, dtype=np.int64)
                    hf2[:size] = hf[:size]
                    hs2[:size] = hs[:size]
                    hn2[:size] = hn[:size]
                    hd2[:size] = hd[:size]
                    hf, hs, hn, hd = hf2, hs2, hn2, hd2
                size = _hpush(hf, hs, hn, hd, size,
                              ng + _h3(gx - vx, gy - vy, gz - vz), seq, vflat, di)
                seq += 1
    if not np.isfinite(g[gflat]) or not closed[gflat]:
        return np.inf, np.empty(0, dtype=np.int64)
    cnt = 0
    cur = gflat
    while cur >= 0:
        cnt += 1
        cur = parent[cur]
    out = np.empty(cnt, dtype=np.int64)
    i = cnt - 1
    cur = gflat
    while cur >= 0:
        out[i] = cur
        i -= 1
        cur = parent[cur]
    return g[gflat], out


# -- public search API ----------------------------------------------------

def grid_path(mask, start_cell, goal_cell, algorithm="jps"):
    """Optimal path between cells.  Returns (cost in cell units, cell list).

    Cost uses steps of 1, sqrt(2), sqrt(3).  JPS returns only the jump-point
    chain (each consecutive pair is joined by a uniform-direction run); A*
    returns every cell.  Raises NoPathError when unreachable.
    """
    mask = np.ascontiguousarray(mask, dtype=np.bool_)
    sx, sy, sz = (int(v) for v in start_cell)
    gx, gy, gz = (int(v) for v in goal_cell)
    if not mask[sx, sy, sz]:
        raise InvalidStartError(f"start cell {start_cell} not traversable")
    if not mask[gx, gy, gz]:
        raise NoPathError(f"goal cell {goal_cell} not traversable")
    if algorithm == "jps":
        cost, flat = _jps_search(mask, sx, sy, sz, gx, gy, gz, DIRS, ORDER,
                                 STEP_COST, NATURAL, RT_PTR, RT_MASK,
                                 NN_PTR, NN_LIST, SUB, SUB_PTR)
    elif algorithm == "astar":
        cost, flat = _astar_search(mask, sx, sy, sz, gx, gy, gz, DIRS, STEP_COST)
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    if not np.isfinite(cost):
        raise NoPathError(f"no route from {start_cell} to {goal_cell}")
    ny, nz = mask.shape[1], mask.shape[2]
    cells = [(int(f) // (ny * nz), (int(f) % (ny * nz)) // nz, int(f) % nz)
             for f in flat]
    return float(cost), cells


@dataclass
class SearchGrid:
    """A traversability mask anchored in world space."""

    mask: np.ndarray
    lower: np.ndarray
    resolution: float

    def __post_init__(self):
        self.mask = np.ascontiguousarray(self.mask, dtype=np.bool_)
        self.lower = np.asarray(self.lower, dtype=float).reshape(3)
        self.resolution = float(self.resolution)

    def cell_of(self, p):
        idx = np.floor((np.asarray(p, float) - self.lower) / self.resolution)
        idx = idx.astype(np.int64)
        if np.any(idx < 0) or np.any(idx >= np.array(self.mask.shape)):
            return None
        return tuple(int(i) for i in idx)

    def center(self, idx) -> np.ndarray:
        return self.lower + (np.asarray(idx, float) + 0.5) * self.resolution

    def is_traversable(self, idx) -> bool:
        return bool(self.mask[tuple(idx)])


def _snap_goal(grid: SearchGrid, goal_point, snap_radius):
    """Nearest traversable cell center within snap_radius of the goal."""
    p = np.asarray(goal_point, float)
    res = grid.resolution
    base = np.floor((p - grid.lower) / res).astype(np.int64)
    r = int(np.ceil(snap_radius / res)) + 1
    shape = grid.mask.shape
    best = None
    for ix in range(max(base[0] - r, 0), min(base[0] + r + 1, shape[0])):
        for iy in range(max(base[1] - r, 0), min(base[1] + r + 1, shape[1])):
            for iz in range(max(base[2] - r, 0), min(base[2] + r + 1, shape[2])):
                if not grid.mask[ix, iy, iz]:
                    continue
                d = float(np.linalg.norm(grid.center((ix, iy, iz)) - p))
                if d > snap_radius + 1e-12:
                    continue
                key = (d, ix, iy, iz)
                if best is None or key < best:
                    best = key
    if best is None:
        raise NoPathError(f"no traversable cell within {snap_radius} of goal")
    return (best[1], best[2], best[3])


def _merge_collinear(verts):
    out = [verts[0]]
    for v in verts[1:]:
        if np.linalg.norm(v - out[-1]) < 1e-12:
            continue
        if len(out) >= 2:
            u = out[-1] - out[-2]
            w = v - out[-1]
            if (np.linalg.norm(np.cross(u, w))
                    <= 1e-9 * np.linalg.norm(u) * np.linalg.norm(w)
                    and np.dot(u, w) > 0.0):
                out[-1] = v
                continue
        out.append(v)
    return out


def plan_path(grid: SearchGrid, start_point, goal_point, algorithm="jps",
              goal_snap=None) -> "PiecewiseLinearPath":
    """World-space shortest path as a polyline through cell centers.

    The polyline starts at start_point exactly.  It ends at goal_point when
    that point's own cell is traversable; otherwise the goal is snapped to
    the nearest traversable cell center within goal_snap (default two cell
    sizes) and the polyline ends at that center.
    """
    start_point = np.asarray(start_point, dtype=float).reshape(3)
    goal_point = np.asarray(goal_point, dtype=float).reshape(3)
    s_cell = grid.cell_of(start_point)
    if s_cell is None or not grid.mask[s_cell]:
        raise InvalidStartError(f"start {start_point} not in traversable cell")
    snap = 2.0 * grid.resolution if goal_snap is None else float(goal_snap)
    g_cell = grid.cell_of(goal_point)
    snapped = False
    if g_cell is None or not grid.mask[g_cell]:
        g_cell = _snap_goal(grid, goal_point, snap)
        snapped = True
    cost, cells = grid_path(grid.mask, s_cell, g_cell, algorithm=algorithm)
    verts = [start_point] + [grid.center(c) for c in cells]
    if not snapped:
        verts.append(goal_point)
    verts = _merge_collinear([np.asarray(v, float) for v in verts])
    return PiecewiseLinearPath(np.array(verts), grid_cost=cost * grid.resolution)


# -- polylines ------------------------------------------------------------

class PiecewiseLinearPath:
    """Polyline with arclength parameterization."""

    def __init__(self, vertices, grid_cost=None):
        self.vertices = np.asarray(vertices, dtype=float).reshape(-1, 3).copy()
        if self.vertices.shape[0] < 1:
            raise ValueError("a path needs at least one vertex")
        segs = np.diff(self.vertices, axis=0)
        self._cum = np.concatenate(
            [[0.0], np.cumsum(np.linalg.norm(segs, axis=1))])
        self.grid_cost = grid_cost

    @property
    def length(self) -> float:
        return float(self._cum[-1])

    def point_at(self, s: float) -> np.ndarray:
        """Point at arclength s, clamped to [0, length]."""
        s = min(max(float(s), 0.0), self.length)
        if self.vertices.shape[0] == 1:
            return self.vertices[0].copy()
        i = int(np.searchsorted(self._cum, s, side="right")) - 1
        i = min(max(i, 0), self.vertices.shape[0] - 2)
        seg = self._cum[i + 1] - self._cum[i]
        t = 0.0 if seg <= 0 else (s - self._cum[i]) / seg
        return self.vertices[i] + t * (self.vertices[i + 1] - self.vertices[i])

    def closest(self, p):
        """(arclength, point) of the closest point on the path to p.

        Ties resolve to the smallest arclength.
        """
        p = np.asarray(p, dtype=float).reshape(3)
        if self.vertices.shape[0] == 1:
            return 0.0, self.vertices[0].copy()
        best = (np.inf, 0.0, self.vertices[0])
        for i in range(self.vertices.shape[0] - 1):
            a = self.vertices[i]
            u = self.vertices[i + 1] - a
            L2 = float(np.dot(u, u))
            t = 0.0 if L2 <= 0 else min(max(float(np.dot(p - a, u)) / L2, 0.0), 1.0)
            q = a + t * u
            d = float(np.linalg.norm(p - q))
            if d < best[0] - 1e-12:
                best = (d, float(self._cum[i] + t * np.sqrt(L2)), q)
        return best[1], best[2].copy()

    def tail_from(self, s: float) -> "PiecewiseLinearPath":
        """Sub-path from arclength s to the end."""
        s = min(max(float(s), 0.0), self.length)
        start = self.point_at(s)
        verts = [start]
        for i, c in enumerate(self._cum):
            if c > s + 1e-12:
                verts.extend(self.vertices[i:])
                break
        out = [verts[0]]
        for v in verts[1:]:
            if np.linalg.norm(v - out[-1]) > 1e-12:
                out.append(v)
        return PiecewiseLinearPath(np.array(out))

    def copy(self) -> "PiecewiseLinearPath":
        return PiecewiseLinearPath(self.vertices.copy(), grid_cost=self.grid_cost)


def sphere_clip(path: PiecewiseLinearPath, center, radius):
    """Clip a path to the closed ball B(center, radius).

    Returns (clipped_path, exit_point).  exit_point is None when the path
    never leaves the ball; otherwise it is the first boundary crossing and
    the clipped path ends exactly there.  A path starting outside collapses
    to its first vertex.
    """
    center = np.asarray(center, dtype=float).reshape(3)
    r2 = float(radius) ** 2

    def inside(q):
        return float(np.dot(q - center, q - center)) <= r2 + 1e-9

    v = path.vertices
    if not inside(v[0]):
        return PiecewiseLinearPath(v[:1].copy()), v[0].copy()
    out = [v[0]]
    for i in range(v.shape[0] - 1):
        a, b = v[i], v[i + 1]
        if inside(b):
            out.append(b)
            continue
        # first crossing of |a + t u - c|^2 = r^2 on [0, 1]
        u = b - a
        w = a - center
        A = float(np.dot(u, u))
        B = 2.0 * float(np.dot(w, u))
        C = float(np.dot(w, w)) - r2
        disc = max(B * B - 4 * A * C, 0.0)
        t = (-B + np.sqrt(disc)) / (2 * A)
        t = min(max(t, 0.0), 1.0)
        exit_point = a + t * u
        if np.linalg.norm(exit_point - out[-1]) > 1e-12:
            out.append(exit_point)
        return PiecewiseLinearPath(np.array(out)), exit_point.copy()
    return PiecewiseLinearPath(np.array(out)), None


def split_long_segments(path: PiecewiseLinearPath, l_max: float) -> PiecewiseLinearPath:
    """Subdivide so no segment exceeds l_max.  Geometry is unchanged."""
    if l_max <= 0:
        raise ValueError("l_max must be positive")
    v = path.vertices
    out = [v[0]]
    for i in range(v.shape[0] - 1):
        a, b = v[i], v[i + 1]
        n = max(int(np.ceil(np.linalg.norm(b - a) / l_max)), 1)
        for k in range(1, n + 1):
            out.append(a + (k / n) * (b - a))
    return PiecewiseLinearPath(np.array(out), grid_cost=path.grid_cost)


def truncate_segments(path: PiecewiseLinearPath, max_segments: int) -> PiecewiseLinearPath:
    """Keep at most the first max_segments segments."""
    if max_segments < 1:
        raise ValueError("need at least one segment")
    return PiecewiseLinearPath(path.vertices[:max_segments + 1].copy())


def repair_path(path: PiecewiseLinearPath, new_start) -> PiecewiseLinearPath:
    """Re-root an old path at a new start point.

    Projects new_start onto the path, drops everything before the projection
    and prepends new_start itself.
    """
    new_start = np.asarray(new_start, dtype=float).reshape(3)
    s, q = path.closest(new_start)
    tail = path.tail_from(s)
    if np.linalg.norm(tail.vertices[0] - new_start) < 1e-12:
        return tail
    return PiecewiseLinearPath(
        np.vstack([new_start[None, :], tail.vertices]))
