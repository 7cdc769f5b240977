"""Receding-horizon replanning over a partially known voxel map.

Each cycle picks a start state A a little ahead on the currently committed
trajectory, plans a geometric path toward the goal, and builds two
trajectories: a fast one allowed to cross unknown space and a braking backup
that stays entirely inside known-free space.  Obstacle clearance is enforced
by construction: both trajectories are confined to corridors whose planes
push known cells out to the inflation radius wherever the guidance path has
that much room.  The pair is committed only if both optimizations succeed,
the piece between A and the backup's start never touches unknown space, the
backup's stop point classifies known-free, and the replan finished within
its time offset.  On any failure the previous committed trajectory keeps
flying, so the vehicle always has a guaranteed stop ahead.

Sensing can downgrade cells near a path that was already flown or committed:
a grazing ray marks a surface cell occupied after earlier rays passed through
it.  Replanning therefore never re-validates the committed trajectory against
the evolved map; instead the admissible-prefix and backup-start scans forgive
classification failures within the inflation radius of the cycle's start, so
the vehicle can always plan its way out of a spot that was clear when it
committed to being there.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .corridor import CorridorError, decompose
from .jps import (PathError, PiecewiseLinearPath, SearchGrid, _merge_collinear,
                  _snap_goal, plan_path, repair_path, sphere_clip,
                  split_long_segments, truncate_segments)
from .mapping import VoxelState
from .miqp import (DynamicLimits, FixedState, FreePositionRest, MiqpProblem,
                   SolverError, compute_dt_heuristic, factor_line_search)
from .trajectory import KNOT_TOL, FullState, Trajectory, rest_trajectory

# stop-in-place corridors still need a non-degenerate segment
EPS_SEGMENT = 1e-3


@dataclass(frozen=True)
class PlannerConfig:
    """Tuning knobs for the replanning loop."""

    goal: np.ndarray
    limits: DynamicLimits
    alpha: float = 1.25          # start-offset multiplier, >= 1
    beta: float = 2.0            # backup-offset multiplier, >= 1
    gamma: float = 0.5           # factor window below the previous factor
    gamma_prime: float = 2.0     # factor window above the previous factor
    factor_step: float = 0.1
    sphere_radius: float = 6.5   # planning-horizon sphere around A
    l_max: float = 2.5           # max corridor segment length
    p_max: int = 2               # max polyhedra per fast trajectory
    n_whole: int = 10
    n_safe: int = 7
    conservative: bool = False   # restrict the fast trajectory to known-free
    halfwidths: tuple = (2.0, 2.0, 1.0)
    goal_tol: float | None = None   # default: 2 * map resolution
    goal_speed: float = 0.05
    budget_mode: str = "virtual"    # "virtual" or "wall"
    virtual_budget: float = 0.08    # stand-in replan duration, seconds
    node_limit: int = 20000

    def __post_init__(self):
        object.__setattr__(self, "goal",
                           np.asarray(self.goal, dtype=float).reshape(3))
        if self.alpha < 1.0 or self.beta < 1.0:
            raise ValueError("offset multipliers must be >= 1")
        if self.budget_mode not in ("virtual", "wall"):
            raise ValueError("budget_mode must be 'virtual' or 'wall'")
        if self.sphere_radius <= 0 or self.l_max <= 0:
            raise ValueError("sphere_radius and l_max must be positive")
        if self.p_max < 1 or self.n_whole < 1 or self.n_safe < 1:
            raise ValueError("p_max, n_whole, n_safe must be >= 1")


@dataclass(frozen=True)
class PlannerState:
    """Everything carried from one replan to the next."""

    committed: Trajectory
    k: int = 0
    jps_prev: PiecewiseLinearPath | None = None
    f_whole: float = 1.0
    f_safe: float = 1.0
    dt_prev: float = 0.0    # duration of the previous replan, seconds

    @classmethod
    def initial(cls, x, cfg: PlannerConfig, t0: float = 0.0) -> "PlannerState":
        """Parked at x.  In virtual-budget mode dt_prev starts at the budget
        so the very first cycle already has a positive offset to plan into."""
        dt0 = cfg.virtual_budget if cfg.budget_mode == "virtual" else 0.0
        return cls(committed=rest_trajectory(x, t0=t0), dt_prev=dt0)


@dataclass
class ReplanEvent:
    """One row of the replan log."""

    k: int
    t: float
    delta: float            # start offset delta_t = alpha * dt_prev
    direction: str          # "a" fresh path, "b" repaired previous, "" none
    j_a: float
    j_b: float
    f_whole: float
    f_safe: float
    committed: bool
    reason: str
    duration: float         # budgeted replan duration (virtual or wall)
    jps_ms: float
    corridor_ms: float
    whole_ms: float
    safe_ms: float
    total_ms: float

    FIELDS = ("k", "t", "delta", "direction", "j_a", "j_b", "f_whole",
              "f_safe", "committed", "reason", "duration", "jps_ms",
              "corridor_ms", "whole_ms", "safe_ms", "total_ms")

    def as_row(self):
        return [getattr(self, name) for name in self.FIELDS]


# -- elementary operations --------------------------------------------------

def select_point_A(state: PlannerState, t_now: float, alpha: float):
    """Start state for the next pair of trajectories.

    Sits alpha * dt_prev ahead of now on the committed trajectory.  The time
    may run past the committed end: the vehicle is parked at the terminal
    rest state by then, which is exactly the state returned for such times.
    Returns (full state, absolute time).
    """
    t_a = max(t_now + alpha * state.dt_prev, state.committed.t0)
    return state.committed.state_at(t_a), t_a


def project_goal(vmap, g_term, a) -> np.ndarray:
    """Goal pulled inside the map.

    If g_term is already inside it is returned unchanged; otherwise the
    segment a -> g_term is intersected with the map box and the crossing is
    pulled inward by one voxel along the ray.
    """
    g = np.asarray(g_term, dtype=float).reshape(3)
    a = np.asarray(a, dtype=float).reshape(3)
    if vmap.is_inside(g):
        return g.copy()
    d = g - a
    dist = float(np.linalg.norm(d))
    if dist < 1e-12:
        return a.copy()
    lo, hi = vmap.lower, vmap.upper
    t_exit = np.inf
    for i in range(3):
        if d[i] > 1e-12:
            t_exit = min(t_exit, (hi[i] - a[i]) / d[i])
        elif d[i] < -1e-12:
            t_exit = min(t_exit, (lo[i] - a[i]) / d[i])
    if not np.isfinite(t_exit):
        return a.copy()
    s = max(t_exit * dist - vmap.resolution, 0.0)
    return a + (d / dist) * s


def search_grid(vmap) -> SearchGrid:
    """Traversability for the geometric planner: everything not occupied.

    Unknown cells stay traversable so the path can suggest routes beyond the
    sensing frontier; whether the trajectory may actually enter them is
    decided later by the corridor's excluded set.
    """
    occ, _ = vmap.inflated_masks(vmap.inflation_radius)
    return SearchGrid(~occ, vmap.lower, vmap.resolution)


def _plan_from(grid: SearchGrid, start, goal) -> PiecewiseLinearPath:
    """plan_path with a start fallback: if the start cell is blocked, snap to
    the nearest traversable center within three cells and prepend the start."""
    start = np.asarray(start, dtype=float).reshape(3)
    cell = grid.cell_of(start)
    if cell is not None and grid.is_traversable(cell):
        return plan_path(grid, start, goal)
    snapped = _snap_goal(grid, start, 3.0 * grid.resolution)
    path = plan_path(grid, grid.center(snapped), goal)
    return PiecewiseLinearPath(np.vstack([start[None, :], path.vertices]))


def _path_in_grid(grid: SearchGrid, path: PiecewiseLinearPath,
                  skip: float) -> bool:
    """Every sample past `skip` arc length lies in a traversable cell.

    The leading `skip` mirrors the start-snap allowance of a fresh search,
    whose first leg also crosses blocked cells to reach the grid."""
    step = grid.resolution / 2.0
    v = path.vertices
    walked = 0.0
    for i in range(v.shape[0] - 1):
        a, b = v[i], v[i + 1]
        length = float(np.linalg.norm(b - a))
        n = max(int(np.ceil(length / step)), 1)
        for t in np.linspace(0.0, 1.0, n + 1):
            if walked + t * length <= skip:
                continue
            cell = grid.cell_of(a + t * (b - a))
            if cell is None or not grid.is_traversable(cell):
                return False
        walked += length
    return True


def choose_direction(grid: SearchGrid, A: FullState, G, jps_prev,
                     cfg: PlannerConfig):
    """Pick between a fresh path and the repaired previous one.

    Each candidate is scored with J = N * dt_lower_bound(A -> sphere exit)
    + remaining length past the exit / vmax.  The repaired path competes
    only while it still runs through traversable cells: the score knows
    nothing about the map, so a stale path through space that has since
    been sensed occupied would otherwise win on length forever.  Ties go
    to the fresh path, and any failure to build the repaired one does too.

    Returns (path, which, J_a, J_b) with J_b = inf when absent.
    """
    jps_a = _plan_from(grid, A.x, G)
    vmax = float(np.min(cfg.limits.vmax))

    def score(path):
        clipped, exit_point = sphere_clip(path, A.x, cfg.sphere_radius)
        target = exit_point if exit_point is not None else path.vertices[-1]
        dt = compute_dt_heuristic(A, target, cfg.limits, cfg.n_whole)
        return cfg.n_whole * dt + (path.length - clipped.length) / vmax

    j_a = score(jps_a)
    j_b = np.inf
    jps_b = None
    if jps_prev is not None:
        try:
            # re-rooting prepends a vertex each cycle; simplifying keeps
            # repeated repairs from accreting near-duplicate vertices
            jps_b = _simplify(repair_path(jps_prev, A.x), grid.resolution)
            if _path_in_grid(grid, jps_b, 3.0 * grid.resolution):
                j_b = score(jps_b)
            else:
                jps_b = None
        except (PathError, ValueError):
            jps_b = None
    if jps_b is not None and j_b < j_a:
        return jps_b, "b", j_a, j_b
    return jps_a, "a", j_a, j_b


def _simplify(path: PiecewiseLinearPath, min_len: float) -> PiecewiseLinearPath:
    """Drop interior vertices closer than min_len to their predecessor and
    re-merge collinear runs.  Keeps both endpoints; a short corridor segment
    wastes a whole polyhedron after truncation, so they are worth removing."""
    v = path.vertices
    if v.shape[0] <= 2:
        return path
    out = [v[0]]
    for p in v[1:-1]:
        if np.linalg.norm(p - out[-1]) >= min_len:
            out.append(p)
    if np.linalg.norm(v[-1] - out[-1]) >= min_len or len(out) == 1:
        out.append(v[-1])
    else:
        out[-1] = v[-1]
    return PiecewiseLinearPath(np.array(_merge_collinear(out)))


def _admissible_prefix(vmap, path: PiecewiseLinearPath, excluded,
                       grace: float = 0.0) -> np.ndarray:
    """Vertices of the longest leading portion of path whose samples never
    classify into `excluded`.  Cuts mid-segment at resolution/4 granularity;
    may return a single vertex when the path is blocked immediately.

    Samples within `grace` arc length of the path start are never treated as
    blocked: the start is on the committed trajectory, so its neighbourhood
    was clear when it was committed and cells that degraded since must not
    strand the vehicle there."""
    exc = list(excluded)
    step = vmap.resolution / 4.0
    v = path.vertices
    out = [v[0]]
    walked = 0.0
    for i in range(v.shape[0] - 1):
        a, b = v[i], v[i + 1]
        n = max(int(np.ceil(np.linalg.norm(b - a) / step)), 1)
        ts = np.linspace(0.0, 1.0, n + 1)
        pts = a[None, :] + ts[:, None] * (b - a)[None, :]
        bad = np.isin(vmap.classify_points(pts), exc)
        bad[walked + ts * np.linalg.norm(b - a) <= grace] = False
        walked += float(np.linalg.norm(b - a))
        if not bad.any():
            out.append(b)
            continue
        j = int(np.argmax(bad))
        if j > 0:
            p = pts[j - 1]
            if np.linalg.norm(p - out[-1]) > 1e-9:
                out.append(p)
        break
    return np.array(out)


def _corridor_vertices(verts: np.ndarray) -> np.ndarray:
    """Ensure at least one non-degenerate segment (stop-in-place case)."""
    if verts.shape[0] >= 2:
        return verts
    eps = np.array([EPS_SEGMENT, 0.0, 0.0])
    return np.vstack([verts[0], verts[0] + eps])


def _stop_time_bound(state: FullState, limits: DynamicLimits) -> float:
    """Lower bound on the time needed to bring state to rest."""
    return float(np.max(np.abs(state.v) / limits.amax)
                 + np.max(np.abs(state.a) / limits.jmax))


def build_whole(vmap, jps_k: PiecewiseLinearPath, A: FullState,
                cfg: PlannerConfig, f_prev: float, times: dict):
    """Fast trajectory from A along jps_k, inside the planning sphere.

    The path is clipped to the sphere, clipped again to the portion whose
    samples avoid the excluded states (occupied, plus unknown in conservative
    mode), split so no segment exceeds l_max, and truncated to p_max
    segments.  The trajectory ends at rest on the processed path's last
    vertex.  Returns (solution, f_worked, processed path).
    """
    clipped, _ = sphere_clip(jps_k, A.x, cfg.sphere_radius)
    clipped = _simplify(clipped, vmap.resolution)
    if cfg.conservative:
        excluded = (VoxelState.OCCUPIED, VoxelState.UNKNOWN)
    else:
        excluded = (VoxelState.OCCUPIED,)
    pre = PiecewiseLinearPath(_admissible_prefix(vmap, clipped, excluded,
                                                 vmap.inflation_radius))
    pre = split_long_segments(pre, cfg.l_max)
    pre = truncate_segments(pre, cfg.p_max)
    target = pre.vertices[-1]
    verts = _corridor_vertices(pre.vertices)

    t0 = time.perf_counter()
    corridor = decompose(vmap, verts, set(excluded), vmap.inflation_radius,
                         cfg.halfwidths)
    times["corridor"] = times.get("corridor", 0.0) + (time.perf_counter() - t0)
    problem = MiqpProblem(A, FixedState(FullState.rest(target)),
                          corridor.polyhedra, cfg.n_whole, 1.0, cfg.limits)
    t0 = time.perf_counter()
    sol, f = factor_line_search(problem, target, f_prev, cfg.gamma,
                                cfg.gamma_prime, cfg.factor_step,
                                node_limit=cfg.node_limit,
                                base_floor=_stop_time_bound(A, cfg.limits))
    times["whole"] = times.get("whole", 0.0) + (time.perf_counter() - t0)
    return sol, f, PiecewiseLinearPath(verts)


def _sample_window(traj: Trajectory, t_lo: float, t_hi: float, spacing: float,
                   limits: DynamicLimits):
    """Sample times/positions so consecutive points are at most `spacing`
    apart in space, assuming speed stays within the limits."""
    speed = np.sqrt(3.0) * float(np.max(limits.vmax))
    n = max(int(np.ceil((t_hi - t_lo) * speed / spacing)), 1)
    ts = np.linspace(t_lo, t_hi, n + 1)
    pts = np.array([traj.state_at(t).x for t in ts])
    return ts, pts


def build_safe(vmap, whole: Trajectory, jps_in: PiecewiseLinearPath,
               t_a: float, cfg: PlannerConfig, f_prev: float, dt_prev: float,
               times: dict):
    """Braking backup starting on the fast trajectory, ending at rest in
    known-free space.

    The start R sits beta * dt_prev past A, pulled back along the fast
    trajectory when the sampled window leaves known-free space: first to the
    end of its contiguous known-free run, then further until the free run
    ahead of R covers the stopping distance at R's speed, since a braking
    maneuver needs that much room to stay known-free.  Samples within the
    inflation radius of A count as free regardless of classification, so a
    cell that degraded after the vehicle committed to passing it cannot pin
    R against A forever.  The corridor follows the known-free part of the
    path ahead of R with both occupied and unknown space excluded; the
    terminal condition only pins velocity and acceleration to zero, the stop
    position is free.

    Returns (solution, t_R, f_worked).
    """
    t_r = min(t_a + cfg.beta * dt_prev, whole.end_time)
    ts, pts = _sample_window(whole, t_a, t_r, vmap.resolution / 4.0,
                             cfg.limits)
    free = vmap.classify_points(pts) == VoxelState.FREE
    steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(steps)])
    free[arc <= vmap.inflation_radius] = True
    if free.all():
        run_end = len(free) - 1
    else:
        run_end = int(np.argmin(free)) - 1
    idx = run_end
    if run_end < len(free) - 1:
        a_lo = float(np.min(cfg.limits.amax))
        j_lo = float(np.min(cfg.limits.jmax))
        while idx > 0:
            v = float(np.linalg.norm(whole.state_at(float(ts[idx])).v))
            room = v * v / (2.0 * a_lo) + v * a_lo / (2.0 * j_lo)
            if arc[run_end] - arc[idx] >= room:
                break
            idx -= 1
    t_r = float(ts[idx])
    R = whole.state_at(t_r)

    s_r, _ = jps_in.closest(R.x)
    tail = jps_in.tail_from(s_r)
    verts = [R.x]
    for v in tail.vertices:
        if np.linalg.norm(v - verts[-1]) > 1e-9:
            verts.append(v)
    path = _simplify(PiecewiseLinearPath(np.array(verts)), vmap.resolution)
    excluded = (VoxelState.OCCUPIED, VoxelState.UNKNOWN)
    prefix = _admissible_prefix(vmap, path, excluded, vmap.inflation_radius)
    target = prefix[-1]
    verts = _corridor_vertices(prefix)

    t0 = time.perf_counter()
    corridor = decompose(vmap, verts, set(excluded), vmap.inflation_radius,
                         cfg.halfwidths)
    times["corridor"] = times.get("corridor", 0.0) + (time.perf_counter() - t0)

    problem = MiqpProblem(R, FreePositionRest(), corridor.polyhedra,
                          cfg.n_safe, 1.0, cfg.limits)
    t0 = time.perf_counter()
    sol, f = factor_line_search(problem, target, f_prev, cfg.gamma,
                                cfg.gamma_prime, cfg.factor_step,
                                node_limit=cfg.node_limit,
                                base_floor=_stop_time_bound(R, cfg.limits))
    times["safe"] = times.get("safe", 0.0) + (time.perf_counter() - t0)
    return sol, t_r, f


# -- the replanning cycle ----------------------------------------------------

def replan(state: PlannerState, vmap, t_now: float, cfg: PlannerConfig):
    """One replanning cycle against an immutable map snapshot.

    Returns (new state, event).  The committed trajectory is replaced only
    when every check passes; every failure leaves it untouched and is
    recorded in the event's reason.
    """
    wall0 = time.perf_counter()
    times: dict = {}

    def settle(committed=None, jps_prev=None, f_whole=None, f_safe=None,
               reason="", direction="", j_a=np.nan, j_b=np.nan, delta=0.0,
               duration=None):
        wall = time.perf_counter() - wall0
        if duration is None:
            duration = cfg.virtual_budget if cfg.budget_mode == "virtual" \
                else wall
        new_state = replace(
            state,
            k=state.k + 1,
            dt_prev=duration,
            committed=state.committed if committed is None else committed,
            jps_prev=state.jps_prev if jps_prev is None else jps_prev,
            f_whole=state.f_whole if f_whole is None else f_whole,
            f_safe=state.f_safe if f_safe is None else f_safe,
        )
        event = ReplanEvent(
            k=state.k, t=t_now, delta=delta, direction=direction,
            j_a=float(j_a), j_b=float(j_b),
            f_whole=new_state.f_whole, f_safe=new_state.f_safe,
            committed=committed is not None, reason=reason,
            duration=duration,
            jps_ms=times.get("jps", 0.0) * 1e3,
            corridor_ms=times.get("corridor", 0.0) * 1e3,
            whole_ms=times.get("whole", 0.0) * 1e3,
            safe_ms=times.get("safe", 0.0) * 1e3,
            total_ms=wall * 1e3)
        return new_state, event

    L = state.committed.state_at(t_now)
    goal_tol = 2.0 * vmap.resolution if cfg.goal_tol is None else cfg.goal_tol
    if (np.linalg.norm(L.x - cfg.goal) <= goal_tol
            and np.linalg.norm(L.v) <= cfg.goal_speed):
        return settle(reason="goal")

    A, t_a = select_point_A(state, t_now, cfg.alpha)
    delta = t_a - t_now
    G = project_goal(vmap, cfg.goal, A.x)
    grid = search_grid(vmap)

    t0 = time.perf_counter()
    try:
        jps_k, which, j_a, j_b = choose_direction(grid, A, G,
                                                  state.jps_prev, cfg)
    except PathError as exc:
        times["jps"] = time.perf_counter() - t0
        return settle(reason=f"no-path: {exc}", delta=delta)
    times["jps"] = time.perf_counter() - t0

    common = dict(direction=which, j_a=j_a, j_b=j_b, delta=delta,
                  jps_prev=jps_k)
    try:
        whole_sol, f_w, jps_in = build_whole(vmap, jps_k, A, cfg,
                                             state.f_whole, times)
    except (SolverError, CorridorError) as exc:
        return settle(reason=f"whole: {type(exc).__name__}", **common)

    whole = Trajectory(list(whole_sol.trajectory.intervals), t_a)
    try:
        safe_sol, t_r, f_s = build_safe(vmap, whole, jps_in, t_a, cfg,
                                        state.f_safe, state.dt_prev, times)
    except (SolverError, CorridorError) as exc:
        return settle(reason=f"safe: {type(exc).__name__}", f_whole=f_w,
                      **common)

    safe = Trajectory(list(safe_sol.trajectory.intervals), t_r)
    head = state.committed
    if t_a > head.end_time + KNOT_TOL:
        # parked past the committed end: hold the rest state until A
        hold = rest_trajectory(A.x, head.end_time, t_a - head.end_time)
        head = head.splice(head.end_time, hold)
    candidate = head.splice(t_a, whole.splice(t_r, safe))

    # the piece flown while unknown space may still hide obstacles
    _, pts = _sample_window(whole, t_a, t_r, vmap.resolution / 4.0, cfg.limits)
    if np.any(vmap.classify_points(pts) == VoxelState.UNKNOWN):
        return settle(reason="unknown-on-a-r", f_whole=f_w, f_safe=f_s,
                      **common)

    # the stop point must sit solidly in known-free space.  The one excuse
    # is a short crawl out of a spot whose cells degraded after commit:
    # still near A and with the stop's own cell observed free, so chained
    # crawls can never ratchet into an occupied or unobserved cell.
    # Everything before the stop is kept clear by the corridors.
    term = candidate.terminal_state().x
    if vmap.classify_inflated(term) != VoxelState.FREE:
        crawl = (np.linalg.norm(term - A.x) <= vmap.inflation_radius
                 and vmap.classify_points(term[None, :], 0.0)[0]
                 == VoxelState.FREE)
        if not crawl:
            return settle(reason="terminal-not-free", f_whole=f_w, f_safe=f_s,
                          **common)

    duration = cfg.virtual_budget if cfg.budget_mode == "virtual" \
        else time.perf_counter() - wall0
    if duration > delta:
        return settle(reason="over-budget", f_whole=f_w, f_safe=f_s,
                      duration=duration, **common)

    return settle(committed=candidate, f_whole=f_w, f_safe=f_s,
                  reason="commit", duration=duration, **common)
