"""Mixed-integer trajectory optimization over convex corridors.

The continuous core is a least-distance problem: with one constant jerk
vector per interval, every knot state and every Bezier control point is
affine in the stacked jerks z, so minimizing total squared jerk subject to
terminal conditions, knot-state boxes and corridor containment is

    min ||z||^2   s.t.   Ceq z = beq,  Cin z >= bin.

That is solved with a dual active-set method: start from the unconstrained
optimum z = 0, repeatedly add the most violated constraint to the active
set, taking partial steps and dropping blocking constraints when a
multiplier would go negative.  Equality rows enter first and are never
dropped.  On exit the iterate satisfies the KKT conditions, which for a
convex problem certifies the optimum.

Interval-to-polyhedron assignment is the integer part.  A best-first
branch-and-bound relaxes containment for unassigned intervals (a pure
lower bound), accepts the relaxed solution as an incumbent when every
interval already fits some allowed polyhedron, and otherwise branches on
the assignment with the smallest positive violation, fixing it in one
child and forbidding it in the other.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, replace

import numpy as np

from .trajectory import FullState, Trajectory, from_jerk_sequence

FEAS_TOL = 1e-7
ADMIT_TOL = 1e-9
DEP_TOL = 1e-10


class SolverError(Exception):
    pass


class InfeasibleProblem(SolverError):
    """No jerk sequence satisfies the constraints."""


class NumericalFailure(SolverError):
    """The active-set iteration failed to converge."""


class TimeBudgetExceeded(SolverError):
    """Branch-and-bound ran out of wall-clock budget."""


class NodeLimitExceeded(SolverError):
    """Branch-and-bound ran out of nodes."""


def _limit_vec(v, name):
    a = np.asarray(v, dtype=float)
    out = np.full(3, float(a)) if a.ndim == 0 else a.reshape(3).copy()
    if np.any(out <= 0):
        raise ValueError(f"{name} must be positive")
    return out


@dataclass(frozen=True)
class DynamicLimits:
    """Per-axis symmetric bounds on velocity, acceleration and jerk."""

    vmax: np.ndarray
    amax: np.ndarray
    jmax: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vmax", _limit_vec(self.vmax, "vmax"))
        object.__setattr__(self, "amax", _limit_vec(self.amax, "amax"))
        object.__setattr__(self, "jmax", _limit_vec(self.jmax, "jmax"))


@dataclass(frozen=True)
class FixedState:
    """Terminal condition: reach this exact state."""

    state: FullState


@dataclass(frozen=True)
class FreePositionRest:
    """Terminal condition: stop (zero velocity and acceleration), position
    wherever the corridor allows."""


def min_total_time(p0, p1, limits: DynamicLimits) -> float:
    """Lower-bound-flavored total time to cover p1 - p0 axis by axis.

    Per axis the largest of: distance at top speed, a full constant-input
    bang of acceleration, and one of jerk.  The overall heuristic is the
    max over the nine values.
    """
    d = np.abs(np.asarray(p1, dtype=float) - np.asarray(p0, dtype=float))
    t_v = d / limits.vmax
    t_a = np.sqrt(2.0 * d / limits.amax)
    t_j = np.cbrt(6.0 * d / limits.jmax)
    return float(np.max(np.concatenate([t_v, t_a, t_j])))


def compute_dt_heuristic(x_init, x_target, limits: DynamicLimits,
                         n_intervals: int, factor: float = 1.0) -> float:
    """Per-interval duration from the constant-input time heuristic.

    dt = factor * min_total_time / n_intervals.  With factor 1 this is a
    lower bound on any feasible dt; callers scale factor up until the
    trajectory optimization succeeds.  x_init may be a FullState or a
    point; a zero displacement gives dt 0.
    """
    if factor < 1.0:
        raise ValueError("factor must be >= 1")
    if n_intervals < 1:
        raise ValueError("need at least one interval")
    p0 = getattr(x_init, "x", x_init)
    return factor * min_total_time(p0, x_target, limits) / n_intervals


@dataclass(frozen=True)
class MiqpProblem:
    initial: FullState
    terminal: object
    polyhedra: tuple
    n_intervals: int
    dt: float
    limits: DynamicLimits

    def __post_init__(self):
        if self.n_intervals < 1:
            raise ValueError("need at least one interval")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not isinstance(self.terminal, (FixedState, FreePositionRest)):
            raise TypeError("terminal must be FixedState or FreePositionRest")
        object.__setattr__(self, "polyhedra", tuple(self.polyhedra))
        if not self.polyhedra:
            raise ValueError("need at least one polyhedron")


@dataclass(frozen=True)
class MiqpSolution:
    """Optimal jerks plus the interval-to-polyhedron memberships.

    binaries is an (N, P) boolean mask; binaries[k, p] means interval k's
    control points were constrained inside polyhedron p.  Every row has at
    least one True.
    """

    jerks: np.ndarray
    objective: float
    binaries: np.ndarray
    trajectory: Trajectory
    nodes: int

    @property
    def assignment(self) -> tuple:
        """One containing polyhedron index per interval (first active)."""
        return tuple(int(np.flatnonzero(row)[0]) for row in self.binaries)


# -- affine knot-state maps -------------------------------------------------


def _knot_maps(problem: MiqpProblem):
    """Affine maps (P, Q) with state_n = P[n] + Q[n] @ z for all knots."""
    n = problem.n_intervals
    m = 3 * n
    dt = problem.dt
    Px = np.zeros((n + 1, 3)); Qx = np.zeros((n + 1, 3, m))
    Pv = np.zeros((n + 1, 3)); Qv = np.zeros((n + 1, 3, m))
    Pa = np.zeros((n + 1, 3)); Qa = np.zeros((n + 1, 3, m))
    Px[0], Pv[0], Pa[0] = problem.initial.x, problem.initial.v, problem.initial.a
    eye = np.eye(3)
    for k in range(n):
        c = slice(3 * k, 3 * k + 3)
        Px[k + 1] = Px[k] + dt * Pv[k] + dt * dt / 2 * Pa[k]
        Qx[k + 1] = Qx[k] + dt * Qv[k] + dt * dt / 2 * Qa[k]
        Qx[k + 1][:, c] += dt ** 3 / 6 * eye
        Pv[k + 1] = Pv[k] + dt * Pa[k]
        Qv[k + 1] = Qv[k] + dt * Qa[k]
        Qv[k + 1][:, c] += dt * dt / 2 * eye
        Pa[k + 1] = Pa[k]
        Qa[k + 1] = Qa[k].copy()
        Qa[k + 1][:, c] += dt * eye
    return Px, Qx, Pv, Qv, Pa, Qa


def _control_point_maps(problem: MiqpProblem, maps):
    """Affine maps of the four Bezier control points of each interval."""
    Px, Qx, Pv, Qv, Pa, Qa = maps
    dt = problem.dt
    out = []
    for k in range(problem.n_intervals):
        cp = [
            (Px[k], Qx[k]),
            (Px[k] + dt / 3 * Pv[k], Qx[k] + dt / 3 * Qv[k]),
            (Px[k] + 2 * dt / 3 * Pv[k] + dt * dt / 6 * Pa[k],
             Qx[k] + 2 * dt / 3 * Qv[k] + dt * dt / 6 * Qa[k]),
            (Px[k + 1], Qx[k + 1]),
        ]
        out.append(cp)
    return out


# -- constraint assembly ----------------------------------------------------


def _normalize_rows(C, b):
    """Scale rows to unit norm; resolve rows with no z dependence.

    Returns (C, b, feasible): constant inequality rows are checked and
    dropped, a violated one makes the whole system infeasible.
    """
    lens = np.linalg.norm(C, axis=1)
    const = lens < 1e-12
    if np.any(b[const] > FEAS_TOL):
        return None, None, False
    C, b, lens = C[~const], b[~const], lens[~const]
    return C / lens[:, None], b / lens, True


def _assemble(problem: MiqpProblem, maps, cp_maps, active):
    """Equality and inequality rows (Ceq z = beq, Cin z >= bin).

    active[k] is the tuple of polyhedron indices whose containment rows
    apply to interval k; an empty tuple leaves the interval unconstrained
    (relaxation).
    """
    n = problem.n_intervals
    m = 3 * n
    Px, Qx, Pv, Qv, Pa, Qa = maps
    lim = problem.limits

    if isinstance(problem.terminal, FixedState):
        tgt = problem.terminal.state
        Ceq = np.vstack([Qx[n], Qv[n], Qa[n]])
        beq = np.concatenate([tgt.x - Px[n], tgt.v - Pv[n], tgt.a - Pa[n]])
    else:
        Ceq = np.vstack([Qv[n], Qa[n]])
        beq = np.concatenate([-Pv[n], -Pa[n]])
    lens = np.linalg.norm(Ceq, axis=1)
    const = lens < 1e-12
    if np.any(np.abs(beq[const]) > FEAS_TOL):
        return None
    Ceq, beq, lens = Ceq[~const], beq[~const], lens[~const]
    Ceq, beq = Ceq / lens[:, None], beq / lens

    rows = []
    rhs = []
    # knot boxes: +-v <= vmax, +-a <= amax, rewritten as >=
    for k in range(1, n + 1):
        rows += [-Qv[k], Qv[k], -Qa[k], Qa[k]]
        rhs += [Pv[k] - lim.vmax, -Pv[k] - lim.vmax,
                Pa[k] - lim.amax, -Pa[k] - lim.amax]
    # jerk boxes act on z directly
    eye = np.eye(m)
    jm = np.tile(lim.jmax, n)
    rows += [-eye, eye]
    rhs += [-jm, -jm]
    # containment: A cp <= b for all four control points
    for k in range(n):
        for p in active[k]:
            poly = problem.polyhedra[p]
            for P, Q in cp_maps[k]:
                rows.append(-poly.normals @ Q)
                rhs.append(poly.normals @ P - poly.offsets)
    Cin = np.vstack(rows)
    bin_ = np.concatenate(rhs)
    Cin, bin_, ok = _normalize_rows(Cin, bin_)
    if not ok:
        return None
    return Ceq, beq, Cin, bin_


# -- dual active-set least-distance solver ----------------------------------


def _solve_ldp(Ceq, beq, Cin, bin_, max_iter=2000):
    """min ||z||^2 s.t. Ceq z = beq, Cin z >= bin_.

    Dual active-set iteration on unit-norm rows.  Returns (z, active) where
    active carries the final active set and multipliers (2z = rows.T @ lam,
    inequality lam >= 0: the KKT certificate).  Raises InfeasibleProblem or
    NumericalFailure.
    """
    m = Ceq.shape[1] if Ceq.size else Cin.shape[1]
    z = np.zeros(m)
    act_rows = np.empty((0, m))
    act_eq = np.empty(0, dtype=bool)
    act_idx = []          # inequality row index, -1 for equality rows
    lam = np.empty(0)
    pending = list(range(Ceq.shape[0]))

    def finish():
        if Ceq.shape[0]:
            drift = float(np.max(np.abs(Ceq @ z - beq)))
            if drift > 1e-6:
                raise NumericalFailure(f"equality drift {drift:.2e}")
        return z, {"rows": act_rows, "eq": act_eq, "lam": lam,
                   "idx": act_idx}

    for _ in range(max_iter):
        # next constraint to enforce: equalities first, then most violated
        if pending:
            i = pending.pop(0)
            c, b = Ceq[i], beq[i]
            s = float(c @ z - b)
            if s > 0:            # flip so the add step is one-sided
                c, b, s = -c, -b, -s
            eq = True
            idx = -1
        else:
            if Cin.shape[0] == 0:
                return finish()
            slacks = Cin @ z - bin_
            taken = [j for j in act_idx if j >= 0]
            if taken:
                slacks[taken] = np.inf
            i = int(np.argmin(slacks))
            s = float(slacks[i])
            if s >= -FEAS_TOL:
                return finish()
            c, b = Cin[i], bin_[i]
            eq = False
            idx = i

        mu = 0.0    # multiplier of the constraint being added
        while True:
            if act_rows.shape[0]:
                # least squares on N^T itself: conditioning is not squared
                # the way the normal-equation form would square it
                w = np.linalg.lstsq(act_rows.T, c, rcond=None)[0]
                xi = (c - act_rows.T @ w) / 2.0
            else:
                w = np.empty(0)
                xi = c / 2.0
            denom = float(c @ xi)    # slack gained per unit step
            if denom <= DEP_TOL:
                # row (numerically) dependent on the active set: any primal
                # step along xi is noise, move in the dual only
                xi = np.zeros_like(xi)
                denom = 0.0
                t2 = np.inf
            else:
                t2 = -s / denom
            # dual blocking: active inequality multipliers must stay >= 0
            t1 = np.inf
            drop = -1
            for j in range(len(lam)):
                if not act_eq[j] and w[j] > 1e-12:
                    r = lam[j] / w[j]
                    if r < t1:
                        t1, drop = r, j
            t = min(t1, t2)
            if not np.isfinite(t):
                if abs(s) <= FEAS_TOL:
                    break    # dependent row, already satisfied
                raise InfeasibleProblem("constraint unreachable")
            z = z + t * xi
            lam = lam - t * w
            s = s + t * denom
            mu += t
            if t2 <= t1:
                act_rows = np.vstack([act_rows, c[None, :]])
                act_eq = np.append(act_eq, eq)
                act_idx.append(idx)
                lam = np.append(lam, mu)
                break
            act_rows = np.delete(act_rows, drop, axis=0)
            act_eq = np.delete(act_eq, drop)
            act_idx.pop(drop)
            lam = np.delete(lam, drop)
    raise NumericalFailure("active-set iteration limit")


# -- fixed-assignment solve and branch-and-bound ----------------------------


def _build_trajectory(problem, z, t0=0.0):
    jerks = z.reshape(problem.n_intervals, 3)
    return from_jerk_sequence(problem.initial, jerks, problem.dt, t0=t0)


def _check_initial(problem: MiqpProblem):
    # the first knot is fixed data; reject it like any other violated knot
    lim = problem.limits
    x0 = problem.initial
    if (np.any(np.abs(x0.v) > lim.vmax + 10 * FEAS_TOL)
            or np.any(np.abs(x0.a) > lim.amax + 10 * FEAS_TOL)):
        raise InfeasibleProblem("initial state outside dynamic limits")


def _normalize_binaries(problem: MiqpProblem, binaries):
    """Accept one polyhedron index per interval or an (N, P) boolean mask.

    Returns (active, mask): per-interval index tuples plus the mask form.
    """
    n = problem.n_intervals
    np_ = len(problem.polyhedra)
    arr = np.asarray(binaries)
    if arr.ndim == 2:
        if arr.shape != (n, np_):
            raise ValueError("binaries shape mismatch")
        mask = arr.astype(bool)
        if not mask.any(axis=1).all():
            raise ValueError("every interval needs at least one polyhedron")
        active = [tuple(int(p) for p in np.flatnonzero(row)) for row in mask]
        return active, mask
    idx = [int(a) for a in binaries]
    if len(idx) != n:
        raise ValueError("assignment length mismatch")
    if any(a < 0 or a >= np_ for a in idx):
        raise ValueError("assignment index out of range")
    mask = np.zeros((n, np_), dtype=bool)
    mask[np.arange(n), idx] = True
    return [(a,) for a in idx], mask


def solve_fixed(problem: MiqpProblem, binaries) -> MiqpSolution:
    """Solve with every interval's polyhedron membership chosen up front.

    binaries is either one polyhedron index per interval or an (N, P)
    boolean mask; a row with several True entries pins the interval into
    the intersection.
    """
    active, mask = _normalize_binaries(problem, binaries)
    _check_initial(problem)
    maps = _knot_maps(problem)
    cp_maps = _control_point_maps(problem, maps)
    sys = _assemble(problem, maps, cp_maps, active)
    if sys is None:
        raise InfeasibleProblem("constant constraint row violated")
    z, *_ = _solve_ldp(*sys)
    return MiqpSolution(jerks=z.reshape(-1, 3), objective=float(z @ z),
                        binaries=mask,
                        trajectory=_build_trajectory(problem, z), nodes=1)


def _cp_violations(problem, cp_maps, z):
    """viol[k][p] = worst control-point overshoot of polyhedron p's planes."""
    out = np.empty((problem.n_intervals, len(problem.polyhedra)))
    for k in range(problem.n_intervals):
        pts = np.array([P + Q @ z for P, Q in cp_maps[k]])
        for p, poly in enumerate(problem.polyhedra):
            out[k, p] = float(
                np.max(pts @ poly.normals.T - poly.offsets))
    return out


def solve_miqp(problem: MiqpProblem, time_budget=None,
               node_limit=20000) -> MiqpSolution:
    """Best-first branch-and-bound over interval-polyhedron assignments.

    time_budget (seconds, wall clock) and node_limit bound the search;
    exceeding them raises only when no incumbent exists yet, otherwise the
    incumbent is returned.
    """
    n = problem.n_intervals
    P = len(problem.polyhedra)
    if P == 1:
        return solve_fixed(problem, (0,) * n)
    _check_initial(problem)
    maps = _knot_maps(problem)
    cp_maps = _control_point_maps(problem, maps)

    start = time.perf_counter()
    all_p = tuple(range(P))
    root = tuple(all_p for _ in range(n))
    heap = [(0.0, 0, root)]
    seq = 1
    nodes = 0
    best = None
    best_obj = np.inf

    def relaxed_active(allowed):
        return tuple(a if len(a) == 1 else () for a in allowed)

    while heap:
        bound, _, allowed = heapq.heappop(heap)
        if bound >= best_obj - 1e-12:
            continue
        if nodes >= node_limit:
            if best is not None:
                break
            raise NodeLimitExceeded(f"no solution within {node_limit} nodes")
        if time_budget is not None and time.perf_counter() - start > time_budget:
            if best is not None:
                break
            raise TimeBudgetExceeded(f"no solution within {time_budget}s")
        nodes += 1
        sys = _assemble(problem, maps, cp_maps, relaxed_active(allowed))
        if sys is None:
            continue
        try:
            z, *_ = _solve_ldp(*sys)
        except InfeasibleProblem:
            continue
        obj = float(z @ z)
        if obj >= best_obj - 1e-12:
            continue
        viol = _cp_violations(problem, cp_maps, z)
        # which intervals already sit inside one of their allowed polyhedra?
        # (enforced singletons count as placed regardless of solver slop)
        pick = []
        worst = None
        for k in range(n):
            if len(allowed[k]) == 1:
                pick.append(allowed[k][0])
                continue
            cand = min(allowed[k], key=lambda p: (viol[k, p], p))
            if viol[k, cand] <= ADMIT_TOL:
                pick.append(cand)
                continue
            pick.append(-1)
            for p in allowed[k]:
                v = viol[k, p]
                if v > ADMIT_TOL and (worst is None or (v, k, p) < worst):
                    worst = (v, k, p)
        if worst is None:
            best_obj = obj
            mask = np.zeros((n, P), dtype=bool)
            mask[np.arange(n), pick] = True
            best = MiqpSolution(jerks=z.reshape(-1, 3), objective=obj,
                                binaries=mask,
                                trajectory=_build_trajectory(problem, z),
                                nodes=nodes)
            continue
        _, bk, bp = worst
        fix = tuple((bp,) if k == bk else allowed[k] for k in range(n))
        heapq.heappush(heap, (obj, seq, fix)); seq += 1
        rest = tuple(p for p in allowed[bk] if p != bp)
        if rest:
            forbid = tuple(rest if k == bk else allowed[k] for k in range(n))
            heapq.heappush(heap, (obj, seq, forbid)); seq += 1

    if best is None:
        raise InfeasibleProblem("no assignment admits a feasible trajectory")
    return MiqpSolution(jerks=best.jerks, objective=best.objective,
                        binaries=best.binaries,
                        trajectory=best.trajectory, nodes=nodes)


# -- verification -----------------------------------------------------------


def verify_solution(problem: MiqpProblem, sol: MiqpSolution, tol=1e-6):
    """Independent feasibility audit of a solution.  Returns the worst
    violation per constraint family (negative means slack everywhere)."""
    traj = sol.trajectory
    n = problem.n_intervals
    lim = problem.limits
    report = {}
    knots = [traj.intervals[k].state_at(0.0) for k in range(n)]
    knots.append(traj.intervals[-1].state_at(problem.dt))
    report["velocity"] = max(
        float(np.max(np.abs(s.v) - lim.vmax)) for s in knots)
    report["acceleration"] = max(
        float(np.max(np.abs(s.a) - lim.amax)) for s in knots)
    report["jerk"] = float(np.max(np.abs(sol.jerks) - np.tile(lim.jmax, (n, 1))))
    if isinstance(problem.terminal, FixedState):
        tgt = problem.terminal.state
        report["terminal"] = knots[-1].distance_to(tgt)
    else:
        report["terminal"] = max(float(np.max(np.abs(knots[-1].v))),
                                 float(np.max(np.abs(knots[-1].a))))
    report["continuity"] = max(
        (traj.intervals[k].state_at(problem.dt)
         .distance_to(traj.intervals[k + 1].state_at(0.0))
         for k in range(n - 1)), default=0.0)
    worst = -np.inf
    for k in range(n):
        cps = traj.intervals[k].control_points()
        for p in np.flatnonzero(sol.binaries[k]):
            poly = problem.polyhedra[p]
            worst = max(worst,
                        float(np.max(cps @ poly.normals.T - poly.offsets)))
    report["containment"] = worst
    report["ok"] = (report["continuity"] <= 1e-9
                    and all(v <= tol for v in
                            (report["velocity"], report["acceleration"],
                             report["jerk"], report["terminal"],
                             report["containment"])))
    return report


# -- adaptive horizon scaling -------------------------------------------------


DT_FLOOR = 0.01    # zero-displacement targets still need a positive horizon


def factor_line_search(problem: MiqpProblem, x_target, f_prev: float,
                       gamma: float = 0.5, gamma_prime: float = 2.0,
                       step: float = 0.1, time_budget=None,
                       node_limit=20000, base_floor: float = 0.0):
    """Try increasing time-scale factors until the optimization succeeds.

    Sweeps f over [max(1, f_prev - gamma), f_prev + gamma_prime] on a
    uniform grid, recomputes dt from the constant-input heuristic for each
    f (problem.dt is ignored), and returns (solution, f_worked) for the
    first f whose MIQP solves.  Raises InfeasibleProblem when the whole
    window fails.

    base_floor lifts the heuristic total time, for callers that know a
    better lower bound than the displacement gives; a moving start braking
    to rest nearby needs time even when the displacement is zero.
    """
    if f_prev < 1.0:
        raise ValueError("f_prev must be >= 1")
    if gamma < 0 or gamma_prime < 0 or step <= 0:
        raise ValueError("bad search window")
    lo = max(1.0, f_prev - gamma)
    hi = f_prev + gamma_prime
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    base = max(min_total_time(problem.initial.x, x_target, problem.limits),
               float(base_floor))
    for i in range(count):
        f = lo + i * step
        dt = max(f * base / problem.n_intervals, DT_FLOOR)
        candidate = replace(problem, dt=dt)
        try:
            sol = solve_miqp(candidate, time_budget=time_budget,
                             node_limit=node_limit)
            return sol, f
        except SolverError:
            continue
    raise InfeasibleProblem("no factor in the search window solves")


def describe_problem(problem: MiqpProblem) -> str:
    """Plain-text dump of a problem, for logs and regression fixtures."""
    lim = problem.limits
    lines = [
        f"n_intervals {problem.n_intervals} dt {problem.dt!r}",
        "vmax %s amax %s jmax %s" % (lim.vmax.tolist(), lim.amax.tolist(),
                                     lim.jmax.tolist()),
        "initial x %s v %s a %s" % (problem.initial.x.tolist(),
                                    problem.initial.v.tolist(),
                                    problem.initial.a.tolist()),
    ]
    if isinstance(problem.terminal, FixedState):
        tgt = problem.terminal.state
        lines.append("terminal fixed x %s v %s a %s"
                     % (tgt.x.tolist(), tgt.v.tolist(), tgt.a.tolist()))
    else:
        lines.append("terminal free-position rest")
    lines.append(f"polyhedra {len(problem.polyhedra)}")
    for p, poly in enumerate(problem.polyhedra):
        lines.append(f"[{p}]")
        lines.append(poly.to_text())
    return "\n".join(lines)
