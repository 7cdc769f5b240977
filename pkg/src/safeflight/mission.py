"""Lock-step flight simulation: sense, replan, track, log.

The vehicle tracks the committed trajectory perfectly; all uncertainty in
the problem comes from the map being discovered ray by ray.  Ground truth
is checked analytically every tick, so any planner unsoundness shows up as
a recorded safety violation instead of a silent fly-through.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mapping import VoxelMap
from .planner import PlannerConfig, PlannerState, ReplanEvent, replan
from .sensing import GOLDEN_ANGLE, sense
from .worlds import World


class SafetyViolation(Exception):
    """The vehicle's true position entered an obstacle.  Recorded in the
    run status rather than raised out of the loop."""


@dataclass(frozen=True)
class SimConfig:
    """Simulation harness knobs, separate from the planner's own tuning."""

    tick: float = 0.02            # vehicle/sensor update period, seconds
    replan_period: float = 0.1    # one replan every this many seconds
    sensor_radius: float = 6.0
    rays: int = 1000
    timeout: float = 60.0
    resolution: float = 0.25
    inflation_radius: float = 0.3

    def __post_init__(self):
        if self.tick <= 0 or self.replan_period <= 0:
            raise ValueError("tick and replan_period must be positive")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")


@dataclass
class RunMetrics:
    success: bool
    status: str               # "success", "timeout" or "collision"
    total_distance: float
    total_time: float
    replan_count: int
    commit_count: int
    timing_ms: dict           # stage -> quantiles of wall-clock milliseconds

    def to_dict(self) -> dict:
        return {
            "success": self.success,
            "status": self.status,
            "total_distance": self.total_distance,
            "total_time": self.total_time,
            "replan_count": self.replan_count,
            "commit_count": self.commit_count,
            "timing_ms": self.timing_ms,
        }


@dataclass
class MissionResult:
    metrics: RunMetrics
    events: list
    rows: np.ndarray          # per tick: t, position, velocity, acceleration
    committed_log: list       # committed trajectories in commit order
    world: World
    vmap: VoxelMap
    cfg: PlannerConfig
    sim: SimConfig


def make_map(world: World, sim: SimConfig) -> VoxelMap:
    """Blank map whose box coincides with the arena.

    Space beyond the arena can never be observed, so cells out there would
    stay unknown forever; if they existed the path search would happily
    route through them (under the floor, over the ceiling) toward any goal.
    With the map ending at the arena boundary such routes cannot exist, and
    points outside simply classify unknown.
    """
    dims = np.ceil(world.size / sim.resolution - 1e-9).astype(int)
    return VoxelMap(center=world.center, dims=tuple(dims),
                    resolution=sim.resolution,
                    inflation_radius=sim.inflation_radius)


def _quantiles(events: list, attr: str) -> dict:
    vals = np.array([getattr(ev, attr) for ev in events], dtype=float)
    if len(vals) == 0:
        vals = np.zeros(1)
    return {
        "p50": float(np.percentile(vals, 50)),
        "p75": float(np.percentile(vals, 75)),
        "p90": float(np.percentile(vals, 90)),
        "max": float(vals.max()),
        "mean": float(vals.mean()),
    }


def timing_summary(events: list) -> dict:
    stages = {"jps": "jps_ms", "corridor": "corridor_ms",
              "whole": "whole_ms", "safe": "safe_ms", "total": "total_ms"}
    return {name: _quantiles(events, attr) for name, attr in stages.items()}


def run_mission(world: World, cfg: PlannerConfig,
                sim: SimConfig | None = None) -> MissionResult:
    """Fly the world until the goal, a timeout, or a collision.

    Every tick the vehicle state is read off the committed trajectory, the
    ground truth is checked, and a sensor frame is fused; every
    replan_period the planner runs against a snapshot of the map.  A failed
    replan leaves the previous committed trajectory running, so the vehicle
    brakes to rest on its backup when progress stalls.
    """
    if sim is None:
        sim = SimConfig()
    vmap = make_map(world, sim)
    state = PlannerState.initial(world.start, cfg)
    ticks_per_replan = max(1, int(round(sim.replan_period / sim.tick)))
    n_ticks = int(np.ceil(sim.timeout / sim.tick))
    goal_tol = 2.0 * vmap.resolution if cfg.goal_tol is None else cfg.goal_tol

    events: list[ReplanEvent] = []
    committed_log = []
    rows = []
    status = "timeout"
    prev = None
    dist = 0.0
    t = 0.0

    for i in range(n_ticks + 1):
        t = i * sim.tick
        st = state.committed.state_at(t)
        rows.append([t, *st.x, *st.v, *st.a])
        if prev is not None:
            dist += float(np.linalg.norm(st.x - prev))
        prev = st.x

        if world.occupied(st.x):
            status = "collision"
            break
        if (np.linalg.norm(st.x - cfg.goal) <= goal_tol
                and np.linalg.norm(st.v) <= cfg.goal_speed):
            status = "success"
            break

        sense(world, vmap, st.x, sim.sensor_radius, sim.rays,
              phase=GOLDEN_ANGLE * i)
        if i % ticks_per_replan == 0:
            state, ev = replan(state, vmap.snapshot(), t, cfg)
            events.append(ev)
            if ev.committed:
                committed_log.append(state.committed)

    metrics = RunMetrics(
        success=status == "success",
        status=status,
        total_distance=dist,
        total_time=t,
        replan_count=len(events),
        commit_count=len(committed_log),
        timing_ms=timing_summary(events),
    )
    return MissionResult(metrics=metrics, events=events,
                         rows=np.array(rows, dtype=float),
                         committed_log=committed_log, world=world,
                         vmap=vmap, cfg=cfg, sim=sim)


# -- output files -------------------------------------------------------------

TRAJECTORY_HEADER = "t,x,y,z,vx,vy,vz,ax,ay,az"


def write_outputs(result: MissionResult, out_dir) -> dict:
    """Write metrics.json, trajectory.csv, events.csv, timings.csv, plot.csv.

    Wall-clock timing quantiles go into metrics.json only in wall budget
    mode; in virtual mode they stay out so the file is bit-reproducible for
    a given seed and config.  Raw per-replan wall times are always available
    in timings.csv.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}

    data = result.metrics.to_dict()
    data["goal"] = [float(v) for v in result.cfg.goal]
    data["start"] = [float(v) for v in result.world.start]
    data["final_position"] = [float(v) for v in result.rows[-1, 1:4]]
    data["final_speed"] = float(np.linalg.norm(result.rows[-1, 4:7]))
    data["mode"] = "conservative" if result.cfg.conservative else "faster"
    data["budget_mode"] = result.cfg.budget_mode
    data["seed"] = result.world.seed
    if result.cfg.budget_mode != "wall":
        del data["timing_ms"]
    paths["metrics"] = out / "metrics.json"
    with open(paths["metrics"], "w") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")

    paths["trajectory"] = out / "trajectory.csv"
    with open(paths["trajectory"], "w") as fh:
        fh.write(TRAJECTORY_HEADER + "\n")
        for row in result.rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")

    paths["events"] = out / "events.csv"
    with open(paths["events"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ReplanEvent.FIELDS)
        for ev in result.events:
            writer.writerow(ev.as_row())

    paths["timings"] = out / "timings.csv"
    with open(paths["timings"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "t", "jps_ms", "corridor_ms",
                         "whole_ms", "safe_ms", "total_ms"])
        for ev in result.events:
            writer.writerow([ev.k, ev.t, ev.jps_ms, ev.corridor_ms,
                             ev.whole_ms, ev.safe_ms, ev.total_ms])

    paths["plot"] = out / "plot.csv"
    with open(paths["plot"], "w") as fh:
        fh.write("kind,a,b,c,d\n")
        w = result.world
        fh.write("extent,%r,%r,%r,%r\n" % (w.extent[0, 0], w.extent[0, 1],
                                           w.extent[1, 0], w.extent[1, 1]))
        for box in w.boxes:
            fh.write("box,%r,%r,%r,%r\n" % (box[0, 0], box[0, 1],
                                            box[1, 0], box[1, 1]))
        for cx, cy, r, _, _ in w.cylinders:
            fh.write("cylinder,%r,%r,%r,0.0\n" % (cx, cy, r))
        fh.write("start,%r,%r,%r,0.0\n" % tuple(w.start))
        fh.write("goal,%r,%r,%r,0.0\n" % tuple(w.goal))
        for row in result.rows:
            fh.write("path,%r,%r,%r,0.0\n" % (row[1], row[2], row[3]))

    return paths
