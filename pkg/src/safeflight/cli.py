"""Command line interface: fly one mission and write its logs."""

from __future__ import annotations

import argparse
from pathlib import Path

from .miqp import DynamicLimits
from .mission import SimConfig, run_mission, write_outputs
from .planner import PlannerConfig
from .worlds import generate_bugtrap, generate_forest, load_world, save_world


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="safeflight",
        description="Receding-horizon flight through unknown cluttered worlds")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="fly one mission and write logs")
    p.add_argument("--world", choices=("forest", "bugtrap", "file"),
                   default="forest", help="world kind (default forest)")
    p.add_argument("--world-file", type=Path,
                   help="world JSON, required with --world file")
    p.add_argument("--seed", type=int, default=0, help="forest seed")
    p.add_argument("--extent", type=float, default=20.0,
                   help="arena side length in meters")
    p.add_argument("--density", type=float, default=0.1,
                   help="forest obstacles per square meter")
    p.add_argument("--opening", type=float, default=2.0,
                   help="bugtrap mouth width in meters")
    p.add_argument("--trap-size", type=float, default=8.0,
                   help="bugtrap enclosure side length in meters")
    p.add_argument("--vmax", type=float, default=5.0)
    p.add_argument("--amax", type=float, default=5.0)
    p.add_argument("--jmax", type=float, default=8.0)
    p.add_argument("--n-whole", type=int, default=10,
                   help="spline intervals in the fast trajectory")
    p.add_argument("--n-safe", type=int, default=7,
                   help="spline intervals in the backup trajectory")
    p.add_argument("--pmax", type=int, default=2,
                   help="corridor polyhedra available to the solver")
    p.add_argument("--alpha", type=float, default=1.25,
                   help="replan start offset multiplier")
    p.add_argument("--beta", type=float, default=2.0,
                   help="backup branch-point offset multiplier")
    p.add_argument("--mode", choices=("faster", "conservative"),
                   default="faster",
                   help="conservative keeps the fast trajectory in known-free space")
    p.add_argument("--budget", choices=("virtual", "wall"), default="virtual",
                   help="virtual gives deterministic commit decisions, "
                        "wall measures real replan latency")
    p.add_argument("--rays", type=int, default=1000,
                   help="sensor rays per frame")
    p.add_argument("--tick", type=float, default=0.02,
                   help="simulation step in seconds")
    p.add_argument("--replan-period", type=float, default=0.1)
    p.add_argument("--sensor-radius", type=float, default=6.0)
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--resolution", type=float, default=0.25,
                   help="map voxel size in meters")
    p.add_argument("--inflation", type=float, default=0.3,
                   help="obstacle inflation radius in meters")
    p.add_argument("--out", type=Path, default=Path("out"),
                   help="output directory")
    return parser


def make_world(args):
    if args.world == "forest":
        return generate_forest(extent=args.extent, density=args.density,
                               seed=args.seed)
    if args.world == "bugtrap":
        return generate_bugtrap(opening_width=args.opening,
                                trap_size=args.trap_size, extent=args.extent)
    if args.world_file is None:
        raise SystemExit("--world file requires --world-file PATH")
    return load_world(args.world_file)


def cmd_run(args) -> int:
    world = make_world(args)
    cfg = PlannerConfig(
        goal=world.goal,
        limits=DynamicLimits(args.vmax, args.amax, args.jmax),
        alpha=args.alpha, beta=args.beta,
        p_max=args.pmax, n_whole=args.n_whole, n_safe=args.n_safe,
        conservative=args.mode == "conservative",
        budget_mode=args.budget)
    sim = SimConfig(
        tick=args.tick, replan_period=args.replan_period,
        sensor_radius=args.sensor_radius, rays=args.rays,
        timeout=args.timeout, resolution=args.resolution,
        inflation_radius=args.inflation)

    result = run_mission(world, cfg, sim)
    paths = write_outputs(result, args.out)
    save_world(world, Path(args.out) / "world.json")

    m = result.metrics
    print(f"{m.status}: {m.total_distance:.2f} m in {m.total_time:.2f} s, "
          f"{m.commit_count}/{m.replan_count} replans committed")
    print(f"outputs in {Path(args.out).resolve()}")
    return 0 if m.success else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    return 2


if __name__ == "__main__":
    raise SystemExit(main())
