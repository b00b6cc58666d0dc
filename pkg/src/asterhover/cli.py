"""Command line front end.

Subcommands:

* ``gen-asteroid`` synthesizes one random shape model and writes it to disk.
* ``train`` runs the full rollout / update loop from a YAML config.
* ``eval`` scores a checkpoint over one named scenario (or all of them).
* ``scan-debug`` renders a single range image against a shape model.
* ``simulate`` flies one episode and dumps the full trajectory.

Every run writes only into its output directory and echoes the fully
resolved configuration plus the package version there, so results can be
reproduced from the artifacts alone. Runs are deterministic in (seed,
config). Exit codes: 0 success, 2 usage or configuration error, 1 runtime
failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import os
import sys

import numpy as np

from . import __version__
from .config import (
    apply_to_dataclass,
    load_config_file,
    merge_dicts,
    parse_overrides,
    write_resolved_config,
)
from .errors import ConfigurationError, MeshLoadError, SimulationError
from .geometry import AsteroidGenConfig, load_mesh, save_mesh, synthesize_asteroid
from .lidar import SensorConfig, scan
from .env import HoverEnv, policy_net_inputs
from .ppo import TrainConfig, train
from . import nn
from .evaluation import (
    SUMMARY_COLUMNS,
    get_scenario,
    load_policy,
    run_monte_carlo,
    scenario_presets,
    summary_row,
)


def cmd_gen_asteroid(args: argparse.Namespace) -> int:
    cfg = AsteroidGenConfig(subdivision_level=args.level)
    model = synthesize_asteroid(args.seed, cfg)
    os.makedirs(args.out, exist_ok=True)
    mesh_path = os.path.join(args.out, f"asteroid_seed{args.seed}.obj")
    save_mesh(mesh_path, model.mesh)
    write_resolved_config(
        args.out, "gen-asteroid",
        {"seed": args.seed, "level": args.level, "out_dir": args.out},
    )
    print(f"wrote {mesh_path}")
    print(
        f"vertices {model.mesh.num_vertices}  faces {model.mesh.num_faces}  "
        f"mass {model.mass:.3e} kg  spin {model.spin_rate:.3e} rad/s  "
        f"nutation {np.degrees(model.nutation):.1f} deg"
    )
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    data = load_config_file(args.config) if args.config else {}
    data = merge_dicts(data, parse_overrides(args.overrides))
    cfg = TrainConfig()
    apply_to_dataclass(cfg, data)
    # explicit flags take precedence over the config file and overrides
    if args.seed is not None:
        cfg.seed = args.seed
    if args.batches is not None:
        cfg.batches = args.batches
    if args.out is not None:
        cfg.out_dir = args.out
    if args.resume:
        cfg.resume = True
    cfg.validate()
    write_resolved_config(cfg.out_dir, "train", cfg)
    metrics_path = train(cfg, log=print)
    print(f"wrote {metrics_path}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    if bool(args.scenario) == bool(args.all):
        raise ConfigurationError("choose exactly one of --scenario NAME or --all")
    policy = load_policy(args.checkpoint)
    names = [args.scenario] if args.scenario else (
        ["baseline"] + [s.name for s in scenario_presets()]
    )
    os.makedirs(args.out, exist_ok=True)
    write_resolved_config(
        args.out, "eval",
        {
            "checkpoint": args.checkpoint,
            "scenarios": names,
            "episodes": args.episodes,
            "seed": args.seed,
            "mesh_file": args.mesh_file,
            "stochastic": args.stochastic,
            "workers": args.workers,
            "out_dir": args.out,
        },
    )
    reports = []
    for name in names:
        scenario = get_scenario(name)
        if args.all and scenario.requires_mesh and args.mesh_file is None:
            print(f"skipping {name}: requires --mesh-file")
            continue
        out_dir = os.path.join(args.out, name) if args.all else args.out
        report = run_monte_carlo(
            policy, scenario, args.episodes, args.seed,
            out_dir=out_dir, mesh_file=args.mesh_file,
            stochastic=args.stochastic, workers=args.workers,
        )
        reports.append(report)
        print(
            f"{name}: {report.episodes} episodes  "
            f"pos_err {report.pos_err_mean:.2f} m  "
            f"GH1 {report.gh1_pct:.1f}%  GH2 {report.gh2_pct:.1f}%  "
            f"violations {report.violations}"
        )
    if args.all:
        with open(os.path.join(args.out, "summary.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(SUMMARY_COLUMNS)
            for report in reports:
                writer.writerow(summary_row(report))
    return 0


def _look_rotation(position: np.ndarray) -> np.ndarray:
    """Body-to-world rotation aiming the -z boresight at the origin."""
    u = position / np.linalg.norm(position)
    ref = np.array([0.0, 0.0, 1.0]) if abs(u[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    x = np.cross(ref, u)
    x /= np.linalg.norm(x)
    y = np.cross(u, x)
    return np.column_stack([x, y, u])


def cmd_scan_debug(args: argparse.Namespace) -> int:
    if args.mesh:
        mesh = load_mesh(args.mesh, scale=args.scale)
    else:
        mesh = synthesize_asteroid(
            args.seed, AsteroidGenConfig(subdivision_level=args.level)
        ).mesh
    if args.position is not None:
        position = np.asarray(args.position, dtype=np.float64)
        if not np.any(position):
            raise ConfigurationError("--position must be nonzero")
    else:
        bound = float(np.linalg.norm(mesh.vertices, axis=1).max())
        position = np.array([0.0, 0.0, 2.5 * bound])

    sensor = SensorConfig()
    frame = scan(mesh, position, None, sensor, rotation_matrix=_look_rotation(position))

    os.makedirs(args.out, exist_ok=True)
    write_resolved_config(
        args.out, "scan-debug",
        {
            "mesh": args.mesh, "scale": args.scale, "seed": args.seed,
            "level": args.level, "position": [float(v) for v in position],
            "out_dir": args.out,
        },
    )
    scan_path = os.path.join(args.out, "scan.csv")
    with open(scan_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in frame.ranges:
            writer.writerow([format(v, ".17g") for v in row])

    print(f"sensor at {position.tolist()}, boresight toward origin")
    for i in range(frame.ranges.shape[0]):
        cells = [
            f"{frame.ranges[i, j]:8.1f}" if frame.hit[i, j] else f"{'.':>8}"
            for j in range(frame.ranges.shape[1])
        ]
        print(" ".join(cells))
    print(f"{int(frame.hit.sum())}/{frame.hit.size} returns; wrote {scan_path}")
    return 0


TRAJECTORY_COLUMNS = (
    "step", "t_s",
    "x_m", "y_m", "z_m",
    "vx_ms", "vy_ms", "vz_ms",
    "qw", "qx", "qy", "qz",
    "wx_rads", "wy_rads", "wz_rads",
    "mass_kg", "fuel_kg", "pos_err_m", "speed_ms", "reward",
) + tuple(f"thruster_{k}" for k in range(12))


def _trajectory_row(step, t, state, fuel, pos_err, speed, reward, action) -> list:
    row = [
        step, t,
        *state.position, *state.velocity, *state.attitude, *state.omega,
        state.mass, fuel, pos_err, speed, reward,
    ]
    row.extend(int(a) for a in action)
    return row


def cmd_simulate(args: argparse.Namespace) -> int:
    scenario = get_scenario(args.scenario)
    cfg = scenario.episode_config(mesh_file=args.mesh_file)
    apply_to_dataclass(cfg, parse_overrides(args.overrides))
    cfg.validate()

    policy = load_policy(args.checkpoint) if args.checkpoint else None
    os.makedirs(args.out, exist_ok=True)
    write_resolved_config(
        args.out, "simulate",
        {
            "scenario": args.scenario, "checkpoint": args.checkpoint,
            "seed": args.seed, "mesh_file": args.mesh_file,
            "overrides": list(args.overrides), "out_dir": args.out,
            "episode": dataclasses.asdict(cfg),
        },
    )

    env = HoverEnv(cfg)
    pobs, _ = env.reset(seed=args.seed)
    hidden = policy.init_hidden(1) if policy is not None else None
    rows = [_trajectory_row(0, 0.0, env.state, 0.0, 0.0, 0.0, 0.0, np.zeros(12))]
    done = False
    info = {}
    total_reward = 0.0
    while not done:
        if policy is None:
            action = np.zeros(12)  # scripted free drift
        else:
            image, vec = policy_net_inputs(pobs, cfg)
            logits, hidden, _ = policy.step(image[None], vec[None], hidden)
            action = nn.greedy_action(logits)[0]
        pobs, _, reward, done, info = env.step(action)
        total_reward += reward
        rows.append(
            _trajectory_row(
                info["step"], info["t"], env.state, info["fuel_used"],
                info["pos_err"], info["speed"], reward, action,
            )
        )

    traj_path = os.path.join(args.out, "trajectory.csv")
    with open(traj_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_COLUMNS)
        for row in rows:
            writer.writerow(
                [str(v) if isinstance(v, int) else format(float(v), ".17g") for v in row]
            )
    outcome = info["violation"] or ("settled" if info["terminal_ok"] else "timeout")
    print(
        f"{info['step']} steps  outcome {outcome}  "
        f"pos_err {info['pos_err']:.2f} m  speed {info['speed']:.3f} m/s  "
        f"fuel {info['fuel_used']:.3f} kg  reward {total_reward:.2f}"
    )
    print(f"wrote {traj_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asterhover",
        description="asteroid hovering testbed: shape synthesis, training, evaluation",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gen-asteroid", help="synthesize one shape model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--level", type=int, default=2, help="icosphere subdivision level")
    p.add_argument("--out", default="runs/gen", help="output directory")
    p.set_defaults(func=cmd_gen_asteroid)

    p = sub.add_parser("train", help="run the training loop")
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--batches", type=int, default=None)
    p.add_argument("--out", default=None, help="run directory")
    p.add_argument("--resume", action="store_true", help="continue from the last checkpoint")
    p.add_argument(
        "overrides", nargs="*", metavar="KEY=VALUE",
        help="dotted config overrides, e.g. ppo.epochs=5 episode.duration=300",
    )
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="Monte Carlo evaluation of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scenario", help="scenario name (an unknown name lists the options)")
    p.add_argument("--all", action="store_true", help="run baseline plus every preset")
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="runs/eval", help="output directory")
    p.add_argument("--mesh-file", default=None, help="shape model for mesh scenarios")
    p.add_argument("--stochastic", action="store_true", help="sample actions instead of argmax")
    p.add_argument(
        "--workers", type=int, default=max(1, os.cpu_count() or 1),
        help="parallel episode workers (results are independent of this)",
    )
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("scan-debug", help="render one range image")
    p.add_argument("--mesh", default=None, help="mesh file (default: synthesize)")
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0, help="synthesis seed when no mesh given")
    p.add_argument("--level", type=int, default=2)
    p.add_argument(
        "--position", type=float, nargs=3, default=None, metavar=("X", "Y", "Z"),
        help="sensor position, m (default: above +z at 2.5x the bound radius)",
    )
    p.add_argument("--out", default="runs/scan", help="output directory")
    p.set_defaults(func=cmd_scan_debug)

    p = sub.add_parser("simulate", help="fly one episode and dump the trajectory")
    p.add_argument("--checkpoint", default=None, help="policy checkpoint (default: free drift)")
    p.add_argument("--scenario", default="baseline")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="runs/sim", help="output directory")
    p.add_argument("--mesh-file", default=None)
    p.add_argument(
        "overrides", nargs="*", metavar="KEY=VALUE",
        help="dotted episode-config overrides, e.g. duration=120",
    )
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (MeshLoadError, SimulationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
