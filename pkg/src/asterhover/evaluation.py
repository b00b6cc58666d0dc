"""Monte-Carlo evaluation of a hovering policy across named scenarios.

A Scenario is the baseline episode configuration plus a small, explicit set
of field overrides (the whole point: each named case differs from baseline
in exactly the listed fields). Evaluation runs deterministic-seeded episodes
with greedy action selection, writes a per-episode CSV next to the summary,
and aggregates the terminal statistics the mission cares about: position
error, speed, worst rotational-rate component, good-hover percentages, and
fuel use.

Episodes are independent, so they can fan out across worker processes; rows
are always aggregated in episode order for bit-stable output.
"""

from __future__ import annotations

import copy
import csv
import math
import multiprocessing
import os
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .dynamics import G_REF, ISP_DEFAULT
from .env import EpisodeConfig, HoverEnv, good_hover, policy_net_inputs
from .errors import ConfigurationError, MeshLoadError

STOCHASTIC_STREAM = 7001


@dataclass
class Scenario:
    """A named evaluation case: baseline config plus explicit overrides.

    overrides maps dotted EpisodeConfig field paths (e.g. "dyn.spin_max")
    to values. requires_mesh marks cases that hover over a user-supplied
    shape model; the file path arrives at run time.
    """

    name: str
    description: str = ""
    overrides: dict = field(default_factory=dict)
    requires_mesh: bool = False
    mesh_scale: float = 1.0

    def episode_config(self, mesh_file: str | None = None) -> EpisodeConfig:
        cfg = copy.deepcopy(EpisodeConfig())
        for path, value in self.overrides.items():
            target = cfg
            parts = path.split(".")
            for part in parts[:-1]:
                target = getattr(target, part)
            if not hasattr(target, parts[-1]):
                raise ConfigurationError(f"unknown override field {path!r}")
            setattr(target, parts[-1], value)
        if self.requires_mesh:
            if mesh_file is None:
                raise ConfigurationError(
                    f"scenario {self.name!r} hovers over a real shape model; "
                    "provide a mesh file (--mesh-file)"
                )
            cfg.mesh_file = mesh_file
            cfg.mesh_scale = self.mesh_scale
        cfg.validate()
        return cfg


def baseline_scenario() -> Scenario:
    return Scenario(name="baseline", description="nominal randomized task")


def scenario_presets() -> list[Scenario]:
    """The thirteen generalization and real-shape-model cases.

    The first seven stress one axis of the task each; the last six hover
    over user-supplied shape models at nominal and extended altitudes.
    """
    return [
        Scenario(
            "extended-altitude",
            "initial altitude range widened to 10-700 m",
            {"range_min": 10.0, "range_max": 700.0},
        ),
        Scenario(
            "facets-1280",
            "synthetic asteroids with 1280 facets instead of 320",
            {"asteroid.subdivision_level": 3},
        ),
        Scenario(
            "duration-1200",
            "hover duration doubled to 1200 s",
            {"duration": 1200.0},
        ),
        Scenario(
            "actuator-fail-0.5",
            "degraded thruster runs at half thrust instead of 0.9",
            {"failure_scale": 0.5},
        ),
        Scenario(
            "sensor-noise",
            "range bias uniform in +-5 m per episode plus 2 m Gaussian noise",
            {"sensor_noise": True},
        ),
        Scenario(
            "env-dynamics",
            "maximum asteroid spin rate raised to 1e-3 rad/s",
            {"dyn.spin_max": 1.0e-3},
        ),
        Scenario(
            "com-variation",
            "center of mass offset by +-10 cm per axis each episode",
            {"com_variation": True},
        ),
        Scenario(
            "rq36",
            "rq36 shape model, altitude 100-500 m",
            {"range_min": 100.0, "range_max": 500.0},
            requires_mesh=True,
        ),
        Scenario(
            "rq36-extended",
            "rq36 shape model, altitude 10-500 m",
            {"range_min": 10.0, "range_max": 500.0},
            requires_mesh=True,
        ),
        Scenario(
            "itokawa",
            "Itokawa shape model, altitude 100-250 m",
            {"range_min": 100.0, "range_max": 250.0},
            requires_mesh=True,
        ),
        Scenario(
            "itokawa-extended",
            "Itokawa shape model, altitude 10-250 m",
            {"range_min": 10.0, "range_max": 250.0},
            requires_mesh=True,
        ),
        Scenario(
            "itokawa3x",
            "Itokawa shape model scaled 3x, altitude 100-600 m",
            {"range_min": 100.0, "range_max": 600.0},
            requires_mesh=True,
            mesh_scale=3.0,
        ),
        Scenario(
            "itokawa3x-extended",
            "Itokawa shape model scaled 3x, altitude 10-600 m",
            {"range_min": 10.0, "range_max": 600.0},
            requires_mesh=True,
            mesh_scale=3.0,
        ),
    ]


def get_scenario(name: str) -> Scenario:
    if name == "baseline":
        return baseline_scenario()
    for scenario in scenario_presets():
        if scenario.name == name:
            return scenario
    known = ", ".join(["baseline"] + [s.name for s in scenario_presets()])
    raise ConfigurationError(f"unknown scenario {name!r}; known: {known}")


# --------------------------------------------------------------------------
# Episode rollout (greedy by default) and aggregation

EPISODE_COLUMNS = (
    "episode", "pos_err_m", "speed_cms", "omega_mrads", "gh1", "gh2",
    "violation", "fuel_kg", "reward", "steps",
)


def run_episode(
    env: HoverEnv,
    policy,
    env_seed,
    stochastic: bool = False,
    action_rng: np.random.Generator | None = None,
) -> dict:
    """One evaluation episode; returns the terminal-metrics row."""
    pobs, _ = env.reset(seed=env_seed)
    hidden = policy.init_hidden(1)
    total_reward = 0.0
    steps = 0
    done = False
    info = {}
    while not done:
        image, vec = policy_net_inputs(pobs, env.cfg)
        logits, hidden, _ = policy.step(image[None], vec[None], hidden)
        if stochastic:
            action = nn.sample_multicategorical(logits, action_rng)[0][0]
        else:
            action = nn.greedy_action(logits)[0]
        pobs, _, reward, done, info = env.step(action)
        total_reward += reward
        steps += 1
    pos_err = float(info["pos_err"])
    speed = float(info["speed"])
    max_omega = float(info["max_omega"])
    gh1, gh2 = good_hover(pos_err, speed, max_omega)
    return {
        "pos_err_m": pos_err,
        "speed_cms": speed * 100.0,
        "omega_mrads": max_omega * 1000.0,
        "gh1": int(gh1),
        "gh2": int(gh2),
        "violation": info["violation"] or "",
        "fuel_kg": float(info["fuel_used"]),
        "reward": total_reward,
        "steps": steps,
    }


@dataclass
class EvalReport:
    """Terminal statistics over one scenario's episodes."""

    scenario: str
    episodes: int
    pos_err_mean: float = 0.0   # m
    pos_err_std: float = 0.0
    pos_err_max: float = 0.0
    speed_mean: float = 0.0     # cm/s
    speed_std: float = 0.0
    speed_max: float = 0.0
    omega_mean: float = 0.0     # worst |component| per episode, mrad/s
    omega_std: float = 0.0
    omega_max: float = 0.0
    gh1_pct: float = 0.0
    gh2_pct: float = 0.0
    fuel_mean: float = 0.0      # kg
    fuel_std: float = 0.0
    fuel_max: float = 0.0
    violations: int = 0

    @classmethod
    def from_rows(cls, scenario: str, rows: list[dict]) -> "EvalReport":
        if not rows:
            return cls(scenario=scenario, episodes=0)

        def stats(key):
            v = np.array([r[key] for r in rows], dtype=float)
            return float(v.mean()), float(v.std()), float(v.max())

        pe = stats("pos_err_m")
        sp = stats("speed_cms")
        om = stats("omega_mrads")
        fu = stats("fuel_kg")
        n = len(rows)
        return cls(
            scenario=scenario,
            episodes=n,
            pos_err_mean=pe[0], pos_err_std=pe[1], pos_err_max=pe[2],
            speed_mean=sp[0], speed_std=sp[1], speed_max=sp[2],
            omega_mean=om[0], omega_std=om[1], omega_max=om[2],
            gh1_pct=100.0 * sum(r["gh1"] for r in rows) / n,
            gh2_pct=100.0 * sum(r["gh2"] for r in rows) / n,
            fuel_mean=fu[0], fuel_std=fu[1], fuel_max=fu[2],
            violations=sum(1 for r in rows if r["violation"]),
        )


SUMMARY_COLUMNS = (
    "scenario", "episodes",
    "pos_err_mean_m", "pos_err_std_m", "pos_err_max_m",
    "speed_mean_cms", "speed_std_cms", "speed_max_cms",
    "omega_mean_mrads", "omega_std_mrads", "omega_max_mrads",
    "gh1_pct", "gh2_pct",
    "fuel_mean_kg", "fuel_std_kg", "fuel_max_kg",
    "violations",
)


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def summary_row(report: EvalReport) -> list[str]:
    values = (
        report.scenario, report.episodes,
        report.pos_err_mean, report.pos_err_std, report.pos_err_max,
        report.speed_mean, report.speed_std, report.speed_max,
        report.omega_mean, report.omega_std, report.omega_max,
        report.gh1_pct, report.gh2_pct,
        report.fuel_mean, report.fuel_std, report.fuel_max,
        report.violations,
    )
    return [_fmt(v) for v in values]


def load_policy(checkpoint_path: str) -> nn.PolicyNetwork:
    """Policy parameters from a training checkpoint (critic discarded)."""
    policy = nn.PolicyNetwork(seed=0)
    value_net = nn.ValueNetwork(seed=0)
    nn.load_checkpoint(checkpoint_path, policy, value_net)
    return policy


# Per-process state for parallel evaluation; set once per worker.
_WORKER = {}


def _init_worker(cfg: EpisodeConfig, params, seed: int, stochastic: bool):
    policy = nn.PolicyNetwork(seed=0)
    policy.load_parameters(params)
    _WORKER["env"] = HoverEnv(cfg)
    _WORKER["policy"] = policy
    _WORKER["seed"] = seed
    _WORKER["stochastic"] = stochastic


def _run_worker_episode(idx: int) -> dict:
    rng = None
    if _WORKER["stochastic"]:
        rng = np.random.default_rng(
            np.random.SeedSequence((_WORKER["seed"], idx, STOCHASTIC_STREAM))
        )
    return run_episode(
        _WORKER["env"],
        _WORKER["policy"],
        np.random.SeedSequence((_WORKER["seed"], idx)),
        stochastic=_WORKER["stochastic"],
        action_rng=rng,
    )


def run_monte_carlo(
    policy,
    scenario: Scenario,
    n_episodes: int,
    seed: int,
    out_dir: str | None = None,
    mesh_file: str | None = None,
    stochastic: bool = False,
    workers: int = 1,
) -> EvalReport:
    """Evaluate a policy (object or checkpoint path) over one scenario.

    Episode k runs on the seed stream (seed, k), so reports are identical
    across reruns and across worker counts. With out_dir set, writes
    episodes.csv, summary.csv, and x/y plot-data files there.
    """
    if isinstance(policy, str):
        policy = load_policy(policy)
    cfg = scenario.episode_config(mesh_file=mesh_file)
    try:
        if workers > 1 and n_episodes > 1:
            # parallel path replays parameters into a fresh network per
            # worker, so it needs a parameter-bearing policy
            params = {k: v for k, v in policy.parameters().items()}
            with multiprocessing.Pool(
                workers, initializer=_init_worker,
                initargs=(cfg, params, seed, stochastic),
            ) as pool:
                rows = pool.map(_run_worker_episode, range(n_episodes))
        else:
            env = HoverEnv(cfg)
            rows = []
            for idx in range(n_episodes):
                rng = None
                if stochastic:
                    rng = np.random.default_rng(
                        np.random.SeedSequence((seed, idx, STOCHASTIC_STREAM))
                    )
                rows.append(
                    run_episode(
                        env, policy, np.random.SeedSequence((seed, idx)),
                        stochastic=stochastic, action_rng=rng,
                    )
                )
    except MeshLoadError as exc:
        raise MeshLoadError(f"scenario {scenario.name!r}: {exc}") from exc
    for idx, row in enumerate(rows):
        row["episode"] = idx
    report = EvalReport.from_rows(scenario.name, rows)
    if out_dir is not None:
        write_report_files(out_dir, report, rows)
    return report


def write_report_files(out_dir: str, report: EvalReport, rows: list[dict]) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "episodes.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EPISODE_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in EPISODE_COLUMNS])
    with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        writer.writerow(summary_row(report))
    for column, fname in (
        ("pos_err_m", "plot_pos_err.csv"),
        ("fuel_kg", "plot_fuel.csv"),
    ):
        with open(os.path.join(out_dir, fname), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["episode", column])
            for row in rows:
                writer.writerow([row["episode"], _fmt(row[column])])


def fuel_sanity(
    report: EvalReport,
    mean_env_force: float,
    duration: float,
    isp: float = ISP_DEFAULT,
    g_ref: float = G_REF,
) -> tuple[float, float]:
    """Ideal continuous-cancellation fuel and the actual/ideal ratio.

    ideal = F * T / (Isp * g_ref). Pulsed on/off control cannot beat
    continuous cancellation, so a trained policy's ratio is >= 1; the ratio
    is reported, never asserted.
    """
    ideal = mean_env_force * duration / (isp * g_ref)
    if ideal == 0.0:
        return 0.0, math.nan
    return ideal, report.fuel_mean / ideal
