"""Hovering episodes: randomized scenario setup, observations, reward.

Each episode draws a fresh asteroid and initial condition, then runs a
fixed-duration station-keeping task in the asteroid body-fixed frame. The
agent never sees ground truth: its observation is built from differences of
flash-LIDAR range images taken at the frozen episode-start attitude, plus
the attitude change and measured body rates. Ground-truth position and
velocity errors are exposed separately for the critic and for evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .dynamics import (
    G_REF,
    ISP_DEFAULT,
    ExternalForces,
    SpacecraftState,
    ThrusterTable,
    dcm_to_quat,
    default_thruster_table,
    quat_error,
    quat_angle,
    quat_from_axis_angle,
    quat_mul,
    quat_to_dcm,
    rk4_step,
)
from .errors import ConfigurationError, SimulationError
from .geometry import (
    AsteroidDynRanges,
    AsteroidGenConfig,
    AsteroidModel,
    TriMesh,
    ellipsoid_rotation_params,
    load_mesh,
    mesh_half_extents,
    synthesize_asteroid,
)
from .lidar import LidarFrame, PreparedMesh, SensorConfig, apply_sensor_noise, scan


@dataclass
class RewardConfig:
    """Reward weights and the limits they reference."""

    alpha: float = -0.02       # weight on position error, 1/m
    beta: float = -0.01        # weight on attitude deviation angle, 1/rad
    gamma_ctrl: float = -0.05  # weight on normalized control effort
    eta: float = 0.01          # constant per-step term
    zeta: float = 10.0         # terminal bonus
    kappa: float = -50.0       # constraint-violation penalty
    terminal_pos_limit: float = 2.0      # m
    terminal_speed_limit: float = 0.10   # m/s
    terminal_omega_limit: float = 0.025  # rad/s, per component
    rot_limit: float = 0.10              # rad/s per component, hard constraint


@dataclass
class EpisodeConfig:
    """Scenario definition; defaults give the nominal randomized task."""

    duration: float = 600.0       # s
    control_period: float = 6.0   # s, one policy action per period
    rk4_dt: float = 2.0           # s, integrator substep

    # Initial condition ranges.
    range_min: float = 100.0      # hover altitude above the surface, m
    range_max: float = 600.0
    theta_max_deg: float = 90.0   # polar angle of the position direction
    velocity_max: float = 0.10    # per component, m/s
    attitude_err_max_deg: float = 11.0
    omega_max: float = 0.020      # per component, rad/s
    wet_mass_min: float = 450.0   # kg
    wet_mass_max: float = 500.0
    dry_mass: float = 400.0       # propellant floor, kg

    isp: float = ISP_DEFAULT      # s
    g_ref: float = G_REF          # m/s^2

    # Scenario switches.
    failure_prob: float = 0.5     # chance one thruster runs degraded
    failure_scale: float = 0.9    # output fraction of the degraded thruster
    com_variation: bool = False
    com_range: float = 0.10       # per component, m
    sensor_noise: bool = False
    noise_bias_range: float = 5.0  # per-episode bias drawn from +-this, m
    noise_sigma: float = 2.0       # per-sample, m
    mesh_file: str | None = None   # hover over a fixed shape model instead
    mesh_scale: float = 1.0

    # Observation scaling applied when building network inputs.
    r_err_scale: float = 100.0    # m
    dr_scale: float = 10.0        # m

    max_ic_retries: int = 50

    asteroid: AsteroidGenConfig = field(default_factory=AsteroidGenConfig)
    dyn: AsteroidDynRanges = field(default_factory=AsteroidDynRanges)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)

    def validate(self) -> None:
        if self.duration <= 0.0 or self.control_period <= 0.0 or self.rk4_dt <= 0.0:
            raise ConfigurationError("duration, control_period and rk4_dt must be positive")
        sub = self.control_period / self.rk4_dt
        if abs(sub - round(sub)) > 1e-9 or round(sub) < 1:
            raise ConfigurationError("control_period must be an integer multiple of rk4_dt")
        steps = self.duration / self.control_period
        if abs(steps - round(steps)) > 1e-9 or round(steps) < 1:
            raise ConfigurationError("duration must be an integer multiple of control_period")
        if not (0.0 < self.range_min <= self.range_max):
            raise ConfigurationError("range must satisfy 0 < min <= max")
        if not (0.0 <= self.theta_max_deg <= 180.0):
            raise ConfigurationError("theta_max_deg must lie in [0, 180]")
        if self.velocity_max < 0.0 or self.omega_max < 0.0 or self.attitude_err_max_deg < 0.0:
            raise ConfigurationError("IC ranges must be >= 0")
        if not (0.0 < self.dry_mass <= self.wet_mass_min <= self.wet_mass_max):
            raise ConfigurationError("need 0 < dry_mass <= wet_mass_min <= wet_mass_max")
        if not (0.0 <= self.failure_prob <= 1.0):
            raise ConfigurationError("failure_prob must lie in [0, 1]")
        if self.isp <= 0.0 or self.g_ref <= 0.0:
            raise ConfigurationError("isp and g_ref must be positive")
        if self.r_err_scale <= 0.0 or self.dr_scale <= 0.0:
            raise ConfigurationError("observation scales must be positive")
        if self.max_ic_retries < 1:
            raise ConfigurationError("max_ic_retries must be >= 1")
        self.asteroid.validate()
        self.dyn.validate()
        self.sensor.validate()

    @property
    def substeps(self) -> int:
        return int(round(self.control_period / self.rk4_dt))

    @property
    def max_steps(self) -> int:
        return int(round(self.duration / self.control_period))


@dataclass
class PolicyObservation:
    """What the flight policy sees. Image entries are in meters; use
    :func:`policy_net_inputs` for the scaled network view."""

    r_err_image: np.ndarray  # (grid, grid) current ranges minus initiation ranges, m
    dr_image: np.ndarray     # (grid, grid) ranges minus previous frame, m
    dq: np.ndarray           # (4,) attitude change since initiation, scalar part >= 0
    omega: np.ndarray        # (3,) body rates, rad/s


@dataclass
class ValueObservation:
    """Ground-truth quantities available to the critic during optimization."""

    r_err: np.ndarray    # (3,) position minus initial position, m
    velocity: np.ndarray  # (3,) m/s
    dq: np.ndarray       # (4,)
    omega: np.ndarray    # (3,) rad/s

    def vector(self) -> np.ndarray:
        return np.concatenate([self.r_err, self.velocity, self.dq, self.omega])


def build_policy_observation(
    frame: LidarFrame,
    frame0: LidarFrame,
    prev_frame: LidarFrame,
    dq: np.ndarray,
    omega: np.ndarray,
) -> PolicyObservation:
    """Difference images against the initiation and previous frames.

    Hit/miss transitions pass straight through: a beam that stops returning
    jumps by (max_range - previous reading) rather than being masked.
    """
    return PolicyObservation(
        r_err_image=frame.ranges - frame0.ranges,
        dr_image=frame.ranges - prev_frame.ranges,
        dq=np.asarray(dq, dtype=np.float64),
        omega=np.asarray(omega, dtype=np.float64).copy(),
    )


def policy_net_inputs(
    obs: PolicyObservation, cfg: EpisodeConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Scaled image stack (grid, grid, 2) and the 7-vector [dq, omega]."""
    image = np.stack(
        [obs.r_err_image / cfg.r_err_scale, obs.dr_image / cfg.dr_scale], axis=-1
    )
    vec = np.concatenate([obs.dq, obs.omega])
    return image, vec


def value_net_inputs(obs: ValueObservation, cfg: EpisodeConfig) -> np.ndarray:
    """13-vector critic input with position error scaled like the image."""
    v = obs.vector().copy()
    v[0:3] /= cfg.r_err_scale
    return v


def compute_reward(
    r_err: np.ndarray,
    dq: np.ndarray,
    action: np.ndarray,
    terminal_ok: bool,
    violated: bool,
    cfg: RewardConfig,
) -> tuple[float, dict[str, float]]:
    """Per-step reward and its exact decomposition.

    r = alpha*|r_err| + beta*angle(dq) + gamma*(sum of bits)/12 + eta
        + zeta*[terminal limits met at the final step] + kappa*[violation]
    """
    effort = float(np.sum(action)) / action.shape[0]
    terms = {
        "position": cfg.alpha * float(np.linalg.norm(r_err)),
        "attitude": cfg.beta * quat_angle(dq),
        "control": cfg.gamma_ctrl * effort,
        "step": cfg.eta,
        "terminal_bonus": cfg.zeta if terminal_ok else 0.0,
        "violation": cfg.kappa if violated else 0.0,
    }
    return float(sum(terms.values())), terms


def good_hover(
    pos_err: float,
    speed: float,
    max_omega: float,
    speed_limit: float = 0.10,
    omega_limit: float = 0.015,
) -> tuple[bool, bool]:
    """Terminal-quality classification used by evaluation.

    Tier 1 requires terminal position error < 2 m; tier 2 relaxes it to
    < 5 m. Both require speed below `speed_limit` and every rotational
    velocity component below `omega_limit`.
    """
    rates_ok = speed < speed_limit and max_omega < omega_limit
    return (pos_err < 2.0 and rates_ok, pos_err < 5.0 and rates_ok)


def _orthonormal_basis(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors orthogonal to u (u must be unit)."""
    a = np.array([1.0, 0.0, 0.0]) if abs(u[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(u, a)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(u, e1)


def _los_attitude(u: np.ndarray, roll: float) -> np.ndarray:
    """Quaternion putting the -z body axis on the line of sight (-u), with
    the given roll about the boresight."""
    e1, e2 = _orthonormal_basis(u)
    x_b = math.cos(roll) * e1 + math.sin(roll) * e2
    z_b = u  # -z body points at the asteroid, so +z points along +u
    y_b = np.cross(z_b, x_b)
    return dcm_to_quat(np.column_stack([x_b, y_b, z_b]))


def surface_radius(
    mesh: TriMesh | PreparedMesh, u: np.ndarray, cast_from: float | None = None
) -> float | None:
    """Distance from the origin to the surface along unit direction u.

    Casts inward from well outside the body so the front (outward) faces
    are the ones intersected. None when the direction misses the mesh.
    """
    from .lidar import PreparedMesh as _PM
    from .lidar import cast_rays

    prep = mesh if isinstance(mesh, _PM) else _PM(mesh)
    if cast_from is None:
        cast_from = 2.0 * prep.bound_radius + 100.0
    origin = cast_from * u
    ranges, hit = cast_rays(prep, origin, -u[None, :], max_range=2.0 * cast_from)
    if not hit[0]:
        return None
    return cast_from - float(ranges[0])


def sample_initial_conditions(
    rng: np.random.Generator,
    cfg: EpisodeConfig,
    mesh: TriMesh | PreparedMesh,
) -> SpacecraftState | None:
    """One draw of the randomized initial state over the given body.

    Draw order is fixed: direction (theta, phi), hover range, velocity,
    boresight roll, attitude-error axis and magnitude, body rates, wet
    mass, COM offset. Returns None when the position direction misses the
    mesh (caller retries).
    """
    theta = math.radians(rng.uniform(0.0, cfg.theta_max_deg))
    phi = rng.uniform(-math.pi, math.pi)
    u = np.array(
        [math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)]
    )
    hover = rng.uniform(cfg.range_min, cfg.range_max)
    velocity = rng.uniform(-cfg.velocity_max, cfg.velocity_max, size=3)
    roll = rng.uniform(0.0, 2.0 * math.pi)
    axis = rng.standard_normal(3)
    while np.linalg.norm(axis) < 1e-12:
        axis = rng.standard_normal(3)
    err_angle = math.radians(rng.uniform(0.0, cfg.attitude_err_max_deg))
    omega = rng.uniform(-cfg.omega_max, cfg.omega_max, size=3)
    wet_mass = rng.uniform(cfg.wet_mass_min, cfg.wet_mass_max)
    com = (
        rng.uniform(-cfg.com_range, cfg.com_range, size=3)
        if cfg.com_variation
        else np.zeros(3)
    )

    r_surf = surface_radius(mesh, u)
    if r_surf is None or r_surf <= 0.0:
        return None

    attitude = quat_mul(_los_attitude(u, roll), quat_from_axis_angle(axis, err_angle))
    return SpacecraftState(
        position=(r_surf + hover) * u,
        velocity=velocity,
        attitude=attitude,
        omega=omega,
        mass=wet_mass,
        com_offset=com,
        t=0.0,
    )


def _model_from_mesh(mesh: TriMesh, rng: np.random.Generator, dyn: AsteroidDynRanges) -> AsteroidModel:
    """Rotation state and mass for a loaded shape model.

    Same draw order as synthesis; the comparison-ellipsoid half-axes come
    from the mesh bounding box.
    """
    from .geometry import GRAVITATIONAL_CONSTANT

    mass = rng.uniform(dyn.mass_min, dyn.mass_max)
    spin = rng.uniform(dyn.spin_min, dyn.spin_max)
    nutation = rng.uniform(dyn.nutation_min, dyn.nutation_max)
    phase = rng.uniform(0.0, 2.0 * math.pi)
    srp = rng.uniform(-dyn.srp_max, dyn.srp_max, size=3)
    axes = mesh_half_extents(mesh)
    _, sigma = ellipsoid_rotation_params(*axes)
    return AsteroidModel(
        mesh=mesh,
        mass=mass,
        gm=GRAVITATIONAL_CONSTANT * mass,
        spin_rate=spin,
        nutation=nutation,
        phase=phase,
        precession_rate=sigma * spin * math.cos(nutation),
        sigma=sigma,
        axes=axes,
        srp_accel=srp,
    )


class HoverEnv:
    """One hovering episode at a time; see module docstring.

    Not shared between workers: each worker owns its own instance, and all
    randomness flows from the generator created in :meth:`reset`.
    """

    def __init__(self, cfg: EpisodeConfig | None = None):
        self.cfg = cfg or EpisodeConfig()
        self.cfg.validate()
        self._loaded_mesh: TriMesh | None = None
        if self.cfg.mesh_file is not None:
            self._loaded_mesh = load_mesh(self.cfg.mesh_file, self.cfg.mesh_scale)
        self.model: AsteroidModel | None = None
        self.state: SpacecraftState | None = None
        self.done = True
        self.steps = 0

    def reset(self, seed: int | None = None) -> tuple[PolicyObservation, ValueObservation]:
        cfg = self.cfg
        self.rng = np.random.default_rng(seed)

        if self._loaded_mesh is not None:
            self.model = _model_from_mesh(self._loaded_mesh, self.rng, cfg.dyn)
        else:
            self.model = synthesize_asteroid(self.rng, cfg.asteroid, cfg.dyn)
        self._prep = PreparedMesh(self.model.mesh)
        self._ext = ExternalForces(accel=self.model.srp_accel.copy())

        self.table = default_thruster_table()
        if self.rng.uniform() < cfg.failure_prob:
            self.table.health[int(self.rng.integers(12))] = cfg.failure_scale

        self._noise_bias = (
            self.rng.uniform(-cfg.noise_bias_range, cfg.noise_bias_range)
            if cfg.sensor_noise
            else 0.0
        )

        # Initial conditions must leave the sensor with at least one valid
        # return; resample otherwise (bounded).
        for _ in range(cfg.max_ic_retries):
            state = sample_initial_conditions(self.rng, cfg, self._prep)
            if state is None:
                continue
            self._r0_matrix = quat_to_dcm(state.attitude)
            frame0 = self._scan(state.position)
            if frame0.hit.any():
                break
        else:
            raise SimulationError(
                f"no viable initial condition in {cfg.max_ic_retries} draws"
            )

        self.state = state
        self.q0 = state.attitude.copy()
        self.r0 = state.position.copy()
        self.wet_mass = state.mass
        self.frame0 = frame0
        self.prev_frame = frame0
        self.steps = 0
        self.done = False
        self.fuel_used = 0.0
        return self._observe(frame0)

    def _scan(self, position: np.ndarray) -> LidarFrame:
        # Scans are taken at the frozen initiation attitude: the sensor
        # platform counter-rotates the body motion, so images differ only
        # through translation (and asteroid rotation under the spacecraft).
        frame = scan(
            self._prep, position, None, self.cfg.sensor, rotation_matrix=self._r0_matrix
        )
        if self.cfg.sensor_noise:
            frame = apply_sensor_noise(
                frame,
                self._noise_bias,
                self.cfg.noise_sigma,
                self.rng,
                self.cfg.sensor.max_range,
            )
        return frame

    def _observe(self, frame: LidarFrame) -> tuple[PolicyObservation, ValueObservation]:
        dq = quat_error(self.state.attitude, self.q0)
        pobs = build_policy_observation(frame, self.frame0, self.prev_frame, dq, self.state.omega)
        vobs = ValueObservation(
            r_err=self.state.position - self.r0,
            velocity=self.state.velocity.copy(),
            dq=dq,
            omega=self.state.omega.copy(),
        )
        return pobs, vobs

    def step(
        self, action: np.ndarray
    ) -> tuple[PolicyObservation, ValueObservation, float, bool, dict[str, Any]]:
        if self.done:
            raise SimulationError("step() called on a finished episode; reset() first")
        a = np.asarray(action, dtype=np.float64).reshape(-1)
        if a.shape != (12,) or not np.all((a == 0.0) | (a == 1.0)):
            raise ConfigurationError("action must be 12 on/off values")

        cfg = self.cfg
        mass_before = self.state.mass
        for _ in range(cfg.substeps):
            self.state = rk4_step(
                self.state, a, cfg.rk4_dt, self.model, self.table,
                ext=self._ext, isp=cfg.isp, g_ref=cfg.g_ref,
            )
        self.fuel_used += mass_before - self.state.mass
        self.steps += 1

        frame = self._scan(self.state.position)

        r_err = self.state.position - self.r0
        dq = quat_error(self.state.attitude, self.q0)
        omega = self.state.omega

        rot_breach = bool(np.any(np.abs(omega) > cfg.reward.rot_limit))
        all_miss = not frame.hit.any()
        fuel_out = self.state.mass <= cfg.dry_mass
        violated = rot_breach or all_miss or fuel_out

        time_done = self.steps >= cfg.max_steps
        terminal_ok = (
            time_done
            and float(np.linalg.norm(r_err)) <= cfg.reward.terminal_pos_limit
            and float(np.linalg.norm(self.state.velocity)) <= cfg.reward.terminal_speed_limit
            and bool(np.all(np.abs(omega) <= cfg.reward.terminal_omega_limit))
        )

        reward, terms = compute_reward(r_err, dq, a, terminal_ok, violated, cfg.reward)
        self.done = time_done or violated

        pobs, vobs = self._observe(frame)
        self.prev_frame = frame

        violation = None
        if rot_breach:
            violation = "rotation"
        elif all_miss:
            violation = "all_miss"
        elif fuel_out:
            violation = "fuel"

        speed = float(np.linalg.norm(self.state.velocity))
        info = {
            "step": self.steps,
            "t": self.steps * cfg.control_period,
            "position": self.state.position.copy(),
            "velocity": self.state.velocity.copy(),
            "omega": omega.copy(),
            "attitude": self.state.attitude.copy(),
            "pos_err": float(np.linalg.norm(r_err)),
            "pos_err_vec": r_err.copy(),
            "speed": speed,
            "max_omega": float(np.max(np.abs(omega))),
            "q_err": quat_angle(dq),
            "mass": self.state.mass,
            "fuel_used": self.fuel_used,
            "hits": int(frame.hit.sum()),
            "violation": violation,
            "terminal_ok": terminal_ok,
            "reward_terms": terms,
        }
        return pobs, vobs, reward, self.done, info
