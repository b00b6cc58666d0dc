"""Six degree-of-freedom spacecraft dynamics in the asteroid rotating frame.

State is propagated directly in the asteroid body-fixed frame, which rotates
at the (generally precessing) asteroid angular velocity; the equations of
motion therefore carry Coriolis and centrifugal terms. Attitude quaternions
are scalar-first Hamilton quaternions mapping spacecraft body axes into the
asteroid frame: v_ast = R(q) v_body.

The spacecraft is a uniform-density cube of side 2 m with twelve fixed
on/off thrusters; mass decreases as propellant is burned and the inertia
tensor scales with the remaining mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, SimulationError
from .geometry import AsteroidModel

CUBE_SIDE = 2.0        # spacecraft body edge length, m
ISP_DEFAULT = 225.0    # thruster specific impulse, s
G_REF = 9.8            # reference gravitational acceleration for Isp, m/s^2


# --------------------------------------------------------------------------
# Quaternion algebra (scalar-first, Hamilton convention)

def quat_mul(q: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Hamilton product q * p."""
    w1, x1, y1, z1 = q
    w2, x2, y2, z2 = p
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ConfigurationError("cannot normalize a zero quaternion")
    return q / n


def quat_canonicalize(q: np.ndarray) -> np.ndarray:
    """Flip sign so the scalar part is nonnegative (q and -q are one rotation)."""
    return -q if q[0] < 0.0 else q.copy()


def quat_to_dcm(q: np.ndarray) -> np.ndarray:
    """Rotation matrix R with v_out = R v_in for the rotation q encodes."""
    w, x, y, z = q
    return np.array(
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    )


def dcm_to_quat(R: np.ndarray) -> np.ndarray:
    """Inverse of :func:`quat_to_dcm`, scalar part nonnegative."""
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0.0:
        s = math.sqrt(tr + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    else:
        i = int(np.argmax([R[0, 0], R[1, 1], R[2, 2]]))
        if i == 0:
            s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
            q = np.array(
                [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
            )
        elif i == 1:
            s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
            q = np.array(
                [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
            )
        else:
            s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
            q = np.array(
                [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
            )
    return quat_canonicalize(quat_normalize(q))


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n == 0.0:
        raise ConfigurationError("rotation axis must be nonzero")
    half = 0.5 * angle
    q = np.empty(4)
    q[0] = math.cos(half)
    q[1:] = math.sin(half) * axis / n
    return q


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector v by quaternion q without forming the full matrix."""
    qv = q[1:]
    t = 2.0 * np.cross(qv, v)
    return v + q[0] * t + np.cross(qv, t)


def quat_error(q_current: np.ndarray, q_reference: np.ndarray) -> np.ndarray:
    """Rotation taking the reference attitude to the current one.

    Canonicalized so the scalar part is nonnegative; identity when the two
    attitudes coincide (up to sign).
    """
    return quat_canonicalize(quat_mul(quat_conj(q_reference), q_current))


def quat_angle(q: np.ndarray) -> float:
    """Principal rotation angle of a unit quaternion, in [0, pi]."""
    return 2.0 * math.acos(min(1.0, abs(float(q[0]))))


# --------------------------------------------------------------------------
# Spacecraft mass properties and thrusters

def inertia_diag(mass: float) -> np.ndarray:
    """Principal moments of a uniform cube of side CUBE_SIDE about its center."""
    s2 = CUBE_SIDE * CUBE_SIDE
    return (mass / 12.0) * np.array([s2 + s2, s2 + s2, s2 + s2])


def inertia_tensor(mass: float) -> np.ndarray:
    return np.diag(inertia_diag(mass))


@dataclass
class ThrusterTable:
    """Fixed thruster layout in the spacecraft body frame."""

    positions: np.ndarray   # (12, 3) mount points, m
    directions: np.ndarray  # (12, 3) unit force directions
    max_thrust: np.ndarray  # (12,) N
    health: np.ndarray      # (12,) output scale, 1.0 when nominal

    def copy(self) -> "ThrusterTable":
        return ThrusterTable(
            self.positions.copy(),
            self.directions.copy(),
            self.max_thrust.copy(),
            self.health.copy(),
        )


def default_thruster_table() -> ThrusterTable:
    """Twelve 1 N thrusters, two per cube face pair, pushing along +-x/+-y/+-z.

    Pairs are offset from the face centers so that firing one thruster of a
    pair produces torque while firing both produces nearly pure force.
    """
    positions = np.array(
        [
            [-1.0, 0.0, 0.4],
            [-1.0, 0.0, -0.4],
            [1.0, 0.0, 0.4],
            [1.0, 0.0, -0.4],
            [-0.4, -1.0, 0.0],
            [0.4, -1.0, 0.0],
            [-0.4, 1.0, 0.0],
            [0.4, 1.0, 0.0],
            [0.0, -0.4, -1.0],
            [0.0, 0.4, -1.0],
            [0.0, -0.4, 1.0],
            [0.0, 0.4, 1.0],
        ]
    )
    directions = np.array(
        [
            [1.0, 0.0, 0.0],   # mounted on -x face, push +x
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],  # mounted on +x face, push -x
            [-1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0],
            [0.0, -1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0],
            [0.0, 0.0, -1.0],
        ]
    )
    return ThrusterTable(
        positions=positions,
        directions=directions,
        max_thrust=np.ones(12),
        health=np.ones(12),
    )


def body_force_torque(
    action: np.ndarray,
    table: ThrusterTable,
    com_offset: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Net body-frame force, torque about the center of mass, and the summed
    thrust magnitude (used for propellant flow).

    `action` holds 12 on/off commands; `com_offset` shifts the center of
    mass away from the geometric center.
    """
    a = np.asarray(action, dtype=np.float64)
    if a.shape != (12,):
        raise ConfigurationError(f"action must have shape (12,), got {a.shape}")
    thrust = table.max_thrust * table.health * a  # (12,) N
    forces = table.directions * thrust[:, None]
    arms = table.positions - (0.0 if com_offset is None else np.asarray(com_offset))
    force = forces.sum(axis=0)
    torque = np.cross(arms, forces).sum(axis=0)
    return force, torque, float(thrust.sum())


# --------------------------------------------------------------------------
# Asteroid rotation state and external forces

def asteroid_angular_velocity(model: AsteroidModel, t: float) -> np.ndarray:
    """Asteroid angular velocity at time t, expressed in its own body frame.

    The magnitude and the angle to +z stay fixed while the transverse
    component precesses at the model's torque-free precession rate.
    """
    w0 = model.spin_rate
    theta = model.nutation
    arg = model.precession_rate * t + model.phase
    s = math.sin(theta)
    return w0 * np.array([s * math.cos(arg), s * math.sin(arg), math.cos(theta)])


@dataclass
class ExternalForces:
    """Slowly varying disturbances, constant over an episode."""

    accel: np.ndarray = field(default_factory=lambda: np.zeros(3))   # m/s^2, asteroid frame
    torque: np.ndarray = field(default_factory=lambda: np.zeros(3))  # N m, spacecraft body frame


@dataclass
class SpacecraftState:
    position: np.ndarray   # (3,) m, asteroid frame
    velocity: np.ndarray   # (3,) m/s, asteroid frame
    attitude: np.ndarray   # (4,) unit quaternion, body -> asteroid frame
    omega: np.ndarray      # (3,) rad/s, body frame
    mass: float            # kg
    com_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))  # m, body frame
    t: float = 0.0         # s

    def copy(self) -> "SpacecraftState":
        return SpacecraftState(
            self.position.copy(),
            self.velocity.copy(),
            self.attitude.copy(),
            self.omega.copy(),
            self.mass,
            self.com_offset.copy(),
            self.t,
        )


def _pack(state: SpacecraftState) -> np.ndarray:
    return np.concatenate(
        [state.position, state.velocity, state.attitude, state.omega, [state.mass]]
    )


def _derivative(
    y: np.ndarray,
    t: float,
    f_body: np.ndarray,
    l_body: np.ndarray,
    mdot: float,
    model: AsteroidModel,
    ext: ExternalForces,
) -> np.ndarray:
    r = y[0:3]
    v = y[3:6]
    q = y[6:10]
    w = y[10:13]
    m = y[13]

    r_norm = float(np.linalg.norm(r))
    if r_norm < 1.0:
        raise SimulationError(f"position reached {r_norm:.3f} m from the body center")
    if m <= 0.0:
        raise SimulationError("spacecraft mass is not positive")

    w_ast = asteroid_angular_velocity(model, t)

    # Translation: thrust (rotated to the asteroid frame), disturbance,
    # point-mass gravity, Coriolis, centrifugal.
    accel = (
        quat_rotate(q / np.linalg.norm(q), f_body) / m
        + ext.accel
        - model.gm * r / r_norm**3
        + 2.0 * np.cross(v, w_ast)
        + np.cross(np.cross(w_ast, r), w_ast)
    )

    # Attitude kinematics: qdot = 1/2 q * (0, w).
    qdot = 0.5 * quat_mul(q, np.array([0.0, w[0], w[1], w[2]]))

    # Rotation: diagonal inertia shrinks with mass, so Jdot = (J/m) mdot.
    j = inertia_diag(m)
    jdot = j / m * mdot
    wdot = (l_body + ext.torque - np.cross(w, j * w) - jdot * w) / j

    out = np.empty(14)
    out[0:3] = v
    out[3:6] = accel
    out[6:10] = qdot
    out[10:13] = wdot
    out[13] = mdot
    return out


def state_derivative(
    state: SpacecraftState,
    action: np.ndarray,
    model: AsteroidModel,
    table: ThrusterTable,
    ext: ExternalForces | None = None,
    isp: float = ISP_DEFAULT,
    g_ref: float = G_REF,
) -> np.ndarray:
    """Time derivative of the packed state [r, v, q, omega, m]."""
    ext = ext or ExternalForces()
    f_body, l_body, thrust_sum = body_force_torque(action, table, state.com_offset)
    mdot = -thrust_sum / (isp * g_ref)
    return _derivative(_pack(state), state.t, f_body, l_body, mdot, model, ext)


def rk4_step(
    state: SpacecraftState,
    action: np.ndarray,
    dt: float,
    model: AsteroidModel,
    table: ThrusterTable,
    ext: ExternalForces | None = None,
    isp: float = ISP_DEFAULT,
    g_ref: float = G_REF,
    renormalize: bool = True,
) -> SpacecraftState:
    """One classical Runge-Kutta step with the thruster command held fixed.

    The attitude quaternion is renormalized after the step unless
    `renormalize` is disabled (useful for measuring integrator drift).
    """
    if dt <= 0.0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    ext = ext or ExternalForces()
    f_body, l_body, thrust_sum = body_force_torque(action, table, state.com_offset)
    mdot = -thrust_sum / (isp * g_ref)

    y = _pack(state)
    t = state.t
    k1 = _derivative(y, t, f_body, l_body, mdot, model, ext)
    k2 = _derivative(y + 0.5 * dt * k1, t + 0.5 * dt, f_body, l_body, mdot, model, ext)
    k3 = _derivative(y + 0.5 * dt * k2, t + 0.5 * dt, f_body, l_body, mdot, model, ext)
    k4 = _derivative(y + dt * k3, t + dt, f_body, l_body, mdot, model, ext)
    y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    q = y[6:10]
    if renormalize:
        q = quat_normalize(q)
    return SpacecraftState(
        position=y[0:3],
        velocity=y[3:6],
        attitude=q,
        omega=y[10:13],
        mass=float(y[13]),
        com_offset=state.com_offset.copy(),
        t=t + dt,
    )
