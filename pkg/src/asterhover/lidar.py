"""Flash-LIDAR range imaging against triangle meshes.

A square detector grid shares one illumination pulse; each pixel is modeled
as a ray from the sensor origin through the center of its angular cell. The
boresight is the -z axis of the platform frame, and a scan is always taken
at the attitude the platform held when the scan sequence was started, i.e.
the image does not rotate with the spacecraft body between scans.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .geometry import TriMesh

# Determinant cutoff below which a ray is treated as parallel to the
# triangle plane, and minimum accepted hit distance (meters).
DET_EPS = 1.0e-12
T_MIN = 1.0e-12


@dataclass
class SensorConfig:
    """Detector geometry and noise model."""

    grid_size: int = 8          # pixels per side
    fov: float = math.radians(30.0)  # full field of view per axis, rad
    max_range: float = 2000.0   # returned for misses; hits are strictly closer, m
    noise_bias_range: float = 0.0  # per-scan-sequence bias drawn from +-this, m
    noise_sigma: float = 0.0    # per-sample Gaussian sigma, m

    def validate(self) -> None:
        if self.grid_size < 1:
            raise ConfigurationError("grid_size must be >= 1")
        if not (0.0 < self.fov < math.pi):
            raise ConfigurationError("fov must lie in (0, pi)")
        if self.max_range <= 0.0:
            raise ConfigurationError("max_range must be positive")
        if self.noise_bias_range < 0.0 or self.noise_sigma < 0.0:
            raise ConfigurationError("noise parameters must be >= 0")


@dataclass
class LidarFrame:
    """One range image: `ranges[i, j]` in meters, `hit[i, j]` False for misses."""

    ranges: np.ndarray  # (grid, grid) float64
    hit: np.ndarray     # (grid, grid) bool


class PreparedMesh:
    """Mesh rearranged for batch ray casting; build once per episode."""

    def __init__(self, mesh: TriMesh):
        v = mesh.vertices
        f = mesh.faces
        self.v0 = np.ascontiguousarray(v[f[:, 0]])
        self.edge1 = np.ascontiguousarray(v[f[:, 1]] - v[f[:, 0]])
        self.edge2 = np.ascontiguousarray(v[f[:, 2]] - v[f[:, 0]])
        self.num_faces = f.shape[0]
        # Upper bound on the distance of any surface point from the origin.
        self.bound_radius = float(np.max(np.linalg.norm(v, axis=1)))


def _prepare(mesh: TriMesh | PreparedMesh) -> PreparedMesh:
    return mesh if isinstance(mesh, PreparedMesh) else PreparedMesh(mesh)


def ray_triangle_intersect(
    origin: np.ndarray,
    direction: np.ndarray,
    triangle: np.ndarray,
    cull_backface: bool = True,
) -> float | None:
    """Distance along `direction` to one triangle, or None.

    Front faces are those whose vertices appear counterclockwise from the
    ray origin side; with culling enabled a back-face crossing returns None,
    as does a parallel or degenerate triangle.
    """
    v0, v1, v2 = np.asarray(triangle, dtype=np.float64)
    e1 = v1 - v0
    e2 = v2 - v0
    pvec = np.cross(direction, e2)
    det = float(np.dot(e1, pvec))
    if cull_backface:
        if det < DET_EPS:
            return None
    elif abs(det) < DET_EPS:
        return None
    tvec = origin - v0
    u = float(np.dot(tvec, pvec))
    qvec = np.cross(tvec, e1)
    v = float(np.dot(direction, qvec))
    if det > 0.0:
        if u < 0.0 or u > det or v < 0.0 or u + v > det:
            return None
    else:
        if u > 0.0 or u < det or v > 0.0 or u + v < det:
            return None
    t = float(np.dot(e2, qvec)) / det
    if t <= T_MIN:
        return None
    return t


def cast_rays(
    mesh: TriMesh | PreparedMesh,
    origin: np.ndarray,
    directions: np.ndarray,
    max_range: float = 2000.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Nearest front-face hit per ray from a shared origin.

    Returns (ranges, hit): misses get exactly `max_range`; hits are the
    nearest intersection distance and are strictly less than `max_range`
    (a surface exactly at or beyond `max_range` reads as a miss).
    """
    prep = _prepare(mesh)
    d = np.asarray(directions, dtype=np.float64)
    single = d.ndim == 1
    d = np.atleast_2d(d)                       # (R, 3)
    origin = np.asarray(origin, dtype=np.float64)

    pvec = np.cross(d[:, None, :], prep.edge2[None, :, :])     # (R, F, 3)
    det = np.einsum("fk,rfk->rf", prep.edge1, pvec)            # (R, F)
    tvec = origin[None, :] - prep.v0                           # (F, 3)
    u = np.einsum("fk,rfk->rf", tvec, pvec)
    qvec = np.cross(tvec, prep.edge1)                          # (F, 3)
    v = d @ qvec.T                                             # (R, F)

    # Scaled barycentric tests avoid a divide until the final t. Culling:
    # only det > eps survives, which selects rays entering through the
    # outward-facing side of each triangle.
    ok = (det > DET_EPS) & (u >= 0.0) & (v >= 0.0) & (u <= det) & (u + v <= det)
    t_scaled = np.einsum("fk,fk->f", prep.edge2, qvec)         # (F,)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(ok, t_scaled[None, :] / det, np.inf)
    t[t <= T_MIN] = np.inf

    nearest = t.min(axis=1)
    hit = nearest < max_range
    ranges = np.where(hit, nearest, max_range)
    if single:
        return ranges[0], hit[0]
    return ranges, hit


def cast_ray(
    mesh: TriMesh | PreparedMesh,
    origin: np.ndarray,
    direction: np.ndarray,
    max_range: float = 2000.0,
) -> float:
    """Single-ray convenience wrapper around :func:`cast_rays`."""
    ranges, _ = cast_rays(mesh, origin, direction, max_range)
    return float(ranges)


def crossing_count(mesh: TriMesh | PreparedMesh, origin: np.ndarray, direction: np.ndarray) -> int:
    """Number of surface crossings along a ray, counting both face sides.

    Used for watertightness checks: from a point inside a closed mesh every
    direction crosses the surface an odd number of times.
    """
    prep = _prepare(mesh)
    d = np.asarray(direction, dtype=np.float64)
    pvec = np.cross(d[None, :], prep.edge2)
    det = np.einsum("fk,fk->f", prep.edge1, pvec)
    tvec = np.asarray(origin, dtype=np.float64)[None, :] - prep.v0
    u = np.einsum("fk,fk->f", tvec, pvec)
    qvec = np.cross(tvec, prep.edge1)
    v = qvec @ d
    sign = np.sign(det)
    nz = np.abs(det) > DET_EPS
    su, sv, sd = u * sign, v * sign, np.abs(det)
    ok = nz & (su >= 0.0) & (sv >= 0.0) & (su + sv <= sd)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(ok, np.einsum("fk,fk->f", prep.edge2, qvec) / det, np.inf)
    return int(np.count_nonzero(np.isfinite(t) & (t > T_MIN)))


def beam_directions(cfg: SensorConfig) -> np.ndarray:
    """Unit beam directions in the sensor frame, shape (grid, grid, 3).

    The boresight is -z. Beam (i, j) passes through the center of angular
    cell (i, j): row index i tilts toward +y as i grows, column index j
    toward +x. Cell centers are symmetric about the boresight, so the grid
    maps onto itself under 90-degree rotations about the optical axis.
    """
    cfg.validate()
    n = cfg.grid_size
    # Center angle of cell k out of n across the full field of view.
    angles = cfg.fov * ((np.arange(n) + 0.5) / n - 0.5)
    tan_a = np.tan(angles)
    tx = np.broadcast_to(tan_a[None, :], (n, n))  # columns tilt about y toward +x
    ty = np.broadcast_to(tan_a[:, None], (n, n))  # rows tilt about x toward +y
    dirs = np.stack([tx, ty, -np.ones((n, n))], axis=-1)
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    return dirs


def scan(
    mesh: TriMesh | PreparedMesh,
    position: np.ndarray,
    attitude: np.ndarray,
    cfg: SensorConfig,
    rotation_matrix: np.ndarray | None = None,
) -> LidarFrame:
    """Render one range image from `position` at quaternion `attitude`.

    `attitude` maps sensor/platform axes into the frame the mesh lives in
    (scalar-first, body to asteroid frame). Pass `rotation_matrix` to skip
    the quaternion conversion when the caller already has it.
    """
    from .dynamics import quat_to_dcm

    if rotation_matrix is None:
        rotation_matrix = quat_to_dcm(np.asarray(attitude, dtype=np.float64))
    dirs = beam_directions(cfg).reshape(-1, 3) @ rotation_matrix.T
    ranges, hit = cast_rays(mesh, position, dirs, cfg.max_range)
    n = cfg.grid_size
    return LidarFrame(ranges.reshape(n, n), hit.reshape(n, n))


def apply_sensor_noise(
    frame: LidarFrame,
    bias: float,
    sigma: float,
    rng: np.random.Generator,
    max_range: float = 2000.0,
) -> LidarFrame:
    """Additive bias plus white noise on returned samples only.

    Misses stay exactly at the miss value; noisy returns are clamped to
    (0, max_range].
    """
    ranges = frame.ranges.copy()
    if frame.hit.any():
        noisy = ranges[frame.hit] + bias + rng.normal(0.0, sigma, size=int(frame.hit.sum()))
        tiny = 1.0e-6
        ranges[frame.hit] = np.clip(noisy, tiny, max_range)
    return LidarFrame(ranges, frame.hit.copy())
