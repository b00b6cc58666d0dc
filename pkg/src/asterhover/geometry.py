"""Procedural asteroid shape models and triangle-mesh utilities.

Shapes start from a subdivided icosahedron (an icosphere), get a random
radial roughening, and are then stretched per octant by six independent
half-axes so the body is a different size in the +x/-x/+y/-y/+z/-z
directions. All coordinates are in the asteroid body-fixed frame, meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, MeshLoadError

# Universal gravitational constant, m^3 kg^-1 s^-2.
GRAVITATIONAL_CONSTANT = 6.674e-11


@dataclass
class TriMesh:
    """Indexed triangle mesh. Faces are CCW when viewed from outside."""

    vertices: np.ndarray  # (V, 3) float64, meters
    faces: np.ndarray     # (F, 3) int64, indices into vertices

    def copy(self) -> "TriMesh":
        return TriMesh(self.vertices.copy(), self.faces.copy())

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_faces(self) -> int:
        return self.faces.shape[0]


def face_normals(mesh: TriMesh, normalize: bool = True) -> np.ndarray:
    """Per-face normal vectors, outward for a correctly wound closed mesh."""
    v = mesh.vertices
    f = mesh.faces
    n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    if normalize:
        lengths = np.linalg.norm(n, axis=1, keepdims=True)
        n = n / np.where(lengths > 0.0, lengths, 1.0)
    return n


def edge_counts(mesh: TriMesh) -> dict[tuple[int, int], int]:
    """Count how many faces reference each undirected edge."""
    counts: dict[tuple[int, int], int] = {}
    for a, b, c in mesh.faces:
        for i, j in ((a, b), (b, c), (c, a)):
            key = (int(min(i, j)), int(max(i, j)))
            counts[key] = counts.get(key, 0) + 1
    return counts


def is_closed(mesh: TriMesh) -> bool:
    """True when every edge is shared by exactly two faces."""
    return all(n == 2 for n in edge_counts(mesh).values())


# Vertices of a regular icosahedron built from three orthogonal golden
# rectangles, then pushed onto the unit sphere.
def _base_icosahedron() -> TriMesh:
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=np.float64,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    mesh = TriMesh(verts, faces)
    # Enforce outward winding; the body is star-shaped about the origin so
    # an outward normal has positive dot product with the face centroid.
    centroids = verts[faces].mean(axis=1)
    flip = np.einsum("ij,ij->i", face_normals(mesh, normalize=False), centroids) < 0.0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    return mesh


def _subdivide(mesh: TriMesh) -> TriMesh:
    """One 4-way subdivision pass with shared-edge midpoint reuse."""
    verts = [row for row in mesh.vertices]
    midpoint_cache: dict[tuple[int, int], int] = {}

    def midpoint(i: int, j: int) -> int:
        key = (min(i, j), max(i, j))
        idx = midpoint_cache.get(key)
        if idx is None:
            m = 0.5 * (verts[i] + verts[j])
            m = m / np.linalg.norm(m)  # keep intermediate spheres unit
            idx = len(verts)
            verts.append(m)
            midpoint_cache[key] = idx
        return idx

    new_faces = np.empty((mesh.num_faces * 4, 3), dtype=np.int64)
    k = 0
    for a, b, c in mesh.faces:
        ab = midpoint(int(a), int(b))
        bc = midpoint(int(b), int(c))
        ca = midpoint(int(c), int(a))
        new_faces[k] = (a, ab, ca)
        new_faces[k + 1] = (b, bc, ab)
        new_faces[k + 2] = (c, ca, bc)
        new_faces[k + 3] = (ab, bc, ca)
        k += 4
    return TriMesh(np.asarray(verts, dtype=np.float64), new_faces)


_ICOSPHERE_CACHE: dict[int, TriMesh] = {}


def generate_icosphere(level: int) -> TriMesh:
    """Unit icosphere after `level` recursive subdivisions.

    Level 0 is the icosahedron itself (12 vertices, 20 faces); each level
    multiplies the face count by four. Returns a fresh copy, safe to mutate.
    """
    if level < 0:
        raise ConfigurationError(f"subdivision level must be >= 0, got {level}")
    if level not in _ICOSPHERE_CACHE:
        mesh = _base_icosahedron()
        for _ in range(level):
            mesh = _subdivide(mesh)
        _ICOSPHERE_CACHE[level] = mesh
    return _ICOSPHERE_CACHE[level].copy()


@dataclass
class AsteroidGenConfig:
    """Ranges for the random shape synthesis."""

    subdivision_level: int = 2
    perturbation_min: float = 0.005  # radial roughness bound, fraction of unit radius
    perturbation_max: float = 0.05
    axis_min: float = 300.0  # half-axis range, m
    axis_max: float = 600.0

    def validate(self) -> None:
        if self.subdivision_level < 0:
            raise ConfigurationError("subdivision_level must be >= 0")
        if not (0.0 <= self.perturbation_min <= self.perturbation_max):
            raise ConfigurationError("perturbation range must satisfy 0 <= min <= max")
        if not (0.0 < self.axis_min <= self.axis_max):
            raise ConfigurationError("axis range must satisfy 0 < min <= max")


@dataclass
class AsteroidDynRanges:
    """Ranges for the random mass and rotation-state synthesis."""

    mass_min: float = 1.0e10   # kg
    mass_max: float = 1.5e12
    spin_min: float = 1.0e-6   # body rate magnitude, rad/s
    spin_max: float = 5.0e-4
    nutation_min: float = math.radians(45.0)  # angle between spin axis and +z, rad
    nutation_max: float = math.radians(90.0)
    srp_max: float = 100.0e-6  # per-component solar pressure accel bound, m/s^2

    def validate(self) -> None:
        if not (0.0 < self.mass_min <= self.mass_max):
            raise ConfigurationError("mass range must satisfy 0 < min <= max")
        if not (0.0 <= self.spin_min <= self.spin_max):
            raise ConfigurationError("spin range must satisfy 0 <= min <= max")
        if not (0.0 <= self.nutation_min <= self.nutation_max <= math.pi):
            raise ConfigurationError("nutation range must lie in [0, pi] with min <= max")
        if self.srp_max < 0.0:
            raise ConfigurationError("srp_max must be >= 0")


@dataclass
class AsteroidModel:
    """A synthesized (or loaded) small body: shape plus rotation state.

    The angular velocity direction precesses about +z at `precession_rate`
    while keeping the nutation angle fixed; see
    :func:`asterhover.dynamics.asteroid_angular_velocity`.
    """

    mesh: TriMesh
    mass: float                # kg
    gm: float                  # gravitational parameter G*M, m^3/s^2
    spin_rate: float           # |omega|, rad/s
    nutation: float            # rad
    phase: float               # precession phase at t=0, rad
    precession_rate: float     # rad/s
    sigma: float               # inertia-ratio asymmetry parameter
    axes: np.ndarray           # effective half-axes (a, b, c), m
    srp_accel: np.ndarray      # (3,) solar pressure + outgassing accel, m/s^2


def ellipsoid_rotation_params(a: float, b: float, c: float) -> tuple[float, float]:
    """Inertia ratio and asymmetry parameter of a triaxial ellipsoid.

    For half-axes (a, b, c) the moment about x is proportional to b^2 + c^2,
    so ratio = (b^2 + c^2) / (a^2 + b^2) compares the spin-axis moment to a
    transverse one, and sigma = 1/ratio - 1 sets the torque-free precession
    rate.
    """
    if a <= 0.0 or b <= 0.0 or c <= 0.0:
        raise ConfigurationError(f"half-axes must be positive, got {(a, b, c)}")
    ratio = (b * b + c * c) / (a * a + b * b)
    sigma = 1.0 / ratio - 1.0
    return ratio, sigma


def synthesize_asteroid(
    seed: int | np.random.Generator,
    cfg: AsteroidGenConfig | None = None,
    dyn: AsteroidDynRanges | None = None,
) -> AsteroidModel:
    """Draw a random asteroid: perturbed icosphere, octant scaling, rotation state.

    The same seed always yields the same model. Draw order is fixed:
    roughness amplitude, six half-axes (+x, -x, +y, -y, +z, -z), vertex
    perturbations, mass, spin rate, nutation, phase, SRP components.
    """
    cfg = cfg or AsteroidGenConfig()
    dyn = dyn or AsteroidDynRanges()
    cfg.validate()
    dyn.validate()
    rng = np.random.default_rng(seed)

    p = rng.uniform(cfg.perturbation_min, cfg.perturbation_max)
    half_axes = rng.uniform(cfg.axis_min, cfg.axis_max, size=6)  # +x -x +y -y +z -z

    mesh = generate_icosphere(cfg.subdivision_level)
    mesh.vertices += rng.uniform(-p, p, size=mesh.vertices.shape)

    pos = half_axes[0::2]  # scale used where the coordinate is >= 0
    neg = half_axes[1::2]
    scale = np.where(mesh.vertices >= 0.0, pos, neg)
    mesh.vertices *= scale

    mass = rng.uniform(dyn.mass_min, dyn.mass_max)
    spin = rng.uniform(dyn.spin_min, dyn.spin_max)
    nutation = rng.uniform(dyn.nutation_min, dyn.nutation_max)
    phase = rng.uniform(0.0, 2.0 * math.pi)
    srp = rng.uniform(-dyn.srp_max, dyn.srp_max, size=3)

    axes = 0.5 * (pos + neg)  # effective half-axes of the comparison ellipsoid
    _, sigma = ellipsoid_rotation_params(*axes)
    precession = sigma * spin * math.cos(nutation)

    return AsteroidModel(
        mesh=mesh,
        mass=mass,
        gm=GRAVITATIONAL_CONSTANT * mass,
        spin_rate=spin,
        nutation=nutation,
        phase=phase,
        precession_rate=precession,
        sigma=sigma,
        axes=axes,
        srp_accel=srp,
    )


def mesh_half_extents(mesh: TriMesh) -> np.ndarray:
    """Half the bounding-box span along each axis; ellipsoid stand-in for
    meshes that were loaded from a file rather than synthesized."""
    return 0.5 * (mesh.vertices.max(axis=0) - mesh.vertices.min(axis=0))


def make_peanut_mesh(
    level: int = 3,
    lobe_radius: float = 267.0,
    waist_radius: float = 147.0,
    flatten: float = 0.71,
) -> TriMesh:
    """Elongated two-lobed test body, roughly contact-binary proportions.

    Radius grows from `waist_radius` on the y-z plane to `lobe_radius` at the
    +-x poles, then the z axis is compressed by `flatten`. Star-shaped about
    the origin, so it is safe for the same ray casting paths as synthesized
    shapes.
    """
    if lobe_radius <= 0.0 or waist_radius <= 0.0 or not (0.0 < flatten <= 1.0):
        raise ConfigurationError("peanut parameters must be positive (flatten in (0, 1])")
    mesh = generate_icosphere(level)
    u = mesh.vertices
    radius = waist_radius + (lobe_radius - waist_radius) * u[:, 0] ** 2
    mesh.vertices = u * radius[:, None]
    mesh.vertices[:, 2] *= flatten
    return mesh


def save_mesh(path: str, mesh: TriMesh) -> None:
    """Write a mesh as ASCII `v x y z` / `f i j k` records (1-based indices)."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"# {mesh.num_vertices} vertices, {mesh.num_faces} faces\n")
        for x, y, z in mesh.vertices:
            fh.write(f"v {x:.17g} {y:.17g} {z:.17g}\n")
        for a, b, c in mesh.faces:
            fh.write(f"f {a + 1} {b + 1} {c + 1}\n")


def load_mesh(path: str, scale: float = 1.0) -> TriMesh:
    """Read a mesh written by :func:`save_mesh` (a subset of Wavefront OBJ).

    Only `v` and `f` records are interpreted; `#` comments and other record
    types are skipped. Faces must be triangles and use 1-based vertex
    indices. Vertices are multiplied by `scale` after loading.
    """
    if scale <= 0.0:
        raise ConfigurationError(f"mesh scale must be positive, got {scale}")
    vertices: list[list[float]] = []
    faces: list[list[int]] = []
    face_lines: list[int] = []
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            kind = tokens[0]
            if kind == "v":
                if len(tokens) != 4:
                    raise MeshLoadError(
                        f"{path}:{lineno}: vertex needs exactly 3 coordinates"
                    )
                try:
                    vertices.append([float(t) for t in tokens[1:]])
                except ValueError as exc:
                    raise MeshLoadError(
                        f"{path}:{lineno}: bad vertex coordinate: {exc}"
                    ) from None
            elif kind == "f":
                if len(tokens) != 4:
                    raise MeshLoadError(
                        f"{path}:{lineno}: only triangular faces are supported"
                    )
                try:
                    # Tolerate "f 1/1/1 2/2/2 3/3/3" style by taking the
                    # leading vertex index of each vertex tuple.
                    idx = [int(t.split("/")[0]) for t in tokens[1:]]
                except ValueError as exc:
                    raise MeshLoadError(
                        f"{path}:{lineno}: bad face index: {exc}"
                    ) from None
                faces.append(idx)
                face_lines.append(lineno)
            # Any other record type (vn, vt, o, g, s, ...) is ignored.
    if not vertices:
        raise MeshLoadError(f"{path}: no vertices found")
    if not faces:
        raise MeshLoadError(f"{path}: no faces found")
    nv = len(vertices)
    face_arr = np.asarray(faces, dtype=np.int64)
    for row, lineno in zip(face_arr, face_lines):
        for idx in row:
            if idx < 1 or idx > nv:
                raise MeshLoadError(
                    f"{path}:{lineno}: face index {idx} outside 1..{nv}"
                )
    verts = np.asarray(vertices, dtype=np.float64) * scale
    return TriMesh(verts, face_arr - 1)
