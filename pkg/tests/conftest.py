import math

import numpy as np
import pytest

from asterhover.geometry import (
    GRAVITATIONAL_CONSTANT,
    AsteroidModel,
    ellipsoid_rotation_params,
    generate_icosphere,
)


def make_model(
    mass: float = 1.0e12,
    spin_rate: float = 0.0,
    nutation: float = 0.0,
    phase: float = 0.0,
    axes: tuple[float, float, float] = (500.0, 400.0, 300.0),
    srp: tuple[float, float, float] = (0.0, 0.0, 0.0),
    mesh_level: int = 0,
    mesh_scale: float = 1.0,
) -> AsteroidModel:
    """Asteroid model with hand-picked dynamics, for oracle tests."""
    mesh = generate_icosphere(mesh_level)
    mesh.vertices *= mesh_scale
    _, sigma = ellipsoid_rotation_params(*axes)
    return AsteroidModel(
        mesh=mesh,
        mass=mass,
        gm=GRAVITATIONAL_CONSTANT * mass,
        spin_rate=spin_rate,
        nutation=nutation,
        phase=phase,
        precession_rate=sigma * spin_rate * math.cos(nutation),
        sigma=sigma,
        axes=np.asarray(axes, dtype=np.float64),
        srp_accel=np.asarray(srp, dtype=np.float64),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20260816)
