import math

import pytest

from app.services.atlas import make_flat_torus, make_round_sphere
from app.services.gp_model import build_model


@pytest.fixture(scope="session")
def unit_sphere():
    return make_round_sphere(1.0, nodes=48)


@pytest.fixture(scope="session")
def sphere_r2():
    return make_round_sphere(2.0, nodes=48)


@pytest.fixture(scope="session")
def flat_torus():
    return make_flat_torus(2, [2 * math.pi, 2 * math.pi], nodes_per_axis=48)


@pytest.fixture(scope="session")
def small_torus():
    return make_flat_torus(2, [2 * math.pi, 2 * math.pi], nodes_per_axis=16)


@pytest.fixture(scope="session")
def sphere_model(unit_sphere):
    return build_model(unit_sphere, 32, "uniform-shell", 7)


@pytest.fixture(scope="session")
def torus_model(flat_torus):
    return build_model(flat_torus, 16, "uniform-shell", 11)
