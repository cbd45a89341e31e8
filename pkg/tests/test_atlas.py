import math

import numpy as np
import pytest

from app.core.errors import InvalidArgumentError
from app.services.atlas import (
    TrigMonomialMap,
    integrate_scalar,
    make_flat_torus,
    make_round_sphere,
    manifold_dimension,
    parse_manifold,
)


def ones(chart_id, coords):
    return np.ones(coords.shape[0])


def test_torus_volume(flat_torus):
    area = integrate_scalar(flat_torus, ones, flat_torus.reference_metric)
    assert area == pytest.approx(4 * math.pi ** 2, abs=1e-10)


def test_sphere_area(unit_sphere, sphere_r2):
    assert integrate_scalar(unit_sphere, ones, unit_sphere.reference_metric) == pytest.approx(4 * math.pi, abs=1e-8)
    assert integrate_scalar(sphere_r2, ones, sphere_r2.reference_metric) == pytest.approx(16 * math.pi, abs=1e-7)


def test_sphere_integrates_polynomial(unit_sphere):
    # ∫ z² dA = 4π/3
    def z_squared(chart_id, coords):
        return unit_sphere.chart(chart_id).ambient_map(coords)[:, 2] ** 2

    value = integrate_scalar(unit_sphere, z_squared, unit_sphere.reference_metric)
    assert value == pytest.approx(4 * math.pi / 3, abs=1e-8)


def test_partition_sums_to_one(unit_sphere, flat_torus):
    assert unit_sphere.partition_defect(1000, seed=1) < 1e-12
    assert flat_torus.partition_defect(100, seed=1) < 1e-12


def test_transition_cocycle(unit_sphere):
    assert unit_sphere.cocycle_defect(200, seed=2) < 1e-9


def test_transition_jacobians_invert(unit_sphere):
    coords = np.array([[1.0, 2.0], [2.2, 0.4]])
    forward = unit_sphere.transition_jacobian(0, 1, coords)
    there = unit_sphere.transition(0, 1, coords)
    backward = unit_sphere.transition_jacobian(1, 0, there)
    for f, b in zip(forward, backward):
        np.testing.assert_allclose(b @ f, np.eye(2), atol=1e-10)


def test_locate_and_owner(unit_sphere):
    north = np.array([0.0, 0.0, 1.0])
    located = unit_sphere.locate(north)
    assert [p.chart for p in located] == [1]
    assert unit_sphere.owner(north) == 1
    assert unit_sphere.owner(np.array([1.0, 0.0, 0.0])) == 0
    equator = np.array([0.0, 1.0, 0.0])
    assert sorted(p.chart for p in unit_sphere.locate(equator)) == [0, 1]


def test_owned_points_lie_in_core(unit_sphere):
    rng = np.random.default_rng(3)
    for point in unit_sphere.point_sampler(rng, 300):
        owner = unit_sphere.owner(point)
        chart = unit_sphere.chart(owner)
        coords = chart.wrap(chart.inverse(point))
        assert chart.in_core(coords)[0]


def test_evaluation_grid(unit_sphere, flat_torus):
    grid = unit_sphere.evaluation_grid(0, 10)
    assert grid.shape == (100, 2)
    assert np.all(unit_sphere.chart(0).in_core(grid))
    torus_grid = flat_torus.evaluation_grid(0, 8)
    assert torus_grid.shape == (64, 2)
    assert np.max(torus_grid) < 2 * math.pi


def test_reference_metric_of_sphere(unit_sphere):
    coords = np.array([[0.7, 1.3]])
    g = unit_sphere.reference_metric(0, coords)[0]
    np.testing.assert_allclose(g, np.diag([1.0, math.sin(0.7) ** 2]), atol=1e-14)


def test_trig_map_derivatives_match_finite_differences():
    ambient = TrigMonomialMap([2.0, 1.0], [[1, 2], [2, 0]], [[1.0, 3.0], [2.0, 0.0]], [[0.1, 0.0], [0.0, 0.0]])
    x = np.array([[0.3, -0.8]])
    value, jac, hess, _ = ambient.jet(x, 3)
    h = 1e-6
    for a in range(2):
        step = np.zeros(2)
        step[a] = h
        fd = (ambient.jet(x + step, 1)[0] - ambient.jet(x - step, 1)[0]) / (2 * h)
        np.testing.assert_allclose(jac[0, :, a], fd[0], atol=1e-8)
        fd2 = (ambient.jet(x + step, 1)[1] - ambient.jet(x - step, 1)[1]) / (2 * h)
        np.testing.assert_allclose(hess[0, :, :, a], fd2[0], atol=1e-7)


def test_shifted_torus_origin_is_same_manifold():
    atlas = make_flat_torus(2, [3.0, 5.0], 16, origin=[1.5, 2.5])
    assert atlas.total_volume == pytest.approx(15.0)
    assert integrate_scalar(atlas, ones, atlas.reference_metric) == pytest.approx(15.0, abs=1e-12)


@pytest.mark.parametrize("spec", ["klein:2", "torus:x", "sphere", "torus:2:1.0"])
def test_parse_manifold_rejects_bad_specs(spec):
    with pytest.raises(InvalidArgumentError):
        parse_manifold(spec, 8)


def test_constructor_validation():
    with pytest.raises(InvalidArgumentError):
        make_flat_torus(2, [1.0])
    with pytest.raises(InvalidArgumentError):
        make_flat_torus(1, [-1.0])
    with pytest.raises(InvalidArgumentError):
        make_round_sphere(0.0)


def test_manifold_dimension():
    assert manifold_dimension("torus:3") == 3
    assert manifold_dimension("torus:1:2.5") == 1
    assert manifold_dimension("sphere:2") == 2
    with pytest.raises(InvalidArgumentError):
        manifold_dimension("torus:0")


def test_volumes_within_declared_tolerance(unit_sphere, flat_torus):
    for atlas in (unit_sphere, flat_torus):
        area = integrate_scalar(atlas, ones, atlas.reference_metric)
        assert abs(area - atlas.total_volume) < atlas.quadrature_tol


def test_refining_nodes_changes_little(unit_sphere):
    finer = make_round_sphere(1.0, nodes=96)

    def z_fourth(atlas):
        return lambda chart_id, coords: atlas.chart(chart_id).ambient_map(coords)[:, 2] ** 4

    coarse = integrate_scalar(unit_sphere, z_fourth(unit_sphere), unit_sphere.reference_metric)
    fine = integrate_scalar(finer, z_fourth(finer), finer.reference_metric)
    assert abs(coarse - fine) < unit_sphere.quadrature_tol
    assert fine == pytest.approx(4 * math.pi / 5, abs=1e-8)


def test_integration_is_linear(unit_sphere):
    def z_squared(chart_id, coords):
        return unit_sphere.chart(chart_id).ambient_map(coords)[:, 2] ** 2

    def xy_plus_one(chart_id, coords):
        p = unit_sphere.chart(chart_id).ambient_map(coords)
        return p[:, 0] * p[:, 1] + 1.0

    def combined(chart_id, coords):
        return 2.5 * z_squared(chart_id, coords) - 0.75 * xy_plus_one(chart_id, coords)

    metric = unit_sphere.reference_metric
    expected = 2.5 * integrate_scalar(unit_sphere, z_squared, metric) - 0.75 * integrate_scalar(unit_sphere, xy_plus_one, metric)
    assert integrate_scalar(unit_sphere, combined, metric) == pytest.approx(expected, rel=1e-12)


def test_cosine_integrates_to_zero_on_circle():
    circle = make_flat_torus(1, [2 * math.pi], 16)
    value = integrate_scalar(circle, lambda chart_id, coords: np.cos(coords[:, 0]), circle.reference_metric)
    assert abs(value) < 1e-12


def test_with_nodes_rebuilds_once(unit_sphere):
    assert unit_sphere.with_nodes(unit_sphere.nodes_per_axis) is unit_sphere
    finer = unit_sphere.with_nodes(64)
    assert finer.nodes_per_axis == 64
    assert unit_sphere.with_nodes(64) is finer
    assert finer.name == unit_sphere.name
    assert integrate_scalar(finer, ones, finer.reference_metric) == pytest.approx(4 * math.pi, abs=1e-8)

    shifted = make_flat_torus(2, [3.0, 5.0], 8, origin=[1.0, 0.5])
    assert shifted.with_nodes(16).quadrature[0].nodes.shape == (256, 2)
