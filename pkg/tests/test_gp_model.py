import math

import numpy as np
import pytest

from app.core.errors import InvalidArgumentError
from app.services.atlas import ChartPoint
from app.services.gp_model import (
    SpectralShape,
    build_model,
    covariance,
    eval_jet,
    eval_jets,
    eval_values,
    induced_metric,
    load_model,
    sample,
    save_model,
)


@pytest.mark.parametrize("shape", ["uniform-shell", "gaussian"])
def test_model_is_normalized_and_isotropic(unit_sphere, shape):
    model = build_model(unit_sphere, 24, shape, 123)
    assert model.total_variance == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(model.second_moment, np.eye(3), atol=1e-10)


def test_model_is_deterministic_in_seed(flat_torus):
    first = build_model(flat_torus, 16, "gaussian", 5)
    again = build_model(flat_torus, 16, "gaussian", 5)
    other = build_model(flat_torus, 16, "gaussian", 6)
    np.testing.assert_array_equal(first.frequencies, again.frequencies)
    assert not np.allclose(first.frequencies, other.frequencies)


def test_too_few_waves(unit_sphere):
    with pytest.raises(InvalidArgumentError):
        build_model(unit_sphere, 6, "uniform-shell", 1)


def test_spectrum_aliases():
    assert SpectralShape.parse("uniform-sphere-shell") is SpectralShape.UNIFORM_SHELL
    assert SpectralShape.parse("gaussian-isotropic") is SpectralShape.GAUSSIAN
    with pytest.raises(InvalidArgumentError):
        SpectralShape.parse("matern")


def test_induced_metric_matches_ambient_metric(unit_sphere, sphere_model):
    theta = 1.1
    g = induced_metric(sphere_model, unit_sphere, ChartPoint(0, (theta, 2.0)))
    np.testing.assert_allclose(g, np.diag([1.0, math.sin(theta) ** 2]), atol=1e-10)


def test_sample_is_reproducible(sphere_model):
    a, b = sample(sphere_model, 42), sample(sphere_model, 42)
    np.testing.assert_array_equal(a.coefficients, b.coefficients)
    assert a.coefficients.shape == (2 * sphere_model.num_waves,)


def test_jets_match_finite_differences(unit_sphere, sphere_model):
    s = sample(sphere_model, 9)
    x = np.array([[0.9, 4.0]])
    jet = eval_jets(s, unit_sphere, 0, x)
    assert jet.value[0] == pytest.approx(eval_values(s, unit_sphere, 0, x)[0], abs=1e-13)
    h = 1e-5
    for a in range(2):
        step = np.zeros(2)
        step[a] = h
        plus, minus = eval_jets(s, unit_sphere, 0, x + step), eval_jets(s, unit_sphere, 0, x - step)
        assert jet.grad[0, a] == pytest.approx((plus.value[0] - minus.value[0]) / (2 * h), abs=1e-8)
        np.testing.assert_allclose(jet.hess[0, :, a], (plus.grad[0] - minus.grad[0]) / (2 * h), atol=1e-8)
        np.testing.assert_allclose(jet.third[0, :, :, a], (plus.hess[0] - minus.hess[0]) / (2 * h), atol=1e-8)


def test_single_point_jet(unit_sphere, sphere_model):
    s = sample(sphere_model, 10)
    point = ChartPoint(1, (1.2, 0.3))
    jet = eval_jet(s, unit_sphere, point)
    assert jet.hess.shape == (2, 2)
    np.testing.assert_allclose(jet.hess, jet.hess.T, atol=1e-12)


def test_field_has_unit_variance(unit_sphere, sphere_model):
    x = ChartPoint(0, (0.5, 1.0))
    assert covariance(sphere_model, unit_sphere, x, x) == pytest.approx(1.0, abs=1e-12)
    # the same ambient point through the other chart
    same = unit_sphere.locate(unit_sphere.chart(0).ambient_map(x.as_array()))[-1]
    assert covariance(sphere_model, unit_sphere, x, same) == pytest.approx(1.0, abs=1e-12)


def test_save_and_load(tmp_path, sphere_model):
    path = tmp_path / "model.json"
    save_model(sphere_model, path)
    loaded = load_model(path)
    np.testing.assert_array_equal(loaded.frequencies, sphere_model.frequencies)
    np.testing.assert_array_equal(loaded.amplitudes, sphere_model.amplitudes)
    assert loaded.spectrum is sphere_model.spectrum


@pytest.fixture(scope="module")
def many_samples(sphere_model):
    return [sample(sphere_model, seed) for seed in range(4000)]


def test_samples_have_zero_mean_and_unit_variance(unit_sphere, many_samples):
    x = np.array([[0.9, 2.2]])
    values = np.array([eval_values(s, unit_sphere, 0, x)[0] for s in many_samples])
    assert abs(values.mean()) < 0.06
    assert values.var() == pytest.approx(1.0, abs=0.1)


def test_covariance_matches_monte_carlo(unit_sphere, sphere_model, many_samples):
    x, y = ChartPoint(0, (0.9, 2.2)), ChartPoint(0, (1.3, 2.6))
    fx = np.array([eval_values(s, unit_sphere, 0, x.as_array())[0] for s in many_samples])
    fy = np.array([eval_values(s, unit_sphere, 0, y.as_array())[0] for s in many_samples])
    assert np.mean(fx * fy) == pytest.approx(covariance(sphere_model, unit_sphere, x, y), abs=0.09)


def test_gradient_second_moment_is_induced_metric(unit_sphere, sphere_model, many_samples):
    x = ChartPoint(0, (1.1, 0.4))
    grads = np.stack([eval_jet(s, unit_sphere, x).grad for s in many_samples])
    empirical = np.einsum("ni,nj->ij", grads, grads) / len(grads)
    np.testing.assert_allclose(empirical, induced_metric(sphere_model, unit_sphere, x), atol=0.1)
