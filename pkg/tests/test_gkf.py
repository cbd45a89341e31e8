import math

import numpy as np
import pytest
from scipy.stats import norm

from app.core.errors import InvalidArgumentError
from app.services.gkf import (
    HALF_LINE,
    flag_coefficient,
    gaussian_tube_point,
    gkf_rhs,
    gkf_table,
    gmf_half_line,
    gmf_point,
    gmf_point_numeric,
    gmf_subspace,
    gmf_whole_space,
    lebesgue_minkowski,
    recover_lkc,
    tube_volume_minkowski,
    z_matrix,
)
from app.services.special import ball_volume, chi_square_cdf, chi_square_cdf_series, mean_chi


def test_ball_volumes():
    assert ball_volume(0) == 1.0
    assert ball_volume(1) == pytest.approx(2.0, rel=1e-14)
    assert ball_volume(2) == pytest.approx(math.pi, rel=1e-14)
    assert ball_volume(3) == pytest.approx(4 * math.pi / 3, rel=1e-14)
    assert mean_chi(1) == pytest.approx(math.sqrt(2 / math.pi), rel=1e-14)


def test_flag_coefficients():
    assert flag_coefficient(3, 0) == pytest.approx(1.0)
    assert flag_coefficient(3, 3) == pytest.approx(1.0)
    assert flag_coefficient(2, 1) == pytest.approx(math.pi / 2, rel=1e-14)
    assert flag_coefficient(4, 1) == flag_coefficient(4, 3)
    with pytest.raises(InvalidArgumentError):
        flag_coefficient(2, 3)


def test_point_functionals():
    one = gmf_point(1, 6)
    assert one[0] == 0.0
    assert one[1] == pytest.approx(math.sqrt(2 / math.pi), rel=1e-13)
    assert one[2] == 0.0 and one[4] == 0.0
    two = gmf_point(2, 6)
    assert two[1] == 0.0
    assert two[2] == pytest.approx(1.0, rel=1e-13)
    assert two[3] == 0.0
    with pytest.raises(InvalidArgumentError):
        gmf_point(0)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_point_functionals_match_contour_integral(n):
    exact = gmf_point(n, 8)
    numeric = gmf_point_numeric(n, 8)
    for j in range(9):
        if exact[j] == 0.0:
            assert abs(numeric[j]) < 1e-9
        else:
            assert numeric[j] == pytest.approx(exact[j], rel=1e-6)


def test_subspace_functionals_match_point():
    assert gmf_subspace(5, 2, 2) == gmf_point(2, 2)[2]
    assert gmf_subspace(5, 2, 0) == 0.0
    with pytest.raises(InvalidArgumentError):
        gmf_subspace(2, 3, 1)


def test_half_line_and_whole_space():
    table = gmf_half_line(0.5, 3)
    assert table.kind == HALF_LINE
    assert table[0] == pytest.approx(norm.sf(0.5), rel=1e-14)
    assert table[1] == pytest.approx(norm.pdf(0.5), rel=1e-14)
    assert table[2] == pytest.approx(0.5 * norm.pdf(0.5), rel=1e-14)
    assert gmf_whole_space(3).values == (1.0, 0.0, 0.0, 0.0)


def test_lebesgue_tube_of_disc():
    minkowski = lebesgue_minkowski([1.0, math.pi, math.pi], 2)
    np.testing.assert_allclose(minkowski, [math.pi, 2 * math.pi, 2 * math.pi], rtol=1e-14)
    assert tube_volume_minkowski(minkowski, 0.5) == pytest.approx(math.pi * 1.5 ** 2, rel=1e-14)
    with pytest.raises(InvalidArgumentError):
        lebesgue_minkowski([1.0, 2.0], 2)
    with pytest.raises(InvalidArgumentError):
        tube_volume_minkowski(minkowski, -1.0)


def test_gaussian_tube_of_point():
    assert gaussian_tube_point(2, 1.0) == pytest.approx(1 - math.exp(-0.5), rel=1e-14)
    assert gaussian_tube_point(1, 1.0) == pytest.approx(math.erf(1 / math.sqrt(2)), rel=1e-14)
    for n in (1, 2, 3, 5):
        assert gaussian_tube_point(n, 1.3, series=True) == pytest.approx(gaussian_tube_point(n, 1.3), rel=1e-12)


def test_chi_square_cdf_accepts_complex_radii():
    rho = np.array([0.3 + 0.4j, 1.0 - 0.2j])
    np.testing.assert_allclose(chi_square_cdf(3, rho), chi_square_cdf_series(3, rho), rtol=1e-12)


def test_gkf_whole_space_returns_lkcs():
    lkcs = [2.0, 0.0, 4 * math.pi]
    for i in range(3):
        assert gkf_rhs(i, lkcs, gmf_whole_space(2), 2) == lkcs[i]


def test_gkf_top_index_uses_volume_only():
    lkcs = [0.0, 0.0, 4 * math.pi ** 2]
    assert gkf_rhs(2, lkcs, gmf_point(1, 4), 2) == 0.0
    assert gkf_rhs(2, lkcs, gmf_half_line(0.3, 2), 2) == pytest.approx(4 * math.pi ** 2 * norm.sf(0.3))


def test_gkf_torus_common_zeros():
    # expected number of common zeros of two fields on T² of area 4π²
    assert gkf_rhs(0, [0.0, 0.0, 4 * math.pi ** 2], gmf_point(2, 2), 2) == pytest.approx(2 * math.pi, rel=1e-14)


@pytest.mark.parametrize("u", [-1.0, 0.0, 0.7, 2.5])
def test_gkf_sphere_excursion_euler_characteristic(u):
    value = gkf_rhs(0, [2.0, 0.0, 4 * math.pi], gmf_half_line(u, 2), 2)
    assert value == pytest.approx(2 * norm.sf(u) + 2 * u * norm.pdf(u), rel=1e-13)


def test_gkf_rhs_validation():
    with pytest.raises(InvalidArgumentError):
        gkf_rhs(3, [1.0, 0.0, 1.0], gmf_point(1), 2)
    with pytest.raises(InvalidArgumentError):
        gkf_rhs(0, [1.0, 0.0], gmf_point(1), 2)
    with pytest.raises(InvalidArgumentError):
        gkf_rhs(0, [1.0, 0.0, 1.0], gmf_point(1, 1), 2)


def test_z_matrix_structure():
    z = z_matrix(3)
    assert z.size == 4
    np.testing.assert_array_equal(z.values[0], [1.0, 0.0, 0.0, 0.0])
    assert np.all(np.tril(z.values, -1) == 0.0)
    assert np.all(np.diag(z.values) != 0.0)


def test_z_matrix_rows_are_gkf_values():
    z = z_matrix(2)
    lkcs = [2.0, 0.0, 4 * math.pi]
    for n in (1, 2):
        assert z.apply(lkcs)[n] == pytest.approx(gkf_rhs(0, lkcs, gmf_point(n, 2), 2), rel=1e-14)


@pytest.mark.parametrize("a", [1, 2, 3])
def test_lkc_recovery_roundtrip(a):
    rng = np.random.default_rng(a)
    z = z_matrix(a)
    for lkcs in rng.uniform(-5.0, 5.0, (100, a + 1)):
        recovered = recover_lkc(z, z.apply(lkcs))
        np.testing.assert_allclose(recovered.values, lkcs, atol=1e-10)


def test_z_matrix_errors():
    with pytest.raises(InvalidArgumentError):
        z_matrix(-1)
    with pytest.raises(InvalidArgumentError):
        recover_lkc(z_matrix(2), [1.0, 2.0])


def test_gkf_table_on_sphere(unit_sphere):
    rows = gkf_table(unit_sphere, 1)
    assert [i for i, _ in rows] == [0, 1, 2]
    # the nodal line has the LKCs of a great circle: L_0 = 0, L_1 = 2π
    assert rows[0][1] == pytest.approx(0.0, abs=1e-6)
    assert rows[1][1] == pytest.approx(2 * math.pi, rel=1e-6)
    assert rows[2][1] == 0.0
