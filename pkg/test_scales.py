"""
Tests for the closed-form window scales and the leading-order predictions.
"""
import math

import pytest

from src.kernels import scales
from src.kernels.covariance import const_q, green, green_infty
from src.kernels.profiles import profile_f
from src.models.errors import ScaleError
from src.models.lattice import BoundaryCondition, LatticeShape, from_coords
from src.models.parameters import Regime, ScaleParams

PERIODIC = BoundaryCondition.PERIODIC
FREE = BoundaryCondition.FREE


@pytest.fixture
def params_4d():
    params, _ = scales.leading_order_params(4, 2, 6, 1, 0.05)
    return params


@pytest.fixture
def params_5d():
    params, _ = scales.leading_order_params(5, 2, 4, 1, 0.05)
    return params


def test_constants():
    assert scales.const_B(1, 4, 2) == pytest.approx(8.4375)
    assert scales.hat_gamma(1) == pytest.approx(1.0 / 3.0)
    assert scales.hat_theta(4) == 0.0


def test_theta_zero_removes_polynomial_factor():
    """n = 4 in d = 4: w_N carries no N^{-θ̂} factor."""
    params = ScaleParams(4, 2, 5, n=4, A_d=1.0)
    B = scales.const_B(4, 4, 2)
    expected = math.log(4.0) ** scales.hat_gamma(4) * B ** -0.5 * 2.0 ** -10
    assert scales.window_w(params) == pytest.approx(expected)


def test_scales_above_four_dimensions(params_5d):
    """d > 4: w_N = A g^{1/2} L^{-dN/2}, 𝗁_N = g^{-1/4} L^{-dN/4}."""
    assert scales.window_w(params_5d) == pytest.approx(math.sqrt(0.05) * 2.0 ** -10)
    assert scales.large_field_h(params_5d) == pytest.approx(0.05 ** -0.25 * 2.0 ** -5)
    assert scales.shift_v(params_5d) == pytest.approx(2.0 ** -8)
    assert scales.gaussian_l(params_5d) == pytest.approx(2.0 ** -6)


def test_mass_window_examples(params_4d):
    """Periodic s = 0 gives a = 0; free Gaussian s = q gives a = 0."""
    assert scales.mass_window(0.0, PERIODIC, Regime.NON_GAUSSIAN, params_4d) == 0.0
    q = const_q(4, 2)
    assert scales.mass_window(q, FREE, Regime.GAUSSIAN, params_4d) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ScaleError):
        scales.mass_window(0.0, PERIODIC, 'gaussian', params_4d)


def test_mass_window_is_the_zero_mode_mass(params_4d):
    """The free window mass sits exactly q L^{-2N} below the periodic one."""
    for s in (-1.0, 0.5, 2.0):
        periodic = scales.mass_window(s, PERIODIC, Regime.NON_GAUSSIAN, params_4d)
        free = scales.mass_window(s, FREE, Regime.NON_GAUSSIAN, params_4d)
        assert periodic - free == pytest.approx(const_q(4, 2) * 2.0 ** -12)


def test_effective_critical_points(params_4d, params_5d):
    assert scales.nu_eff(PERIODIC, params_4d) == (params_4d.nu_c, False)
    nu_free, approximate = scales.nu_eff(FREE, params_4d)
    assert nu_free < params_4d.nu_c and not approximate
    params_6d, _ = scales.leading_order_params(6, 2, 3, 1, 0.05)
    assert scales.nu_eff(FREE, params_6d)[1] is True
    assert scales.window_separation(params_5d) > 0


def test_critical_domain(params_4d):
    lower, upper = scales.critical_domain(params_4d)
    assert lower < 0 < upper
    assert scales.in_critical_domain(0.0, params_4d)
    assert not scales.in_critical_domain(1.0, params_4d)


@pytest.mark.parametrize("d", [4, 5])
def test_susceptibility_forms_agree(d):
    params, _ = scales.leading_order_params(d, 2, 4, 1, 0.05)
    for s in (-1.0, 0.0, 2.0):
        assert scales.chi_nongaussian(s, params) == pytest.approx(
            scales.chi_nongaussian_closed_form(s, params), rel=1e-12)


def test_gaussian_predictions(params_4d):
    """χ and moments in the Gaussian regime, and Σ_x G = s^{-1} L^{2N}."""
    assert scales.chi_gaussian(2.0, params_4d) == pytest.approx(2.0 ** 12 / 2.0)
    assert scales.moment_gaussian(1, 2.0, params_4d) == pytest.approx(2.0 ** -12 * 0.5)
    for bc in (PERIODIC, FREE):
        for s in (0.5, 3.0):
            assert scales.gaussian_prediction_sum(s, params_4d, bc) == pytest.approx(2.0 ** 12 / s, rel=1e-10)
    with pytest.raises(ScaleError):
        scales.chi_gaussian(0.0, params_4d)


def test_predict_plateau(params_4d):
    """The prediction is ℂ_{0,∞}(x) plus f_n(s) 𝗁_N²."""
    shape = LatticeShape(4, 2, 6)
    x = from_coords((4, 0, 0, 0), shape)
    prediction = scales.predict_plateau(x, 0.5, params_4d)
    assert prediction.decay_term == pytest.approx(green_infty(x, 1e-14).value)
    assert prediction.plateau_term == pytest.approx(profile_f(1, 0.5) * scales.large_field_h(params_4d) ** 2)
    assert prediction.total == prediction.decay_term + prediction.plateau_term
    assert prediction.jxy == 3
    record = prediction.to_dict()
    assert record['regime'] == 'nongaussian'
    assert record['metadata']['caveats']


def test_predict_gaussian(params_4d):
    shape = LatticeShape(4, 2, 6, FREE)
    x = from_coords((1, 0, 0, 0), shape)
    prediction = scales.predict_gaussian(x, 2.0, params_4d, FREE)
    a = (2.0 - const_q(4, 2)) * 2.0 ** -12
    assert prediction.decay_term == pytest.approx(green(FREE, a, shape, x))
    assert prediction.plateau_term == 0.0
    with pytest.raises(ScaleError):
        scales.predict_gaussian(x, -1.0, params_4d)


def test_crossover_radius(params_5d):
    """At the crossover radius the decay and plateau terms are equal."""
    s = 0.0
    radius = scales.crossover_radius(s, params_5d)
    plateau = profile_f(1, s) * scales.large_field_h(params_5d) ** 2
    assert radius ** -(params_5d.d - 2) == pytest.approx(plateau)


def test_leading_order_params():
    params, caveats = scales.leading_order_params(5, 2, 3, 2, 0.1)
    assert params.A_d == 1.0 and params.g_inf == 0.1
    assert params.nu_c == pytest.approx(-4 * 0.1 * green_infty(0, 1e-14, d=5, L=2).value)
    assert caveats
    with pytest.raises(ScaleError):
        scales.leading_order_params(4, 2, 3, 1, 0.0)


def test_scale_params_validation():
    with pytest.raises(ScaleError):
        ScaleParams(3, 2, 3)
    with pytest.raises(ScaleError):
        ScaleParams(4, 2, 3, g_inf=0.0)


def test_scales_record(params_5d):
    record = scales.scales_record(params_5d, ['note'])
    assert record['B'] == pytest.approx(scales.const_B(1, 5, 2))
    assert record['I_crit'][0] < record['I_crit'][1]
    assert 'note' in record['metadata']['caveats']
