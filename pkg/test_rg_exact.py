"""
Tests for the exact block-spin recursion: fluctuation laws, single steps,
the zero-mode integral and the ν tuner.

Gaussian models (g = 0) have exact answers in the Green function, and with
tensor quadrature the recursion reproduces them up to interpolation error.
"""
import math

import numpy as np
import pytest

from src.kernels.covariance import green
from src.kernels.scales import leading_order_params
from src.models.errors import ConfigError, RGError
from src.models.lattice import BoundaryCondition, LatticeShape, class_representatives, from_coords
from src.models.parameters import ModelParams, Regime
from src.models.run_config import NumericsConfig
from src.samplers.brute_force import direct_two_point
from src.samplers.rg_exact import (
    FACTORISATION_FACTOR,
    FACTORISATION_FLOOR,
    MAX_SCAN_S,
    FluctuationLaw,
    init_Z0,
    quadrature_fluctuations,
    radial_grid,
    rg_step,
    run_exact,
    sample_fluctuation,
    scan_point,
    split_independence,
    tune_nu,
    two_point_scan,
    zero_mode_integrate,
    zero_mode_ks_distance,
)
from src.samplers.rng import StreamFactory

PERIODIC = BoundaryCondition.PERIODIC
FREE = BoundaryCondition.FREE


def quadrature_numerics(**overrides) -> NumericsConfig:
    settings = dict(sampler='tensorquad', quad_nodes=4, replicas=1, grid_points=129)
    settings.update(overrides)
    return NumericsConfig(**settings)


def test_fluctuations_sum_to_zero():
    """Σ_b ζ_b = 0 for every draw, antithetic or not."""
    shape = LatticeShape(2, 2, 3)
    law = FluctuationLaw(2, 0.01, shape, n=2)
    rng = StreamFactory(7).rg(0, 2)
    for antithetic in (False, True):
        zeta = sample_fluctuation(law, rng, 101, antithetic)
        assert zeta.shape == (101, 4, 2)
        assert np.max(np.abs(zeta.sum(axis=1))) < 1e-12


def test_fluctuation_covariance():
    """Empirical covariance matches γ_{j+1}(L^{-dj}δ - L^{-d(j+1)})."""
    shape = LatticeShape(1, 2, 2)
    law = FluctuationLaw(1, 0.25, shape)
    zeta = sample_fluctuation(law, StreamFactory(1).rg(0, 1), 200_000)[..., 0]
    covariance = np.cov(zeta, rowvar=False)
    assert covariance[0, 0] == pytest.approx(law.variance, rel=0.02)
    assert covariance[0, 1] == pytest.approx(law.covariance, rel=0.02)
    assert law.variance == pytest.approx(0.8 * 0.5)


def test_quadrature_fluctuations_are_normalised():
    law = FluctuationLaw(1, 0.5, LatticeShape(1, 2, 1))
    zeta, log_w = quadrature_fluctuations(law, 5)
    assert np.exp(log_w).sum() == pytest.approx(1.0)
    second = np.sum(np.exp(log_w) * zeta[:, 0, 0] ** 2)
    assert second == pytest.approx(law.variance)
    with pytest.raises(ConfigError):
        quadrature_fluctuations(FluctuationLaw(1, 0.5, LatticeShape(4, 2, 1)), 4)


def test_init_Z0():
    """Scale-0 functions follow their closed form; Z_ox vanishes unless x = o."""
    shape = LatticeShape(2, 2, 2)
    model = ModelParams(n=1, g=0.5, nu=-0.2, a=0.1)
    radii = radial_grid(3.0, 31)
    o = shape.origin()
    Z = init_Z0(model, shape, o, o, radii)
    u = radii ** 2
    np.testing.assert_allclose(Z.log_weight(u), -0.125 * u * u + 0.1 * u)
    np.testing.assert_allclose(Z.ox_parts(u)[0], u)
    assert Z.has_ox

    far = init_Z0(model, shape, o, from_coords((1, 0), shape), radii)
    assert far.jox == 1 and not far.has_ox
    assert np.all(far.ox_parts(u)[0] == 0.0)

    vector = init_Z0(ModelParams(n=3, g=0.5), shape, o, o, radii)
    iso, aniso = vector.ox_parts(u)
    assert np.all(iso == 0.0)
    np.testing.assert_allclose(aniso, u)


def test_gaussian_step_adds_fluctuation_variance():
    """With g = ν = 0 one step turns Z_ox = φ² into φ² + Var(ζ)."""
    shape = LatticeShape(1, 2, 1)
    model = ModelParams(n=1, g=0.0, nu=0.0, a=0.5)
    o = shape.origin()
    radii = radial_grid(4.0, 65)
    Z = init_Z0(model, shape, o, o, radii)
    law = FluctuationLaw(1, model.a, shape)
    stepped = rg_step(Z, law, quadrature_numerics(grid_points=65), StreamFactory(0).rg(0, 1))
    np.testing.assert_allclose(stepped.iso, radii ** 2 + law.variance, atol=1e-12)
    np.testing.assert_allclose(stepped.log_z, 0.0, atol=1e-12)
    np.testing.assert_allclose(stepped.h_o, 1.0, atol=1e-10)


@pytest.mark.parametrize("N", [1, 2])
@pytest.mark.parametrize("bc", [PERIODIC, FREE])
def test_gaussian_two_point_matches_green_function(N, bc):
    """g = 0: the recursion plus zero-mode integral gives ℂ*_{a,N}(x)."""
    shape = LatticeShape(1, 2, N, bc)
    model = ModelParams(n=1, g=0.0, nu=0.0, a=0.5)
    sites = list(class_representatives(shape))
    run = run_exact(model, shape, sites, quadrature_numerics(), seed=3)
    for site, estimate in zip(sites, run.estimates):
        assert estimate.G == pytest.approx(green(bc, 0.5, shape, site), rel=1e-6)
        assert not estimate.flagged
    m_hat = 0.5 if bc is PERIODIC else 0.5 + (1.0 - 0.5) / (1.0 - 0.125) * 2.0 ** (-2 * N)
    assert run.estimates[0].chi == pytest.approx(1.0 / m_hat, rel=1e-6)


def test_observable_factorises_below_coalescence():
    """Z_o stays φ1·Z_∅ at every scale before o and x share a block."""
    shape = LatticeShape(1, 2, 3)
    model = ModelParams(n=1, g=0.5, nu=0.0, a=0.3)
    sites = list(class_representatives(shape))
    run = run_exact(model, shape, sites, quadrature_numerics(), seed=2)
    assert [len(replica) for replica in run.diagnostics] == [shape.N]
    for estimate in run.estimates:
        assert not estimate.flagged
        assert estimate.factorisation_deviation <= FACTORISATION_FACTOR * estimate.factorisation_noise \
            + FACTORISATION_FLOOR
    assert run.estimates[0].factorisation_deviation == 0.0


def test_zero_mode_rejects_singular_mass():
    shape = LatticeShape(1, 2, 1)
    model = ModelParams(n=1, g=0.5, nu=0.0, a=0.0)
    run = run_exact(model, shape, [shape.origin()], quadrature_numerics(), seed=1, zero_mode=False,
                    require_confinement=False)
    with pytest.raises(RGError):
        zero_mode_integrate(run.finals[0][0], PERIODIC, 0.0)


@pytest.mark.parametrize("n", [1, 2])
def test_ks_distance_to_the_limit_law(n):
    """A single site with V = |φ|⁴/4 + s|φ|²/2 follows the limit law exactly."""
    shape = LatticeShape(1, 2, 0)
    s, a = 0.7, 0.5
    model = ModelParams(n=n, g=1.0, nu=s - a, a=a)
    Z = init_Z0(model, shape, shape.origin(), shape.origin(), radial_grid(6.0, 257))
    assert zero_mode_ks_distance(Z, PERIODIC, a, 1.0, s) < 1e-3
    assert zero_mode_ks_distance(Z, PERIODIC, a, 1.0, s + 3.0) > 0.05


def test_unconfined_zero_mode_is_reported():
    shape = LatticeShape(1, 2, 1)
    model = ModelParams(n=1, g=0.0, nu=-1.0, a=0.5)
    with pytest.raises(RGError):
        run_exact(model, shape, [shape.origin()], quadrature_numerics(), seed=1)


def test_results_do_not_depend_on_thread_count():
    shape = LatticeShape(1, 2, 2)
    model = ModelParams(n=1, g=0.3, nu=0.0, a=0.2)
    numerics = NumericsConfig(samples=10_000, replicas=3, grid_points=33)
    sites = list(class_representatives(shape))
    one = run_exact(model, shape, sites, numerics, seed=11, threads=1)
    three = run_exact(model, shape, sites, numerics, seed=11, threads=3)
    assert [e.G for e in one.estimates] == [e.G for e in three.estimates]
    assert [e.G_err for e in one.estimates] == [e.G_err for e in three.estimates]


def test_renormalisation_policy_does_not_change_results():
    shape = LatticeShape(1, 2, 2)
    model = ModelParams(n=1, g=0.3, nu=0.0, a=0.2)
    sites = list(class_representatives(shape))
    origin = run_exact(model, shape, sites, quadrature_numerics(renorm_policy='origin'), seed=5)
    peak = run_exact(model, shape, sites, quadrature_numerics(renorm_policy='max'), seed=5)
    for a, b in zip(origin.estimates, peak.estimates):
        assert a.G == pytest.approx(b.G, rel=1e-8)


def test_tune_nu_gaussian_mass_mode():
    """g = 0 and a zero mass target: ν* = 0."""
    shape = LatticeShape(1, 2, 2)
    result = tune_nu(ModelParams(n=1, g=0.0), shape, quadrature_numerics(), seed=2, mode='mass',
                    bracket=(-0.05, 0.05))
    assert abs(result.nu_star) <= 2 * result.tolerance
    assert result.mode == 'mass'
    assert result.target == 0.0
    assert result.a_ref == 0.0
    assert result.evaluations


def test_tune_nu_rejects_bad_modes():
    shape = LatticeShape(1, 2, 2)
    with pytest.raises(ConfigError):
        tune_nu(ModelParams(n=1, g=0.0), shape, quadrature_numerics(), seed=2, mode='chi')
    with pytest.raises(ConfigError):
        tune_nu(ModelParams(n=1, g=0.1), shape, quadrature_numerics(), seed=2, mode='energy')


def test_scan_point():
    """ν = ν* + s w_N and a periodic s = 0 point is moved off the singular mass."""
    shape = LatticeShape(4, 2, 3)
    params, _ = leading_order_params(4, 2, 3, 1, 0.05)
    model = ModelParams(n=1, g=0.05)
    point = scan_point(-0.1, 0.0, model, shape, Regime.NON_GAUSSIAN, params)
    assert point.nu_total == pytest.approx(-0.1)
    assert point.a > 0
    with pytest.raises(ConfigError):
        scan_point(-0.1, MAX_SCAN_S + 1.0, model, shape, Regime.NON_GAUSSIAN, params)


def test_two_point_scan_without_sites():
    shape = LatticeShape(4, 2, 3)
    assert two_point_scan(ModelParams(n=1, g=0.05), shape, [0.0], [], NumericsConfig(), 1, -0.1) == []


@pytest.mark.slow
def test_split_independence():
    """Moving mass between covariance and potential leaves G unchanged."""
    shape = LatticeShape(1, 2, 2)
    model = ModelParams(n=1, g=0.5, nu=0.0, a=0.25)
    site = from_coords((1,), shape)
    numerics = NumericsConfig(samples=40_000, replicas=6)
    estimates = split_independence(model, shape, site, [0.25, 0.5], numerics, seed=9)
    spread = abs(estimates[0].G - estimates[1].G)
    assert spread <= 5.0 * math.hypot(estimates[0].G_err, estimates[1].G_err) + 1e-3


@pytest.mark.slow
def test_interacting_model_against_direct_sampling():
    """g > 0 on 4 sites: the recursion agrees with importance-sampled fields."""
    shape = LatticeShape(1, 2, 2)
    model = ModelParams(n=1, g=0.5, nu=0.0, a=0.5)
    sites = list(class_representatives(shape))
    exact = run_exact(model, shape, sites, NumericsConfig(samples=40_000, replicas=6), seed=4)
    direct = direct_two_point(model, shape, sites, samples=400_000, seed=4)
    for rg, mc in zip(exact.estimates, direct.estimates):
        assert abs(rg.G - mc.G) <= 5.0 * math.hypot(rg.G_err, mc.G_err) + 2e-3


@pytest.mark.slow
@pytest.mark.parametrize("mass_factor", [1.0, 5.0])
@pytest.mark.parametrize("bc", [PERIODIC, FREE])
def test_gaussian_recursion_reproduces_green_function_in_four_dimensions(bc, mass_factor):
    """g = 0 on Λ_3 ⊂ Z⁴ with Monte Carlo steps: every class lands on ℂ*_{a,3}(x)."""
    shape = LatticeShape(4, 2, 3, bc)
    a = mass_factor * 2.0 ** -6
    model = ModelParams(n=1, g=0.0, nu=0.0, a=a)
    sites = list(class_representatives(shape))
    run = run_exact(model, shape, sites, NumericsConfig(samples=10_000, replicas=32), seed=6)
    for site, estimate in zip(sites, run.estimates):
        expected = green(bc, a, shape, site)
        assert estimate.G_err < 0.01 * abs(expected)
        assert abs(estimate.G - expected) <= 3.0 * estimate.G_err
        assert not estimate.flagged
        assert estimate.factorisation_deviation <= FACTORISATION_FACTOR * estimate.factorisation_noise \
            + FACTORISATION_FLOOR


@pytest.mark.slow
def test_recursion_against_direct_sampling_in_four_dimensions():
    """g = 0.1, ν = 0.1 on one 16-site block: the recursion matches the 17-dimensional direct integral."""
    shape = LatticeShape(4, 2, 1)
    model = ModelParams(n=1, g=0.1, nu=0.0, a=0.1)
    sites = list(class_representatives(shape))
    exact = run_exact(model, shape, sites, NumericsConfig(samples=40_000, replicas=16), seed=8)
    direct = direct_two_point(model, shape, sites, samples=400_000, seed=8)
    assert direct.sampling_mass == pytest.approx(0.1)
    for rg, mc in zip(exact.estimates, direct.estimates):
        assert not rg.flagged
        assert abs(rg.G - mc.G) <= 3.0 * math.hypot(rg.G_err, mc.G_err)
