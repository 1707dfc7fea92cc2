"""
Tests for the Metropolis sampler, its block-sum caches and the batch-means
error bars.
"""
import math

import numpy as np
import pytest

from src.kernels.covariance import const_q, dense_quadratic_form
from src.kernels.scales import leading_order_params
from src.models.errors import ConfigError, SamplerError
from src.models.lattice import BoundaryCondition, LatticeShape, Site, class_representatives, from_coords
from src.models.parameters import ModelParams, Regime
from src.models.run_config import ChainConfig, NumericsConfig
from src.samplers.mcmc import (
    FieldState,
    MetropolisSampler,
    cache_drift,
    energy_change,
    exact_energy,
    local_quadratic,
    measure,
    pair_quadrature,
    rebuild_caches,
    run_chains,
)
from src.samplers.rg_exact import run_exact, scan_point
from src.samplers.rng import StreamFactory
from src.utils.statistics import batch_means, lag1_autocorrelation, merge_estimates

PERIODIC = BoundaryCondition.PERIODIC
FREE = BoundaryCondition.FREE


@pytest.fixture
def random_state():
    shape = LatticeShape(2, 2, 2)
    values = np.random.default_rng(5).standard_normal((shape.volume, 2))
    return FieldState.from_values(shape, values)


def test_energy_change_matches_exact_energy(random_state):
    model = ModelParams(n=2, g=0.3, nu=-0.1, a=0.2)
    x = from_coords((1, 2), random_state.shape)
    delta = np.array([0.4, -0.7])
    before = exact_energy(random_state, model)
    moved = random_state.values.copy()
    moved[x.pack()] += delta
    after = exact_energy(FieldState.from_values(random_state.shape, moved), model)
    assert energy_change(x, delta, random_state, model) == pytest.approx(after - before, rel=1e-10)


@pytest.mark.parametrize("bc", [PERIODIC, FREE])
def test_block_sum_form_matches_dense_laplacian(bc):
    """The cached quadratic part equals ½(φ, -Δ*φ) from the dense operator."""
    shape = LatticeShape(2, 2, 2, bc)
    values = np.random.default_rng(9).standard_normal((shape.volume, 1))
    state = FieldState.from_values(shape, values)
    quadratic = exact_energy(state, ModelParams(n=1, g=0.0, nu=0.0))
    assert quadratic == pytest.approx(dense_quadratic_form(bc, 0.0, shape, values[:, 0]), rel=1e-10)


@pytest.mark.parametrize("bc", [PERIODIC, FREE])
def test_local_quadratic_of_constant_field(bc):
    """-Δ* kills constants, except for the q L^{-2N} term of the free form."""
    shape = LatticeShape(2, 2, 3, bc)
    state = FieldState.from_values(shape, np.full((shape.volume, 1), 1.5))
    kappa, linear = local_quadratic(shape.origin(), state)
    assert kappa > 0
    expected = 0.0 if bc is PERIODIC else const_q(2, 2) * 2.0 ** -6 * 1.5
    assert linear[0] == pytest.approx(expected, abs=1e-12)


def test_caches_stay_exact_over_sweeps(random_state):
    model = ModelParams(n=2, g=0.5, nu=-0.2)
    sampler = MetropolisSampler(random_state, model, width=0.8)
    rng = StreamFactory(4).chain(0)
    rates = [sampler.sweep(rng) for _ in range(50)]
    assert all(0.0 <= rate <= 1.0 for rate in rates)
    assert sampler.updates == 50 * random_state.shape.volume
    assert cache_drift(random_state) < 1e-9


def test_sweep_follows_site_by_site_energy_changes(random_state):
    """A sweep accepts exactly the moves the per-site ΔH rule accepts, in packed order."""
    model = ModelParams(n=2, g=0.5, nu=-0.2)
    shape = random_state.shape
    reference = FieldState.from_values(shape, random_state.values.copy())
    rate = MetropolisSampler(random_state, model, width=0.8).sweep(StreamFactory(8).chain(0))

    rng = StreamFactory(8).chain(0)
    proposals = rng.normal(0.0, 0.8, size=(shape.volume, 2))
    log_uniforms = np.log(rng.random(shape.volume))
    accepted = 0
    for p in range(shape.volume):
        dH = energy_change(Site.unpack(p, shape), proposals[p], reference, model)
        if dH <= 0.0 or log_uniforms[p] < -dH:
            reference.values[p] += proposals[p]
            reference.sums = rebuild_caches(reference)
            accepted += 1

    assert rate == accepted / shape.volume
    np.testing.assert_allclose(random_state.values, reference.values, rtol=0, atol=1e-12)
    for cached, exact in zip(random_state.sums, reference.sums):
        np.testing.assert_allclose(cached, exact, rtol=0, atol=1e-12)


def test_measure_constant_field():
    shape = LatticeShape(1, 2, 2)
    state = FieldState.from_values(shape, np.ones((shape.volume, 2)))
    identity = np.arange(shape.volume)
    record = measure(state, [identity, identity[::-1]])
    np.testing.assert_allclose(record['G'], [1.0, 1.0])
    assert record['chi'][0] == pytest.approx(shape.volume)
    np.testing.assert_allclose(record['moments'], [2.0, 4.0, 8.0])
    np.testing.assert_allclose(record['G_cross'], [1.0, 1.0])


def test_pair_quadrature_gaussian():
    """g = 0, ν = ½: ⟨φ_0²⟩ = 4/3 and ⟨φ_0 φ_1⟩ = 2/3."""
    moments = pair_quadrature(ModelParams(n=1, g=0.0, nu=0.5), half_width=10.0, points=801)
    assert moments['phi0_sq'] == pytest.approx(4.0 / 3.0, rel=1e-6)
    assert moments['phi0_phi1'] == pytest.approx(2.0 / 3.0, rel=1e-6)
    assert moments['phi0_4'] == pytest.approx(3.0 * (4.0 / 3.0) ** 2, rel=1e-6)


def test_run_chains_rejects_bad_settings():
    shape = LatticeShape(1, 2, 1)
    with pytest.raises(ConfigError):
        run_chains(ModelParams(n=1, g=0.1), shape, [shape.origin()], ChainConfig(proposal_width=0.0), seed=1)
    big = LatticeShape(2, 2, 11)
    with pytest.raises(SamplerError):
        run_chains(ModelParams(n=1, g=0.1), big, [big.origin()], ChainConfig(), seed=1)


@pytest.mark.slow
def test_chain_against_pair_quadrature():
    """Two sites: Metropolis reproduces the quadrature moments."""
    shape = LatticeShape(1, 2, 1)
    model = ModelParams(n=1, g=0.5, nu=0.3)
    sites = [shape.origin(), from_coords((1,), shape)]
    cfg = ChainConfig(sweeps=100_000, burn_in=2000, chains=4)
    summary = run_chains(model, shape, sites, cfg, seed=17, threads=2)
    exact = pair_quadrature(model)
    assert abs(summary.G[0] - exact['phi0_sq']) <= 5.0 * summary.G_err[0]
    assert abs(summary.G[1] - exact['phi0_phi1']) <= 5.0 * summary.G_err[1]
    assert 0.2 < summary.acceptance < 0.7


@pytest.mark.slow
def test_chains_agree_with_exact_recursion():
    """d = 4, N = 3 at the leading-order ν*: both samplers give the same G in every class."""
    shape = LatticeShape(4, 2, 3)
    model = ModelParams(n=1, g=0.05)
    params, _ = leading_order_params(4, 2, 3, 1, 0.05)
    point = scan_point(params.nu_c, 0.0, model, shape, Regime.NON_GAUSSIAN, params)
    sites = list(class_representatives(shape))
    exact = run_exact(point, shape, sites, NumericsConfig(samples=16_384, replicas=8), seed=21)
    cfg = ChainConfig(sweeps=25_000, burn_in=2000, stride=5, chains=4)
    chains = run_chains(point, shape, sites, cfg, seed=21)
    assert chains.jxy == [0, 1, 2, 3]
    for i, estimate in enumerate(exact.estimates):
        assert not estimate.flagged
        assert abs(estimate.G - chains.G[i]) <= 3.0 * math.hypot(estimate.G_err, chains.G_err[i])


def test_run_chains_is_reproducible():
    shape = LatticeShape(1, 2, 2)
    model = ModelParams(n=2, g=0.5, nu=0.2)
    cfg = ChainConfig(sweeps=200, burn_in=50, chains=2)
    one = run_chains(model, shape, [shape.origin()], cfg, seed=3, threads=1)
    two = run_chains(model, shape, [shape.origin()], cfg, seed=3, threads=2)
    assert one.G == two.G
    assert one.G_cross == two.G_cross


def test_batch_means_white_noise():
    series = np.random.default_rng(1).standard_normal(4096)
    estimate = batch_means(series)
    assert estimate.batch_size == 1
    assert estimate.err == pytest.approx(1.0 / 64.0, rel=0.1)
    assert not estimate.flagged


def test_batch_means_grows_batches_for_correlated_series():
    rng = np.random.default_rng(2)
    series = np.empty(8192)
    series[0] = 0.0
    for i in range(1, len(series)):
        series[i] = 0.9 * series[i - 1] + rng.standard_normal()
    estimate = batch_means(series)
    assert estimate.batch_size > 1
    assert estimate.lag1 < 0.1 or estimate.flagged


def test_batch_means_edge_cases():
    assert batch_means([]).flagged
    assert lag1_autocorrelation([1.0, 1.0, 1.0, 1.0]) == 0.0
    short = batch_means(np.arange(8.0))
    assert short.flagged


def test_merge_estimates():
    a = batch_means(np.random.default_rng(3).standard_normal(1024))
    b = batch_means(np.random.default_rng(4).standard_normal(1024))
    merged = merge_estimates([a, b])
    assert merged.mean == pytest.approx(0.5 * (a.mean + b.mean))
    assert merged.err == pytest.approx(0.5 * np.hypot(a.err, b.err))
    assert merged.batches == a.batches + b.batches
