"""
Desk-scale trend checks of the plateau scan in d = 4, L = 2, n = 1.

ν* is tuned once per N so that the final-scale quadratic coefficient of
-log Z_{N,∅} vanishes; the scans then run through plateau_rows and
two_point_scan at that point. Everything here is long and runs with
--runslow.
"""
import math

import numpy as np
import pytest

from src.cli.experiments import plateau_rows
from src.kernels import scales
from src.kernels.profiles import profile_f
from src.models.lattice import LatticeShape, class_representatives
from src.models.parameters import ModelParams, Regime
from src.models.run_config import NumericsConfig, RunConfig
from src.samplers.rg_exact import tune_nu, two_point_scan

pytestmark = pytest.mark.slow

G0 = 0.05
SEED = 31
S_GRID = [-2.0, -1.0, 0.0, 1.0, 2.0, 4.0]


def numerics() -> NumericsConfig:
    return NumericsConfig(samples=16_384, replicas=4)


def scan_sites(N: int) -> list:
    """Class representatives plus the far corner of class N-1."""
    shape = LatticeShape(4, 2, N)
    sites = [list(site.to_coords()) for site in class_representatives(shape)]
    sites.append([2 ** (N - 1) - 1] * 4)
    return sites


@pytest.fixture(scope='module')
def nu_star():
    cache = {}

    def tuned(N: int) -> float:
        if N not in cache:
            params, _ = scales.leading_order_params(4, 2, N, 1, G0)
            result = tune_nu(ModelParams(n=1, g=G0), LatticeShape(4, 2, N), numerics(), SEED,
                             mode='mass', tol=1e-2 * scales.window_w(params))
            cache[N] = result.nu_star
        return cache[N]

    return tuned


@pytest.fixture(scope='module')
def window_scans(nu_star):
    cache = {}

    def scan(N: int):
        if N not in cache:
            cfg = RunConfig(N=N, g=G0, nu=nu_star(N), s=S_GRID, x=scan_sites(N),
                            regime='nongaussian', seed=SEED, numerics=numerics())
            cache[N] = plateau_rows(cfg)[0]
        return cache[N]

    return scan


def plateau_height(rows: list, s: float, N: int):
    """(G - ℂ_{0,∞}, G_err) of class N at window coordinate s."""
    row = next(r for r in rows if r['s'] == s and r['jxy'] == N)
    return row['G'] - row['decay_term'], row['G_err']


@pytest.mark.parametrize("N", [6, 8])
def test_two_point_function_flattens_beyond_crossover(window_scans, N):
    rows = [r for r in window_scans(N) if r['s'] == 0.0]
    beyond = [r for r in rows if r['beyond_crossover']]
    assert {r['jxy'] for r in beyond} == {N - 1, N}
    plateau = beyond[0]['plateau_term']
    for first in beyond:
        for second in beyond:
            spread = abs((first['G'] - first['decay_term']) - (second['G'] - second['decay_term']))
            assert spread <= 3.0 * math.hypot(first['G_err'], second['G_err']) + 0.1 * plateau
    for row in rows:
        assert not row['flagged']


def test_plateau_height_approaches_the_profile(window_scans):
    f0 = profile_f(1, 0.0)
    ratios = {}
    for N in (6, 8):
        params, _ = scales.leading_order_params(4, 2, N, 1, G0)
        h2 = scales.large_field_h(params) ** 2
        height, err = plateau_height(window_scans(N), 0.0, N)
        ratios[N] = (height / h2, err / h2)
        assert 0.3 * f0 <= ratios[N][0] <= 3.0 * f0
    noise = 3.0 * math.hypot(ratios[6][1], ratios[8][1])
    assert abs(ratios[8][0] - f0) <= abs(ratios[6][0] - f0) + noise


@pytest.mark.parametrize("N", [6, 8])
def test_plateau_follows_the_profile_across_the_window(window_scans, N):
    rows = window_scans(N)
    base = plateau_height(rows, 0.0, N)[0]
    measured = [plateau_height(rows, s, N)[0] / base for s in S_GRID]
    predicted = [profile_f(1, s) / profile_f(1, 0.0) for s in S_GRID]
    assert np.corrcoef(measured, predicted)[0, 1] > 0.99
    assert all(a > b for a, b in zip(measured[:-1], measured[1:]))


def test_no_plateau_in_the_gaussian_window(nu_star):
    N = 6
    cfg = RunConfig(N=N, g=G0, nu=nu_star(N), s=[1.0], x=scan_sites(N), regime='gaussian',
                    seed=SEED, numerics=numerics())
    rows, _ = plateau_rows(cfg)
    rescaled = [r['rescaled'] for r in rows]
    assert max(rescaled) / min(rescaled) <= 10.0

    params, _ = scales.leading_order_params(4, 2, N, 1, G0)
    shape = LatticeShape(4, 2, N)
    nongaussian = scales.predict_plateau(class_representatives(shape)[N], 0.0, params).plateau_term
    far = next(r for r in rows if r['jxy'] == N)
    assert far['G'] - far['decay_term'] < nongaussian
    assert far['G'] == pytest.approx(far['predicted'], rel=0.5)


def test_gaussian_susceptibility(nu_star):
    N = 8
    shape = LatticeShape(4, 2, N)
    params, _ = scales.leading_order_params(4, 2, N, 1, G0)
    rows = two_point_scan(ModelParams(n=1, g=G0), shape, [1.0], [shape.origin()], numerics(), SEED,
                          nu_star(N), regime=Regime.GAUSSIAN, params=params)
    assert rows[0]['chi'] == pytest.approx(scales.chi_gaussian(1.0, params), rel=0.1)
