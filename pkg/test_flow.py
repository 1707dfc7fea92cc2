"""
Tests for the perturbative coupling flow and the u_ox accumulator.
"""
import math

import pytest

from src.kernels.covariance import KernelEval
from src.kernels.flow import (
    beta,
    check_two_sided_bound,
    flow_rows,
    gtilde_flow,
    level_value,
    mass_domain,
    mass_scale,
    max_stable_coupling,
    rho,
    u_ox_accumulate,
    vartheta,
)
from src.kernels.scales import const_B
from src.models.errors import FlowError
from src.models.lattice import LatticeShape, class_representatives, coalescence, from_coords


def test_rho():
    assert rho(0, 6, 2) == 1.0
    assert rho(7, 4, 2) == 1.0
    assert rho(3, 6, 2) == pytest.approx(2.0 ** -6)


def test_mass_scale_and_vartheta():
    """j_ã is the last j with L^{2j} ã <= 1; ϑ̃ halves per scale beyond it."""
    assert mass_scale(0.0, 2) == math.inf
    assert vartheta(50, 0.0, 2) == 1.0
    for k in (1, 3, 6):
        assert mass_scale(2.0 ** (-2 * k), 2) == k
    assert mass_scale(0.3 * 2.0 ** -6, 2) == 3
    assert vartheta(3, 2.0 ** -6, 2) == 1.0
    assert vartheta(6, 2.0 ** -6, 2) == pytest.approx(1.0 / 8.0)
    with pytest.raises(FlowError):
        mass_scale(1.0, 2)
    with pytest.raises(FlowError):
        mass_scale(-0.1, 2)


def test_mass_domain():
    assert mass_domain(4, 0.1, 2) == (0.05, 0.2)
    assert mass_domain(3, 0.0, 2) == (-0.5 * 2.0 ** -4, 0.5 * 2.0 ** -4)


def test_beta_decays_past_mass_scale():
    B = const_B(1, 4, 2)
    assert beta(0, 0.0, 4, 2, B) == pytest.approx(B)
    assert beta(10, 0.0, 4, 2, B) == pytest.approx(B)
    assert beta(10, 2.0 ** -8, 4, 2, B) < 1e-4 * B


def test_four_dimensional_flow_asymptotics():
    """d = 4, ã = 0: g̃_j B j -> 1."""
    B = const_B(1, 4, 2)
    states = gtilde_flow(0.05, 0.0, 4, 2, B, 10 ** 4)
    assert len(states) == 10 ** 4 + 1
    assert 0.85 <= states[-1].gtilde * B * 10 ** 4 <= 1.15


@pytest.mark.parametrize("d", [4, 5, 6])
@pytest.mark.parametrize("a_tilde", [0.0, 2.0 ** -8])
def test_two_sided_bound(d, a_tilde):
    B = const_B(1, d, 2)
    states = gtilde_flow(0.05, a_tilde, d, 2, B, 1000)
    assert check_two_sided_bound(states) == []
    assert all(0 < s.gtilde <= 0.05 for s in states)


def test_flow_above_four_dimensions_converges():
    """ρ_j is summable for d > 4, so g̃ settles at a positive limit."""
    B = const_B(1, 5, 2)
    states = gtilde_flow(0.05, 0.0, 5, 2, B, 200)
    assert states[-1].gtilde > 0.5 * 0.05 * (1.0 - B * 0.05 * 2.0)
    assert states[-1].gtilde == pytest.approx(states[-2].gtilde, rel=1e-12)


def test_flow_errors():
    B = const_B(1, 4, 2)
    with pytest.raises(FlowError):
        gtilde_flow(0.0, 0.0, 4, 2, B, 10)
    with pytest.raises(FlowError) as info:
        gtilde_flow(10.0, 0.0, 4, 2, B, 10)
    assert info.value.scale == 1


def test_max_stable_coupling():
    """The bisected threshold sits at (1 + ã)² / (2B)."""
    B = const_B(1, 4, 2)
    for a_tilde in (0.0, 0.25):
        value = max_stable_coupling(a_tilde, 4, 2, B, 200)
        assert value == pytest.approx((1.0 + a_tilde) ** 2 / (2.0 * B), rel=1e-4)


def test_level_value_matches_kernel():
    """The volume-free C_{a,j}(x) equals the finite-volume kernel."""
    shape = LatticeShape(4, 2, 5)
    for a in (0.0, 2.0 ** -6, -2.0 ** -10):
        kernel = KernelEval(shape, a)
        for jox in range(shape.N + 1):
            for j in range(1, shape.N + 1):
                assert level_value(j, jox, a, 4, 2) == pytest.approx(kernel.level(j, jox), rel=1e-12, abs=1e-15)


def test_u_ox_accumulate():
    """The leading part is C_{a,≤N}(x); corrections add per scale from j_ox."""
    shape = LatticeShape(4, 2, 4)
    x = from_coords((2, 0, 0, 0), shape)
    base = u_ox_accumulate(0.01, shape, x)
    assert base == pytest.approx(KernelEval(shape, 0.01).cumulative(2))
    assert u_ox_accumulate(0.01, shape, x, [1.0, 1.0, 1.0, 1.0]) == pytest.approx(base + 3.0)
    assert u_ox_accumulate(0.01, shape, shape.origin(), lambda j: 0.5) == pytest.approx(
        KernelEval(shape, 0.01).cumulative(0) + 2.0)


def test_u_ox_continuous_in_mass():
    shape = LatticeShape(4, 2, 4)
    for x in class_representatives(shape):
        below = u_ox_accumulate(-1e-12, shape, x)
        above = u_ox_accumulate(1e-12, shape, x)
        assert below == pytest.approx(above, abs=1e-9)


def test_flow_rows():
    B = const_B(1, 4, 2)
    rows = flow_rows(0.05, 0.0, 4, 2, B, 5, a=0.0, jox=2)
    assert [row['j'] for row in rows] == list(range(6))
    assert rows[0]['u_ox_partial'] == 0.0
    assert rows[1]['u_ox_partial'] == 0.0
    assert rows[2]['u_ox_partial'] == pytest.approx(level_value(2, 2, 0.0, 4, 2))


@pytest.mark.parametrize("a", [0.0, 2.0 ** -8])
def test_flow_states_carry_u_ox(a):
    """The last state holds the full C_{a,≤N}(x) sum of its class."""
    shape = LatticeShape(4, 2, 5)
    B = const_B(1, 4, 2)
    for x in class_representatives(shape):
        states = gtilde_flow(0.05, 0.0, 4, 2, B, shape.N, a=a, jox=coalescence(shape.origin(), x))
        assert states[-1].u_ox == pytest.approx(u_ox_accumulate(a, shape, x), rel=1e-12, abs=1e-15)
