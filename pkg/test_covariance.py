"""
Tests for the block-spin covariance, the Green function and its dense
verification matrices.
"""
import math

import numpy as np
import pytest

from src.kernels.covariance import (
    KernelEval,
    build_dense,
    c_hat,
    const_q,
    const_z,
    dense_quadratic_form,
    dsq_metric,
    gamma,
    gaussian_regime_constants,
    green,
    green_infty,
    level_sum,
    mass_difference_bound_check,
    p_kernel,
    plateau_mass,
    plateau_threshold,
    spectral_laplacian,
    susceptibility,
    zero_mode_mass,
)
from src.models.errors import CovarianceError
from src.models.lattice import BoundaryCondition, LatticeShape, class_sizes, coalescence_matrix, from_coords

PERIODIC = BoundaryCondition.PERIODIC
FREE = BoundaryCondition.FREE


def test_gamma_and_projection_examples():
    """γ_j(a) and P_j on hand-computed cases."""
    assert gamma(1, 0.0, 2) == 1.0
    assert gamma(2, 0.25, 2) == pytest.approx(2.0)
    assert p_kernel(1, 0, LatticeShape(1, 2, 1)) == pytest.approx(0.5)
    with pytest.raises(CovarianceError):
        gamma(0, 0.0, 2)
    with pytest.raises(CovarianceError):
        gamma(2, -1.0, 2)


def test_constants():
    assert const_q(4, 2) == pytest.approx(20.0 / 21.0)
    assert const_z(4, 2) == pytest.approx((15.0 / 16.0) / 3.0)


def test_projection_rows_sum_to_zero():
    """Σ_x P_j(o, x) = 0 at every scale."""
    shape = LatticeShape(3, 2, 3)
    kernel = KernelEval(shape, 0.0)
    sizes = class_sizes(shape)
    projections = kernel.projection(np.arange(shape.N + 1))
    np.testing.assert_allclose(sizes @ projections, 0.0, atol=1e-15)


@pytest.mark.parametrize("d,L,N", [(4, 2, 3), (4, 3, 2), (5, 2, 3)])
@pytest.mark.parametrize("a", [1.0, 0.1, 1e-3])
def test_level_sum_rule(d, L, N, a):
    """Σ_x C_{a,j}(o, x) = 0 for every level."""
    shape = LatticeShape(d, L, N)
    for j in range(1, N + 1):
        assert abs(level_sum(j, a, shape)) < 1e-12


@pytest.mark.parametrize("d,L,N", [(4, 2, 3), (5, 2, 2)])
def test_susceptibility_identity(d, L, N):
    """Σ_x ℂ*_{a,N}(x) = 1/m̂ for both boundary conditions."""
    for a in (1.0, float(L) ** (-2 * N), 10.0 * float(L) ** (-d * N)):
        shape = LatticeShape(d, L, N)
        assert susceptibility(PERIODIC, a, shape) * a == pytest.approx(1.0, rel=1e-12)
        m_hat = zero_mode_mass(FREE, a, shape)
        assert susceptibility(FREE, a, shape) * m_hat == pytest.approx(1.0, rel=1e-12)


def test_constant_kernel():
    """Ĉ* = L^{-dN}/m̂, singular at the excluded masses."""
    shape = LatticeShape(4, 2, 2)
    q = const_q(4, 2)
    assert c_hat(FREE, 0.0, shape) == pytest.approx(2.0 ** -8 / (q * 2.0 ** -4))
    assert c_hat(PERIODIC, 0.5, shape) == pytest.approx(2.0 ** -8 / 0.5)
    with pytest.raises(CovarianceError):
        c_hat(PERIODIC, 0.0, shape)
    with pytest.raises(CovarianceError):
        c_hat(FREE, -q * 2.0 ** -4, shape)


@pytest.mark.parametrize("bc", [PERIODIC, FREE])
def test_dense_resolvent(bc):
    """(-Δ* + a) times the Green function is the identity."""
    shape = LatticeShape(4, 2, 2, bc)
    for a in (0.1, 2.0 ** -4):
        dense = build_dense(bc, a, shape)
        identity = np.eye(shape.volume)
        np.testing.assert_allclose((dense.laplacian + a * identity) @ dense.green, identity, atol=1e-10)
        np.testing.assert_allclose(dense.resolvent, dense.green, atol=1e-10)


def test_free_massless_green_matches_dense():
    """a = 0 with free boundary: the kernel formula equals the dense inverse."""
    shape = LatticeShape(4, 2, 2, FREE)
    dense = build_dense(FREE, 0.0, shape)
    x = from_coords((1, 0, 0, 0), shape)
    assert green(FREE, 0.0, shape, x) == pytest.approx(dense.resolvent[0, x.pack()], abs=1e-12)


def test_periodic_massless_has_no_resolvent():
    shape = LatticeShape(2, 2, 2)
    dense = build_dense(PERIODIC, 0.0, shape)
    assert dense.resolvent is None
    assert np.isnan(dense.constant).all()


@pytest.mark.parametrize("bc", [PERIODIC, FREE])
def test_spectral_laplacian(bc):
    """q(I - J*) equals the projection form of -Δ*."""
    shape = LatticeShape(3, 2, 2, bc)
    np.testing.assert_allclose(build_dense(bc, 0.1, shape).laplacian, spectral_laplacian(bc, shape), atol=1e-12)


def test_dense_quadratic_form_of_constant_field():
    """-Δ^P annihilates constants, so only the mass term survives."""
    shape = LatticeShape(2, 2, 2)
    assert dense_quadratic_form(PERIODIC, 0.1, shape, np.ones(shape.volume)) == pytest.approx(0.8)


def test_green_is_translation_invariant():
    """Dense Green function entries depend on j_xy only."""
    shape = LatticeShape(2, 2, 2)
    dense = build_dense(PERIODIC, 0.3, shape)
    jxy = coalescence_matrix(shape)
    kernel = KernelEval(shape, 0.3)
    np.testing.assert_allclose(dense.green, kernel.green(PERIODIC, jxy), atol=1e-14)


def test_green_infty_origin():
    """ℂ_{0,∞}(o) = (1 - L^{-d}) / (1 - L^{-(d-2)}) with a certified tail."""
    result = green_infty(0, 1e-14, d=4, L=2)
    assert result.value == pytest.approx(1.25, abs=1e-12)
    assert result.tail_bound < 1e-14
    with pytest.raises(CovarianceError):
        green_infty(0, 1e-10, d=2, L=2)
    with pytest.raises(CovarianceError):
        green_infty(0, 1e-10)


def test_green_infty_is_finite_volume_limit():
    """The Gaussian-regime Green function tends to ℂ_{0,∞}(x) as N grows."""
    rows = gaussian_regime_constants((1, 0, 0, 0), 1.0, 4, 2, [4, 8, 12])
    differences = [abs(row['difference']) for row in rows]
    assert differences[0] > differences[1] > differences[2]
    assert differences[2] < 1e-5


def test_dsq_metric():
    assert dsq_metric(2.0, 2.0) == 0.0
    assert dsq_metric(-1.0, 4.0) == pytest.approx(3.0)
    assert dsq_metric(1.0, 4.0) == pytest.approx(1.0)


def test_mass_difference_bound_check():
    """The empirical constant is finite and the window is enforced."""
    shape = LatticeShape(4, 2, 6)
    x = from_coords((4, 0, 0, 0), shape)
    constant = mass_difference_bound_check(0.0, 2.0 ** -12, shape, x)
    assert math.isfinite(constant) and constant > 0
    with pytest.raises(CovarianceError):
        mass_difference_bound_check(0.0, 1.0, shape, x)
    with pytest.raises(CovarianceError):
        mass_difference_bound_check(0.0, 0.0, shape, x)


def test_plateau_mass_and_threshold():
    shape = LatticeShape(4, 2, 4)
    assert plateau_mass(1.0, 0.5, shape) == pytest.approx(2.0 ** -10)
    assert plateau_threshold(0.5, 0.0, shape) == pytest.approx(16.0)


def test_inadmissible_mass():
    with pytest.raises(CovarianceError):
        KernelEval(LatticeShape(2, 2, 3), -0.3)
