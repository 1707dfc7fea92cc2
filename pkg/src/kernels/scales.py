"""
Closed-form scales of the finite-volume critical windows and the
leading-order two-point predictions assembled from them.
"""
import logging
import math
from typing import Optional, Tuple

from src.kernels.covariance import (
    const_q,
    const_z,
    green,
    green_infty,
    susceptibility,
)
from src.kernels.profiles import profile_f, sigma_moment, gaussian_moment
from src.models.errors import ScaleError
from src.models.lattice import BoundaryCondition, LatticeShape, Site, coalescence
from src.models.parameters import Regime, ScaleParams
from src.models.records import Prediction

logger = logging.getLogger(__name__)

__all__ = [
    'const_B', 'const_q', 'const_z', 'hat_gamma', 'hat_theta',
    'window_w', 'shift_v', 'large_field_h', 'gaussian_l', 'nu_eff',
    'mass_window', 'critical_domain', 'in_critical_domain',
    'predict_plateau', 'predict_gaussian', 'crossover_radius',
    'chi_nongaussian', 'chi_gaussian', 'moment_nongaussian', 'moment_gaussian',
    'leading_order_params',
]

LEADING_ORDER_CAVEAT = "leading-order inputs: A_d, g_inf, nu_c carry O(g) corrections"


def const_B(n: int, d: int, L: int) -> float:
    """B = (n+8)(1 - L^{-d})."""
    return (n + 8) * (1.0 - float(L) ** -d)


def hat_gamma(n: int) -> float:
    """γ̂ = (n+2)/(n+8)."""
    return (n + 2) / (n + 8)


def hat_theta(n: int) -> float:
    """θ̂ = ½ - γ̂ = (4-n)/(2(n+8))."""
    return 0.5 - hat_gamma(n)


def _B(params: ScaleParams) -> float:
    return const_B(params.n, params.d, params.L)


def window_w(params: ScaleParams) -> float:
    """Window scale w_N."""
    L, N = float(params.L), params.N
    if params.d == 4:
        return (params.A_d * math.log(L ** 2) ** hat_gamma(params.n) * _B(params) ** -0.5
                * N ** -hat_theta(params.n) * L ** (-2 * N))
    return params.A_d * math.sqrt(params.g_inf) * L ** (-N * params.d / 2.0)


def shift_v(params: ScaleParams) -> float:
    """Free-boundary shift scale v_N."""
    L, N = float(params.L), params.N
    if params.d == 4:
        return params.A_d * math.log(L ** 2) ** hat_gamma(params.n) * N ** hat_gamma(params.n) * L ** (-2 * N)
    return params.A_d * L ** (-2 * N)


def large_field_h(params: ScaleParams) -> float:
    """Large-field scale 𝗁_N."""
    L, N = float(params.L), params.N
    if params.d == 4:
        return (_B(params) * N) ** 0.25 * L ** -N
    return params.g_inf ** -0.25 * L ** (-params.d * N / 4.0)


def gaussian_l(params: ScaleParams) -> float:
    """Gaussian scale 𝓁_N = L^{-N(d-2)/2}."""
    return float(params.L) ** (-params.N * (params.d - 2) / 2.0)


def nu_eff(bc, params: ScaleParams) -> Tuple[float, bool]:
    """
    Effective critical point ν*_{c,N}.

    Returns:
        (value, approximate) where approximate is True for the free d > 5
        branch, whose O(L^{-N}) correction is dropped
    """
    bc = BoundaryCondition.parse(bc)
    if bc is BoundaryCondition.PERIODIC:
        return params.nu_c, False
    q = const_q(params.d, params.L)
    v = shift_v(params)
    if params.d == 4:
        return params.nu_c - q * v * (1.0 + params.c_F * params.N ** -hat_gamma(params.n)), False
    if params.d == 5:
        return params.nu_c - q * v, False
    return params.nu_c - q * v, True


def mass_window(s: float, bc, regime, params: ScaleParams) -> float:
    """
    Leading-order renormalised mass a*_N(s) (non-Gaussian) or ã*_N(s) (Gaussian).

    The 1 + o(1) factors are dropped.

    Raises:
        ScaleError: For the Gaussian regime with s <= 0
    """
    bc = BoundaryCondition.parse(bc)
    regime = Regime.parse(regime)
    L, N, d = float(params.L), params.N, params.d
    if regime is Regime.GAUSSIAN:
        if not s > 0:
            raise ScaleError(f"Gaussian-regime masses need s > 0, got s={s}")
        field_scale = gaussian_l(params)
    else:
        field_scale = large_field_h(params)
    a = s * field_scale ** -2 * L ** (-d * N)
    if bc is BoundaryCondition.FREE:
        a -= const_q(d, params.L) * L ** (-2 * N)
    return a


def critical_domain(params: ScaleParams) -> Tuple[float, float]:
    """Open mass interval 𝕀_crit on which the finite-volume RG is controlled."""
    L, N = float(params.L), params.N
    lower = -0.5 * L ** (-2 * (N - 1))
    if params.d == 4:
        return lower, L ** (-2 * N * (1.0 - N ** -0.5))
    return lower, 2.0 * L ** (-1.5 * N)


def in_critical_domain(a: float, params: ScaleParams) -> bool:
    lower, upper = critical_domain(params)
    return lower < a < upper


def chi_nongaussian(s: float, params: ScaleParams, tol: Optional[float] = None) -> float:
    """χ_N prediction L^{dN} 𝗁_N² f_n(s)."""
    return float(params.L) ** (params.d * params.N) * large_field_h(params) ** 2 * profile_f(params.n, s, tol)


def chi_nongaussian_closed_form(s: float, params: ScaleParams, tol: Optional[float] = None) -> float:
    """(BN)^{1/2} L^{2N} f_n(s) for d = 4, g_inf^{-1/2} L^{dN/2} f_n(s) for d > 4."""
    L, N = float(params.L), params.N
    f = profile_f(params.n, s, tol)
    if params.d == 4:
        return math.sqrt(_B(params) * N) * L ** (2 * N) * f
    return params.g_inf ** -0.5 * L ** (params.d * N / 2.0) * f


def chi_gaussian(s: float, params: ScaleParams) -> float:
    """χ_N prediction s^{-1} L^{2N} in the Gaussian regime."""
    if not s > 0:
        raise ScaleError(f"Gaussian-regime susceptibility needs s > 0, got s={s}")
    return float(params.L) ** (2 * params.N) / s


def moment_nongaussian(p: int, s: float, params: ScaleParams, tol: Optional[float] = None) -> float:
    """⟨|Φ_N|^{2p}⟩ ≈ 𝗁_N^{2p} Σ_{n,2p}(s)."""
    return large_field_h(params) ** (2 * p) * sigma_moment(params.n, 2 * p, s, tol)


def moment_gaussian(p: int, s: float, params: ScaleParams) -> float:
    """⟨|Φ_N|^{2p}⟩ ≈ 𝓁_N^{2p} M_{n,2p}(s) = L^{-p(d-2)N} M_{n,2p}(s)."""
    return gaussian_l(params) ** (2 * p) * gaussian_moment(params.n, p, s)


def crossover_radius(s: float, params: ScaleParams, tol: Optional[float] = None) -> float:
    """|x| at which |x|^{-(d-2)} equals the plateau height f_n(s) 𝗁_N²."""
    plateau = profile_f(params.n, s, tol) * large_field_h(params) ** 2
    return plateau ** (-1.0 / (params.d - 2))


def _metadata(params: ScaleParams, caveats=None) -> dict:
    return {
        'A_d': params.A_d,
        'g_inf': params.g_inf,
        'c_F': params.c_F,
        'nu_c': params.nu_c,
        'caveats': list(caveats or []) + ["alpha_inf set to 0; o(1) factors dropped"],
    }


def predict_plateau(x: Site, s: float, params: ScaleParams, green_infty_value: Optional[float] = None,
                    bc=BoundaryCondition.PERIODIC, tol: Optional[float] = None,
                    caveats=None) -> Prediction:
    """
    Non-Gaussian prediction: ℂ_{0,∞}(x) + f_n(s) 𝗁_N².

    Args:
        x: observation site
        s: window coordinate, ν = ν*_{c,N} + s w_N
        params: scale inputs
        green_infty_value: ℂ_{0,∞}(x); computed to 1e-14 when omitted
        bc: carried into the record (the leading terms do not depend on it)
    """
    bc = BoundaryCondition.parse(bc)
    if green_infty_value is None:
        green_infty_value = green_infty(x, 1e-14).value
    plateau = profile_f(params.n, s, tol) * large_field_h(params) ** 2
    return Prediction(
        x_coords=x.to_coords(),
        jxy=coalescence(x.shape.origin(), x),
        s=s,
        regime=Regime.NON_GAUSSIAN,
        bc=bc.value,
        decay_term=green_infty_value,
        plateau_term=plateau,
        metadata=_metadata(params, caveats),
    )


def predict_gaussian(x: Site, s: float, params: ScaleParams, bc=BoundaryCondition.PERIODIC,
                     caveats=None) -> Prediction:
    """
    Gaussian prediction: the Green function at the shifted mass.

    The mass is sL^{-2N} (periodic) or (s - q)L^{-2N} (free); its constant
    mode s^{-1}L^{-(d-2)N} sits inside the Green function, so the plateau
    term is 0.

    Raises:
        ScaleError: If s <= 0
    """
    bc = BoundaryCondition.parse(bc)
    if not s > 0:
        raise ScaleError(f"Gaussian predictions need s > 0, got s={s}")
    a = gaussian_mass(s, bc, params)
    value = green(bc, a, x.shape, x)
    return Prediction(
        x_coords=x.to_coords(),
        jxy=coalescence(x.shape.origin(), x),
        s=s,
        regime=Regime.GAUSSIAN,
        bc=bc.value,
        decay_term=value,
        plateau_term=0.0,
        metadata=_metadata(params, caveats),
    )


def gaussian_mass(s: float, bc, params: ScaleParams) -> float:
    """sL^{-2N} (periodic) or (s - q)L^{-2N} (free)."""
    bc = BoundaryCondition.parse(bc)
    L, N = float(params.L), params.N
    shift = const_q(params.d, params.L) if bc is BoundaryCondition.FREE else 0.0
    return (s - shift) * L ** (-2 * N)


def gaussian_prediction_sum(s: float, params: ScaleParams, bc=BoundaryCondition.PERIODIC) -> float:
    """Σ_x of the Gaussian prediction; equals s^{-1}L^{2N}."""
    shape = LatticeShape(params.d, params.L, params.N, bc)
    return susceptibility(bc, gaussian_mass(s, bc, params), shape)


def leading_order_params(d: int, L: int, N: int, n: int, g: float) -> Tuple[ScaleParams, list]:
    """
    ScaleParams at leading order in g.

    A_4 = (Bg / log L²)^{γ̂}, A_d = 1 (d > 4), g_inf = g, c_F = 0 and
    ν_c = -(n+2) g ℂ_{0,∞}(o).

    Returns:
        (params, caveats)
    """
    if not g > 0:
        raise ScaleError(f"Leading-order scales need g > 0, got g={g}")
    if d == 4:
        A = (const_B(n, d, L) * g / math.log(float(L) ** 2)) ** hat_gamma(n)
    else:
        A = 1.0
    nu_c = -(n + 2) * g * green_infty(0, 1e-14, d=d, L=L).value
    params = ScaleParams(d=d, L=L, N=N, n=n, g_inf=g, A_d=A, c_F=0.0, nu_c=nu_c)
    return params, [LEADING_ORDER_CAVEAT]


def window_separation(params: ScaleParams) -> float:
    """|ν^P - ν^F| / w_N."""
    return abs(nu_eff(BoundaryCondition.PERIODIC, params)[0] - nu_eff(BoundaryCondition.FREE, params)[0]) \
        / window_w(params)


def scales_record(params: ScaleParams, caveats=None) -> dict:
    """All scale constants of one parameter set."""
    nu_free, approximate = nu_eff(BoundaryCondition.FREE, params)
    lower, upper = critical_domain(params)
    caveats = list(caveats or [])
    if approximate:
        caveats.append("nu_F for d > 5 drops its O(L^-N) correction")
    return {
        'd': params.d, 'L': params.L, 'N': params.N, 'n': params.n,
        'B': _B(params),
        'q': const_q(params.d, params.L),
        'z': const_z(params.d, params.L),
        'hat_gamma': hat_gamma(params.n),
        'hat_theta': hat_theta(params.n),
        'w_N': window_w(params),
        'v_N': shift_v(params),
        'h_N': large_field_h(params),
        'l_N': gaussian_l(params),
        'nu_periodic': nu_eff(BoundaryCondition.PERIODIC, params)[0],
        'nu_free': nu_free,
        'nu_free_approximate': approximate,
        'I_crit': [lower, upper],
        'metadata': _metadata(params, caveats),
    }
