"""
Universal profile and moment functionals.

    I_k(s)      = ∫_0^∞ x^k exp(-x⁴/4 - s x²/2) dx        (k > -1)
    f_n(s)      = I_{n+1}(s) / (n I_{n-1}(s))
    Σ_{n,k}(s)  = I_{n+k-1}(s) / I_{n-1}(s)
    M_{n,2p}(s) = (2/s)^p Γ((n+2p)/2) / Γ(n/2)

Every ratio is formed from log-integrals. The integrand is rescaled by the
maximum c of -x⁴/4 - s x²/2 before integrating, so large |s| neither
overflows nor underflows.
"""
import logging
import math
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np
from scipy import integrate, special

from src.models.errors import ProfileError
from src.models.run_config import QuadConfig

logger = logging.getLogger(__name__)

DEFAULT_QUAD = QuadConfig()


def _exponent(x, s: float):
    return -0.25 * x ** 4 - 0.5 * s * x ** 2


def _exponent_max(s: float) -> float:
    return s * s / 4.0 if s < 0 else 0.0


def upper_cutoff(s: float, quad: QuadConfig = DEFAULT_QUAD) -> float:
    """X_max = max(6, 2√|s|) + 2 unless configured."""
    if quad.x_max is not None:
        return float(quad.x_max)
    return max(6.0, 2.0 * math.sqrt(abs(s))) + 2.0


def tail_envelope(k: float, s: float, x_max: float) -> float:
    """
    Log of an upper bound on ∫_{X}^∞ x^k e^{g(x) - c} dx.

    For x >= X with X² > 2|s| + 2k + 2 the integrand decays at least like
    e^{-X³(x - X)/2}, giving X^k e^{g(X) - c} · 2/X³.
    """
    return (k * math.log(x_max) + _exponent(x_max, s) - _exponent_max(s)
            + math.log(2.0 / x_max ** 3))


def _breakpoints(k: float, s: float, x_max: float) -> List[float]:
    """Panel edges on [0, X_max] concentrating work near the integrand peak."""
    edges = [0.0]
    if s > 1.0:
        width = min(x_max / 2.0, 10.0 / math.sqrt(s))
        edges += [width / 10.0, width]
    elif s < -10.0:
        peak = math.sqrt(-s)
        spread = 4.0 / math.sqrt(-s)
        edges += [max(peak / 2.0, 1e-3), max(peak - spread, peak / 2.0 + 1e-3),
                  min(peak + spread, x_max)]
    else:
        edges += [1.0]
    edges.append(x_max)
    return sorted(set(e for e in edges if 0.0 <= e <= x_max))


def _log_integral_adaptive(k: float, s: float, x_max: float, tol: float) -> float:
    c = _exponent_max(s)
    edges = _breakpoints(k, s, x_max)
    total = 0.0
    for left, right in zip(edges[:-1], edges[1:]):
        if left == 0.0:
            # algebraic weight x^k handles the endpoint behaviour, k in (-1, 0) included
            value, _ = integrate.quad(lambda x: math.exp(_exponent(x, s) - c), left, right,
                                      weight='alg', wvar=(k, 0.0),
                                      epsabs=0.0, epsrel=tol, limit=400)
        else:
            value, _ = integrate.quad(lambda x: math.exp(k * math.log(x) + _exponent(x, s) - c),
                                      left, right, epsabs=0.0, epsrel=tol, limit=400)
        total += value
    if not total > 0:
        raise ProfileError(f"Quadrature of I_{k}({s}) returned a nonpositive value {total!r}")
    return c + math.log(total)


@lru_cache(maxsize=64)
def _legendre(nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    return special.roots_legendre(nodes)


def _log_integral_fixed(k: float, s: float, x_max: float, nodes: int) -> float:
    c = _exponent_max(s)
    t, w = _legendre(nodes)
    edges = _breakpoints(k, s, x_max)
    log_terms = []
    for left, right in zip(edges[:-1], edges[1:]):
        if left == 0.0 and k < 0:
            # x = u^{1/(k+1)} absorbs the x^k singularity
            power = 1.0 / (k + 1.0)
            u_right = right ** (k + 1.0)
            u = 0.5 * u_right * (t + 1.0)
            x = u ** power
            log_terms.append(np.log(0.5 * u_right * w * power) + _exponent(x, s) - c)
        else:
            x = 0.5 * (right - left) * (t + 1.0) + left
            log_terms.append(np.log(0.5 * (right - left) * w) + k * np.log(x) + _exponent(x, s) - c)
    return c + float(special.logsumexp(np.concatenate(log_terms)))


def log_Ik(k: float, s: float, tol: Optional[float] = None,
           quad: QuadConfig = DEFAULT_QUAD) -> float:
    """
    log I_k(s).

    Raises:
        ProfileError: If k <= -1 or the cutoff tail exceeds the tolerance
    """
    if not k > -1:
        raise ProfileError(f"I_k(s) diverges at x = 0 for k={k} <= -1")
    tol = quad.tol if tol is None else tol
    x_max = upper_cutoff(s, quad)

    if quad.scheme == "fixed-gauss":
        log_value = _log_integral_fixed(k, s, x_max, quad.nodes)
    else:
        log_value = _log_integral_adaptive(k, s, x_max, tol)

    log_tail = tail_envelope(k, s, x_max) + _exponent_max(s)
    if log_tail - log_value > math.log(tol):
        raise ProfileError(
            f"Cutoff X_max={x_max} leaves a relative tail e^{log_tail - log_value:.3g} "
            f"above tolerance {tol} for I_{k}({s})"
        )
    return log_value


def quad_Ik(k: float, s: float, tol: Optional[float] = None,
            quad: QuadConfig = DEFAULT_QUAD) -> float:
    """I_k(s) = ∫_0^∞ x^k e^{-x⁴/4 - sx²/2} dx."""
    return math.exp(log_Ik(k, s, tol, quad))


def Ik_at_zero(k: float) -> float:
    """Closed form I_k(0) = 4^{(k+1)/4 - 1} Γ((k+1)/4)."""
    if not k > -1:
        raise ProfileError(f"I_k(0) diverges for k={k} <= -1")
    return 4.0 ** ((k + 1) / 4.0 - 1.0) * special.gamma((k + 1) / 4.0)


def _check_n(n: int):
    if int(n) != n or n < 1:
        raise ProfileError(f"Profiles need an integer n >= 1, got {n}")


def profile_f(n: int, s: float, tol: Optional[float] = None,
              quad: QuadConfig = DEFAULT_QUAD) -> float:
    """f_n(s) = I_{n+1}(s) / (n I_{n-1}(s))."""
    _check_n(n)
    return math.exp(log_Ik(n + 1, s, tol, quad) - log_Ik(n - 1, s, tol, quad)) / n


def sigma_moment(n: int, k: int, s: float, tol: Optional[float] = None,
                 quad: QuadConfig = DEFAULT_QUAD) -> float:
    """
    Σ_{n,k}(s): the k-th moment of |y| under e^{-|y|⁴/4 - s|y|²/2} on R^n.

    The angular integrals cancel, leaving I_{n+k-1}(s) / I_{n-1}(s).
    """
    _check_n(n)
    if int(k) != k or k < 0 or k % 2:
        raise ProfileError(f"Σ_(n,k) needs an even k >= 0, got k={k}")
    if k == 0:
        return 1.0
    return math.exp(log_Ik(n + k - 1, s, tol, quad) - log_Ik(n - 1, s, tol, quad))


def gaussian_moment(n: int, p: int, s: float) -> float:
    """
    M_{n,2p}(s) = (2/s)^p Γ((n+2p)/2) / Γ(n/2), the Gaussian moments of |y|^{2p}.

    Raises:
        ProfileError: If s <= 0
    """
    _check_n(n)
    if int(p) != p or p < 1:
        raise ProfileError(f"Gaussian moment order p must be >= 1, got {p}")
    if not s > 0:
        raise ProfileError(f"Gaussian moments need s > 0, got s={s}")
    return math.exp(p * math.log(2.0 / s) + special.gammaln((n + 2 * p) / 2.0) - special.gammaln(n / 2.0))


def gaussian_moment_radial(n: int, p: int, s: float, tol: float = 1e-12) -> float:
    """M_{n,2p}(s) by radial quadrature of its defining integral."""
    if not s > 0:
        raise ProfileError(f"Gaussian moments need s > 0, got s={s}")
    x_max = math.sqrt(2.0 * 60.0 / s) + 1.0
    log_integrand = lambda r, k: k * math.log(r) - 0.5 * s * r * r if r > 0 else -math.inf
    numerator, _ = integrate.quad(lambda r: math.exp(log_integrand(r, n - 1 + 2 * p)), 0.0, x_max,
                                  epsabs=0.0, epsrel=tol, limit=200)
    denominator, _ = integrate.quad(lambda r: r ** (n - 1) * math.exp(-0.5 * s * r * r), 0.0, x_max,
                                    epsabs=0.0, epsrel=tol, limit=200)
    return numerator / denominator


def profile_asymptotic(n: int, s: float) -> float:
    """Large-s expansion f_n(s) ≈ 1/s - (n+2)/s³."""
    _check_n(n)
    return 1.0 / s - (n + 2) / s ** 3


def profile_rows(n_values, s_values, tol: Optional[float] = None,
                 quad: QuadConfig = DEFAULT_QUAD) -> List[dict]:
    """One row per (n, s) with f_n, Σ_{n,2} and the tolerance used."""
    tol = quad.tol if tol is None else tol
    rows = []
    for n in n_values:
        for s in s_values:
            f = profile_f(n, s, tol, quad)
            rows.append({
                'n': int(n),
                's': float(s),
                'f_n': f,
                'sigma_2': sigma_moment(n, 2, s, tol, quad),
                'tolerance_used': tol,
            })
    logger.info("Computed %d profile values", len(rows))
    return rows
