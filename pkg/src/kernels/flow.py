"""
Perturbative recursions: the reference coupling flow and the observable
vacuum-energy accumulator.

    ρ_j      = L^{-(d-4)j}
    β_j      = B (1 + ã L^{2j})^{-2} ρ_j
    g̃_{j+1}  = g̃_j - β_j g̃_j²
    ϑ̃_j      = 2^{-(j - j_ã)_+}

Scale factors are handled in logs so that flows to j ~ 10⁴ neither
overflow nor lose the ã = 0 limit.
"""
import logging
import math
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.kernels.covariance import KernelEval, check_admissible
from src.models.errors import FlowError
from src.models.lattice import LatticeShape, Site, coalescence
from src.models.records import FlowState

logger = logging.getLogger(__name__)

Corrections = Union[Sequence[float], Callable[[int], float], None]


def rho(j: int, d: int, L: int) -> float:
    """ρ_j = L^{-(d-4)j}."""
    return math.exp(-(d - 4) * j * math.log(L))


def mass_scale(a_tilde: float, L: int) -> float:
    """
    j_ã: the greatest integer j with L^{2j} ã <= 1; math.inf for ã = 0.

    Raises:
        FlowError: If ã is outside [0, 1)
    """
    if not 0.0 <= a_tilde < 1.0:
        raise FlowError(f"Mass ã={a_tilde!r} outside [0, 1)")
    if a_tilde == 0.0:
        return math.inf
    j = 0
    while L ** (2 * (j + 1)) * a_tilde <= 1.0 + 1e-12:
        j += 1
    return j


def vartheta(j: int, a_tilde: float, L: int) -> float:
    """ϑ̃_j = 2^{-(j - j_ã)_+}."""
    j_a = mass_scale(a_tilde, L)
    if math.isinf(j_a) or j <= j_a:
        return 1.0
    return 2.0 ** -(j - j_a)


def mass_domain(j: int, a_tilde: float, L: int) -> Tuple[float, float]:
    """
    Open interval of masses tracked at scale j: (½ã, 2ã) when ã > 0,
    else (-½L^{-2(j-1)}, ½L^{-2(j-1)}).
    """
    if a_tilde > 0:
        return 0.5 * a_tilde, 2.0 * a_tilde
    half = 0.5 * float(L) ** (-2 * (j - 1))
    return -half, half


def beta(j: int, a_tilde: float, d: int, L: int, B: float) -> float:
    """β_j = B (1 + ãL^{2j})^{-2} ρ_j."""
    log_mass = -math.inf if a_tilde == 0 else math.log(a_tilde) + 2 * j * math.log(L)
    return B * math.exp(-2.0 * np.logaddexp(0.0, log_mass)) * rho(j, d, L)


def gtilde_flow(g0: float, a_tilde: float, d: int, L: int, B: float, j_max: int,
                a: float = 0.0, jox: int = 0) -> List[FlowState]:
    """
    The sequence g̃_0 = g0, ..., g̃_{j_max}.

    Each state also carries u_{j,ox} = Σ_{i<=j} C_{a,i}(x) for j_ox = jox.

    Raises:
        FlowError: If g̃ leaves (0, g0]; the error carries the violating scale
    """
    if not g0 > 0:
        raise FlowError(f"Initial coupling must be > 0, got g0={g0!r}", scale=0)
    j_a = mass_scale(a_tilde, L)
    states = []
    g = g0
    u_ox = 0.0
    for j in range(j_max + 1):
        b = beta(j, a_tilde, d, L, B)
        u_ox += level_value(j, jox, a, d, L)
        states.append(FlowState(j=j, gtilde=g, beta=b, vartheta=vartheta(j, a_tilde, L),
                                a_tilde=a_tilde, j_a=j_a, u_ox=u_ox))
        if j == j_max:
            break
        g_next = g - b * g * g
        if not 0.0 < g_next <= g0:
            raise FlowError(
                f"Coupling flow left (0, {g0}] at scale {j + 1}: g̃={g_next!r}",
                scale=j + 1,
            )
        g = g_next
    logger.debug("Flow g0=%g ã=%g d=%d: g̃_%d = %g", g0, a_tilde, d, j_max, g)
    return states


def check_two_sided_bound(states: Sequence[FlowState]) -> List[int]:
    """Scales j at which g̃_{j+1} <= g̃_j <= 2 g̃_{j+1} fails."""
    violations = []
    for current, following in zip(states[:-1], states[1:]):
        if not following.gtilde <= current.gtilde <= 2.0 * following.gtilde:
            violations.append(current.j)
    return violations


def max_stable_coupling(a_tilde: float, d: int, L: int, B: float, j_max: int,
                        rel_tol: float = 1e-6) -> float:
    """
    Largest g0 for which the two-sided bound holds at every scale up to j_max,
    located by bisection.

    Since β_j and g̃_j are nonincreasing, the bound is governed by β_0 g0 <= ½,
    so the answer lies at (1 + ã)² / (2B); the bisection confirms this on the
    actual flow.
    """
    def holds(g0: float) -> bool:
        try:
            return not check_two_sided_bound(gtilde_flow(g0, a_tilde, d, L, B, j_max))
        except FlowError:
            return False

    low, high = 0.0, 2.0 * (1.0 + a_tilde) ** 2 / B
    while high - low > rel_tol * high:
        middle = 0.5 * (low + high)
        if holds(middle):
            low = middle
        else:
            high = middle
    return low


def level_value(j: int, jox: int, a: float, d: int, L: int) -> float:
    """C_{a,j}(x) for j_ox = jox, valid for any j (no volume involved)."""
    if j < 1 or j < jox:
        return 0.0
    if jox <= j - 1:
        sign_factor = 1.0 - float(L) ** -d
    else:
        sign_factor = -float(L) ** -d
    log_scale = 2 * (j - 1) * math.log(L)
    if a > 0:
        log_denominator = float(np.logaddexp(0.0, math.log(a) + log_scale))
    elif a < 0:
        argument = a * math.exp(log_scale)
        if argument <= -1.0:
            raise FlowError(f"Mass a={a!r} inadmissible at scale {j}", scale=j)
        log_denominator = math.log1p(argument)
    else:
        log_denominator = 0.0
    return sign_factor * math.exp(log_scale - d * (j - 1) * math.log(L) - log_denominator)


def _correction(corrections: Corrections, j: int) -> float:
    if corrections is None:
        return 0.0
    if callable(corrections):
        return float(corrections(j))
    return float(corrections[j - 1])


def u_ox_accumulate(a: float, shape: LatticeShape, x: Site,
                    corrections: Corrections = None) -> float:
    """
    Leading part of u_{N,ox}: Σ_{j=j_ox}^N C_{a,j}(x), plus an optional
    per-scale correction (sequence indexed by j = 1..N, or a callable of j).

    Raises:
        CovarianceError: On inadmissible mass
    """
    check_admissible(a, shape.L, shape.N)
    jox = coalescence(shape.origin(), x)
    kernel = KernelEval(shape, a)
    total = kernel.cumulative(jox)
    if corrections is not None:
        total += math.fsum(_correction(corrections, j) for j in range(max(jox, 1), shape.N + 1))
    return total


def flow_rows(g0: float, a_tilde: float, d: int, L: int, B: float, j_max: int,
              a: float = 0.0, jox: int = 0) -> List[dict]:
    """
    One row per scale: j, g̃_j, β_j, ϑ̃_j and the partial sum Σ_{i<=j} C_{a,i}(x).
    """
    rows = []
    for state in gtilde_flow(g0, a_tilde, d, L, B, j_max, a=a, jox=jox):
        rows.append({
            'j': state.j,
            'gtilde': state.gtilde,
            'beta': state.beta,
            'vartheta': state.vartheta,
            'u_ox_partial': state.u_ox,
        })
    return rows
