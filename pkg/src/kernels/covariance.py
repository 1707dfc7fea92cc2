"""
Hierarchical covariances, Laplacians and Green functions.

Every two-point kernel depends on (x, y) only through the coalescence
scale j_xy, so the entry points reduce sites to j_xy and evaluate closed
forms in O(N). Dense matrices are built only for verification.

    C_{a,j}(x)   = γ_j(a) P_j(x)
    C_{a,≤N}(x)  = Σ_{j=1}^N C_{a,j}(x)
    ℂ*_{a,N}(x)  = C_{a,≤N}(x) + Ĉ*_{a,N}
"""
import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Union

import numpy as np

from src.models.errors import CovarianceError
from src.models.lattice import (
    BoundaryCondition,
    LatticeShape,
    Site,
    class_sizes,
    coalescence,
    coalescence_matrix,
    euclid_norm,
    from_coords,
)
from src.models.parameters import MassParam
from src.models.records import GreenInftyResult

logger = logging.getLogger(__name__)

SINGULAR_FLOOR = 1e-300
DENSE_MAX_VOLUME = 10 ** 4

SiteOrScale = Union[Site, int]


def const_q(d: int, L: int) -> float:
    """q = (1 - L^{-d}) / (1 - L^{-(d+2)})."""
    return (1.0 - float(L) ** -d) / (1.0 - float(L) ** -(d + 2))


def const_z(d: int, L: int) -> float:
    """z = (1 - L^{-d}) / (L² - 1), the normalisation of J."""
    return (1.0 - float(L) ** -d) / (float(L) ** 2 - 1.0)


def _jxy(x: SiteOrScale) -> int:
    if isinstance(x, Site):
        return coalescence(x.shape.origin(), x)
    return int(x)


def check_admissible(a: float, L: int, N: int):
    """
    Raises:
        CovarianceError: If some γ_j(a), j <= N, has a nonpositive denominator
    """
    mass = MassParam(a)
    if not mass.is_admissible(L, N):
        raise CovarianceError(
            f"Mass a={a!r} is inadmissible: need a > {mass.lower_bound(L, N)!r} "
            f"so that 1 + a L^(2(j-1)) > 0 for j <= {N}"
        )


def gamma(j: int, a: float, L: int) -> float:
    """γ_j(a) = L^{2(j-1)} / (1 + a L^{2(j-1)})."""
    if j < 1:
        raise CovarianceError(f"γ_j is defined for j >= 1, got j={j}")
    scale = float(L) ** (2 * (j - 1))
    denominator = 1.0 + a * scale
    if denominator <= 0:
        raise CovarianceError(f"γ_{j}({a!r}) has nonpositive denominator {denominator!r}")
    return scale / denominator


def p_kernel(j: int, jxy: int, shape: LatticeShape) -> float:
    """P_j(x, y) = [j_xy <= j-1] L^{-d(j-1)} - [j_xy <= j] L^{-dj}."""
    if j < 1 or j > shape.N:
        raise CovarianceError(f"P_j needs 1 <= j <= {shape.N}, got j={j}")
    if jxy < 0 or jxy > shape.N:
        raise CovarianceError(f"Coalescence scale {jxy} outside [0, {shape.N}]")
    L, d = float(shape.L), shape.d
    value = 0.0
    if jxy <= j - 1:
        value += L ** (-d * (j - 1))
    if jxy <= j:
        value -= L ** (-d * j)
    return value


def q_kernel(j: int, jxy: int, shape: LatticeShape) -> float:
    """Q_j(x, y) = [j_xy <= j] L^{-dj}."""
    return float(shape.L) ** (-shape.d * j) if jxy <= j else 0.0


class KernelEval:
    """
    Precomputed γ_j(a) and L^{-dj} tables for one (shape, a).

    All evaluations accept scalar or array coalescence scales and return
    floats or arrays of the same shape.
    """

    def __init__(self, shape: LatticeShape, a: float):
        check_admissible(a, shape.L, shape.N)
        self.shape = shape
        self.a = float(a)
        L = float(shape.L)
        levels = np.arange(1, shape.N + 1)
        self.levels = levels
        scale = L ** (2.0 * (levels - 1))
        self.gammas = scale / (1.0 + self.a * scale)
        self.inv_volumes = L ** (-shape.d * np.arange(0, shape.N + 1, dtype=float))

    def gamma(self, j: int) -> float:
        return float(self.gammas[j - 1])

    def projection(self, jxy) -> np.ndarray:
        """P_j(jxy) for all j, stacked on a trailing axis of length N."""
        jxy = np.asarray(jxy)[..., None]
        upper = np.where(jxy <= self.levels - 1, self.inv_volumes[:-1], 0.0)
        lower = np.where(jxy <= self.levels, self.inv_volumes[1:], 0.0)
        return upper - lower

    def level(self, j: int, jxy):
        """C_{a,j}(jxy)."""
        value = self.projection(jxy)[..., j - 1] * self.gammas[j - 1]
        return float(value) if np.ndim(value) == 0 else value

    def cumulative(self, jxy):
        """C_{a,≤N}(jxy)."""
        value = np.sum(self.projection(jxy) * self.gammas, axis=-1)
        return float(value) if np.ndim(value) == 0 else value

    def zero_mode_mass(self, bc) -> float:
        return zero_mode_mass(bc, self.a, self.shape)

    def hat(self, bc) -> float:
        return c_hat(bc, self.a, self.shape)

    def green(self, bc, jxy):
        """ℂ*_{a,N}(jxy)."""
        return self.cumulative(jxy) + self.hat(bc)


def c_cum(a: float, shape: LatticeShape, jxy: int) -> float:
    """
    C_{a,≤N}(x) for j_ox = jxy.

    Raises:
        CovarianceError: On inadmissible mass
    """
    return KernelEval(shape, a).cumulative(int(jxy))


def zero_mode_mass(bc, a: float, shape: LatticeShape) -> float:
    """m̂ = a (periodic) or a + qL^{-2N} (free): the mass seen by the constant mode."""
    bc = BoundaryCondition.parse(bc)
    if bc is BoundaryCondition.PERIODIC:
        return float(a)
    return float(a) + const_q(shape.d, shape.L) * float(shape.L) ** (-2 * shape.N)


def c_hat(bc, a: float, shape: LatticeShape) -> float:
    """
    Constant kernel Ĉ*_{a,N} = L^{-dN} / m̂.

    Raises:
        CovarianceError: If m̂ vanishes (a = 0 periodic, a = -qL^{-2N} free)
    """
    bc = BoundaryCondition.parse(bc)
    m_hat = zero_mode_mass(bc, a, shape)
    if abs(m_hat) <= SINGULAR_FLOOR * shape.volume:
        excluded = 0.0 if bc is BoundaryCondition.PERIODIC else \
            -const_q(shape.d, shape.L) * float(shape.L) ** (-2 * shape.N)
        raise CovarianceError(
            f"Singular zero-mode mass for {bc.value} boundary condition: "
            f"a={a!r} hits the excluded value {excluded!r}"
        )
    return float(shape.L) ** (-shape.d * shape.N) / m_hat


def green(bc, a: float, shape: LatticeShape, x: SiteOrScale) -> float:
    """
    ℂ*_{a,N}(x), the kernel of (-Δ* + a)^{-1} at (o, x).

    Args:
        bc: boundary condition
        a: mass
        shape: lattice
        x: a Site of the lattice or its coalescence scale with o
    """
    return KernelEval(shape, a).green(bc, _jxy(x))


def susceptibility(bc, a: float, shape: LatticeShape) -> float:
    """Σ_x ℂ*_{a,N}(x), summed exactly by coalescence class."""
    kernel = KernelEval(shape, a)
    values = kernel.green(bc, np.arange(shape.N + 1))
    return lattice_sum(values, shape)


def level_sum(j: int, a: float, shape: LatticeShape) -> float:
    """Σ_x C_{a,j}(o, x); zero for every j."""
    kernel = KernelEval(shape, a)
    return lattice_sum(kernel.level(j, np.arange(shape.N + 1)), shape)


def lattice_sum(values_by_class: Iterable[float], shape: LatticeShape) -> float:
    """Σ_x f(j_ox) given f on each coalescence class j = 0..N."""
    values = np.asarray(list(values_by_class), dtype=float)
    if values.shape != (shape.N + 1,):
        raise CovarianceError(f"Expected {shape.N + 1} class values, got {values.shape}")
    sizes = class_sizes(shape).astype(float)
    return math.fsum(sizes * values)


def green_infty(x: SiteOrScale, tol: float, d: Optional[int] = None,
                L: Optional[int] = None) -> GreenInftyResult:
    """
    Massless infinite-volume Green function ℂ_{0,∞}(x) with certified truncation.

    The partial sum runs over j <= M with M the first scale at which

        (1 + L^{-d}) L^{-(d-2)M} / (1 - L^{-(d-2)}) < tol,

    which bounds the exact geometric tail Σ_{j>M} (1 - L^{-d}) L^{-(d-2)(j-1)}.

    Args:
        x: a Site (d and L taken from its shape) or a coalescence scale
        tol: truncation tolerance
        d, L: required when x is a coalescence scale

    Raises:
        CovarianceError: If d <= 2 (divergent series) or tol <= 0
    """
    if isinstance(x, Site):
        d, L = x.shape.d, x.shape.L
    if d is None or L is None:
        raise CovarianceError("green_infty needs d and L when x is given as a coalescence scale")
    if d <= 2:
        raise CovarianceError(f"The massless Green function diverges for d={d} <= 2")
    if not tol > 0:
        raise CovarianceError(f"Tolerance must be > 0, got {tol}")

    jox = _jxy(x)
    Lf = float(L)
    ratio = Lf ** -(d - 2)

    def tail(M: int) -> float:
        return (1.0 + Lf ** -d) * ratio ** M / (1.0 - ratio)

    terms: List[float] = []
    M = 0
    while True:
        M += 1
        upper = Lf ** (-d * (M - 1)) if jox <= M - 1 else 0.0
        lower = Lf ** (-d * M) if jox <= M else 0.0
        terms.append(Lf ** (2 * (M - 1)) * (upper - lower))
        if M >= max(jox, 1) and tail(M) < tol:
            break
    return GreenInftyResult(value=math.fsum(terms), tail_bound=tail(M), levels=M)


@dataclass
class DenseOperators:
    """Dense matrices of one (bc, a, shape), packed site order."""
    coupling: np.ndarray  # J*
    laplacian: np.ndarray  # -Δ*
    covariance: np.ndarray  # C_{a,≤N}
    constant: np.ndarray  # Ĉ* broadcast over all pairs
    resolvent: Optional[np.ndarray]  # (-Δ* + a)^{-1}, None when singular

    @property
    def green(self) -> np.ndarray:
        return self.covariance + self.constant


def build_dense(bc, a: float, shape: LatticeShape,
                max_volume: int = DENSE_MAX_VOLUME) -> DenseOperators:
    """
    Dense J*, -Δ* = q(δ - J*), C_{a,≤N}, Ĉ* and the resolvent.

    J^P carries the periodic-copy term L^{-(d+2)N} on every entry, the
    diagonal included; J^F has a zero diagonal. With that convention
    -Δ^P = Σ_j L^{-2(j-1)} P_j and -Δ^F = -Δ^P + qL^{-2N} Q_N.

    Raises:
        CovarianceError: If the volume exceeds max_volume
    """
    bc = BoundaryCondition.parse(bc)
    if shape.volume > max_volume:
        raise CovarianceError(f"Dense build limited to {max_volume} sites, got {shape.volume}")

    d, L, N = shape.d, float(shape.L), shape.N
    jxy = coalescence_matrix(shape, max_volume)
    off_diagonal = jxy > 0
    coupling = np.where(off_diagonal, L ** (-(d + 2) * jxy.astype(float)) / const_z(d, shape.L), 0.0)
    if bc is BoundaryCondition.PERIODIC:
        coupling = coupling + L ** (-(d + 2) * N)
    identity = np.eye(shape.volume)
    laplacian = const_q(d, shape.L) * (identity - coupling)

    kernel = KernelEval(shape, a)
    covariance = kernel.cumulative(np.arange(N + 1))[jxy]
    try:
        constant = np.full_like(covariance, kernel.hat(bc))
    except CovarianceError:
        constant = np.full_like(covariance, np.nan)

    resolvent = None
    operator = laplacian + a * identity
    if np.isfinite(constant).all():
        resolvent = np.linalg.solve(operator, identity)
    logger.debug("Dense build %s a=%g volume=%d", bc.value, a, shape.volume)
    return DenseOperators(coupling, laplacian, covariance, constant, resolvent)


def dense_quadratic_form(bc, a: float, shape: LatticeShape, field: np.ndarray) -> float:
    """
    ½(φ, (-Δ* + a)φ) for a field of shape (V,) or (V, n), summed over
    components.
    """
    dense = build_dense(bc, a, shape)
    values = np.asarray(field, dtype=float).reshape(shape.volume, -1)
    operator = dense.laplacian + a * np.eye(shape.volume)
    return 0.5 * float(np.einsum('in,ij,jn->', values, operator, values))


def dense_projection(j: int, shape: LatticeShape) -> np.ndarray:
    """Dense Q_j (verification only)."""
    jxy = coalescence_matrix(shape)
    return np.where(jxy <= j, float(shape.L) ** (-shape.d * j), 0.0)


def spectral_laplacian(bc, shape: LatticeShape) -> np.ndarray:
    """-Δ* assembled from the projections P_j and Q_N."""
    bc = BoundaryCondition.parse(bc)
    total = np.zeros((shape.volume, shape.volume))
    for j in range(1, shape.N + 1):
        projection = dense_projection(j - 1, shape) - dense_projection(j, shape)
        total += float(shape.L) ** (-2 * (j - 1)) * projection
    if bc is BoundaryCondition.FREE:
        total += const_q(shape.d, shape.L) * float(shape.L) ** (-2 * shape.N) * dense_projection(shape.N, shape)
    return total


def dsq_metric(r: float, t: float) -> float:
    """|√|r| - √|t|| when r, t have the same sign, √|r| + √|t| otherwise."""
    sr, st = math.sqrt(abs(r)), math.sqrt(abs(t))
    if r * t >= 0:
        return abs(sr - st)
    return sr + st


def mass_window(N: int, L: int, A: float = 1.0):
    """Mass interval [-½L^{-2(N-1)}, A L^{-2N}] of the difference bounds."""
    return -0.5 * float(L) ** (-2 * (N - 1)), A * float(L) ** (-2 * N)


def mass_difference_bound_check(a1: float, a2: float, shape: LatticeShape,
                                x: Site, A: float = 1.0) -> float:
    """
    Empirical constant C in |C_{a1,≤N}(x) - C_{a2,≤N}(x)| <= C d_sq(a1, a2) / |x|^{d-3}.

    The constant is reported, not certified.

    Raises:
        CovarianceError: If a mass lies outside the window, a1 = a2 or x = o
    """
    low, high = mass_window(shape.N, shape.L, A)
    for a in (a1, a2):
        if not low <= a <= high:
            raise CovarianceError(f"Mass {a!r} outside the window [{low!r}, {high!r}]")
    distance = dsq_metric(a1, a2)
    if distance == 0:
        raise CovarianceError("The bound check needs two distinct masses")
    norm = euclid_norm(x)
    if norm == 0:
        raise CovarianceError("The bound check needs x != o")
    jox = _jxy(x)
    difference = abs(c_cum(a1, shape, jox) - c_cum(a2, shape, jox))
    return difference * norm ** (shape.d - 3) / distance


def plateau_mass(t: float, delta: float, shape: LatticeShape) -> float:
    """a = t L^{-(2+δ)N}."""
    return t * float(shape.L) ** (-(2.0 + delta) * shape.N)


def plateau_threshold(t: float, delta: float, shape: LatticeShape) -> float:
    """|x| beyond which |x/L^N|^{d-2} > 2 t L^{-δN}, i.e. the constant term dominates."""
    if shape.d <= 2:
        raise CovarianceError(f"No plateau crossover for d={shape.d} <= 2")
    ratio = 2.0 * t * float(shape.L) ** (-delta * shape.N)
    return shape.side * ratio ** (1.0 / (shape.d - 2))


def gaussian_regime_constants(coords, s: float, d: int, L: int,
                              N_values: Iterable[int], tol: float = 1e-14) -> List[dict]:
    """
    ℂ^P_{sL^{-2N},N}(x) against ℂ_{0,∞}(x) at fixed x for a list of N.

    Returns:
        One row per N with both values, their difference and the
        |x|^{d-2}-rescaled finite-volume value
    """
    if not s > 0:
        raise CovarianceError(f"Gaussian-regime masses need s > 0, got {s}")
    rows = []
    for N in N_values:
        shape = LatticeShape(d, L, N, BoundaryCondition.PERIODIC)
        x = from_coords(coords, shape)
        finite = green(BoundaryCondition.PERIODIC, s * float(L) ** (-2 * N), shape, x)
        infinite = green_infty(x, tol).value
        norm = max(euclid_norm(x), 1.0)
        rows.append({
            'N': N,
            'jxy': _jxy(x),
            'finite': finite,
            'infinite': infinite,
            'difference': finite - infinite,
            'rescaled': finite * norm ** (d - 2),
        })
    return rows
