"""
Exact hierarchical RG on radial grids.

One step integrates the scale-(j+1) fluctuation over the L^d sub-blocks of
a block:

    Z_{j+1}(φ) = 𝔼 ∏_b Z_j(φ + ζ_b),   ζ_b = σ(η_b - η̄)

with the observable components carried as ratios to Z_∅. The expectation
is taken by Monte Carlo with common random numbers across grid points (or
by a Gauss-Hermite tensor product for small blocks), accumulated with a
chunked log-sum-exp so that products of L^d factors never overflow.

All coalescence classes of the observable point x share Z_∅ and Z_o, so one
recursion carries every class at once; only Z_ox differs between them.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, special

from src.kernels import scales
from src.kernels.covariance import gamma, green_infty, zero_mode_mass
from src.kernels.flow import gtilde_flow
from src.models.effective_z import EffectiveZ
from src.models.errors import ConfigError, FlowError, RGError
from src.models.lattice import (
    BoundaryCondition,
    LatticeShape,
    Site,
    class_representatives,
    coalescence,
)
from src.models.parameters import ModelParams, Regime, ScaleParams
from src.models.records import StepDiagnostics, TuneResult, TwoPointEstimate, ZeroModeResult
from src.models.run_config import NumericsConfig
from src.samplers.rng import StreamFactory

logger = logging.getLogger(__name__)

MAX_TENSOR_POINTS = 200_000
TAIL_TOLERANCE = 1e-8
FACTORISATION_FACTOR = 5.0
FACTORISATION_FLOOR = 1e-9
MAX_SCAN_S = 10.0

Observer = Callable[[int, List[EffectiveZ]], None]


@dataclass(frozen=True)
class FluctuationLaw:
    """
    Law of the block fluctuations (ζ_b)_{b=1..m} of step j -> j+1.

    Cov(ζ_b, ζ_b') = γ_{j+1}(a)(L^{-dj} δ_bb' - L^{-d(j+1)}), Σ_b ζ_b = 0.
    """
    scale: int  # j+1
    a: float
    shape: LatticeShape
    n: int = 1

    @property
    def m(self) -> int:
        return self.shape.block_size

    @property
    def sigma(self) -> float:
        L, d = self.shape.L, self.shape.d
        return math.sqrt(gamma(self.scale, self.a, L) * float(L) ** (-d * (self.scale - 1)))

    @property
    def variance(self) -> float:
        return self.sigma ** 2 * (1.0 - 1.0 / self.m)

    @property
    def covariance(self) -> float:
        """Off-diagonal covariance of two distinct sub-blocks."""
        return -self.sigma ** 2 / self.m

    def transform(self, eta: np.ndarray) -> np.ndarray:
        """η of shape (..., m, n) -> ζ = σ(η - η̄)."""
        return self.sigma * (eta - eta.mean(axis=-2, keepdims=True))


def sample_fluctuation(law: FluctuationLaw, rng: np.random.Generator, count: int,
                       antithetic: bool = False) -> np.ndarray:
    """
    Draw `count` fluctuations, shape (count, m, n).

    With antithetic pairing the second half of the draws is the negation of
    the first.
    """
    if antithetic:
        half = (count + 1) // 2
        eta = rng.standard_normal((half, law.m, law.n))
        eta = np.concatenate([eta, -eta])[:count]
    else:
        eta = rng.standard_normal((count, law.m, law.n))
    return law.transform(eta)


def quadrature_fluctuations(law: FluctuationLaw, nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gauss-Hermite tensor product over η ∈ R^{m·n}.

    Returns:
        (ζ of shape (points, m, n), log-weights summing to 1 in probability)

    Raises:
        ConfigError: If the tensor grid has more than MAX_TENSOR_POINTS points
    """
    dimension = law.m * law.n
    points = nodes ** dimension
    if points > MAX_TENSOR_POINTS:
        raise ConfigError(
            f"Tensor quadrature with {nodes} nodes in {dimension} dimensions needs "
            f"{points} points (limit {MAX_TENSOR_POINTS}); use the Monte Carlo sampler"
        )
    x, w = special.roots_hermitenorm(nodes)
    log_w = np.log(w / math.sqrt(2.0 * math.pi))
    index = np.indices((nodes,) * dimension).reshape(dimension, -1).T
    eta = x[index].reshape(points, law.m, law.n)
    return law.transform(eta), log_w[index].sum(axis=1)


class _WeightedSums:
    """
    Running sums Σw, Σw², Σw·o, Σw²·o, Σw²·o² per grid point, kept relative
    to a running maximum of log w.
    """

    def __init__(self, size: int, names: Sequence[str]):
        self.shift = np.full(size, -np.inf)
        self.w = np.zeros(size)
        self.w2 = np.zeros(size)
        self.first = {name: np.zeros(size) for name in names}
        self.cross = {name: np.zeros(size) for name in names}
        self.second = {name: np.zeros(size) for name in names}

    def add(self, log_w: np.ndarray, observables: Dict[str, np.ndarray]):
        new_shift = np.maximum(self.shift, np.max(log_w, axis=1))
        safe = np.where(np.isfinite(new_shift), new_shift, 0.0)
        rescale = np.where(np.isfinite(self.shift), np.exp(self.shift - safe), 0.0)
        weights = np.exp(log_w - safe[:, None])
        squares = weights * weights
        self.w = self.w * rescale + weights.sum(axis=1)
        self.w2 = self.w2 * rescale ** 2 + squares.sum(axis=1)
        for name, values in observables.items():
            self.first[name] = self.first[name] * rescale + np.sum(weights * values, axis=1)
            self.cross[name] = self.cross[name] * rescale ** 2 + np.sum(squares * values, axis=1)
            self.second[name] = self.second[name] * rescale ** 2 + np.sum(squares * values * values, axis=1)
        self.shift = new_shift

    def log_total(self) -> np.ndarray:
        with np.errstate(divide='ignore'):
            return self.shift + np.log(self.w)

    def mean(self, name: str) -> np.ndarray:
        return self.first[name] / self.w

    def std(self, name: str) -> np.ndarray:
        """Delta-method standard deviation of the self-normalised mean."""
        mean = self.mean(name)
        spread = self.second[name] - 2.0 * mean * self.cross[name] + mean * mean * self.w2
        return np.sqrt(np.maximum(spread, 0.0)) / self.w

    def ess(self) -> np.ndarray:
        return self.w * self.w / self.w2


def radial_grid(half_width: float, points: int) -> np.ndarray:
    """r_i = i·h, i = 0..points-1, r_{points-1} = half_width."""
    return np.linspace(0.0, half_width, points)


def _zero_mode_scale(model: ModelParams, shape: LatticeShape) -> Tuple[Optional[float], float]:
    """
    Width and peak radius of the zero-mode integrand at leading order.

    Returns:
        (width or None when nothing confines the field, peak radius)
    """
    V = float(shape.volume)
    m_hat = zero_mode_mass(shape.bc, model.a, shape)
    shift = 0.0
    g_final = 0.0
    if model.g > 0:
        if shape.d > 2:
            shift = (model.n + 2) * model.g * green_infty(0, 1e-12, d=shape.d, L=shape.L).value
        try:
            B = scales.const_B(model.n, shape.d, shape.L)
            g_final = gtilde_flow(model.g, 0.0, shape.d, shape.L, B, shape.N)[-1].gtilde
        except FlowError:
            g_final = model.g
    m_total = m_hat + model.nu + shift
    widths = []
    if m_total > 0:
        widths.append(1.0 / math.sqrt(V * m_total))
    if g_final > 0:
        widths.append((g_final * V) ** -0.25)
    peak = math.sqrt(-m_total / g_final) if m_total < 0 and g_final > 0 else 0.0
    return (min(widths) if widths else None), peak


def grid_half_widths(model: ModelParams, shape: LatticeShape, numerics: NumericsConfig,
                     require_confinement: bool = True) -> np.ndarray:
    """
    Grid half-widths Φ_0..Φ_N, top-down.

    Φ_N covers grid_sigmas zero-mode widths past the peak; every lower scale
    adds grid_sigmas standard deviations of one sub-block fluctuation.

    Raises:
        RGError: If nothing confines the zero mode and confinement is required
    """
    if numerics.grid_half_width is not None:
        return np.full(shape.N + 1, float(numerics.grid_half_width))
    width, peak = _zero_mode_scale(model, shape)
    if width is None:
        if require_confinement:
            raise RGError(
                f"Zero mode is not confined: g={model.g}, nu={model.nu}, a={model.a} "
                f"({shape.bc.value}) give no Gaussian or quartic decay",
                scale=shape.N,
            )
        width = 1.0 / math.sqrt(shape.volume)
    widths = np.empty(shape.N + 1)
    widths[shape.N] = peak + numerics.grid_sigmas * width
    for j in range(shape.N - 1, -1, -1):
        law = FluctuationLaw(j + 1, model.a, shape, model.n)
        widths[j] = widths[j + 1] + numerics.grid_sigmas * math.sqrt(law.variance * model.n)
    logger.debug("Grid half-widths: %s", np.array2string(widths, precision=4))
    return widths


def init_Z0(model: ModelParams, shape: LatticeShape, o: Site, x: Site,
            radii: Optional[np.ndarray] = None, interpolation_order: int = 3) -> EffectiveZ:
    """
    Scale-0 partition function of one site block:

        Z_0(φ) = e^{-g|φ|⁴/4 - ν|φ|²/2} (1 + σ_o φ1 1_{o∈b})(1 + σ_x φ1 1_{x∈b})

    Z_ox vanishes unless x = o. Evaluation stays on the closed form; the
    arrays on `radii` are filled for inspection.
    """
    if radii is None:
        radii = radial_grid(grid_half_widths(model, shape, NumericsConfig(), False)[0],
                            NumericsConfig().grid_points)
    jox = coalescence(o, x)
    u = radii ** 2
    log_z = -0.25 * model.g * u * u - 0.5 * model.nu * u
    zeros = np.zeros_like(u)
    iso, aniso = zeros, zeros
    if jox == 0:
        iso, aniso = (u, zeros) if model.n == 1 else (zeros, u)
    return EffectiveZ(
        scale=0, model=model, shape=shape, x_coords=x.to_coords(), jox=jox,
        radii=radii, log_z=log_z, h_o=np.ones_like(u), iso=iso, aniso=aniso,
        log_norm=0.0, interpolation_order=interpolation_order, exact=True,
    )


def _ox_observables(Z: EffectiveZ, step: int, psi: np.ndarray, u: np.ndarray, h: np.ndarray,
                    symmetrize: bool, placement: Tuple[int, int]) -> List[np.ndarray]:
    """T_kk for k = 1 (and 2 when n >= 2) at each (grid point, sample)."""
    n = Z.n
    m = psi.shape[2]
    components = range(1 if n == 1 else 2)
    result = []
    if step == Z.jox:
        # coalescence: o and x land in two distinct sub-blocks
        for k in components:
            values = psi[..., k] * h
            if symmetrize:
                total = values.sum(axis=-1)
                result.append((total * total - np.sum(values * values, axis=-1)) / (m * (m - 1)))
            else:
                result.append(values[..., placement[0]] * values[..., placement[1]])
        return result
    iso, aniso = Z.ox_parts(u)
    for k in components:
        if n == 1:
            values = iso
        else:
            cos2 = np.where(u > 0, psi[..., k] ** 2 / np.where(u > 0, u, 1.0), 1.0 / n)
            values = iso + aniso * cos2
        result.append(values.mean(axis=-1) if symmetrize else values[..., placement[0]])
    return result


def rg_step_many(zs: Sequence[EffectiveZ], law: FluctuationLaw, numerics: NumericsConfig,
                 zeta: np.ndarray, log_w: np.ndarray, radii: np.ndarray,
                 placement: Tuple[int, int] = (0, 1)) -> Tuple[List[EffectiveZ], StepDiagnostics]:
    """
    One RG step for effective partition functions sharing Z_∅ and Z_o.

    Args:
        zs: scale-j functions, one per coalescence class
        law: fluctuation law of scale j+1
        numerics: sampler and grid settings
        zeta: fluctuation draws, shape (samples, m, n)
        log_w: log-weights of the draws
        radii: grid of the scale-(j+1) result
        placement: sub-blocks of o and x when symmetrisation is off

    Raises:
        RGError: On inconsistent scales or a non-finite result, with the
            scale and grid index of the failure
    """
    base = zs[0]
    step = law.scale
    if base.scale + 1 != step or step > base.shape.N:
        raise RGError(f"Cannot step from scale {base.scale} with a scale-{step} law "
                      f"on N={base.shape.N}", scale=step)
    n, m = base.n, law.m
    e1 = np.zeros(n)
    e1[0] = 1.0
    names = ['o'] + [f'{c}_{k}' for c in range(len(zs)) for k in (1, 2)]
    sums = _WeightedSums(len(radii), names)

    for start in range(0, len(log_w), numerics.chunk_size):
        stop = start + numerics.chunk_size
        psi = zeta[None, start:stop] + radii[:, None, None, None] * e1
        u = np.sum(psi * psi, axis=-1)
        chunk_log_w = log_w[None, start:stop] + np.sum(base.log_weight(u), axis=-1)
        h = base.o_ratio(u)
        first = psi[..., 0] * h
        observables = {'o': first.mean(axis=-1) if numerics.symmetrize else first[..., placement[0]]}
        for c, Z in enumerate(zs):
            if step < Z.jox:
                continue
            terms = _ox_observables(Z, step, psi, u, h, numerics.symmetrize, placement)
            for k, values in enumerate(terms, start=1):
                observables[f'{c}_{k}'] = values
        sums.add(chunk_log_w, observables)

    log_total = sums.log_total()
    bad = np.flatnonzero(~np.isfinite(log_total))
    if bad.size:
        raise RGError(
            f"Z_empty vanished or overflowed at scale {step}, grid point {bad[0]} "
            f"(r={radii[bad[0]]:.6g})",
            scale=step, grid_index=int(bad[0]),
        )

    r_o = sums.mean('o')
    h_next = np.empty_like(r_o)
    h_next[1:] = r_o[1:] / radii[1:]
    h_next[0] = (4.0 * h_next[1] - h_next[2]) / 3.0

    if numerics.renorm_policy == 'origin':
        shift = float(log_total[0])
    else:
        shift = float(np.max(log_total))
    log_z = log_total - shift
    log_norm = m * base.log_norm + shift

    results = []
    for c, Z in enumerate(zs):
        if step < Z.jox:
            iso = np.zeros_like(radii)
            aniso = np.zeros_like(radii)
        elif n == 1:
            iso, aniso = sums.mean(f'{c}_1'), np.zeros_like(radii)
        else:
            iso = sums.mean(f'{c}_2')
            aniso = sums.mean(f'{c}_1') - iso
        for name, values in (('h_o', h_next), ('iso', iso), ('aniso', aniso)):
            bad = np.flatnonzero(~np.isfinite(values))
            if bad.size:
                raise RGError(f"Non-finite {name} at scale {step}, grid point {bad[0]}",
                              scale=step, grid_index=int(bad[0]))
        results.append(EffectiveZ(
            scale=step, model=Z.model, shape=Z.shape, x_coords=Z.x_coords, jox=Z.jox,
            radii=radii, log_z=log_z, h_o=h_next, iso=iso, aniso=aniso, log_norm=log_norm,
            interpolation_order=numerics.interpolation_order,
        ))

    z_values = np.exp(log_z)
    diagnostics = StepDiagnostics(
        scale=step,
        half_width=float(radii[-1]),
        log_norm=log_norm,
        deviation=float(np.max(np.abs(r_o - radii) * z_values)),
        noise=float(np.max(sums.std('o') * z_values)),
        ess=float(np.min(sums.ess())),
    )
    logger.debug("Scale %d: half-width %.4g, log_norm %.6g, min ESS %.0f",
                 step, diagnostics.half_width, log_norm, diagnostics.ess)
    return results, diagnostics


def draw_fluctuations(law: FluctuationLaw, numerics: NumericsConfig,
                      rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Draws and log-weights for one step under the configured sampler."""
    if numerics.sampler == 'tensorquad':
        return quadrature_fluctuations(law, numerics.quad_nodes)
    zeta = sample_fluctuation(law, rng, numerics.samples, numerics.antithetic)
    return zeta, np.full(len(zeta), -math.log(len(zeta)))


def rg_step(Z: EffectiveZ, law: FluctuationLaw, numerics: NumericsConfig,
            rng: np.random.Generator, half_width: Optional[float] = None) -> EffectiveZ:
    """Single-function RG step; the grid keeps its half-width unless given."""
    zeta, log_w = draw_fluctuations(law, numerics, rng)
    width = float(Z.radii[-1]) if half_width is None else half_width
    radii = radial_grid(width, numerics.grid_points)
    return rg_step_many([Z], law, numerics, zeta, log_w, radii)[0][0]


def _zero_mode_weight(Z: EffectiveZ, bc, a: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fine radial grid, u = r² and the normalised radial zero-mode weight."""
    shape = Z.shape
    if Z.scale != shape.N:
        raise RGError(f"Zero-mode integral needs scale N={shape.N}, got {Z.scale}", scale=Z.scale)
    m_hat = zero_mode_mass(bc, a, shape)
    if m_hat == 0.0:
        raise RGError(
            f"Singular final-scale mass for {BoundaryCondition.parse(bc).value} boundary "
            f"condition at a={a!r}", scale=shape.N,
        )
    r = np.linspace(0.0, float(Z.radii[-1]), 8 * (len(Z.radii) - 1) + 1)
    u = r * r
    log_w = Z.log_weight(u) - 0.5 * float(shape.volume) * m_hat * u
    if Z.n > 1:
        with np.errstate(divide='ignore'):
            log_w = log_w + (Z.n - 1) * np.log(r)
    weight = np.exp(log_w - np.max(log_w))
    return r, u, weight


def zero_mode_integrate(Z: EffectiveZ, bc, a: float) -> ZeroModeResult:
    """
    Final integral over the constant mode y with weight e^{-½|Λ_N| m̂ |y|²}.

        G = ∫ Z_ox w / ∫ Z_∅ w,   ⟨|Φ_N|^{2p}⟩ = ∫ |y|^{2p} Z_∅ w / ∫ Z_∅ w

    Raises:
        RGError: On a singular final mass, or when more than 1e-8 of the
            integrand sits in the outer tenth of the grid
    """
    r, u, weight = _zero_mode_weight(Z, bc, a)
    total = integrate.simpson(weight, x=r)
    if not np.isfinite(total) or total <= 0:
        raise RGError("Zero-mode integral is not positive", scale=Z.scale)

    outer = r >= 0.9 * r[-1]
    tail = integrate.simpson(weight[outer], x=r[outer]) / total
    if tail > TAIL_TOLERANCE:
        raise RGError(
            f"Zero-mode integrand not contained in the grid: tail mass {tail:.3g} > {TAIL_TOLERANCE}",
            scale=Z.scale, grid_index=len(Z.radii) - 1,
        )

    iso, aniso = Z.ox_parts(u)
    G = integrate.simpson((iso + aniso / Z.n) * weight, x=r) / total if Z.has_ox else 0.0
    moments = [float(integrate.simpson(u ** p * weight, x=r) / total) for p in (1, 2, 3)]
    chi = float(Z.shape.volume) * moments[0] / Z.n
    return ZeroModeResult(G=float(G), chi=chi, moments=moments, tail_mass=float(tail))


def zero_mode_ks_distance(Z: EffectiveZ, bc, a: float, field_scale: float, s: float) -> float:
    """
    Kolmogorov-Smirnov distance between the law of |Φ_N|/field_scale and the
    radial law ∝ t^{n-1} e^{-t⁴/4 - s t²/2}.
    """
    r, _, weight = _zero_mode_weight(Z, bc, a)
    t = r / field_scale
    empirical = integrate.cumulative_trapezoid(weight, t, initial=0.0)
    empirical /= empirical[-1]

    t_limit = np.linspace(0.0, max(t[-1], max(6.0, 2.0 * math.sqrt(abs(s))) + 2.0), 20001)
    with np.errstate(divide='ignore'):
        log_density = (Z.n - 1) * np.log(t_limit) - 0.25 * t_limit ** 4 - 0.5 * s * t_limit ** 2
    if Z.n == 1:
        log_density[0] = 0.0
    density = np.exp(log_density - np.max(log_density))
    limit = integrate.cumulative_trapezoid(density, t_limit, initial=0.0)
    limit /= limit[-1]
    return float(np.max(np.abs(empirical - np.interp(t, t_limit, limit))))


@dataclass
class ExactRun:
    """Replica-combined two-point estimates of one (model, shape)."""
    model: ModelParams
    shape: LatticeShape
    estimates: List[TwoPointEstimate]
    half_widths: np.ndarray
    diagnostics: List[List[StepDiagnostics]] = field(default_factory=list)  # per replica
    finals: List[List[EffectiveZ]] = field(default_factory=list)  # per replica, per class

    def effective_masses(self) -> np.ndarray:
        """c_eff of every replica's Z_N."""
        return np.array([effective_mass(zs[0]) for zs in self.finals])


def effective_mass(Z: EffectiveZ, points: int = 6) -> float:
    """
    Quadratic coefficient c of -log Z_∅ ≈ |Λ_N| c |φ|²/2 near φ = 0, from a
    quadratic fit of log_z in u over the first grid points.
    """
    u = Z.u_grid[:points]
    coefficients = np.polyfit(u, Z.log_z[:points], 2)
    return -2.0 * coefficients[1] / float(Z.shape.volume)


def _run_replica(replica: int, model: ModelParams, shape: LatticeShape, sites: Sequence[Site],
                 widths: np.ndarray, numerics: NumericsConfig, factory: StreamFactory,
                 observer: Optional[Observer]) -> Tuple[List[EffectiveZ], List[StepDiagnostics]]:
    origin = shape.origin()
    radii = radial_grid(widths[0], numerics.grid_points)
    zs = [init_Z0(model, shape, origin, site, radii, numerics.interpolation_order) for site in sites]
    if observer is not None and replica == 0:
        observer(0, zs)
    diagnostics = []
    for j in range(shape.N):
        law = FluctuationLaw(j + 1, model.a, shape, model.n)
        zeta, log_w = draw_fluctuations(law, numerics, factory.rg(replica, j + 1))
        radii = radial_grid(widths[j + 1], numerics.grid_points)
        zs, step_diagnostics = rg_step_many(zs, law, numerics, zeta, log_w, radii)
        diagnostics.append(step_diagnostics)
        if observer is not None and replica == 0:
            observer(j + 1, zs)
    return zs, diagnostics


def _combine(values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Mean and standard error over the leading (replica) axis."""
    mean = values.mean(axis=0)
    if len(values) < 2:
        return mean, np.full_like(mean, np.nan)
    return mean, values.std(axis=0, ddof=1) / math.sqrt(len(values))


def run_exact(model: ModelParams, shape: LatticeShape, sites: Sequence[Site],
              numerics: NumericsConfig, seed: int, threads: int = 1,
              observer: Optional[Observer] = None, zero_mode: bool = True,
              require_confinement: bool = True) -> ExactRun:
    """
    Full recursion plus zero-mode integral for every site in `sites`.

    Replicas use independent streams keyed by (seed, replica, scale), run
    on `threads` workers and are combined in replica order, so the result
    does not depend on the thread count.
    """
    numerics.validate()
    origin = shape.origin()
    classes: Dict[int, Site] = {}
    for site in sites:
        classes.setdefault(coalescence(origin, site), site)
    class_sites = list(classes.values())
    class_index = {jox: i for i, jox in enumerate(classes)}

    widths = grid_half_widths(model, shape, numerics, require_confinement)
    factory = StreamFactory(seed)
    logger.info("Exact RG: d=%d L=%d N=%d n=%d g=%g nu=%g a=%g %s, %d classes, %d replicas",
                shape.d, shape.L, shape.N, model.n, model.g, model.nu, model.a,
                shape.bc.value, len(class_sites), numerics.replicas)

    def job(replica: int):
        return _run_replica(replica, model, shape, class_sites, widths, numerics, factory, observer)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        outcomes = list(pool.map(job, range(numerics.replicas)))
    finals = [zs for zs, _ in outcomes]
    diagnostics = [d for _, d in outcomes]

    estimates = []
    if zero_mode:
        results = [[zero_mode_integrate(Z, shape.bc, model.a) for Z in zs] for zs in finals]
        for site in sites:
            jox = coalescence(origin, site)
            c = class_index[jox]
            G, G_err = _combine(np.array([row[c].G for row in results]))
            chi, chi_err = _combine(np.array([row[c].chi for row in results]))
            moments, moments_err = _combine(np.array([row[c].moments for row in results]))
            below = [d for replica in diagnostics for d in replica if d.scale < jox]
            deviation = max((d.deviation for d in below), default=0.0)
            noise = max((d.noise for d in below), default=0.0)
            flagged = deviation > FACTORISATION_FACTOR * noise + FACTORISATION_FLOOR
            if flagged:
                logger.warning("Z_o drifted from phi1*Z_empty below coalescence for x=%s: "
                               "deviation %.3g vs noise %.3g", site.to_coords(), deviation, noise)
            estimates.append(TwoPointEstimate(
                x_coords=site.to_coords(), jxy=jox,
                G=float(G), G_err=float(G_err), chi=float(chi), chi_err=float(chi_err),
                moments=[float(v) for v in moments], moments_err=[float(v) for v in moments_err],
                factorisation_deviation=deviation, factorisation_noise=noise, flagged=flagged,
            ))
    return ExactRun(model=model, shape=shape, estimates=estimates, half_widths=widths,
                    diagnostics=diagnostics, finals=finals)


def reference_split(shape: LatticeShape, params: ScaleParams) -> float:
    """Covariance mass a = ½ L^{-dN} 𝗁_N^{-2} used when m̂ would vanish."""
    return 0.5 * float(shape.L) ** (-shape.d * shape.N) * scales.large_field_h(params) ** -2


def _split_mass(shape: LatticeShape, a: float, a_ref: float) -> float:
    return a_ref if zero_mode_mass(shape.bc, a, shape) == 0.0 else a


def _scale_params(model: ModelParams, shape: LatticeShape) -> ScaleParams:
    params, _ = scales.leading_order_params(shape.d, shape.L, shape.N, model.n, model.g)
    return params


def tune_nu(model: ModelParams, shape: LatticeShape, numerics: NumericsConfig, seed: int,
            threads: int = 1, mode: str = 'chi', a_target: float = 0.0,
            bracket: Optional[Tuple[float, float]] = None, tol: Optional[float] = None,
            max_expansions: int = 30) -> TuneResult:
    """
    Bisect the total quadratic coefficient ν for a prescribed final-scale
    behaviour (model.nu and model.a are ignored).

    mode 'chi': χ_N(ν) = L^{dN} 𝗁_N² f_n(0), the middle of the window band.
    mode 'mass': the quadratic coefficient of -log Z_{N,∅} at φ = 0 equals
    a_target.

    The same random streams are used for every ν, so the bisected function
    is smooth in ν.

    Raises:
        ConfigError: For mode 'chi' with g = 0 or an unknown mode
        RGError: If the bracket shows no sign change after expansion
    """
    if mode not in ('chi', 'mass'):
        raise ConfigError(f"Unknown tune mode '{mode}' (expected 'chi' or 'mass')")
    caveats = []
    origin = shape.origin()
    a_ref = 0.0
    params: Optional[ScaleParams] = None
    if model.g > 0:
        params = _scale_params(model, shape)
        scale_width = scales.window_w(params)
        centre = -(model.n + 2) * model.g * green_infty(0, 1e-12, d=shape.d, L=shape.L).value
        if mode == 'chi':
            a_ref = _split_mass(shape, 0.0, reference_split(shape, params))
    else:
        if mode == 'chi':
            raise ConfigError("Tuning to the window band needs g > 0; use mode 'mass'")
        scale_width = float(shape.L) ** (-2 * shape.N)
        centre = 0.0
    tolerance = 1e-3 * scale_width if tol is None else tol
    target = scales.chi_nongaussian(0.0, params) if mode == 'chi' else a_target
    evaluations: List[Tuple[float, float]] = []

    def residual(nu_total: float) -> float:
        """Decreasing in ν."""
        if mode == 'chi':
            trial = ModelParams(n=model.n, g=model.g, nu=nu_total - a_ref, a=a_ref)
            run = run_exact(trial, shape, [origin], numerics, seed, threads)
            value = run.estimates[0].chi - target
        else:
            trial = ModelParams(n=model.n, g=model.g, nu=nu_total, a=0.0)
            run = run_exact(trial, shape, [origin], numerics, seed, threads,
                            zero_mode=False, require_confinement=False)
            value = target - float(np.mean(run.effective_masses()))
        evaluations.append((nu_total, value))
        logger.info("tune_nu[%s]: nu=%.10g residual=%.6g", mode, nu_total, value)
        return value

    if bracket is not None:
        low, high = sorted(float(v) for v in bracket)
    else:
        half = 4.0 * scale_width
        low, high = centre - half, centre + half
    f_low, f_high = residual(low), residual(high)
    expansions = 0
    while not (f_low > 0 > f_high):
        if expansions >= max_expansions:
            raise RGError(
                f"No sign change of the {mode} residual on [{low:.6g}, {high:.6g}]: "
                f"residual({low:.6g}) = {f_low:.6g}, residual({high:.6g}) = {f_high:.6g}"
            )
        width = high - low
        if f_low <= 0:
            low -= width
            f_low = residual(low)
        if f_high >= 0:
            high += width
            f_high = residual(high)
        expansions += 1
    initial = (low, high)

    while high - low > tolerance:
        middle = 0.5 * (low + high)
        f_middle = residual(middle)
        if f_middle > 0:
            low = middle
        else:
            high = middle

    ordered = sorted(evaluations)
    monotone = all(b[1] < a[1] for a, b in zip(ordered[:-1], ordered[1:]))
    if not monotone:
        message = f"{mode} residual is not strictly decreasing across the bracket"
        logger.warning(message)
        caveats.append(message)
    return TuneResult(
        nu_star=0.5 * (low + high), mode=mode, target=target, tolerance=tolerance,
        a_ref=a_ref, bracket=initial, evaluations=evaluations, monotone=monotone,
        caveats=caveats,
    )


def scan_point(nu_star: float, s: float, model: ModelParams, shape: LatticeShape,
               regime, params: ScaleParams) -> ModelParams:
    """
    Model at window coordinate s: total ν = ν* + s·w_N (or s·v_N), mass from
    the leading-order window, moved off a singular zero mode.

    Raises:
        ConfigError: If |s| exceeds the scan cap
    """
    if abs(s) > MAX_SCAN_S:
        raise ConfigError(f"Scan coordinate |s|={abs(s)} exceeds the cap {MAX_SCAN_S}")
    regime = Regime.parse(regime)
    step = scales.window_w(params) if regime is Regime.NON_GAUSSIAN else scales.shift_v(params)
    nu_total = nu_star + s * step
    a = scales.mass_window(s, shape.bc, regime, params)
    a = _split_mass(shape, a, reference_split(shape, params))
    return ModelParams(n=model.n, g=model.g, nu=nu_total - a, a=a)


def two_point_scan(model: ModelParams, shape: LatticeShape, s_values: Sequence[float],
                   sites: Optional[Sequence[Site]], numerics: NumericsConfig, seed: int,
                   nu_star: float, regime=Regime.NON_GAUSSIAN, params: Optional[ScaleParams] = None,
                   threads: int = 1, observer: Optional[Observer] = None) -> List[dict]:
    """
    G(x) with error bars over a list of window coordinates.

    Returns:
        One row per (s, x), s-major in the given order
    """
    if params is None:
        params = _scale_params(model, shape)
    if sites is None:
        sites = class_representatives(shape)
    if len(sites) == 0:
        return []
    rows = []
    for s in s_values:
        point = scan_point(nu_star, s, model, shape, regime, params)
        run = run_exact(point, shape, sites, numerics, seed, threads, observer)
        for estimate in run.estimates:
            rows.append({
                's': float(s),
                'nu': point.nu_total,
                'a': point.a,
                'x': list(estimate.x_coords),
                'jxy': estimate.jxy,
                'G': estimate.G,
                'G_err': estimate.G_err,
                'chi': estimate.chi,
                'chi_err': estimate.chi_err,
                'flagged': estimate.flagged,
            })
        logger.info("Scan point s=%g done (nu=%.8g, a=%.6g)", s, point.nu_total, point.a)
    return rows


def split_independence(model: ModelParams, shape: LatticeShape, site: Site,
                       masses: Sequence[float], numerics: NumericsConfig, seed: int,
                       threads: int = 1) -> List[TwoPointEstimate]:
    """
    The same physical model (fixed ν + a) under several covariance masses;
    the two-point estimates must agree within their errors.
    """
    return [
        run_exact(model.with_split(a), shape, [site], numerics, seed, threads).estimates[0]
        for a in masses
    ]
