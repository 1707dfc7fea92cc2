"""
Single-site Metropolis sampling of the hierarchical |φ|⁴ measure.

The quadratic form is kept through block sums S_k[B] = Σ_{x∈B} φ_x at every
scale k = 0..N:

    ½(φ, -Δ*φ) = ½ Σ_k c_k Σ_B |S_k[B]|²

so a single-site change costs O(N): the linear field at x is
h_x = Σ_k c_k S_k[B_k(x)] and its self-coefficient is κ = Σ_k c_k.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from src.kernels.covariance import const_q, spectral_laplacian
from src.models.errors import InvariantError, SamplerError
from src.models.lattice import BoundaryCondition, LatticeShape, Site, coalescence, translation_permutation
from src.models.parameters import ModelParams
from src.models.records import ChainSummary
from src.models.run_config import ChainConfig
from src.samplers.rng import StreamFactory
from src.utils.statistics import BatchEstimate, batch_means, merge_estimates

logger = logging.getLogger(__name__)

MAX_CHAIN_VOLUME = 2 ** 20
TARGET_ACCEPTANCE = 0.4
TUNE_INTERVAL = 25
CACHE_CHECK_UPDATES = 10 ** 6
CACHE_TOLERANCE = 1e-9


def block_coefficients(shape: LatticeShape) -> np.ndarray:
    """c_k, k = 0..N, of the block-sum form of -Δ*."""
    L, d, N = float(shape.L), shape.d, shape.N
    c = np.zeros(N + 1)
    for j in range(1, N + 1):
        c[j - 1] += L ** (-2 * (j - 1)) * L ** (-d * (j - 1))
        c[j] -= L ** (-2 * (j - 1)) * L ** (-d * j)
    if shape.bc is BoundaryCondition.FREE:
        c[N] += const_q(d, shape.L) * L ** (-2 * N) * L ** (-d * N)
    return c


@dataclass
class FieldState:
    """Field values plus the block-sum caches of every scale."""
    shape: LatticeShape
    values: np.ndarray  # (volume, n)
    sums: List[np.ndarray] = field(default_factory=list)  # sums[k]: (blocks at scale k, n)

    @classmethod
    def from_values(cls, shape: LatticeShape, values: np.ndarray) -> 'FieldState':
        values = np.array(values, dtype=float).reshape(shape.volume, -1)
        state = cls(shape=shape, values=values)
        state.sums = rebuild_caches(state)
        return state

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def mean_field(self) -> np.ndarray:
        """Φ_N = |Λ_N|^{-1} Σ_x φ_x."""
        return self.sums[-1][0] / self.shape.volume


def rebuild_caches(state: FieldState) -> List[np.ndarray]:
    """Block sums recomputed from the values."""
    shape = state.shape
    return [
        state.values.reshape(shape.volume // shape.sites_per_block(k), shape.sites_per_block(k), -1).sum(axis=1)
        for k in range(shape.N + 1)
    ]


def cache_drift(state: FieldState) -> float:
    """Largest relative difference between the incremental and rebuilt sums."""
    rebuilt = rebuild_caches(state)
    drift = 0.0
    for cached, exact in zip(state.sums, rebuilt):
        scale = max(1.0, float(np.max(np.abs(exact))))
        drift = max(drift, float(np.max(np.abs(cached - exact))) / scale)
    return drift


def local_potential(u, g: float, nu: float):
    """g/4 |φ|⁴ + ν/2 |φ|² as a function of u = |φ|²."""
    return 0.25 * g * u * u + 0.5 * nu * u


def local_quadratic(x: Site, state: FieldState) -> Tuple[float, np.ndarray]:
    """
    (κ, h_x): the diagonal entry of -Δ* and (-Δ*φ)_x, from the caches.
    """
    coefficients = block_coefficients(state.shape)
    p = x.pack()
    linear = np.zeros(state.n)
    for k, c in enumerate(coefficients):
        linear += c * state.sums[k][p // state.shape.sites_per_block(k)]
    return float(coefficients.sum()), linear


def exact_energy(state: FieldState, model: ModelParams) -> float:
    """H(φ) from rebuilt block sums plus the local potential at ν_total."""
    coefficients = block_coefficients(state.shape)
    quadratic = 0.5 * math.fsum(
        c * float(np.sum(s * s)) for c, s in zip(coefficients, rebuild_caches(state))
    )
    u = np.sum(state.values ** 2, axis=1)
    return quadratic + float(np.sum(local_potential(u, model.g, model.nu_total)))


def energy_change(x: Site, delta: np.ndarray, state: FieldState, model: ModelParams) -> float:
    """ΔH of φ_x -> φ_x + δ via the caches."""
    kappa, linear = local_quadratic(x, state)
    old = state.values[x.pack()]
    new = old + delta
    g, nu = model.g, model.nu_total
    return (float(np.dot(delta, linear)) + 0.5 * kappa * float(np.dot(delta, delta))
            + local_potential(float(np.dot(new, new)), g, nu) - local_potential(float(np.dot(old, old)), g, nu))


class MetropolisSampler:
    """
    Sequential-sweep Metropolis with Gaussian proposals on one FieldState.
    """

    def __init__(self, state: FieldState, model: ModelParams, width: float):
        self.state = state
        self.model = model
        self.width = float(width)
        shape = state.shape
        self.coefficients = [float(c) for c in block_coefficients(shape)]
        self.kappa = math.fsum(self.coefficients)
        self.divisors = [shape.sites_per_block(k) for k in range(shape.N + 1)]
        self.updates = 0

    def sweep(self, rng: np.random.Generator) -> float:
        """
        One pass over all sites in packed order; returns the acceptance rate.

        Proposals and uniforms for the whole sweep are drawn up front; the
        site loop then runs on Python floats and writes back once.
        """
        state = self.state
        volume, n = state.values.shape
        proposals = rng.normal(0.0, self.width, size=(volume, n)).tolist()
        log_uniforms = np.log(rng.random(volume)).tolist()
        quartic, quadratic = 0.25 * self.model.g, 0.5 * self.model.nu_total
        half_kappa = 0.5 * self.kappa
        values = state.values.tolist()
        sums = [s.tolist() for s in state.sums]
        levels = list(zip(self.coefficients, self.divisors, sums))
        components = range(n)
        accepted = 0
        for p in range(volume):
            delta = proposals[p]
            old = values[p]
            linear = [0.0] * n
            for c, divisor, s in levels:
                block = s[p // divisor]
                for k in components:
                    linear[k] += c * block[k]
            new = [old[k] + delta[k] for k in components]
            u_old = sum([v * v for v in old])
            u_new = sum([v * v for v in new])
            dH = (sum([delta[k] * linear[k] for k in components])
                  + half_kappa * sum([e * e for e in delta])
                  + quartic * (u_new * u_new - u_old * u_old) + quadratic * (u_new - u_old))
            if dH <= 0.0 or log_uniforms[p] < -dH:
                values[p] = new
                for _, divisor, s in levels:
                    block = s[p // divisor]
                    for k in components:
                        block[k] += delta[k]
                accepted += 1
        state.values[:] = values
        for cached, updated in zip(state.sums, sums):
            cached[:] = updated
        self.updates += volume
        return accepted / volume


def metropolis_sweep(state: FieldState, model: ModelParams, cfg: ChainConfig,
                     rng: np.random.Generator) -> float:
    """One sweep at cfg.proposal_width; returns the acceptance rate."""
    return MetropolisSampler(state, model, cfg.proposal_width).sweep(rng)


def measure(state: FieldState, permutations: Sequence[np.ndarray], translation_average: bool = True,
            targets: Optional[Sequence[int]] = None) -> Dict[str, np.ndarray]:
    """
    Observables of one configuration: G(x) for each permutation z -> z ⊕ x,
    χ-sample |Λ_N| (Φ_N^(1))², |Φ_N|^{2p} for p = 1..3 and, for n >= 2,
    the mixed-component G^(12)(x).
    """
    first = state.values[:, 0]
    if translation_average:
        two_point = np.array([np.mean(first * first[perm]) for perm in permutations])
    else:
        two_point = np.array([first[0] * first[t] for t in targets])
    mean_field = state.mean_field
    u = float(np.dot(mean_field, mean_field))
    record = {
        'G': two_point,
        'chi': np.array([state.shape.volume * mean_field[0] ** 2]),
        'moments': np.array([u, u * u, u ** 3]),
    }
    if state.n >= 2:
        second = state.values[:, 1]
        if translation_average:
            record['G_cross'] = np.array([np.mean(first * second[perm]) for perm in permutations])
        else:
            record['G_cross'] = np.array([first[0] * second[t] for t in targets])
    return record


@dataclass
class ChainSeries:
    """Per-measurement observable series of one chain."""
    series: Dict[str, np.ndarray]
    acceptance: float
    width: float
    sweeps: int


def run_chain(chain: int, model: ModelParams, shape: LatticeShape, sites: Sequence[Site],
              cfg: ChainConfig, factory: StreamFactory) -> ChainSeries:
    """Burn-in (with width tuning), then production with measurements every stride sweeps."""
    rng = factory.chain(chain)
    state = FieldState.from_values(shape, np.zeros((shape.volume, model.n)))
    sampler = MetropolisSampler(state, model, cfg.proposal_width)
    permutations = [translation_permutation(shape, site) for site in sites]
    targets = [site.pack() for site in sites]
    check_every = max(1, CACHE_CHECK_UPDATES // shape.volume)

    window = []
    for sweep in range(cfg.burn_in):
        window.append(sampler.sweep(rng))
        if cfg.auto_tune and len(window) == TUNE_INTERVAL:
            rate = float(np.mean(window))
            sampler.width *= min(2.0, max(0.5, rate / TARGET_ACCEPTANCE))
            window = []
    logger.debug("Chain %d: burn-in done, width %.4g", chain, sampler.width)

    records: Dict[str, list] = {}
    rates = []
    for sweep in range(1, cfg.sweeps + 1):
        rates.append(sampler.sweep(rng))
        if sweep % check_every == 0:
            drift = cache_drift(state)
            if drift > CACHE_TOLERANCE:
                raise InvariantError(f"Block-sum caches drifted by {drift:.3g} after {sampler.updates} updates")
            state.sums = rebuild_caches(state)
        if sweep % cfg.stride == 0:
            for name, values in measure(state, permutations, cfg.translation_average, targets).items():
                records.setdefault(name, []).append(values)
    acceptance = float(np.mean(rates))
    logger.info("Chain %d: %d sweeps, acceptance %.3f, width %.4g",
                chain, cfg.sweeps, acceptance, sampler.width)
    return ChainSeries(
        series={name: np.array(values) for name, values in records.items()},
        acceptance=acceptance, width=sampler.width, sweeps=cfg.sweeps,
    )


def _column_estimates(chains: Sequence[ChainSeries], name: str) -> List[BatchEstimate]:
    columns = chains[0].series[name].shape[1]
    return [merge_estimates(batch_means(c.series[name][:, i]) for c in chains) for i in range(columns)]


def run_chains(model: ModelParams, shape: LatticeShape, sites: Sequence[Site], cfg: ChainConfig,
               seed: int, threads: int = 1) -> ChainSummary:
    """
    Independent chains on disjoint streams, merged in chain order.

    Raises:
        SamplerError: If the volume exceeds MAX_CHAIN_VOLUME
    """
    cfg.validate()
    if shape.volume > MAX_CHAIN_VOLUME:
        raise SamplerError(f"Metropolis sampling is limited to {MAX_CHAIN_VOLUME} sites, got {shape.volume}")
    factory = StreamFactory(cfg.seed if cfg.seed is not None else seed)
    sites = list(sites)
    logger.info("Metropolis: d=%d L=%d N=%d n=%d g=%g nu=%g %s, %d chains",
                shape.d, shape.L, shape.N, model.n, model.g, model.nu_total, shape.bc.value, cfg.chains)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        chains = list(pool.map(lambda c: run_chain(c, model, shape, sites, cfg, factory), range(cfg.chains)))

    two_point = _column_estimates(chains, 'G')
    chi = _column_estimates(chains, 'chi')[0]
    moments = _column_estimates(chains, 'moments')
    flagged = any(e.flagged for e in two_point + [chi] + moments)
    if flagged:
        logger.warning("Some Metropolis error bars rest on fewer than 16 decorrelated batches")
    origin = shape.origin()
    return ChainSummary(
        x_coords=[site.to_coords() for site in sites],
        jxy=[coalescence(origin, site) for site in sites],
        G=[e.mean for e in two_point],
        G_err=[e.err for e in two_point],
        chi=chi.mean, chi_err=chi.err,
        moments=[e.mean for e in moments],
        moments_err=[e.err for e in moments],
        acceptance=float(np.mean([c.acceptance for c in chains])),
        sweeps=cfg.sweeps,
        proposal_width=float(np.mean([c.width for c in chains])),
        flagged=flagged,
        G_cross=[e.mean for e in _column_estimates(chains, 'G_cross')] if model.n >= 2 else None,
        G_cross_err=[e.err for e in _column_estimates(chains, 'G_cross')] if model.n >= 2 else None,
    )


def pair_quadrature(model: ModelParams, bc=BoundaryCondition.PERIODIC, half_width: float = 6.0,
                    points: int = 601) -> Dict[str, float]:
    """
    Moments of the two-site model (d = 1, L = 2, N = 1, n = 1) by direct
    quadrature of e^{-H} on a square grid.
    """
    shape = LatticeShape(1, 2, 1, bc)
    laplacian = spectral_laplacian(bc, shape)
    t = np.linspace(-half_width, half_width, points)
    a, b = np.meshgrid(t, t, indexing='ij')
    nu = model.nu_total
    energy = (0.5 * (laplacian[0, 0] * a * a + 2.0 * laplacian[0, 1] * a * b + laplacian[1, 1] * b * b)
              + local_potential(a * a, model.g, nu) + local_potential(b * b, model.g, nu))
    density = np.exp(-(energy - energy.min()))

    def expect(values: np.ndarray) -> float:
        return float(integrate.trapezoid(integrate.trapezoid(values * density, t, axis=1), t))

    norm = expect(np.ones_like(a))
    return {
        'phi0_sq': expect(a * a) / norm,
        'phi0_phi1': expect(a * b) / norm,
        'phi0_4': expect(a ** 4) / norm,
    }
