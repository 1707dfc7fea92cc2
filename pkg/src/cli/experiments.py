"""
Experiment builders behind the CLI commands.

Each builder takes a resolved RunConfig and returns rows (plus summary
metadata) ready for a ResultTable; nothing here touches argparse or files.
"""
import logging
import math
from dataclasses import replace
from typing import Dict, List, Optional, Tuple

from src.kernels import scales
from src.kernels.covariance import (
    c_hat,
    green,
    green_infty,
    susceptibility,
    zero_mode_mass,
)
from src.kernels.flow import check_two_sided_bound, flow_rows, gtilde_flow, max_stable_coupling
from src.kernels.profiles import profile_asymptotic, profile_rows
from src.models.errors import ConfigError, CovarianceError
from src.models.lattice import (
    BoundaryCondition,
    LatticeShape,
    Site,
    class_representatives,
    coalescence,
    euclid_norm,
    from_coords,
)
from src.models.parameters import ModelParams, Regime, ScaleParams
from src.models.run_config import RunConfig
from src.samplers import rg_exact
from src.samplers.mcmc import run_chains

logger = logging.getLogger(__name__)

GREEN_COLUMNS = ['x', 'norm', 'jxy', 'green', 'decay_term', 'constant_term', 'free_minus_periodic']
PROFILE_COLUMNS = ['n', 's', 'f_n', 'sigma_2', 'asymptotic', 'tolerance_used']
FLOW_COLUMNS = ['j', 'gtilde', 'beta', 'vartheta', 'u_ox_partial']
RG_EXACT_COLUMNS = ['x', 'jxy', 'G', 'G_err', 'chi', 'chi_err',
                    'moment_2', 'moment_2_err', 'moment_4', 'moment_4_err', 'moment_6', 'moment_6_err',
                    'factorisation_deviation', 'factorisation_noise', 'flagged']
MCMC_COLUMNS = ['x', 'jxy', 'G', 'G_err', 'G_cross', 'G_cross_err']
PLATEAU_COLUMNS = ['source', 's', 'nu', 'a', 'x', 'norm', 'jxy', 'G', 'G_err',
                   'decay_term', 'plateau_term', 'predicted', 'ratio', 'rescaled',
                   'beyond_crossover', 'flagged']


def shape_of(cfg: RunConfig) -> LatticeShape:
    return LatticeShape(cfg.d, cfg.L, cfg.N, BoundaryCondition.parse(cfg.bc))


def resolve_sites(cfg: RunConfig, shape: LatticeShape) -> List[Site]:
    """Configured sites; one per coalescence class when none are configured."""
    if cfg.x is None:
        return list(class_representatives(shape))
    return [from_coords(coords, shape) for coords in cfg.x]


def axis_sites(shape: LatticeShape) -> List[Site]:
    """(r, 0, ..., 0) for r = 0 .. L^N - 1."""
    return [from_coords((r,) + (0,) * (shape.d - 1), shape) for r in range(shape.side)]


def resolve_scale_params(cfg: RunConfig) -> Tuple[ScaleParams, List[str]]:
    """
    Leading-order ScaleParams with the configured g_inf, A_d, ν_c and c_F
    substituted.

    Raises:
        ConfigError: If g = 0 and no g_inf is given
    """
    overrides = {key: value for key, value in
                 (('g_inf', cfg.g_inf), ('A_d', cfg.A_d), ('nu_c', cfg.nu_c)) if value is not None}
    if cfg.g > 0:
        params, caveats = scales.leading_order_params(cfg.d, cfg.L, cfg.N, cfg.n, cfg.g)
    elif 'g_inf' in overrides:
        params, caveats = ScaleParams(cfg.d, cfg.L, cfg.N, cfg.n, g_inf=overrides['g_inf']), []
    else:
        raise ConfigError("Scale predictions need g > 0 or an explicit g_inf")
    params = replace(params, c_F=cfg.c_F, **overrides)
    if overrides:
        caveats = caveats + [f"user-supplied {', '.join(sorted(overrides))}"]
    return params, caveats


def green_rows(cfg: RunConfig) -> Tuple[List[dict], Dict]:
    """ℂ*_{a,N}(x) with its decay and constant parts; axis sites unless x is given."""
    shape = shape_of(cfg)
    sites = axis_sites(shape) if cfg.x is None else resolve_sites(cfg, shape)
    a = cfg.mass
    constant = c_hat(shape.bc, a, shape)
    rows = []
    for site in sites:
        value = green(shape.bc, a, shape, site)
        try:
            difference = (green(BoundaryCondition.FREE, a, shape, site)
                          - green(BoundaryCondition.PERIODIC, a, shape, site))
        except CovarianceError:
            difference = math.nan
        decay = green_infty(site, cfg.tol).value if shape.d > 2 else math.nan
        rows.append({
            'x': list(site.to_coords()),
            'norm': euclid_norm(site),
            'jxy': coalescence(shape.origin(), site),
            'green': value,
            'decay_term': decay,
            'constant_term': constant,
            'free_minus_periodic': difference,
        })
    summary = {
        'sum_over_lattice': susceptibility(shape.bc, a, shape),
        'sum_expected': 1.0 / zero_mode_mass(shape.bc, a, shape),
    }
    return rows, summary


def profile_table_rows(cfg: RunConfig) -> List[dict]:
    rows = profile_rows(cfg.n_values, cfg.s, cfg.quad.tol, cfg.quad)
    for row in rows:
        row['asymptotic'] = profile_asymptotic(row['n'], row['s']) if row['s'] > 0 else math.nan
    return rows


def scales_document(cfg: RunConfig) -> Dict:
    params, caveats = resolve_scale_params(cfg)
    return scales.scales_record(params, caveats)


def flow_table_rows(cfg: RunConfig) -> Tuple[List[dict], Dict]:
    B = scales.const_B(cfg.n, cfg.d, cfg.L)
    jox = 0
    if cfg.x:
        shape = shape_of(cfg)
        jox = coalescence(shape.origin(), from_coords(cfg.x[0], shape))
    rows = flow_rows(cfg.g, cfg.a_tilde, cfg.d, cfg.L, B, cfg.j_max, a=cfg.mass, jox=jox)
    violations = check_two_sided_bound(gtilde_flow(cfg.g, cfg.a_tilde, cfg.d, cfg.L, B, cfg.j_max))
    if violations:
        logger.warning("Two-sided flow bound fails at %d scales", len(violations))
    summary = {
        'B': B,
        'bound_violations': violations,
        'max_stable_coupling': max_stable_coupling(cfg.a_tilde, cfg.d, cfg.L, B, cfg.j_max),
    }
    return rows, summary


def _split_for(shape: LatticeShape, cfg: RunConfig, a_ref: float) -> float:
    """Covariance mass for a run at fixed total ν, moved off a singular zero mode."""
    if zero_mode_mass(shape.bc, cfg.mass, shape) != 0.0:
        return cfg.mass
    if a_ref == 0.0:
        params, _ = resolve_scale_params(cfg)
        a_ref = rg_exact.reference_split(shape, params)
    return a_ref


def exact_model(cfg: RunConfig, shape: LatticeShape) -> Tuple[ModelParams, Optional[Dict]]:
    """
    The model of an rg-exact run: bulk ν and mass as configured, or ν tuned
    so that the total coefficient sits at ν*.
    """
    if cfg.nu is not None:
        return ModelParams(n=cfg.n, g=cfg.g, nu=cfg.nu, a=cfg.mass), None
    tuned = rg_exact.tune_nu(
        ModelParams(n=cfg.n, g=cfg.g), shape, cfg.numerics, cfg.seed, cfg.threads,
        mode=cfg.tune_mode, bracket=tuple(cfg.nu_bracket) if cfg.nu_bracket else None,
    )
    a = _split_for(shape, cfg, tuned.a_ref)
    return ModelParams(n=cfg.n, g=cfg.g, nu=tuned.nu_star - a, a=a), tuned.to_dict()


def rg_exact_rows(cfg: RunConfig, observer=None) -> Tuple[List[dict], Dict]:
    shape = shape_of(cfg)
    sites = resolve_sites(cfg, shape)
    model, tuning = exact_model(cfg, shape)
    summary = {'model': model.to_dict(), 'tuning': tuning}
    if not sites:
        return [], summary
    run = rg_exact.run_exact(model, shape, sites, cfg.numerics, cfg.seed, cfg.threads, observer)
    rows = []
    for estimate in run.estimates:
        row = {
            'x': list(estimate.x_coords),
            'jxy': estimate.jxy,
            'G': estimate.G,
            'G_err': estimate.G_err,
            'chi': estimate.chi,
            'chi_err': estimate.chi_err,
            'factorisation_deviation': estimate.factorisation_deviation,
            'factorisation_noise': estimate.factorisation_noise,
            'flagged': estimate.flagged,
        }
        for p, (value, error) in enumerate(zip(estimate.moments, estimate.moments_err), start=1):
            row[f'moment_{2 * p}'] = value
            row[f'moment_{2 * p}_err'] = error
        rows.append(row)
    summary['half_widths'] = [float(w) for w in run.half_widths]
    summary['min_ess'] = min((d.ess for replica in run.diagnostics for d in replica), default=math.nan)
    return rows, summary


def _chain_rows(summary) -> List[dict]:
    rows = []
    for i, coords in enumerate(summary.x_coords):
        rows.append({
            'x': list(coords),
            'jxy': summary.jxy[i],
            'G': summary.G[i],
            'G_err': summary.G_err[i],
            'G_cross': summary.G_cross[i] if summary.G_cross is not None else math.nan,
            'G_cross_err': summary.G_cross_err[i] if summary.G_cross_err is not None else math.nan,
        })
    return rows


def mcmc_rows(cfg: RunConfig) -> Tuple[List[dict], Dict]:
    shape = shape_of(cfg)
    sites = resolve_sites(cfg, shape)
    model = ModelParams(n=cfg.n, g=cfg.g, nu=0.0 if cfg.nu is None else cfg.nu, a=cfg.mass)
    if not sites:
        return [], {'model': model.to_dict()}
    summary = run_chains(model, shape, sites, cfg.chain, cfg.seed, cfg.threads)
    return _chain_rows(summary), {'model': model.to_dict(), 'chains': summary.summary_dict()}


def _prediction(site: Site, s: float, regime: Regime, params: ScaleParams, bc, tol: float):
    if regime is Regime.GAUSSIAN:
        return scales.predict_gaussian(site, s, params, bc)
    return scales.predict_plateau(site, s, params, green_infty(site, tol).value, bc)


def _plateau_row(source: str, s: float, point: ModelParams, site: Site, G: float, G_err: float,
                 flagged: bool, regime: Regime, params: ScaleParams, bc, tol: float) -> dict:
    prediction = _prediction(site, s, regime, params, bc, tol)
    norm = euclid_norm(site)
    crossover = scales.crossover_radius(s, params) if regime is Regime.NON_GAUSSIAN else math.inf
    return {
        'source': source,
        's': float(s),
        'nu': point.nu_total,
        'a': point.a,
        'x': list(site.to_coords()),
        'norm': norm,
        'jxy': coalescence(site.shape.origin(), site),
        'G': G,
        'G_err': G_err,
        'decay_term': prediction.decay_term,
        'plateau_term': prediction.plateau_term,
        'predicted': prediction.total,
        'ratio': G / prediction.total,
        'rescaled': G * max(norm, 1.0) ** (site.shape.d - 2),
        'beyond_crossover': norm > crossover,
        'flagged': flagged,
    }


def plateau_rows(cfg: RunConfig) -> Tuple[List[dict], Dict]:
    """
    Scan s at fixed ν*, then join every measurement with its prediction.

    Rows are s-major, then site order; Metropolis rows (when requested)
    follow the exact-RG rows of the same s.
    """
    shape = shape_of(cfg)
    sites = resolve_sites(cfg, shape)
    params, caveats = resolve_scale_params(cfg)
    regime = Regime.parse(cfg.regime)
    summary: Dict = {'scales': scales.scales_record(params, caveats), 'regime': regime.value}
    if not sites:
        return [], summary

    model = ModelParams(n=cfg.n, g=cfg.g)
    if cfg.nu is None:
        tuned = rg_exact.tune_nu(model, shape, cfg.numerics, cfg.seed, cfg.threads, mode=cfg.tune_mode,
                                 bracket=tuple(cfg.nu_bracket) if cfg.nu_bracket else None)
        nu_star = tuned.nu_star
        summary['tuning'] = tuned.to_dict()
    else:
        nu_star = cfg.nu
    summary['nu_star'] = nu_star

    rows = []
    for s in cfg.s:
        point = rg_exact.scan_point(nu_star, s, model, shape, regime, params)
        run = rg_exact.run_exact(point, shape, sites, cfg.numerics, cfg.seed, cfg.threads)
        for site, estimate in zip(sites, run.estimates):
            rows.append(_plateau_row('rg-exact', s, point, site, estimate.G, estimate.G_err,
                                     estimate.flagged, regime, params, shape.bc, cfg.tol))
        if cfg.include_mcmc:
            chains = run_chains(point, shape, sites, cfg.chain, cfg.seed, cfg.threads)
            for i, site in enumerate(sites):
                rows.append(_plateau_row('mcmc', s, point, site, chains.G[i], chains.G_err[i],
                                         chains.flagged, regime, params, shape.bc, cfg.tol))
        logger.info("Plateau scan: s=%g joined", s)
    return rows, summary
