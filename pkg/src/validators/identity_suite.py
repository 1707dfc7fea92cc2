"""
Identity suite behind the `verify` command.

Each check returns a list of error strings (empty when the identity
holds) naming the case, the measured error and the tolerance.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy import special

from src.kernels.covariance import (
    KernelEval,
    build_dense,
    const_q,
    level_sum,
    spectral_laplacian,
    susceptibility,
)
from src.kernels.flow import check_two_sided_bound, gtilde_flow
from src.kernels.profiles import gaussian_moment, profile_f, sigma_moment
from src.kernels.scales import const_B, gaussian_prediction_sum, leading_order_params
from src.models.lattice import BoundaryCondition, LatticeShape

logger = logging.getLogger(__name__)

RESOLVENT_SHAPES = ((4, 2, 2), (5, 2, 2))
RESOLVENT_TOLERANCE = 1e-10
SUM_TOLERANCE = 1e-12
PROFILE_TOLERANCE = 1e-8
MOMENT_TOLERANCE = 1e-10


@dataclass
class CheckResult:
    """Outcome of one identity check."""
    name: str
    errors: List[str] = field(default_factory=list)
    cases: int = 0

    @property
    def passed(self) -> bool:
        return not self.errors

    def to_dict(self) -> dict:
        return {'check': self.name, 'passed': self.passed, 'cases': self.cases, 'errors': list(self.errors)}


def check_resolvent(q_value: Optional[float] = None) -> CheckResult:
    """
    (-Δ* + a)(C_{a,≤N} + Ĉ*) = I on dense matrices.

    Args:
        q_value: replaces the constant q in -Δ* = q(I - J*); only used to
            make the suite fail on purpose
    """
    result = CheckResult('resolvent')
    for d, L, N in RESOLVENT_SHAPES:
        for bc in BoundaryCondition:
            shape = LatticeShape(d, L, N, bc)
            q = const_q(d, L) if q_value is None else q_value
            for a in (0.1, float(L) ** (-2 * N)):
                dense = build_dense(bc, a, shape)
                identity = np.eye(shape.volume)
                laplacian = q * (identity - dense.coupling)
                error = float(np.max(np.abs((laplacian + a * identity) @ dense.green - identity)))
                result.cases += 1
                if not error < RESOLVENT_TOLERANCE:
                    result.errors.append(
                        f"resolvent d={d} L={L} N={N} {bc.value} a={a:g}: "
                        f"max error {error:.3g} >= {RESOLVENT_TOLERANCE:g} (q={q!r})"
                    )
    return result


def check_spectral_laplacian() -> CheckResult:
    """q(I - J*) equals Σ_j L^{-2(j-1)} P_j (+ qL^{-2N} Q_N for free)."""
    result = CheckResult('spectral_laplacian')
    for d, L, N in RESOLVENT_SHAPES:
        for bc in BoundaryCondition:
            shape = LatticeShape(d, L, N, bc)
            dense = build_dense(bc, 0.1, shape)
            error = float(np.max(np.abs(dense.laplacian - spectral_laplacian(bc, shape))))
            result.cases += 1
            if not error < RESOLVENT_TOLERANCE:
                result.errors.append(f"laplacian d={d} L={L} N={N} {bc.value}: max error {error:.3g}")
    return result


def check_sum_rules(masses=(0.5, 0.1, 1e-3, 2.0 ** -6)) -> CheckResult:
    """Σ_x C_{a,j}(x) = 0 per level and χ^P(a) = 1/a."""
    result = CheckResult('sum_rules')
    for d, L, N in ((4, 2, 3), (4, 3, 2), (5, 2, 3), (6, 2, 2)):
        shape = LatticeShape(d, L, N, BoundaryCondition.PERIODIC)
        for a in masses:
            for j in range(1, N + 1):
                total = level_sum(j, a, shape)
                scale = KernelEval(shape, a).gamma(j)
                result.cases += 1
                if not abs(total) < SUM_TOLERANCE * max(1.0, scale):
                    result.errors.append(f"level sum d={d} L={L} N={N} a={a:g} j={j}: {total:.3g} != 0")
            chi = susceptibility(BoundaryCondition.PERIODIC, a, shape)
            relative = abs(chi * a - 1.0)
            result.cases += 1
            if not relative < SUM_TOLERANCE:
                result.errors.append(f"chi^P d={d} L={L} N={N} a={a:g}: {chi!r} vs {1 / a!r} (rel {relative:.3g})")
    return result


def check_profiles() -> CheckResult:
    """f_1(0) closed form, M_{n,2}(s) = n/s, large-s behaviour and monotonicity."""
    result = CheckResult('profiles')
    closed = 2.0 * special.gamma(0.75) / special.gamma(0.25)
    value = profile_f(1, 0.0)
    result.cases += 1
    if not abs(value - closed) < PROFILE_TOLERANCE:
        result.errors.append(f"f_1(0) = {value!r}, closed form {closed!r}")

    for n in (1, 2, 3):
        for s in (0.5, 1.0, 4.0):
            moment = gaussian_moment(n, 1, s)
            result.cases += 1
            if not abs(moment - n / s) < MOMENT_TOLERANCE:
                result.errors.append(f"M_({n},2)({s}) = {moment!r} != {n / s!r}")
        large = 1000.0 * profile_f(n, 1000.0)
        result.cases += 1
        if not abs(large - 1.0) < 0.02:
            result.errors.append(f"s f_{n}(s) at s=1000 is {large!r}")
        sigma = sigma_moment(n, 2, 0.0)
        result.cases += 1
        if not abs(sigma - n * profile_f(n, 0.0)) < PROFILE_TOLERANCE:
            result.errors.append(f"Σ_({n},2)(0) = {sigma!r} != n f_n(0)")

    s_grid = (-2.0, -1.0, 0.0, 1.0, 2.0, 4.0)
    table = np.array([[profile_f(n, s) for s in s_grid] for n in (1, 2, 3)])
    result.cases += 1
    if not (np.all(np.diff(table, axis=1) < 0) and np.all(np.diff(table, axis=0) < 0)):
        result.errors.append("f_n(s) is not strictly decreasing in s and n on the test grid")
    return result


def check_flow(g0: float = 0.05, j_max: int = 1000) -> CheckResult:
    """Two-sided bound g̃_{j+1} <= g̃_j <= 2g̃_{j+1} at every scale."""
    result = CheckResult('flow')
    L = 2
    for d in (4, 5, 6):
        B = const_B(1, d, L)
        for a_tilde in (0.0, float(L) ** -8):
            violations = check_two_sided_bound(gtilde_flow(g0, a_tilde, d, L, B, j_max))
            result.cases += 1
            if violations:
                result.errors.append(f"flow d={d} ã={a_tilde:g}: bound fails at j={violations[:5]}")
    return result


def check_gaussian_sum() -> CheckResult:
    """Σ_x of the Gaussian prediction equals s^{-1} L^{2N}."""
    result = CheckResult('gaussian_sum')
    for N in (2, 4, 6):
        params, _ = leading_order_params(4, 2, N, 1, 0.05)
        for s in (0.5, 1.0, 3.0):
            total = gaussian_prediction_sum(s, params)
            expected = 2.0 ** (2 * N) / s
            result.cases += 1
            if not abs(total / expected - 1.0) < RESOLVENT_TOLERANCE:
                result.errors.append(f"Gaussian sum N={N} s={s}: {total!r} vs {expected!r}")
    return result


def run_identity_suite(q_value: Optional[float] = None) -> List[CheckResult]:
    """Run every check in a fixed order."""
    checks: List[Callable[[], CheckResult]] = [
        lambda: check_resolvent(q_value),
        check_spectral_laplacian,
        check_sum_rules,
        check_profiles,
        check_flow,
        check_gaussian_sum,
    ]
    results = []
    for check in checks:
        outcome = check()
        level = logging.INFO if outcome.passed else logging.ERROR
        logger.log(level, "%s: %d cases, %d failures", outcome.name, outcome.cases, len(outcome.errors))
        results.append(outcome)
    return results
