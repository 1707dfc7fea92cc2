"""
Result records produced by the kernels and samplers.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from src.models.parameters import Regime


@dataclass(frozen=True)
class GreenInftyResult:
    """Truncated massless infinite-volume Green function."""
    value: float
    tail_bound: float
    levels: int  # number of scales summed


@dataclass
class Prediction:
    """
    Leading-order two-point prediction at one (x, s).

    total is always decay_term + plateau_term.
    """
    x_coords: Tuple[int, ...]
    jxy: int
    s: float
    regime: Regime
    bc: str
    decay_term: float
    plateau_term: float
    metadata: Dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return self.decay_term + self.plateau_term

    def to_dict(self) -> dict:
        return {
            'x_coords': list(self.x_coords),
            'jxy': self.jxy,
            's': self.s,
            'regime': self.regime.value,
            'bc': self.bc,
            'decay_term': self.decay_term,
            'plateau_term': self.plateau_term,
            'total': self.total,
            'metadata': self.metadata
        }


@dataclass(frozen=True)
class FlowState:
    """One scale of the perturbative coupling flow."""
    j: int
    gtilde: float
    beta: float
    vartheta: float
    a_tilde: float
    j_a: float  # math.inf when a_tilde = 0
    u_ox: float = 0.0  # Σ_{i<=j} C_{a,i}(x)


@dataclass
class ZeroModeResult:
    """Final zero-mode integral of one effective partition function."""
    G: float
    chi: float
    moments: List[float]  # ⟨|Φ_N|^{2p}⟩, p = 1, 2, 3
    tail_mass: float


@dataclass
class TwoPointEstimate:
    """Replica-averaged exact RG result at one x."""
    x_coords: Tuple[int, ...]
    jxy: int
    G: float
    G_err: float
    chi: float
    chi_err: float
    moments: List[float]
    moments_err: List[float]
    factorisation_deviation: float = 0.0  # max |Z_o/Z_∅ - φ1| below coalescence
    factorisation_noise: float = 0.0
    flagged: bool = False


@dataclass
class ChainSummary:
    """Merged Metropolis measurements."""
    x_coords: List[Tuple[int, ...]]
    jxy: List[int]
    G: List[float]
    G_err: List[float]
    chi: float
    chi_err: float
    moments: List[float]
    moments_err: List[float]
    acceptance: float
    sweeps: int
    proposal_width: float
    flagged: bool = False
    G_cross: Optional[List[float]] = None  # ⟨φ_o^(1) φ_x^(2)⟩, n >= 2 only
    G_cross_err: Optional[List[float]] = None

    def summary_dict(self) -> dict:
        return {
            'chi': self.chi,
            'chi_err': self.chi_err,
            'moments': list(self.moments),
            'moments_err': list(self.moments_err),
            'acceptance': self.acceptance,
            'sweeps': self.sweeps,
            'proposal_width': self.proposal_width,
            'flagged': self.flagged
        }


@dataclass
class StepDiagnostics:
    """Per-scale check that Z_o stays φ1·Z_∅."""
    scale: int
    half_width: float
    log_norm: float
    deviation: float  # max_φ |Z_o - φ1 Z_∅|
    noise: float  # max_φ estimator standard deviation of Z_o
    ess: float  # smallest effective sample size over the grid


@dataclass
class TuneResult:
    """Outcome of the ν bisection."""
    nu_star: float
    mode: str
    target: float
    tolerance: float
    a_ref: float
    bracket: Tuple[float, float]
    evaluations: List[Tuple[float, float]] = field(default_factory=list)
    monotone: bool = True
    caveats: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            'nu_star': self.nu_star,
            'mode': self.mode,
            'target': self.target,
            'tolerance': self.tolerance,
            'a_ref': self.a_ref,
            'bracket': list(self.bracket),
            'evaluations': [list(e) for e in self.evaluations],
            'monotone': self.monotone,
            'caveats': list(self.caveats)
        }
