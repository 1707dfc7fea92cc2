"""
Physical parameters of the hierarchical |φ|⁴ model and of the scale layer.
"""
from dataclasses import dataclass, asdict
from enum import Enum

from src.models.errors import DomainError, ScaleError


class Regime(str, Enum):
    """Window regime of a scan point: ν = ν* + s·w_N or ν = ν* + s·v_N."""
    NON_GAUSSIAN = 'nongaussian'
    GAUSSIAN = 'gaussian'

    @classmethod
    def parse(cls, value) -> 'Regime':
        if isinstance(value, cls):
            return value
        normalized = str(value).strip().lower().replace('-', '').replace('_', '')
        for regime in cls:
            if regime.value == normalized:
                return regime
        raise DomainError(f"Unknown regime '{value}'")


@dataclass(frozen=True)
class ModelParams:
    """
    Knobs of the Hamiltonian and of the covariance.

    The two-point function computed with (nu, a) is that of the model with
    quadratic coefficient nu + a; `a` only moves weight between the bulk
    potential and the Gaussian covariance.
    """
    n: int = 1
    g: float = 0.0
    nu: float = 0.0
    a: float = 0.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"Number of components n must be >= 1, got {self.n}")
        if self.g < 0:
            raise DomainError(f"Coupling g must be >= 0, got {self.g}")

    @property
    def nu_total(self) -> float:
        return self.nu + self.a

    def with_split(self, a: float) -> 'ModelParams':
        """Same physical model, covariance mass moved to `a`."""
        return ModelParams(n=self.n, g=self.g, nu=self.nu_total - a, a=a)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MassParam:
    """Mass-squared a of the covariance (may be negative)."""
    a: float

    def lower_bound(self, L: int, N: int) -> float:
        """Masses must exceed -L^{-2(N-1)} so every γ_j denominator is positive."""
        if N < 1:
            return float('-inf')
        return -float(L) ** (-2 * (N - 1))

    def is_admissible(self, L: int, N: int) -> bool:
        return self.a > self.lower_bound(L, N)


@dataclass(frozen=True)
class ScaleParams:
    """
    Inputs of the closed-form scale layer.

    g_inf, A_d, c_F and nu_c are not computed from first principles here:
    they come from a tuned exact-RG run or from leading-order values.
    """
    d: int
    L: int
    N: int
    n: int = 1
    g_inf: float = 0.05
    A_d: float = 1.0
    c_F: float = 0.0
    nu_c: float = 0.0

    def __post_init__(self):
        if self.d < 4:
            raise ScaleError(f"Scale predictions need d >= 4, got d={self.d}")
        if self.L < 2:
            raise ScaleError(f"L must be >= 2, got {self.L}")
        if self.N < 1:
            raise ScaleError(f"N must be >= 1, got {self.N}")
        if self.n < 1:
            raise ScaleError(f"n must be >= 1, got {self.n}")
        if not self.g_inf > 0:
            raise ScaleError(f"g_inf must be > 0, got {self.g_inf}")
        if not self.A_d > 0:
            raise ScaleError(f"A_d must be > 0, got {self.A_d}")

    def with_N(self, N: int) -> 'ScaleParams':
        return ScaleParams(self.d, self.L, N, self.n, self.g_inf, self.A_d, self.c_F, self.nu_c)

    def to_dict(self) -> dict:
        return asdict(self)
