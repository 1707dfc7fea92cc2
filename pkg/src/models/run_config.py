"""
Configuration models for runs.

Each config is a dataclass with to_dict/from_dict and JSON persistence;
RunConfig additionally loads YAML files.
"""
from dataclasses import dataclass, field
from typing import List, Optional
import json
from pathlib import Path

import yaml

from src.models.errors import ConfigError


@dataclass
class QuadConfig:
    """
    Quadrature settings for the profile integrals I_k(s).
    """
    scheme: str = "adaptive"
    x_max: Optional[float] = None  # None: max(6, 2√|s|) + 2
    nodes: int = 200  # per panel, fixed-gauss only
    tol: float = 1e-12

    AVAILABLE_SCHEMES = ["adaptive", "fixed-gauss"]

    def validate(self):
        if self.scheme not in self.AVAILABLE_SCHEMES:
            raise ConfigError(f"Unknown quadrature scheme '{self.scheme}' (expected {self.AVAILABLE_SCHEMES})")
        if self.nodes < 2:
            raise ConfigError(f"Quadrature needs at least 2 nodes, got {self.nodes}")
        if not self.tol > 0:
            raise ConfigError(f"Quadrature tolerance must be > 0, got {self.tol}")
        if self.x_max is not None and not self.x_max > 0:
            raise ConfigError(f"x_max must be > 0, got {self.x_max}")

    def to_dict(self) -> dict:
        """Convert to dictionary for JSON serialization."""
        return {
            'scheme': self.scheme,
            'x_max': self.x_max,
            'nodes': self.nodes,
            'tol': self.tol
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'QuadConfig':
        """Create from dictionary."""
        return cls(
            scheme=data.get('scheme', 'adaptive'),
            x_max=data.get('x_max'),
            nodes=int(data.get('nodes', 200)),
            tol=float(data.get('tol', 1e-12))
        )


@dataclass
class NumericsConfig:
    """
    Settings of the exact RG recursion.

    The fluctuation expectation is either Monte Carlo with common random
    numbers across grid points or a Gauss-Hermite tensor product (small L^d).
    """
    grid_points: int = 129
    grid_half_width: Optional[float] = None  # None: adapted per scale
    grid_sigmas: float = 8.0
    interpolation_order: int = 3
    sampler: str = "montecarlo"
    samples: int = 16384
    quad_nodes: int = 4
    chunk_size: int = 512
    renorm_policy: str = "origin"
    replicas: int = 8
    antithetic: bool = True
    symmetrize: bool = True

    AVAILABLE_SAMPLERS = ["montecarlo", "tensorquad"]
    AVAILABLE_RENORM_POLICIES = ["origin", "max"]
    MIN_SAMPLES = 10_000

    def validate(self):
        if self.sampler not in self.AVAILABLE_SAMPLERS:
            raise ConfigError(f"Unknown sampler '{self.sampler}' (expected {self.AVAILABLE_SAMPLERS})")
        if self.renorm_policy not in self.AVAILABLE_RENORM_POLICIES:
            raise ConfigError(
                f"Unknown renormalisation policy '{self.renorm_policy}' "
                f"(expected {self.AVAILABLE_RENORM_POLICIES})"
            )
        if self.interpolation_order not in (1, 3):
            raise ConfigError(f"Interpolation order must be 1 or 3, got {self.interpolation_order}")
        if self.grid_points < 8:
            raise ConfigError(f"Need at least 8 grid points, got {self.grid_points}")
        if self.grid_sigmas < 6:
            raise ConfigError(f"Grid half-width must cover >= 6 standard deviations, got {self.grid_sigmas}")
        if self.sampler == "montecarlo" and self.samples < self.MIN_SAMPLES:
            raise ConfigError(f"Monte Carlo needs >= {self.MIN_SAMPLES} samples, got {self.samples}")
        if self.sampler == "tensorquad" and self.quad_nodes < 2:
            raise ConfigError(f"Tensor quadrature needs >= 2 nodes, got {self.quad_nodes}")
        if self.replicas < 1:
            raise ConfigError(f"Need at least one replica, got {self.replicas}")
        if self.chunk_size < 1:
            raise ConfigError(f"chunk_size must be >= 1, got {self.chunk_size}")

    def to_dict(self) -> dict:
        """Convert to dictionary for JSON serialization."""
        return {
            'grid_points': self.grid_points,
            'grid_half_width': self.grid_half_width,
            'grid_sigmas': self.grid_sigmas,
            'interpolation_order': self.interpolation_order,
            'sampler': self.sampler,
            'samples': self.samples,
            'quad_nodes': self.quad_nodes,
            'chunk_size': self.chunk_size,
            'renorm_policy': self.renorm_policy,
            'replicas': self.replicas,
            'antithetic': self.antithetic,
            'symmetrize': self.symmetrize
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'NumericsConfig':
        """Create from dictionary."""
        return cls(
            grid_points=int(data.get('grid_points', 129)),
            grid_half_width=data.get('grid_half_width'),
            grid_sigmas=float(data.get('grid_sigmas', 8.0)),
            interpolation_order=int(data.get('interpolation_order', 3)),
            sampler=data.get('sampler', 'montecarlo'),
            samples=int(data.get('samples', 16384)),
            quad_nodes=int(data.get('quad_nodes', 4)),
            chunk_size=int(data.get('chunk_size', 512)),
            renorm_policy=data.get('renorm_policy', 'origin'),
            replicas=int(data.get('replicas', 8)),
            antithetic=bool(data.get('antithetic', True)),
            symmetrize=bool(data.get('symmetrize', True))
        )


@dataclass
class ChainConfig:
    """
    Settings of a Metropolis chain.
    """
    sweeps: int = 4000
    burn_in: int = 1000
    proposal_width: float = 1.0
    stride: int = 1
    seed: Optional[int] = None  # None: run seed
    translation_average: bool = True
    auto_tune: bool = True
    chains: int = 1

    def validate(self):
        if not self.proposal_width > 0:
            raise ConfigError(f"Proposal width must be > 0, got {self.proposal_width}")
        if self.sweeps < 1 or self.burn_in < 0 or self.stride < 1 or self.chains < 1:
            raise ConfigError(
                f"Invalid chain lengths: sweeps={self.sweeps}, burn_in={self.burn_in}, "
                f"stride={self.stride}, chains={self.chains}"
            )

    def to_dict(self) -> dict:
        """Convert to dictionary for JSON serialization."""
        return {
            'sweeps': self.sweeps,
            'burn_in': self.burn_in,
            'proposal_width': self.proposal_width,
            'stride': self.stride,
            'seed': self.seed,
            'translation_average': self.translation_average,
            'auto_tune': self.auto_tune,
            'chains': self.chains
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'ChainConfig':
        """Create from dictionary."""
        return cls(
            sweeps=int(data.get('sweeps', 4000)),
            burn_in=int(data.get('burn_in', 1000)),
            proposal_width=float(data.get('proposal_width', 1.0)),
            stride=int(data.get('stride', 1)),
            seed=data.get('seed'),
            translation_average=bool(data.get('translation_average', True)),
            auto_tune=bool(data.get('auto_tune', True)),
            chains=int(data.get('chains', 1))
        )


@dataclass
class RunConfig:
    """
    Fully resolved parameters of one CLI run.

    Fields not used by a command are carried along unchanged so that every
    output echoes the same record.
    """
    # Lattice and model
    d: int = 4
    L: int = 2
    N: int = 3
    n: int = 1
    g: float = 0.05
    nu: Optional[float] = None  # None: tuned (rg-exact) or 0
    bc: str = "periodic"
    mass: float = 0.0

    # Scan lists
    s: List[float] = field(default_factory=lambda: [0.0])
    x: Optional[List[List[int]]] = None  # None: one site per coalescence class
    n_values: List[int] = field(default_factory=lambda: [1, 2, 3])
    regime: str = "nongaussian"

    # Scale inputs (None: leading order)
    g_inf: Optional[float] = None
    A_d: Optional[float] = None
    c_F: float = 0.0
    nu_c: Optional[float] = None

    # Flow
    a_tilde: float = 0.0
    j_max: int = 1000

    # Tuning
    tune_mode: str = "chi"
    nu_bracket: Optional[List[float]] = None

    # Plateau overlay
    include_mcmc: bool = False

    # Global
    tol: float = 1e-12
    seed: int = 20240101
    threads: int = 1
    out: Optional[str] = None
    format: str = "csv"
    sidecar: bool = False
    dump_effective: Optional[str] = None

    quad: QuadConfig = field(default_factory=QuadConfig)
    numerics: NumericsConfig = field(default_factory=NumericsConfig)
    chain: ChainConfig = field(default_factory=ChainConfig)

    AVAILABLE_FORMATS = ["csv", "json", "xlsx"]
    AVAILABLE_BCS = ["free", "periodic"]
    AVAILABLE_TUNE_MODES = ["chi", "mass"]
    AVAILABLE_REGIMES = ["nongaussian", "gaussian"]

    def validate(self):
        """
        Check enumerations and ranges.

        Raises:
            ConfigError: On the first invalid field
        """
        if self.format not in self.AVAILABLE_FORMATS:
            raise ConfigError(f"Unknown format '{self.format}' (expected {self.AVAILABLE_FORMATS})")
        if self.bc not in self.AVAILABLE_BCS:
            raise ConfigError(f"Unknown boundary condition '{self.bc}' (expected {self.AVAILABLE_BCS})")
        if self.tune_mode not in self.AVAILABLE_TUNE_MODES:
            raise ConfigError(f"Unknown tune mode '{self.tune_mode}' (expected {self.AVAILABLE_TUNE_MODES})")
        if self.regime not in self.AVAILABLE_REGIMES:
            raise ConfigError(f"Unknown regime '{self.regime}' (expected {self.AVAILABLE_REGIMES})")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if self.d < 1 or self.L < 2 or self.N < 0 or self.n < 1:
            raise ConfigError(f"Invalid shape/model: d={self.d}, L={self.L}, N={self.N}, n={self.n}")
        if self.nu_bracket is not None and len(self.nu_bracket) != 2:
            raise ConfigError(f"nu_bracket needs two values, got {self.nu_bracket}")
        for coords in self.x or []:
            if len(coords) != self.d:
                raise ConfigError(f"Site {coords} does not have d={self.d} coordinates")
        self.quad.validate()
        self.numerics.validate()
        self.chain.validate()

    def to_dict(self) -> dict:
        """Convert to dictionary for JSON serialization."""
        return {
            'd': self.d,
            'L': self.L,
            'N': self.N,
            'n': self.n,
            'g': self.g,
            'nu': self.nu,
            'bc': self.bc,
            'mass': self.mass,
            's': list(self.s),
            'x': None if self.x is None else [list(c) for c in self.x],
            'n_values': list(self.n_values),
            'regime': self.regime,
            'g_inf': self.g_inf,
            'A_d': self.A_d,
            'c_F': self.c_F,
            'nu_c': self.nu_c,
            'a_tilde': self.a_tilde,
            'j_max': self.j_max,
            'tune_mode': self.tune_mode,
            'nu_bracket': self.nu_bracket,
            'include_mcmc': self.include_mcmc,
            'tol': self.tol,
            'seed': self.seed,
            'threads': self.threads,
            'out': self.out,
            'format': self.format,
            'sidecar': self.sidecar,
            'dump_effective': self.dump_effective,
            'quad': self.quad.to_dict(),
            'numerics': self.numerics.to_dict(),
            'chain': self.chain.to_dict()
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'RunConfig':
        """Create from dictionary; unknown keys are rejected."""
        known = set(cls().to_dict())
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {sorted(unknown)}")

        defaults = cls()
        try:
            return cls(
                d=int(data.get('d', defaults.d)),
                L=int(data.get('L', defaults.L)),
                N=int(data.get('N', defaults.N)),
                n=int(data.get('n', defaults.n)),
                g=float(data.get('g', defaults.g)),
                nu=_optional_float(data.get('nu')),
                bc=str(data.get('bc', defaults.bc)).lower(),
                mass=float(data.get('mass', defaults.mass)),
                s=[float(v) for v in data.get('s', defaults.s)],
                x=_optional_sites(data.get('x')),
                n_values=[int(v) for v in data.get('n_values', defaults.n_values)],
                regime=str(data.get('regime', defaults.regime)).lower(),
                g_inf=_optional_float(data.get('g_inf')),
                A_d=_optional_float(data.get('A_d')),
                c_F=float(data.get('c_F', defaults.c_F)),
                nu_c=_optional_float(data.get('nu_c')),
                a_tilde=float(data.get('a_tilde', defaults.a_tilde)),
                j_max=int(data.get('j_max', defaults.j_max)),
                tune_mode=str(data.get('tune_mode', defaults.tune_mode)).lower(),
                nu_bracket=data.get('nu_bracket'),
                include_mcmc=bool(data.get('include_mcmc', defaults.include_mcmc)),
                tol=float(data.get('tol', defaults.tol)),
                seed=int(data.get('seed', defaults.seed)),
                threads=int(data.get('threads', defaults.threads)),
                out=data.get('out'),
                format=str(data.get('format', defaults.format)).lower(),
                sidecar=bool(data.get('sidecar', defaults.sidecar)),
                dump_effective=data.get('dump_effective'),
                quad=QuadConfig.from_dict(data.get('quad', {})),
                numerics=NumericsConfig.from_dict(data.get('numerics', {})),
                chain=ChainConfig.from_dict(data.get('chain', {}))
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Malformed configuration: {e}") from e

    def save_to_file(self, file_path: Path):
        """Save configuration to JSON file."""
        with open(file_path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2, ensure_ascii=False)

    @staticmethod
    def read_mapping(file_path: Path) -> dict:
        """
        Raw mapping of a JSON or YAML configuration file.

        Raises:
            ConfigError: If the file is missing or cannot be parsed
        """
        file_path = Path(file_path)
        if not file_path.exists():
            raise ConfigError(f"Configuration file not found: {file_path}")

        try:
            with open(file_path, 'r', encoding='utf-8') as f:
                if file_path.suffix.lower() in ('.yaml', '.yml'):
                    data = yaml.safe_load(f) or {}
                else:
                    data = json.load(f)
        except (json.JSONDecodeError, yaml.YAMLError) as e:
            raise ConfigError(f"Cannot parse configuration file {file_path}: {e}") from e

        if not isinstance(data, dict):
            raise ConfigError(f"Configuration file {file_path} must contain a mapping")
        return data

    @classmethod
    def load_from_file(cls, file_path: Path) -> 'RunConfig':
        """Load configuration from a JSON or YAML file."""
        return cls.from_dict(cls.read_mapping(file_path))


def _optional_float(value) -> Optional[float]:
    return None if value is None else float(value)


def _optional_sites(value) -> Optional[List[List[int]]]:
    return None if value is None else [[int(c) for c in coords] for coords in value]
