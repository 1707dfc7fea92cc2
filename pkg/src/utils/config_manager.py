"""
Configuration manager resolving run settings.

Precedence: built-in defaults <- config file (JSON or YAML) <- explicit
command-line flags. The thread count falls back to HRG_THREADS.
"""
import hashlib
import os
from pathlib import Path
from typing import Optional

from src import __version__
from src.exporters.table_exporter import canonical_json
from src.models.errors import ConfigError
from src.models.run_config import RunConfig

THREADS_ENV = 'HRG_THREADS'

# Flags that live in nested sections of RunConfig
NESTED_FLAGS = {
    'grid_points': 'numerics',
    'samples': 'numerics',
    'replicas': 'numerics',
    'sampler': 'numerics',
    'renorm_policy': 'numerics',
    'sweeps': 'chain',
    'burn_in': 'chain',
    'chains': 'chain',
    'proposal_width': 'chain',
    'scheme': 'quad',
}


class ConfigManager:
    """Builds the fully resolved RunConfig of one command."""

    def __init__(self, config_path: Optional[Path] = None):
        """
        Args:
            config_path: Optional JSON/YAML run configuration
        """
        self.config_path = Path(config_path) if config_path else None
        raw = RunConfig.read_mapping(self.config_path) if self.config_path else {}
        self.file_keys = frozenset(raw)
        self.config = RunConfig.from_dict(raw) if self.config_path else RunConfig()

    def apply_overrides(self, **overrides) -> RunConfig:
        """
        Apply explicit flag values; None means "not given".

        Raises:
            ConfigError: On unknown keys or an invalid result
        """
        data = self.config.to_dict()
        for key, value in overrides.items():
            if value is None:
                continue
            section = NESTED_FLAGS.get(key)
            if section is not None:
                data[section][key] = value
            elif key in data:
                data[key] = value
            else:
                raise ConfigError(f"Unknown configuration key '{key}'")
        if overrides.get('threads') is None and 'threads' not in self.file_keys:
            data['threads'] = self.default_threads()
        self.config = RunConfig.from_dict(data)
        self.config.validate()
        return self.config

    @staticmethod
    def default_threads() -> int:
        """HRG_THREADS, else 1."""
        raw = os.environ.get(THREADS_ENV)
        if raw is None or raw.strip() == '':
            return 1
        try:
            value = int(raw)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got '{raw}'")
        if value < 1:
            raise ConfigError(f"{THREADS_ENV} must be >= 1, got {value}")
        return value

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON of the resolved config."""
        return hashlib.sha256(canonical_json(self.config.to_dict()).encode('utf-8')).hexdigest()

    def metadata(self, command: str) -> dict:
        """The record every output carries."""
        return {
            'command': command,
            'version': __version__,
            'config_hash': self.config_hash(),
            'seed': self.config.seed,
            'config': self.config.to_dict(),
        }

    def save_config(self, file_path: Path):
        """Write the resolved config (JSON)."""
        self.config.save_to_file(Path(file_path))
