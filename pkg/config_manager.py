#!/usr/bin/env python3
"""
Configuration Management Module
Handles loading, validation, and access to the TOML run configuration.

The file is flat ``key = value`` pairs; tables are tolerated and flattened
(a key inside ``[network]`` is read as if it were top level). Command-line
flags override file values, and relative paths resolve against the
directory holding the config file.
"""

import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

import tomli

from formulation_data import BUNDLED_APIS, BUNDLED_FORMULATIONS


PATH_KEYS = ('formulations', 'apis', 'split_file', 'model_file', 'report_dir', 'log_dir', 'test_indices')
STRATEGIES = ('mdfis', 'maximin', 'random')
PRESETS = ('ann', 'dnn', 'custom')


class ConfigError(ValueError):
    """Missing, unknown or inconsistent configuration value"""
    pass


@dataclass
class PathConfig:
    """Input and output locations"""
    formulations: Path = BUNDLED_FORMULATIONS
    apis: Path = BUNDLED_APIS
    split_file: Path = Path('split.txt')
    model_file: Path = Path('model.odtnet')
    report_dir: Path = Path('reports')
    log_dir: Optional[Path] = None
    test_indices: Optional[Path] = None


@dataclass
class SplitSettings:
    strategy: str = 'mdfis'
    n_validation: int = 20
    n_test: int = 20
    small_group_threshold: int = 3
    n_initial: int = 1


@dataclass
class NetworkSettings:
    """Preset plus optional per-field overrides (None keeps the preset value)"""
    preset: str = 'ann'
    epochs: Optional[int] = None
    learning_rate: float = 0.01
    momentum: float = 0.8
    hidden_layers: Optional[Tuple[int, ...]] = None
    log_every: int = 500


@dataclass
class RunConfig:
    """Main run configuration"""
    paths: PathConfig = field(default_factory=PathConfig)
    split: SplitSettings = field(default_factory=SplitSettings)
    network: NetworkSettings = field(default_factory=NetworkSettings)
    seed: Optional[int] = 0
    log_level: str = 'INFO'


# flat key -> (section attribute, field name)
_KEY_MAP: Dict[str, Tuple[Optional[str], str]] = {
    **{f.name: ('paths', f.name) for f in fields(PathConfig)},
    **{f.name: ('split', f.name) for f in fields(SplitSettings)},
    **{f.name: ('network', f.name) for f in fields(NetworkSettings)},
    'seed': (None, 'seed'),
    'log_level': (None, 'log_level'),
}


def flatten(data: Mapping[str, Any]) -> Dict[str, Any]:
    """Lift keys out of TOML tables; later duplicates win"""
    flat: Dict[str, Any] = {}
    for key, value in data.items():
        if isinstance(value, dict):
            flat.update(flatten(value))
        else:
            flat[key] = value
    return flat


def _coerce(key: str, value: Any, base_dir: Path) -> Any:
    if value is None:
        return None
    if key in PATH_KEYS:
        path = Path(value).expanduser()
        return path if path.is_absolute() else base_dir / path
    if key == 'hidden_layers':
        if isinstance(value, str):
            value = [v for v in value.replace(',', ' ').split()]
        return tuple(int(v) for v in value)
    if key in ('seed', 'n_validation', 'n_test', 'small_group_threshold', 'n_initial', 'epochs', 'log_every'):
        if isinstance(value, bool) or not float(value).is_integer():
            raise ConfigError(f"'{key}' must be an integer, got {value!r}")
        return int(value)
    if key in ('learning_rate', 'momentum'):
        return float(value)
    if key in ('strategy', 'preset', 'log_level'):
        return str(value).lower() if key != 'log_level' else str(value).upper()
    return value


class ConfigManager:
    """Manages run configuration from TOML files"""

    def __init__(self, config_file: Optional[str] = 'config.toml'):
        self.config_file = Path(config_file) if config_file else None
        self.logger = logging.getLogger(__name__)
        self._config_data: Optional[Dict[str, Any]] = None
        self._run_config: Optional[RunConfig] = None

    @property
    def base_dir(self) -> Path:
        return self.config_file.resolve().parent if self.config_file else Path.cwd()

    def load_config(self, required: bool = False) -> RunConfig:
        """Load and parse the TOML file; a missing optional file yields defaults"""
        if self._run_config is not None:
            return self._run_config

        if self.config_file is None or not self.config_file.exists():
            if required:
                raise ConfigError(f"Configuration file not found: {self.config_file}")
            self.logger.debug(f"No configuration file at {self.config_file}; using defaults")
            self._config_data = {}
        else:
            self.logger.debug(f"Loading configuration from {self.config_file}")
            try:
                self._config_data = flatten(tomli.loads(self.config_file.read_text(encoding='utf-8')))
            except tomli.TOMLDecodeError as e:
                raise ConfigError(f"Invalid TOML in {self.config_file}: {e}")

        # default paths resolve against the config directory like file values do
        defaults = {f.name: getattr(PathConfig(), f.name) for f in fields(PathConfig)}
        self._run_config = self.apply_overrides(RunConfig(), {**defaults, **self._config_data})
        self.logger.debug("Configuration loaded successfully")
        return self._run_config

    def apply_overrides(self, config: RunConfig, values: Mapping[str, Any]) -> RunConfig:
        """New RunConfig with flat ``values`` applied; None values are skipped"""
        top: Dict[str, Any] = {}
        updates: Dict[str, Dict[str, Any]] = {'paths': {}, 'split': {}, 'network': {}}

        for key, value in values.items():
            if key not in _KEY_MAP:
                raise ConfigError(f"Unknown configuration key '{key}'")
            if value is None:
                continue
            section, name = _KEY_MAP[key]
            try:
                coerced = _coerce(key, value, self.base_dir)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"Invalid value for '{key}': {e}")
            if section is None:
                top[name] = coerced
            else:
                updates[section][name] = coerced

        return replace(
            config,
            paths=replace(config.paths, **updates['paths']),
            split=replace(config.split, **updates['split']),
            network=replace(config.network, **updates['network']),
            **top,
        )

    def validate_config(self, config: RunConfig, need_inputs: bool = True) -> RunConfig:
        """Check seeds, enumerations and input paths; returns the config unchanged"""
        if config.seed is None:
            raise ConfigError("A seed is required (no unseeded runs)")
        if config.split.strategy not in STRATEGIES:
            raise ConfigError(f"Unknown strategy '{config.split.strategy}'; expected one of {STRATEGIES}")
        if config.network.preset not in PRESETS:
            raise ConfigError(f"Unknown preset '{config.network.preset}'; expected one of {PRESETS}")
        if config.log_level not in ('DEBUG', 'INFO', 'WARNING', 'ERROR'):
            raise ConfigError(f"Unknown log level '{config.log_level}'")

        if need_inputs:
            for label, path in (('formulations', config.paths.formulations), ('apis', config.paths.apis)):
                if not Path(path).exists():
                    raise ConfigError(f"Input file for '{label}' not found: {path}")
        if config.paths.test_indices is not None and not config.paths.test_indices.exists():
            raise ConfigError(f"Test index file not found: {config.paths.test_indices}")

        self.logger.debug("Configuration validation passed")
        return config

