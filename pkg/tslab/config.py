"""Configuration management for tslab pipelines."""

import copy
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml
from dotenv import load_dotenv

from .errors import ConfigError, TslabError
from .indicators import INDICATOR_TAXONOMY, INDICATORS, IndicatorSpec
from .labeling import (
    CLASS_COUNTS,
    LabelFamily,
    QClassThresholds,
    TrendMethod,
)
from .market_data import PRICE_FIELDS, CsvSchema
from .probe import TrainConfig
from .scaling import ScaleMethod, ScalerConfig
from .stationarity import Regression
from .windowing import SliceSpec

BASE_CHANNELS = PRICE_FIELDS + ('volume', 'returns', 'log_returns')
LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL')


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively overlay ``override`` onto a copy of ``base``."""
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


class PipelineConfig:
    """Configuration manager for tslab pipelines."""

    DEFAULT_CONFIG_DIR = Path.home() / ".tslab"
    DEFAULT_ENV_FILE = DEFAULT_CONFIG_DIR / ".env"
    DEFAULT_OUTPUT_DIR = Path("tslab_output")

    def __init__(self, config_path: Optional[str] = None, data: Optional[Dict[str, Any]] = None):
        """Initialize configuration.

        Args:
            config_path: Path to a YAML config file. If None, defaults are used.
            data: Config tree overlaid on the defaults instead of reading a file
        """
        self.config_path = Path(config_path) if config_path else None
        self.config_data: Dict[str, Any] = {}
        self._load_env()
        self._load_config(data)
        self._apply_env_overrides()

    def _load_env(self):
        """Load environment variables from .env files."""
        if self.DEFAULT_ENV_FILE.exists():
            load_dotenv(self.DEFAULT_ENV_FILE)
        load_dotenv()

    def _apply_env_overrides(self):
        """Fold TSLAB_* environment variables into the config tree."""
        seed = os.getenv('TSLAB_SEED')
        if seed:
            try:
                self.set('split.seed', int(seed))
            except ValueError:
                raise ConfigError([f"TSLAB_SEED must be an integer, got '{seed}'"])
        if os.getenv('TSLAB_OUTPUT_DIR'):
            self.set('output.directory', os.getenv('TSLAB_OUTPUT_DIR'))
        if os.getenv('TSLAB_LOG_LEVEL'):
            self.set('logging.level', os.getenv('TSLAB_LOG_LEVEL').upper())

    def _load_config(self, data: Optional[Dict[str, Any]] = None):
        """Load configuration from file and overlay it on the defaults."""
        loaded: Dict[str, Any] = {}
        if data is not None:
            loaded = data
        elif self.config_path is not None:
            if not self.config_path.exists():
                raise ConfigError([f"config file not found: {self.config_path}"])
            try:
                with open(self.config_path, 'r') as f:
                    loaded = yaml.safe_load(f) or {}
            except yaml.YAMLError as e:
                raise ConfigError([f"config file is not valid YAML: {e}"])
            if not isinstance(loaded, dict):
                raise ConfigError(["config file must contain a mapping at the top level"])
        self.config_data = _merge(self._get_default_config(), loaded)

    def _get_default_config(self) -> Dict[str, Any]:
        """Get default configuration."""
        return {
            'input': {
                'path': None,
                'symbol': None,
                'schema': CsvSchema().to_dict(),
            },
            'indicators': [],
            'slicing': {
                'lookback': 20,
                'stride': 1,
                'channels': ['close'],
                'label_horizon': 1,
            },
            'scaling': {
                'method': 'minmax',
                'feature_range': [0.0, 1.0],
                'groups': None,
            },
            'labels': {
                'family': 'nbar_updown',
                'horizon': 1,
                'ma_period': 20,
                'qclass': [0.6, 0.4],
                'trend_method': 'regression',
                'direction_threshold': None,
            },
            'split': {
                'fractions': [0.8, 0.2, 0.0],
                'seed': 42,
                'embargo': 'auto',
                'anti_pattern': False,
            },
            'balance': False,
            'adf': {
                'enabled': True,
                'channel': None,
                'regression': 'c',
                'max_lags': None,
            },
            'probe': {
                'enabled': False,
                'hidden_units': 32,
                'use_bias': False,
                'epochs': 100,
                'batch_size': 64,
                'learning_rate': 0.001,
                'dropout_rate': 0.0,
            },
            'output': {
                'directory': str(self.DEFAULT_OUTPUT_DIR),
                'flat_csv': False,
            },
            'logging': {
                'level': 'INFO',
                'log_file': None,
                'console': True,
            },
        }

    def save(self, path: Optional[Union[str, Path]] = None) -> Path:
        """Save current configuration to file.

        Args:
            path: Destination (defaults to the file it was loaded from)

        Returns:
            Path written
        """
        target = Path(path) if path else self.config_path
        if target is None:
            raise ConfigError(["no path given to save the configuration to"])
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, 'w') as f:
            yaml.safe_dump(self.config_data, f, default_flow_style=False, sort_keys=True)
        return target

    def to_dict(self) -> Dict[str, Any]:
        """Deep copy of the effective config tree (the snapshot stored in manifests)."""
        return copy.deepcopy(self.config_data)

    def get(self, key: str, default: Any = None) -> Any:
        """Get configuration value by key.

        Supports nested keys using dot notation (e.g., 'slicing.lookback').

        Args:
            key: Configuration key
            default: Default value if key not found

        Returns:
            Configuration value
        """
        value = self.config_data
        for k in key.split('.'):
            if isinstance(value, dict):
                value = value.get(k)
            else:
                return default
            if value is None:
                return default
        return value

    def set(self, key: str, value: Any):
        """Set configuration value by key, creating intermediate sections.

        Args:
            key: Configuration key in dot notation
            value: Configuration value
        """
        keys = key.split('.')
        data = self.config_data
        for k in keys[:-1]:
            if not isinstance(data.get(k), dict):
                data[k] = {}
            data = data[k]
        data[keys[-1]] = value

    @property
    def input_path(self) -> Optional[Path]:
        path = self.get('input.path')
        return Path(os.path.expanduser(path)) if path else None

    @property
    def schema(self) -> CsvSchema:
        return CsvSchema.from_dict(self.get('input.schema', {}))

    @property
    def seed(self) -> int:
        return int(self.get('split.seed', 42))

    @property
    def output_dir(self) -> Path:
        path = self.get('output.directory', str(self.DEFAULT_OUTPUT_DIR))
        return Path(os.path.expanduser(path))

    @property
    def indicator_specs(self) -> List[IndicatorSpec]:
        return [IndicatorSpec(str(entry['name']), int(entry['period'])) for entry in self.get('indicators', [])]

    @property
    def label_family(self) -> LabelFamily:
        return LabelFamily(self.get('labels.family', 'nbar_updown'))

    @property
    def slice_spec(self) -> SliceSpec:
        return SliceSpec(
            lookback=int(self.get('slicing.lookback', 20)),
            stride=int(self.get('slicing.stride', 1)),
            channels=tuple(self.get('slicing.channels', ['close'])),
            label_horizon=int(self.get('slicing.label_horizon', 0)),
        )

    @property
    def channel_taxonomy(self) -> Dict[str, Any]:
        """Indicator channel name -> (taxonomy, bound) for configured indicators."""
        return {spec.channel_name: INDICATOR_TAXONOMY[spec.name] for spec in self.indicator_specs}

    @property
    def scaler_config(self) -> ScalerConfig:
        """Scaler settings; an absent group partition is inferred from the channels."""
        method = self.get('scaling.method', 'minmax')
        feature_range = tuple(self.get('scaling.feature_range', [0.0, 1.0]))
        groups = self.get('scaling.groups')
        if not groups:
            return ScalerConfig.infer(self.slice_spec.channels, method, feature_range, self.channel_taxonomy)
        return ScalerConfig(
            method=method,
            feature_range=feature_range,
            overlaid=tuple(groups.get('overlaid') or ()),
            bounded=dict(groups.get('bounded') or {}),
            separate=tuple(groups.get('separate') or ()),
        )

    @property
    def qclass_thresholds(self) -> QClassThresholds:
        up_min, down_max = self.get('labels.qclass', [0.6, 0.4])
        return QClassThresholds(float(up_min), float(down_max))

    @property
    def embargo(self) -> Optional[int]:
        """Embargo in slices; None means one label horizon."""
        value = self.get('split.embargo', 'auto')
        return None if value == 'auto' else int(value)

    @property
    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=int(self.get('probe.epochs', 100)),
            batch_size=int(self.get('probe.batch_size', 64)),
            learning_rate=float(self.get('probe.learning_rate', 0.001)),
            seed=self.seed,
            dropout_rate=float(self.get('probe.dropout_rate', 0.0)),
        )

    @property
    def log_level(self) -> str:
        """Get logging level."""
        return str(self.get('logging.level', 'INFO')).upper()

    @property
    def log_file(self) -> Optional[Path]:
        path = self.get('logging.log_file')
        return Path(os.path.expanduser(path)) if path else None

    @property
    def console_logging(self) -> bool:
        return self.get('logging.console', True)

    def known_channels(self) -> List[str]:
        return list(BASE_CHANNELS) + [spec.channel_name for spec in self._safe_indicator_specs()]

    def _safe_indicator_specs(self) -> List[IndicatorSpec]:
        specs = []
        for entry in self.get('indicators', []) or []:
            if isinstance(entry, dict) and entry.get('name') in INDICATORS and _is_int(entry.get('period')):
                specs.append(IndicatorSpec(entry['name'], entry['period']))
        return specs

    def validate(self) -> List[str]:
        """Check structure and cross-field consistency without reading market data.

        Returns:
            List of error messages, empty when the configuration is valid
        """
        errors: List[str] = []
        errors += self._validate_input()
        errors += self._validate_indicators()
        errors += self._validate_slicing()
        errors += self._validate_scaling()
        errors += self._validate_labels()
        errors += self._validate_split()
        errors += self._validate_probe()
        if self.log_level not in LOG_LEVELS:
            errors.append(f"logging.level must be one of {', '.join(LOG_LEVELS)}, got '{self.log_level}'")
        return errors

    def _validate_input(self) -> List[str]:
        errors = []
        schema = self.get('input.schema', {})
        if not isinstance(schema, dict):
            return ["input.schema must be a mapping"]
        for key in ('timestamp', 'close'):
            if not isinstance(schema.get(key), str) or not schema.get(key):
                errors.append(f"input.schema.{key} must name a column")
        return errors

    def _validate_indicators(self) -> List[str]:
        entries = self.get('indicators', [])
        if not isinstance(entries, list):
            return ["indicators must be a list of {name, period} entries"]
        errors = []
        for i, entry in enumerate(entries):
            if not isinstance(entry, dict):
                errors.append(f"indicators[{i}] must be a mapping with name and period")
                continue
            if entry.get('name') not in INDICATORS:
                errors.append(f"indicators[{i}].name '{entry.get('name')}' unknown (known: {', '.join(sorted(INDICATORS))})")
            if not _is_int(entry.get('period')) or entry.get('period') < 1:
                errors.append(f"indicators[{i}].period must be a positive integer")
        return errors

    def _validate_slicing(self) -> List[str]:
        errors = []
        lookback = self.get('slicing.lookback', 20)
        stride = self.get('slicing.stride', 1)
        horizon = self.get('slicing.label_horizon', 0)
        channels = self.get('slicing.channels', [])
        if not _is_int(lookback) or lookback <= 1:
            errors.append(f"slicing.lookback must be an integer > 1, got {lookback}")
        if not _is_int(stride) or stride < 1:
            errors.append(f"slicing.stride must be a positive integer, got {stride}")
        if not _is_int(horizon) or horizon < 0:
            errors.append(f"slicing.label_horizon must be a non-negative integer, got {horizon}")
        if not isinstance(channels, list) or not channels:
            errors.append("slicing.channels must be a non-empty list")
        else:
            known = self.known_channels()
            unknown = [str(c) for c in channels if c not in known]
            if unknown:
                errors.append(f"slicing.channels references unknown channels: {', '.join(unknown)}")
            if len(set(channels)) != len(channels):
                errors.append("slicing.channels contains duplicates")
        return errors

    def _validate_scaling(self) -> List[str]:
        errors = []
        method = self.get('scaling.method', 'minmax')
        if method not in [m.value for m in ScaleMethod]:
            errors.append(f"scaling.method must be one of minmax, standardize; got '{method}'")
        feature_range = self.get('scaling.feature_range', [0.0, 1.0])
        if not isinstance(feature_range, list) or len(feature_range) != 2 or \
                not all(_is_number(v) for v in feature_range) or feature_range[0] >= feature_range[1]:
            errors.append(f"scaling.feature_range must be [min, max] with min < max, got {feature_range}")
        groups = self.get('scaling.groups')
        channels = self.get('slicing.channels', [])
        if groups and isinstance(channels, list) and not errors:
            if not isinstance(groups, dict):
                return errors + ["scaling.groups must be a mapping of overlaid/bounded/separate"]
            try:
                errors += [f"scaling.groups: {e}" for e in self.scaler_config.partition_errors(channels)]
            except TslabError as e:
                errors.append(f"scaling.groups: {e.message}")
        return errors

    def _validate_labels(self) -> List[str]:
        errors = []
        family = self.get('labels.family', 'nbar_updown')
        families = [f.value for f in LabelFamily if f is not LabelFamily.PROBE]
        if family not in families:
            errors.append(f"labels.family must be one of {', '.join(families)}; got '{family}'")
        horizon = self.get('labels.horizon', 1)
        reserved = self.get('slicing.label_horizon', 0)
        if not _is_int(horizon) or horizon < 1:
            errors.append(f"labels.horizon must be a positive integer, got {horizon}")
        elif _is_int(reserved) and horizon > reserved:
            errors.append(f"labels.horizon {horizon} exceeds slicing.label_horizon {reserved}")
        ma_period = self.get('labels.ma_period', 20)
        if not _is_int(ma_period) or ma_period < 1:
            errors.append(f"labels.ma_period must be a positive integer, got {ma_period}")
        trend_method = self.get('labels.trend_method', 'regression')
        if trend_method not in [m.value for m in TrendMethod]:
            errors.append(f"labels.trend_method must be regression or ma_fraction, got '{trend_method}'")
        elif family in ('trend_strength', 'trend_direction') and trend_method == 'regression' \
                and _is_int(horizon) and horizon < 2:
            errors.append("labels.horizon must be >= 2 for regression trend labels")
        qclass = self.get('labels.qclass', [0.6, 0.4])
        if not isinstance(qclass, list) or len(qclass) != 2 or not all(_is_number(v) for v in qclass):
            errors.append("labels.qclass must be [up_min, down_max]")
        else:
            try:
                self.qclass_thresholds
            except TslabError as e:
                errors.append(f"labels.qclass: {e.message}")
        if self.get('balance', False) and family in families and LabelFamily(family) not in CLASS_COUNTS:
            errors.append(f"balance requires a classifier label family, got '{family}'")
        return errors

    def _validate_split(self) -> List[str]:
        errors = []
        fractions = self.get('split.fractions', [0.8, 0.2, 0.0])
        if not isinstance(fractions, list) or len(fractions) != 3 or not all(_is_number(v) for v in fractions):
            errors.append("split.fractions must be [train, val, test]")
        elif min(fractions) < 0 or fractions[0] <= 0:
            errors.append(f"split.fractions must be non-negative with a positive train share, got {fractions}")
        elif abs(sum(fractions) - 1.0) > 1e-9:
            errors.append(f"split.fractions must sum to 1, got {sum(fractions):g}")
        if not _is_int(self.get('split.seed', 42)):
            errors.append("split.seed must be an integer")
        embargo = self.get('split.embargo', 'auto')
        if embargo != 'auto' and (not _is_int(embargo) or embargo < 0):
            errors.append(f"split.embargo must be 'auto' or a non-negative integer, got {embargo}")
        regression = self.get('adf.regression', 'c')
        try:
            Regression.parse(regression)
        except ValueError:
            errors.append(f"adf.regression must be c or ct, got '{regression}'")
        channel = self.get('adf.channel')
        channels = self.get('slicing.channels', [])
        if channel is not None and isinstance(channels, list) and channel not in channels and \
                not (_is_int(channel) and 0 <= channel < len(channels)):
            errors.append(f"adf.channel '{channel}' is not a sliced channel")
        return errors

    def _validate_probe(self) -> List[str]:
        errors = []
        checks = (
            ('epochs', lambda v: _is_int(v) and v >= 1, "a positive integer"),
            ('batch_size', lambda v: _is_int(v) and v >= 1, "a positive integer"),
            ('hidden_units', lambda v: _is_int(v) and v >= 1, "a positive integer"),
            ('learning_rate', lambda v: _is_number(v) and v > 0, "positive"),
            ('dropout_rate', lambda v: _is_number(v) and 0 <= v < 1, "in [0, 1)"),
        )
        for key, check, expected in checks:
            value = self.get(f'probe.{key}')
            if value is not None and not check(value):
                errors.append(f"probe.{key} must be {expected}, got {value}")
        family = self.get('labels.family', 'nbar_updown')
        if self.get('probe.enabled', False) and family in [f.value for f in LabelFamily] \
                and LabelFamily(family) not in CLASS_COUNTS:
            errors.append(f"probe requires a classifier label family, got '{family}'")
        return errors

    def require_valid(self):
        """Raise ConfigError when validate() reports problems."""
        errors = self.validate()
        if errors:
            raise ConfigError(errors)

    def setup_logging(self):
        """Setup logging based on configuration."""
        log_level = getattr(logging, self.log_level, logging.INFO)
        handlers = []

        if self.log_file:
            self.log_file.parent.mkdir(parents=True, exist_ok=True)
            file_handler = logging.FileHandler(self.log_file)
            file_handler.setLevel(log_level)
            file_handler.setFormatter(logging.Formatter(
                '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
            ))
            handlers.append(file_handler)

        if self.console_logging:
            console_handler = logging.StreamHandler()
            console_handler.setLevel(log_level)
            console_handler.setFormatter(logging.Formatter('%(levelname)s: %(message)s'))
            handlers.append(console_handler)

        logging.basicConfig(level=log_level, handlers=handlers or [logging.NullHandler()])


def get_config(config_path: Optional[str] = None) -> PipelineConfig:
    """Get configuration instance.

    Args:
        config_path: Optional path to config file

    Returns:
        PipelineConfig instance
    """
    return PipelineConfig(config_path)


def validate_config(path: Union[str, Path]) -> List[str]:
    """Validate a config file; an empty list means it is usable.

    Load failures (missing file, bad YAML) are returned as errors too.
    """
    try:
        return PipelineConfig(str(path)).validate()
    except ConfigError as e:
        return list(e.errors)
