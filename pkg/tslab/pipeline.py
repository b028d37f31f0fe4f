"""Dataset pipeline: ingest, indicators, slice, scale, label, split, balance, export.

Slices are always cut before scaling and split before the training block is
shuffled. Each stage failure is re-raised as PipelineStageError with the
stage name, and files already written by the run are removed.
"""

import logging
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from . import __version__
from .config import PipelineConfig
from .errors import DataError, PipelineStageError, SplitError
from .export import DatasetExporter, file_digest, read_json
from .indicators import compute_indicator
from .labeling import LabelVector, make_labels, required_history
from .market_data import BarSeries, load_csv
from .probe import ProbeModel, train
from .scaling import scale_slices
from .splitting import SplitPlan, downsample_majority, shuffle_then_split, split_then_shuffle
from .stationarity import adf_on_slices
from .windowing import SliceTensor, make_slices, warmup_length

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.json'


@dataclass
class DatasetManifest:
    """Everything needed to audit and reproduce one pipeline run."""

    tool_version: str
    config: Dict[str, Any]
    input: Dict[str, Any]
    tensor: Dict[str, Any]
    labels: Dict[str, Any]
    split: Dict[str, Any]
    leakage: Dict[str, Any]
    balance: Dict[str, Any]
    adf: Optional[Dict[str, Any]] = None
    probe: Optional[Dict[str, Any]] = None
    warnings: List[str] = field(default_factory=list)
    outputs: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'DatasetManifest':
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)


def load_manifest(path: Union[str, Path]) -> DatasetManifest:
    return DatasetManifest.from_dict(read_json(path))


@contextmanager
def stage(name: str):
    """Run a block as a named pipeline stage."""
    logger.info(f"Stage '{name}' started")
    try:
        yield
    except PipelineStageError:
        raise
    except Exception as e:
        logger.exception(f"Stage '{name}' failed")
        raise PipelineStageError(name, e) from e


def load_input(config: PipelineConfig, path: Optional[Union[str, Path]] = None) -> BarSeries:
    """Read the configured CSV (or ``path``) with the configured schema."""
    path = Path(path) if path else config.input_path
    if path is None:
        raise DataError("No input file configured (input.path)")
    return load_csv(path, config.schema, symbol=config.get('input.symbol'))


def build_channels(series: BarSeries, config: PipelineConfig) -> Dict[str, np.ndarray]:
    """Bar-aligned arrays for every sliced channel, indicators included."""
    closes = series.channel('close')
    indicators = {spec.channel_name: spec for spec in config.indicator_specs}
    channels = {}
    for name in config.slice_spec.channels:
        if name in indicators:
            channels[name] = compute_indicator(indicators[name], closes).values
        else:
            channels[name] = series.channel(name)
    return channels


def slice_start(channels: Dict[str, np.ndarray], config: PipelineConfig) -> int:
    """First source index that gives every slice defined inputs and label history."""
    history = required_history(
        config.label_family,
        ma_period=int(config.get('labels.ma_period', 20)),
        trend_method=config.get('labels.trend_method', 'regression'),
    )
    lookback = config.slice_spec.lookback
    return max(warmup_length(channels), history - lookback, 0)


def build_slices(series: BarSeries, config: PipelineConfig) -> SliceTensor:
    channels = build_channels(series, config)
    start = slice_start(channels, config)
    if start:
        logger.info(f"Skipping {start} warm-up bars before slicing")
    return make_slices(channels, config.slice_spec, start=start)


def build_labels(series: BarSeries, slices: SliceTensor, config: PipelineConfig) -> LabelVector:
    """Labels for every slice; %Q falls back to closes when the input has no high/low."""
    ranged = series.has_high_low
    return make_labels(
        config.label_family,
        series.channel('close'),
        slices.end_indices,
        int(config.get('labels.horizon', 1)),
        highs=series.channel('high') if ranged else None,
        lows=series.channel('low') if ranged else None,
        ma_period=int(config.get('labels.ma_period', 20)),
        thresholds=config.qclass_thresholds,
        trend_method=config.get('labels.trend_method', 'regression'),
        direction_threshold=config.get('labels.direction_threshold'),
    )


def build_split(count: int, config: PipelineConfig) -> SplitPlan:
    """Split-then-shuffle by default; the anti-pattern only on request."""
    fractions = config.get('split.fractions', [0.8, 0.2, 0.0])
    if config.get('split.anti_pattern', False):
        logger.warning("split.anti_pattern is set: shuffling before splitting leaks overlapping windows")
        return shuffle_then_split(count, fractions, config.seed, config.slice_spec)
    plan = split_then_shuffle(count, fractions, config.seed, config.slice_spec, embargo=config.embargo)
    if plan.embargo and plan.leakage.label_overlap_pairs:
        raise SplitError(
            f"Embargo of {plan.embargo} slices leaves {plan.leakage.label_overlap_pairs} "
            f"label-window overlaps; use at least the label horizon"
        )
    return plan


def run_pipeline(config: PipelineConfig) -> DatasetManifest:
    """Build, audit and export a dataset from a validated configuration.

    Args:
        config: Pipeline configuration

    Returns:
        DatasetManifest, also written as manifest.json in the output directory

    Raises:
        ConfigError: Configuration does not validate
        PipelineStageError: A stage failed; partial outputs were removed
    """
    config.require_valid()
    exporter: Optional[DatasetExporter] = None
    warnings: List[str] = []
    try:
        with stage('ingest'):
            series = load_input(config)
            input_path = config.input_path
            input_info = {
                'path': str(input_path),
                'sha256': file_digest(input_path),
                'symbol': series.symbol,
                'bars': len(series),
                'first_timestamp': series.bars[0].timestamp.isoformat(),
                'last_timestamp': series.bars[-1].timestamp.isoformat(),
            }

        with stage('indicators'):
            channels = build_channels(series, config)

        with stage('slice'):
            start = slice_start(channels, config)
            slices = make_slices(channels, config.slice_spec, start=start)

        with stage('scale'):
            scaled = scale_slices(slices, config.scaler_config)
            warnings.extend(scaled.scaling_meta.warnings)

        with stage('label'):
            labels = build_labels(series, slices, config)
            warnings.extend(labels.warnings)

        with stage('split'):
            plan = build_split(len(scaled), config)

        with stage('balance'):
            balanced = config.get('balance', False)
            train_indices = downsample_majority(labels, plan.train_order, config.seed) if balanced \
                else plan.train_order

        adf_summary = None
        if config.get('adf.enabled', True):
            with stage('adf'):
                channel = config.get('adf.channel', 0)
                adf_summary = adf_on_slices(
                    scaled, channel, config.get('adf.regression', 'c'), config.get('adf.max_lags')
                ).to_dict()
                adf_summary['channel'] = scaled.channel_names[scaled.channel_index(channel)]

        report = None
        if config.get('probe.enabled', False):
            with stage('probe'):
                model = ProbeModel(
                    input_dim=scaled.lookback * len(scaled.channel_names),
                    class_count=labels.class_count,
                    hidden_units=int(config.get('probe.hidden_units', 32)),
                    use_bias=bool(config.get('probe.use_bias', False)),
                    seed=config.seed,
                )
                report = train(model, scaled, labels, plan, config.train_config, train_indices=train_indices)
                report.scaler = config.scaler_config.method.value

        with stage('export'):
            exporter = DatasetExporter(config.output_dir)
            exporter.export_tensor(scaled)
            if config.get('output.flat_csv', False):
                exporter.export_flat_csv(scaled)
            exporter.export_labels(labels)
            exporter.export_split(plan, train_indices if balanced else None)
            if report is not None:
                exporter.export_probe_report(report)

            plan_summary = plan.to_dict()
            for key in ('train_order', 'val_indices', 'test_indices', 'leakage'):
                plan_summary.pop(key, None)
            manifest = DatasetManifest(
                tool_version=__version__,
                config=config.to_dict(),
                input=input_info,
                tensor={
                    'shape': list(scaled.shape),
                    'channels': list(scaled.channel_names),
                    'start_index': start,
                    'blob': 'tensor.bin',
                    'blob_sha256': file_digest(config.output_dir / 'tensor.bin'),
                    'scaling_method': scaled.scaling_meta.method.value,
                },
                labels={
                    'family': labels.family.value,
                    'horizon': labels.horizon,
                    'count': len(labels),
                    'histogram': labels.histogram(),
                    'params': dict(labels.params),
                },
                split=plan_summary,
                leakage=plan.leakage.to_dict(),
                balance={'enabled': bool(balanced), 'train_size': int(len(train_indices))},
                adf=adf_summary,
                probe=report.to_dict() if report is not None else None,
                warnings=list(warnings),
                outputs=sorted(path.name for path in exporter.written),
            )
            exporter.write_json(MANIFEST_NAME, manifest.to_dict())
    except PipelineStageError:
        if exporter is not None:
            exporter.cleanup()
        raise

    logger.info(
        f"Dataset {tuple(scaled.shape)} written to {config.output_dir} "
        f"(train {len(train_indices)}, val {len(plan.val_indices)}, test {len(plan.test_indices)})"
    )
    return manifest
