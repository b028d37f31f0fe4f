"""Command-line interface for tslab."""

import functools
import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .config import get_config, validate_config
from .errors import ConfigError, TslabError
from .export import DatasetExporter, json_default, load_tensor
from .labeling import ProbeCondition
from .market_data import to_returns
from .pipeline import (
    MANIFEST_NAME,
    build_labels,
    build_slices,
    build_split,
    load_input,
    load_manifest,
    run_pipeline,
)
from .probe import run_learnability_suite
from .scaling import ScalerConfig, scale_slices
from .stationarity import adf_on_slices, adf_test

logger = logging.getLogger(__name__)


def _fail(error: Exception):
    click.echo(f"✗ {error}", err=True)
    sys.exit(error.exit_code if isinstance(error, TslabError) else 3)


def handle_errors(command):
    """Report tslab errors with their exit code instead of a traceback."""
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except TslabError as e:
            _fail(e)
        except Exception as e:
            logger.exception("Unexpected error")
            _fail(e)
    return wrapper


def _emit(ctx, payload: dict, text: str):
    """Print JSON under --json, the human-readable text otherwise."""
    if ctx.obj['json']:
        click.echo(json.dumps(payload, indent=2, sort_keys=True, default=json_default))
    else:
        click.echo(text)


def _split_list(value: str):
    return [item.strip() for item in value.split(',') if item.strip()]


@click.group()
@click.version_option(version=__version__)
@click.option('--config', type=click.Path(), help='Path to config file')
@click.option('--seed', type=int, help='Override split.seed')
@click.option('--output-dir', type=click.Path(), help='Override output.directory')
@click.option('--json', 'as_json', is_flag=True, help='Machine-readable JSON output')
@click.pass_context
def main(ctx, config, seed, output_dir, as_json):
    """tslab - leakage-free, per-slice scaled datasets from OHLCV history."""
    ctx.ensure_object(dict)
    try:
        settings = get_config(config)
    except ConfigError as e:
        _fail(e)
    if seed is not None:
        settings.set('split.seed', seed)
    if output_dir:
        settings.set('output.directory', output_dir)
    ctx.obj['config'] = settings
    ctx.obj['config_path'] = config
    ctx.obj['json'] = as_json
    settings.setup_logging()


@main.command()
@click.argument('path', type=click.Path(), required=False)
@click.pass_context
def validate(ctx, path):
    """Check a config file without reading market data."""
    path = path or ctx.obj['config_path']
    errors = validate_config(path) if path else ctx.obj['config'].validate()
    _emit(ctx, {'valid': not errors, 'errors': errors},
          "\n".join(f"✗ {e}" for e in errors) if errors else "✓ Configuration is valid")
    if errors:
        sys.exit(ConfigError.exit_code)


@main.command()
@click.option('--input', 'input_path', type=click.Path(), help='OHLCV CSV (default input.path)')
@click.pass_context
@handle_errors
def ingest(ctx, input_path):
    """Load and validate an OHLCV CSV."""
    series = load_input(ctx.obj['config'], input_path)
    payload = {
        'symbol': series.symbol,
        'bars': len(series),
        'first_timestamp': series.bars[0].timestamp.isoformat() if len(series) else None,
        'last_timestamp': series.bars[-1].timestamp.isoformat() if len(series) else None,
        'channels': series.available_channels(),
    }
    _emit(ctx, payload,
          f"✓ {series.symbol}: {len(series):,} bars, {payload['first_timestamp']} to {payload['last_timestamp']}\n"
          f"  Channels: {', '.join(payload['channels'])}")


@main.command()
@click.option('--input', 'input_path', type=click.Path(), help='OHLCV CSV (default input.path)')
@click.option('--tensor', type=click.Path(), help='Tensor metadata JSON instead of a CSV')
@click.option('--column', '--channel', 'channel', default=None,
              help='close, returns, log_returns, ... or a tensor channel')
@click.option('--diff', type=click.IntRange(0, 1), default=0, help='Difference the series once before testing')
@click.option('--regression', type=click.Choice(['c', 'ct']), default=None, help='Deterministic terms')
@click.option('--max-lags', type=int, default=None, help='Upper bound of the lag search')
@click.pass_context
@handle_errors
def adf(ctx, input_path, tensor, channel, diff, regression, max_lags):
    """Augmented Dickey-Fuller test on a price/return channel or a tensor channel."""
    config = ctx.obj['config']
    if regression:
        config.set('adf.regression', regression)
    if max_lags is not None:
        config.set('adf.max_lags', max_lags)
    regression = config.get('adf.regression', 'c')
    max_lags = config.get('adf.max_lags')
    if tensor:
        slices = load_tensor(tensor)
        index = slices.channel_index(channel if channel is not None else 0)
        if diff:
            report = adf_test(np.diff(slices.data[:, :, index].reshape(-1)), regression, max_lags)
        else:
            report = adf_on_slices(slices, index, regression, max_lags)
        subject = f"{Path(tensor).stem}[{slices.channel_names[index]}]"
    else:
        series = load_input(config, input_path)
        channel = channel or 'close'
        if channel in ('returns', 'log_returns'):
            values = to_returns(series, 'simple' if channel == 'returns' else 'log').values
        else:
            values = series.channel(channel)
        if diff:
            values = np.diff(values)
        report = adf_test(values, regression, max_lags)
        subject = f"{series.symbol}[{channel}]"
    if diff:
        subject = f"diff {subject}"

    verdict = "stationary" if report.rejects_null('1%') else "unit root not rejected"
    text = [
        f"ADF {subject}: statistic {report.statistic:.6f}, p-value {report.p_value:.6f} ({verdict} at 1%)",
        f"  Lags used: {report.lags_used}, observations: {report.n_obs}",
    ]
    text += [f"  Critical value {level}: {value:.4f}" for level, value in report.critical_values.items()]
    _emit(ctx, report.to_dict(), "\n".join(text))


@main.command('slice')
@click.option('--input', 'input_path', type=click.Path(), help='OHLCV CSV (default input.path)')
@click.option('--lookback', type=int, help='Bars per slice')
@click.option('--stride', type=int, help='Increment between slice starts')
@click.option('--channels', help='Comma-separated channel names')
@click.option('--horizon', type=int, help='Bars reserved after each slice')
@click.pass_context
@handle_errors
def slice_command(ctx, input_path, lookback, stride, channels, horizon):
    """Cut an OHLCV CSV into unscaled slices (slices.bin + slices.json)."""
    config = ctx.obj['config']
    for key, value in (('slicing.lookback', lookback), ('slicing.stride', stride),
                       ('slicing.label_horizon', horizon)):
        if value is not None:
            config.set(key, value)
    if channels:
        config.set('slicing.channels', _split_list(channels))
    config.require_valid()
    slices = build_slices(load_input(config, input_path), config)
    meta_path = DatasetExporter(config.output_dir).export_tensor(slices, stem='slices')
    _emit(ctx, {'shape': list(slices.shape), 'metadata': str(meta_path)},
          f"✓ {len(slices):,} slices of shape {slices.shape[1:]} written to {meta_path}")


@main.command()
@click.option('--tensor', type=click.Path(), required=True, help='Unscaled tensor metadata JSON')
@click.option('--method', type=click.Choice(['minmax', 'standardize']), help='Scaling method')
@click.pass_context
@handle_errors
def scale(ctx, tensor, method):
    """Scale every slice independently (scaled.bin + scaled.json)."""
    config = ctx.obj['config']
    slices = load_tensor(tensor)
    method = method or config.get('scaling.method', 'minmax')
    scaler = config.scaler_config
    if set(scaler.overlaid) | set(scaler.bounded) | set(scaler.separate) != set(slices.channel_names):
        scaler = ScalerConfig.infer(slices.channel_names, method, scaler.feature_range, config.channel_taxonomy)
    else:
        scaler = ScalerConfig(method, scaler.feature_range, scaler.overlaid, scaler.bounded, scaler.separate)
    scaled = scale_slices(slices, scaler)
    meta_path = DatasetExporter(config.output_dir).export_tensor(scaled, stem='scaled')
    _emit(ctx, {'metadata': str(meta_path), 'scaling': scaled.scaling_meta.to_dict()},
          f"✓ Scaled {len(scaled):,} slices with per-slice {scaler.method.value} -> {meta_path}")


@main.command()
@click.option('--input', 'input_path', type=click.Path(), help='OHLCV CSV (default input.path)')
@click.option('--tensor', type=click.Path(), required=True, help='Tensor metadata JSON (for end indices)')
@click.option('--family', help='Label family')
@click.option('--horizon', type=int, help='Label horizon in bars')
@click.option('--qclass', help='QClass thresholds up_min,down_max')
@click.option('--ma-period', type=int, help='Moving-average period for ma_updown and ma_fraction trend')
@click.pass_context
@handle_errors
def label(ctx, input_path, tensor, family, horizon, qclass, ma_period):
    """Label slices from future bars (labels.csv + labels.json)."""
    config = ctx.obj['config']
    if family:
        config.set('labels.family', family)
    if horizon is not None:
        config.set('labels.horizon', horizon)
    if qclass:
        try:
            config.set('labels.qclass', [float(v) for v in _split_list(qclass)])
        except ValueError:
            raise ConfigError(f"--qclass must be two numbers, got '{qclass}'")
    if ma_period is not None:
        config.set('labels.ma_period', ma_period)
    slices = load_tensor(tensor)
    config.set('slicing.label_horizon', int(slices.notes.get('label_horizon', 0)))
    config.require_valid()
    labels = build_labels(load_input(config, input_path), slices, config)
    path = DatasetExporter(config.output_dir).export_labels(labels)
    histogram = labels.histogram()
    _emit(ctx, labels.to_dict(),
          f"✓ {len(labels):,} {labels.family.value} labels written to {path}\n"
          + "\n".join(f"  {key}: {count:,}" for key, count in histogram.items()))


@main.command()
@click.option('--tensor', type=click.Path(), required=True, help='Tensor metadata JSON')
@click.option('--fractions', help='train,val,test shares')
@click.option('--embargo', help="'auto' or a slice count")
@click.option('--anti-pattern', is_flag=True, help='Shuffle before splitting (leaky, for comparison)')
@click.option('--seed', type=int, help='Override split.seed')
@click.pass_context
@handle_errors
def split(ctx, tensor, fractions, embargo, anti_pattern, seed):
    """Split slices into train/validation/test and audit overlap (split.json)."""
    config = ctx.obj['config']
    if seed is not None:
        config.set('split.seed', seed)
    if fractions:
        config.set('split.fractions', [float(v) for v in _split_list(fractions)])
    if embargo is not None:
        config.set('split.embargo', embargo if embargo == 'auto' else int(embargo))
    if anti_pattern:
        config.set('split.anti_pattern', True)
    slices = load_tensor(tensor)
    config.set('slicing.lookback', slices.lookback)
    config.set('slicing.stride', slices.stride)
    config.set('slicing.label_horizon', int(slices.notes.get('label_horizon', 0)))
    config.set('slicing.channels', list(slices.channel_names))
    plan = build_split(len(slices), config)
    path = DatasetExporter(config.output_dir).export_split(plan)
    sizes = plan.sizes()
    audit = plan.leakage
    _emit(ctx, plan.to_dict(),
          f"✓ Split ({plan.method}) written to {path}\n"
          f"  Train {sizes['train']:,}, val {sizes['val']:,}, test {sizes['test']:,}, embargoed {sizes['embargoed']:,}\n"
          f"  Cross-set overlap: max {audit.max_cross_overlap:.2f}, mean {audit.mean_cross_overlap:.2f}, "
          f"label-window pairs {audit.label_overlap_pairs:,}")


@main.command()
@click.option('--input', 'input_path', type=click.Path(), help='OHLCV CSV (default input.path)')
@click.option('--scaler', type=click.Choice(['minmax', 'standardize', 'none']), default='standardize',
              help='Scaling applied to the probe inputs')
@click.option('--condition', 'conditions', type=click.Choice([c.value for c in ProbeCondition]), multiple=True,
              help='Price condition(s) to learn (default all)')
@click.option('--epochs', type=int, help='Training epochs')
@click.option('--dropout', type=float, help='Hidden-layer dropout rate')
@click.option('--lookback', type=int, default=20, help='Bars per slice')
@click.option('--seed', type=int, help='Override split.seed')
@click.pass_context
@handle_errors
def probe(ctx, input_path, scaler, conditions, epochs, dropout, lookback, seed):
    """Check that a scaling keeps simple price relationships learnable."""
    config = ctx.obj['config']
    if seed is not None:
        config.set('split.seed', seed)
    series = load_input(config, input_path)
    reports = run_learnability_suite(
        series.channel('close'),
        scaler_method=None if scaler == 'none' else scaler,
        conditions=list(conditions) or None,
        lookback=lookback,
        epochs=epochs or int(config.get('probe.epochs', 100)),
        dropout_rate=dropout if dropout is not None else float(config.get('probe.dropout_rate', 0.0)),
        seed=config.seed,
        hidden_units=int(config.get('probe.hidden_units', 32)),
        use_bias=bool(config.get('probe.use_bias', False)),
        batch_size=int(config.get('probe.batch_size', 64)),
        learning_rate=float(config.get('probe.learning_rate', 0.001)),
    )
    exporter = DatasetExporter(config.output_dir)
    for condition, report in reports.items():
        exporter.export_probe_report(report, stem=f"probe_{condition.value}_{report.scaler}")
    _emit(ctx, {c.value: r.to_dict() for c, r in reports.items()},
          "\n\n".join(report.to_text() for report in reports.values()))


@main.command()
@click.option('--input', 'input_path', type=click.Path(), help='Override input.path')
@click.pass_context
@handle_errors
def run(ctx, input_path):
    """Run the full pipeline and write the dataset with its manifest."""
    config = ctx.obj['config']
    if input_path:
        config.set('input.path', input_path)
    manifest = run_pipeline(config)
    split_sizes = manifest.split['sizes']
    lines = [
        f"✓ Dataset written to {config.output_dir}",
        f"  Tensor: {tuple(manifest.tensor['shape'])} ({', '.join(manifest.tensor['channels'])})",
        f"  Labels: {manifest.labels['family']} {manifest.labels['histogram']}",
        f"  Split: train {split_sizes['train']:,}, val {split_sizes['val']:,}, test {split_sizes['test']:,}",
        f"  Max cross-set overlap: {manifest.leakage['max_cross_overlap']:.2f}",
    ]
    if manifest.adf:
        lines.append(f"  ADF on scaled {manifest.adf['channel']}: {manifest.adf['statistic']:.4f} "
                     f"(p={manifest.adf['p_value']:.4f})")
    if manifest.probe:
        lines.append(f"  Probe accuracy: {manifest.probe['accuracy']:.4f}")
    _emit(ctx, manifest.to_dict(), "\n".join(lines))


@main.command()
@click.argument('manifest_path', type=click.Path(), required=False)
@click.pass_context
@handle_errors
def inspect(ctx, manifest_path):
    """Print a dataset manifest."""
    path = Path(manifest_path) if manifest_path else ctx.obj['config'].output_dir / MANIFEST_NAME
    manifest = load_manifest(path)
    lines = [
        "=" * 60,
        f"Manifest: {path}",
        "=" * 60,
        f"Tool version: {manifest.tool_version}",
        f"Input: {manifest.input.get('path')} ({manifest.input.get('bars')} bars)",
        f"  sha256: {manifest.input.get('sha256')}",
        f"Tensor: {tuple(manifest.tensor.get('shape', ()))}, channels {', '.join(manifest.tensor.get('channels', []))}",
        f"Labels: {manifest.labels.get('family')} (horizon {manifest.labels.get('horizon')})",
    ]
    lines += [f"  {key}: {count}" for key, count in manifest.labels.get('histogram', {}).items()]
    lines.append(f"Split: {manifest.split.get('method')}, sizes {manifest.split.get('sizes')}")
    lines.append(f"Leakage: {manifest.leakage}")
    if manifest.warnings:
        lines.append("Warnings:")
        lines += [f"  {w}" for w in manifest.warnings]
    _emit(ctx, manifest.to_dict(), "\n".join(lines))


if __name__ == '__main__':
    main()
