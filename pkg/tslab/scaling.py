"""Per-slice MinMax and standardization scaling with channel groups.

Within each slice the overlaid group (prices and overlaid indicators) is
scaled with one set of statistics pooled over all its channels and
timesteps, so relative positions such as close vs. moving average survive.
Separate channels get their own statistics; bounded channels are divided
by their bound.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ScalingError
from .indicators import Taxonomy
from .windowing import SliceSpec, SliceTensor, make_slices

logger = logging.getLogger(__name__)

OVERLAID_GROUP = 'overlaid'
PRICE_CHANNELS = ('open', 'high', 'low', 'close')
SEPARATE_CHANNELS = ('volume', 'returns', 'log_returns')


class ScaleMethod(str, Enum):
    MINMAX = 'minmax'
    STANDARDIZE = 'standardize'


@dataclass(frozen=True)
class ScalerConfig:
    """Scaling method, target range and channel group partition."""

    method: ScaleMethod = ScaleMethod.MINMAX
    feature_range: Tuple[float, float] = (0.0, 1.0)
    overlaid: Tuple[str, ...] = ()
    bounded: Mapping[str, float] = field(default_factory=dict)
    separate: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'method', ScaleMethod(self.method))
        object.__setattr__(self, 'feature_range', tuple(float(v) for v in self.feature_range))
        object.__setattr__(self, 'overlaid', tuple(self.overlaid))
        object.__setattr__(self, 'separate', tuple(self.separate))
        object.__setattr__(self, 'bounded', {k: float(v) for k, v in dict(self.bounded).items()})
        low, high = self.feature_range
        if not low < high:
            raise ScalingError(f"feature_range min must be below max, got {self.feature_range}")
        for name, bound in self.bounded.items():
            if bound <= 0:
                raise ScalingError(f"bound for '{name}' must be positive, got {bound}")

    @classmethod
    def infer(cls, channels: Sequence[str], method: Union[ScaleMethod, str] = ScaleMethod.MINMAX,
              feature_range: Tuple[float, float] = (0.0, 1.0),
              taxonomy: Optional[Mapping[str, Tuple[Taxonomy, Optional[float]]]] = None) -> 'ScalerConfig':
        """Build the default partition for a channel list.

        Prices join the overlaid group, volume and return channels are
        separate, and indicator channels follow their taxonomy.

        Args:
            channels: Channel names of the tensor
            method: Scaling method
            feature_range: MinMax target range
            taxonomy: Indicator channel name -> (taxonomy, bound_max)
        """
        taxonomy = taxonomy or {}
        overlaid, separate, bounded = [], [], {}
        for name in channels:
            if name in taxonomy:
                kind, bound = taxonomy[name]
                if kind is Taxonomy.BOUNDED:
                    bounded[name] = bound
                elif kind is Taxonomy.SEPARATE:
                    separate.append(name)
                else:
                    overlaid.append(name)
            elif name in SEPARATE_CHANNELS:
                separate.append(name)
            else:
                overlaid.append(name)
        return cls(method=method, feature_range=feature_range, overlaid=tuple(overlaid),
                   bounded=bounded, separate=tuple(separate))

    def partition_errors(self, channels: Sequence[str]) -> List[str]:
        """Problems with the group partition against a channel list."""
        errors = []
        assigned = list(self.overlaid) + list(self.bounded) + list(self.separate)
        duplicates = sorted({name for name in assigned if assigned.count(name) > 1})
        if duplicates:
            errors.append(f"channels assigned to more than one group: {', '.join(duplicates)}")
        missing = [name for name in channels if name not in assigned]
        if missing:
            errors.append(f"channels without a scaling group: {', '.join(missing)}")
        unknown = [name for name in assigned if name not in channels]
        if unknown:
            errors.append(f"scaling groups name unknown channels: {', '.join(unknown)}")
        return errors

    def to_dict(self) -> dict:
        return {
            'method': self.method.value,
            'feature_range': list(self.feature_range),
            'groups': {
                'overlaid': list(self.overlaid),
                'bounded': dict(self.bounded),
                'separate': list(self.separate),
            },
        }


def _stat_labels(kind: Taxonomy, method: ScaleMethod) -> Tuple[str, str]:
    if kind is Taxonomy.BOUNDED:
        return 'offset', 'bound'
    if method is ScaleMethod.MINMAX:
        return 'x_min', 'x_max'
    return 'mean', 'std'


@dataclass(frozen=True)
class GroupScaling:
    """Statistics applied to one channel group, one row per slice.

    For minmax ``first``/``second`` hold x_min/x_max, for standardize mu/sigma,
    for bounded groups 0/bound.
    """

    name: str
    kind: Taxonomy
    channels: Tuple[int, ...]
    first: np.ndarray
    second: np.ndarray
    degenerate: np.ndarray

    def to_dict(self, method: ScaleMethod) -> dict:
        labels = _stat_labels(self.kind, method)
        return {
            'name': self.name,
            'kind': self.kind.value,
            'channels': list(self.channels),
            labels[0]: self.first.tolist(),
            labels[1]: self.second.tolist(),
            'degenerate_slices': np.flatnonzero(self.degenerate).tolist(),
        }


@dataclass(frozen=True)
class SliceScalingMeta:
    """Everything needed to audit or invert a scaled tensor."""

    method: ScaleMethod
    feature_range: Tuple[float, float]
    groups: Tuple[GroupScaling, ...]
    ordering: str = 'slice_then_scale'
    warnings: Tuple[str, ...] = ()

    def group(self, name: str) -> GroupScaling:
        for group in self.groups:
            if group.name == name:
                return group
        raise KeyError(name)

    @classmethod
    def from_dict(cls, data: dict) -> 'SliceScalingMeta':
        """Rebuild metadata written by :meth:`to_dict`."""
        method = ScaleMethod(data['method'])
        groups = []
        for entry in data['groups']:
            kind = Taxonomy(entry['kind'])
            first, second = _stat_labels(kind, method)
            first_values = np.asarray(entry[first], dtype=np.float64)
            degenerate = np.zeros(len(first_values), dtype=bool)
            degenerate[np.asarray(entry['degenerate_slices'], dtype=np.int64)] = True
            groups.append(GroupScaling(
                name=entry['name'],
                kind=kind,
                channels=tuple(entry['channels']),
                first=first_values,
                second=np.asarray(entry[second], dtype=np.float64),
                degenerate=degenerate,
            ))
        return cls(
            method=method,
            feature_range=tuple(data['feature_range']),
            groups=tuple(groups),
            ordering=data.get('ordering', 'slice_then_scale'),
            warnings=tuple(data.get('warnings', ())),
        )

    def to_dict(self) -> dict:
        return {
            'method': self.method.value,
            'feature_range': list(self.feature_range),
            'ordering': self.ordering,
            'recommended': self.ordering == 'slice_then_scale',
            'groups': [group.to_dict(self.method) for group in self.groups],
            'warnings': list(self.warnings),
        }


def _resolve_groups(channel_names: Sequence[str], config: ScalerConfig) -> List[Tuple[str, Taxonomy, Tuple[int, ...], float]]:
    if not (config.overlaid or config.bounded or config.separate):
        config = ScalerConfig.infer(channel_names, config.method, config.feature_range)
    errors = config.partition_errors(channel_names)
    if errors:
        raise ScalingError("; ".join(errors))
    index = {name: i for i, name in enumerate(channel_names)}
    groups = []
    if config.overlaid:
        groups.append((OVERLAID_GROUP, Taxonomy.OVERLAID, tuple(index[n] for n in config.overlaid), 0.0))
    for name in config.separate:
        groups.append((name, Taxonomy.SEPARATE, (index[name],), 0.0))
    for name, bound in config.bounded.items():
        groups.append((name, Taxonomy.BOUNDED, (index[name],), bound))
    return groups


def _statistics(block: np.ndarray, method: ScaleMethod) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-slice statistics pooled over timesteps and channels of ``block`` (m, s, c).

    A slice is degenerate when every value in it is identical. Degenerate
    slices record the constant as their centre and a zero spread.
    """
    low, high = block.min(axis=(1, 2)), block.max(axis=(1, 2))
    degenerate = low == high
    if method is ScaleMethod.MINMAX:
        return low, high, degenerate
    mean = block.mean(axis=(1, 2))
    std = np.sqrt(((block - mean[:, None, None]) ** 2).mean(axis=(1, 2)))
    return np.where(degenerate, low, mean), np.where(degenerate, 0.0, std), degenerate


def _apply(block: np.ndarray, first: np.ndarray, second: np.ndarray, degenerate: np.ndarray,
           method: ScaleMethod, feature_range: Tuple[float, float]) -> np.ndarray:
    low, high = feature_range
    if method is ScaleMethod.MINMAX:
        safe = np.where(degenerate, 1.0, second - first)[:, None, None]
        scaled = (block - first[:, None, None]) / safe * (high - low) + low
        scaled[degenerate] = (low + high) / 2.0
    else:
        safe = np.where(degenerate, 1.0, second)[:, None, None]
        scaled = (block - first[:, None, None]) / safe
        scaled[degenerate] = 0.0
    return scaled


def _scale(data: np.ndarray, stats_source: np.ndarray, channel_names: Sequence[str],
           config: ScalerConfig) -> Tuple[np.ndarray, List[GroupScaling], List[str]]:
    """Scale ``data`` using per-slice statistics computed from ``stats_source``."""
    scaled = np.empty_like(data)
    group_meta, warnings = [], []
    for name, kind, columns, bound in _resolve_groups(channel_names, config):
        block = data[:, :, list(columns)]
        m = block.shape[0]
        if kind is Taxonomy.BOUNDED:
            scaled[:, :, list(columns)] = block / bound
            group_meta.append(GroupScaling(name, kind, columns, np.zeros(m), np.full(m, bound),
                                           np.zeros(m, dtype=bool)))
            continue
        first, second, degenerate = _statistics(stats_source[:, :, list(columns)], config.method)
        scaled[:, :, list(columns)] = _apply(block, first, second, degenerate, config.method,
                                             config.feature_range)
        if degenerate.any():
            count = int(degenerate.sum())
            message = f"group '{name}': {count} flat slice(s) filled with the neutral value"
            warnings.append(message)
            logger.warning(message)
        group_meta.append(GroupScaling(name, kind, columns, first, second, degenerate))
    return scaled, group_meta, warnings


def scale_slices(slices: SliceTensor, config: ScalerConfig) -> SliceTensor:
    """Scale every slice independently of all other slices.

    Args:
        slices: Unscaled tensor
        config: Method, range and group partition

    Returns:
        Scaled tensor carrying SliceScalingMeta

    Raises:
        ScalingError: Tensor already scaled or groups do not partition the channels
    """
    if slices.is_scaled:
        raise ScalingError("Tensor is already scaled")
    data, groups, warnings = _scale(slices.data, slices.data, slices.channel_names, config)
    meta = SliceScalingMeta(
        method=config.method,
        feature_range=config.feature_range,
        groups=tuple(groups),
        warnings=tuple(warnings),
    )
    logger.info(f"Scaled {len(slices)} slices with per-slice {config.method.value}")
    return slices.with_data(data, scaling_meta=meta)


def scale_then_slice(channels: Union[Mapping[str, Sequence[float]], Sequence[Sequence[float]]],
                     spec: SliceSpec, config: ScalerConfig, start: int = 0) -> SliceTensor:
    """Scale the whole series with one set of statistics, then slice.

    Kept to reproduce the comparison with slice-then-scale; the output is
    flagged as not recommended in its metadata.
    """
    logger.warning("scale_then_slice uses global statistics; slice-then-scale is recommended")
    unscaled = make_slices(channels, spec, start=start)
    source_length = unscaled.notes['source_length']
    # Global statistics over the full usable series, shaped as a single "slice"
    full = make_slices(channels, SliceSpec(lookback=source_length - start, channels=spec.channels),
                       start=start)
    data, groups, warnings = _scale(
        unscaled.data,
        np.broadcast_to(full.data, (len(unscaled),) + full.data.shape[1:]),
        unscaled.channel_names,
        config,
    )
    meta = SliceScalingMeta(
        method=config.method,
        feature_range=config.feature_range,
        groups=tuple(groups),
        ordering='scale_then_slice',
        warnings=tuple(warnings),
    )
    return unscaled.with_data(data, scaling_meta=meta, recommended=False)


def invert_scaling(slices: SliceTensor) -> SliceTensor:
    """Recover pre-scaling values from a scaled tensor.

    Raises:
        ScalingError: Tensor carries no scaling metadata
    """
    meta = slices.scaling_meta
    if meta is None:
        raise ScalingError("Cannot invert scaling: missing metadata")
    low, high = meta.feature_range
    data = np.empty_like(slices.data)
    for group in meta.groups:
        columns = list(group.channels)
        block = slices.data[:, :, columns]
        first = group.first[:, None, None]
        second = group.second[:, None, None]
        if group.kind is Taxonomy.BOUNDED:
            restored = block * second
        elif meta.method is ScaleMethod.MINMAX:
            restored = (block - low) / (high - low) * (second - first) + first
        else:
            restored = block * second + first
        restored[group.degenerate] = group.first[group.degenerate][:, None, None]
        data[:, :, columns] = restored
    return slices.with_data(data, scaling_meta=None)
