"""Overlapping slice datasets built from aligned feature channels."""

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError, SeriesTooShortError, UndefinedValuesError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SliceSpec:
    """How slices are cut from the source channels.

    Attributes:
        lookback: Bars per slice (n > 1)
        stride: Increment between slice starts
        channels: Ordered channel names
        label_horizon: Bars reserved after each slice for labeling
    """

    lookback: int
    stride: int = 1
    channels: Tuple[str, ...] = ('close',)
    label_horizon: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'channels', tuple(self.channels))
        if self.lookback <= 1:
            raise DataError(f"lookback must be > 1, got {self.lookback}")
        if self.stride < 1:
            raise DataError(f"stride must be >= 1, got {self.stride}")
        if self.label_horizon < 0:
            raise DataError(f"label_horizon must be >= 0, got {self.label_horizon}")
        if not self.channels:
            raise DataError("at least one channel is required")

    def slice_count(self, length: int, start: int = 0) -> int:
        """Number of slices K for a source of the given length."""
        usable = length - start - self.lookback - self.label_horizon
        return usable // self.stride + 1 if usable >= 0 else 0


@dataclass(frozen=True)
class SliceTensor:
    """K slices x n timesteps x i channels, with per-slice provenance."""

    data: np.ndarray
    end_indices: np.ndarray
    channel_names: Tuple[str, ...]
    stride: int = 1
    scaling_meta: Optional[Any] = None
    notes: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, 'channel_names', tuple(self.channel_names))
        if self.data.ndim != 3:
            raise DataError(f"Slice data must be 3-D (m, s, i), got shape {self.data.shape}")
        if self.data.shape[0] != len(self.end_indices):
            raise DataError(
                f"Slice count {self.data.shape[0]} does not match {len(self.end_indices)} end indices"
            )
        if self.data.shape[2] != len(self.channel_names):
            raise DataError(
                f"Channel axis {self.data.shape[2]} does not match {len(self.channel_names)} channel names"
            )
        gaps = np.diff(self.end_indices)
        if gaps.size and not np.all(gaps == self.stride):
            raise DataError("end indices must increase by exactly the stride")
        self.data.setflags(write=False)
        self.end_indices.setflags(write=False)

    def __len__(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> Tuple[int, int, int]:
        return tuple(self.data.shape)

    @property
    def lookback(self) -> int:
        return self.data.shape[1]

    @property
    def start_indices(self) -> np.ndarray:
        return self.end_indices - (self.lookback - 1)

    @property
    def is_scaled(self) -> bool:
        return self.scaling_meta is not None

    def channel_index(self, channel: Union[int, str]) -> int:
        """Resolve a channel name or index to an index."""
        if isinstance(channel, str):
            if channel not in self.channel_names:
                raise DataError(f"Unknown channel '{channel}'. Available: {', '.join(self.channel_names)}")
            return self.channel_names.index(channel)
        if not 0 <= channel < len(self.channel_names):
            raise DataError(f"Channel index {channel} out of range 0..{len(self.channel_names) - 1}")
        return int(channel)

    def with_data(self, data: np.ndarray, scaling_meta: Optional[Any] = None, **notes) -> 'SliceTensor':
        """Copy of this tensor with new values and scaling metadata."""
        merged = dict(self.notes)
        merged.update(notes)
        return replace(self, data=data, scaling_meta=scaling_meta, notes=merged,
                       end_indices=self.end_indices.copy())


def _stack_channels(channels: Union[Mapping[str, Sequence[float]], Sequence[Sequence[float]]],
                    names: Sequence[str]) -> np.ndarray:
    if isinstance(channels, Mapping):
        missing = [name for name in names if name not in channels]
        if missing:
            raise DataError(f"Channels not provided: {', '.join(missing)}")
        columns = [np.asarray(channels[name], dtype=np.float64) for name in names]
    else:
        columns = [np.asarray(values, dtype=np.float64) for values in channels]
        if len(columns) != len(names):
            raise DataError(f"Got {len(columns)} channels for {len(names)} channel names")
    lengths = {len(column) for column in columns}
    if len(lengths) != 1:
        raise DataError(f"Channel length mismatch: {sorted(lengths)}")
    return np.column_stack(columns)


def warmup_length(channels: Union[Mapping[str, Sequence[float]], Sequence[Sequence[float]]],
                  names: Optional[Sequence[str]] = None) -> int:
    """Index of the first bar where every channel is defined."""
    if isinstance(channels, Mapping):
        names = list(names or channels.keys())
    else:
        names = list(names or range(len(channels)))
    source = _stack_channels(channels, names)
    defined = np.flatnonzero(~np.isnan(source).any(axis=1))
    return int(defined[0]) if defined.size else len(source)


def make_slices(channels: Union[Mapping[str, Sequence[float]], Sequence[Sequence[float]]],
                spec: SliceSpec, start: int = 0) -> SliceTensor:
    """Cut aligned channels into overlapping slices.

    Slice k covers source indices [start + k*stride, start + k*stride + n - 1].
    The last ``label_horizon`` bars are never covered so every slice has a
    full future window.

    Args:
        channels: Mapping of channel name to values, or a sequence ordered as
            ``spec.channels``
        spec: Slice geometry
        start: First source index eligible for slicing

    Returns:
        Unscaled SliceTensor

    Raises:
        DataError: Channel length mismatch
        SeriesTooShortError: Fewer than n + label_horizon usable bars
        UndefinedValuesError: An emitted slice touches an undefined value
    """
    source = _stack_channels(channels, spec.channels)
    length = len(source)
    if start < 0:
        raise DataError(f"start must be non-negative, got {start}")
    count = spec.slice_count(length, start)
    if count <= 0:
        raise SeriesTooShortError(
            length - start, spec.lookback + spec.label_horizon, what="slicing source"
        )

    last_covered = start + (count - 1) * spec.stride + spec.lookback
    covered = source[start:last_covered]
    if np.isnan(covered).any():
        first_bad = start + int(np.flatnonzero(np.isnan(covered).any(axis=1))[0])
        raise UndefinedValuesError(
            f"Undefined value at source index {first_bad} inside the sliced range "
            f"[{start}, {last_covered - 1}]"
        )

    # sliding_window_view gives (windows, channels, lookback); reorder to (m, s, i)
    windows = sliding_window_view(covered, spec.lookback, axis=0)[::spec.stride]
    data = np.ascontiguousarray(np.transpose(windows, (0, 2, 1)))
    end_indices = start + np.arange(count) * spec.stride + spec.lookback - 1

    logger.info(
        f"Built {count} slices of {spec.lookback} bars x {len(spec.channels)} channels "
        f"(stride {spec.stride}, horizon {spec.label_horizon})"
    )
    return SliceTensor(
        data=data,
        end_indices=end_indices.astype(np.int64),
        channel_names=spec.channels,
        stride=spec.stride,
        notes={'source_length': length, 'label_horizon': spec.label_horizon},
    )


def flatten(slices: SliceTensor) -> np.ndarray:
    """Reshape (m, s, i) to (m, s*i), timestep-major with channels interleaved."""
    m, s, i = slices.shape
    return slices.data.reshape(m, s * i).copy()


def unflatten(flat: np.ndarray, lookback: int, channel_count: int) -> np.ndarray:
    """Inverse of :func:`flatten` on the raw array."""
    flat = np.asarray(flat)
    if flat.ndim != 2 or flat.shape[1] != lookback * channel_count:
        raise DataError(f"Cannot reshape {flat.shape} into (m, {lookback}, {channel_count})")
    return flat.reshape(flat.shape[0], lookback, channel_count)


def slice_overlap_fraction(a: int, b: int, spec: SliceSpec, count: Optional[int] = None) -> float:
    """Fraction of source bars two slices share.

    Args:
        a: First slice index
        b: Second slice index
        spec: Slice geometry (lookback and stride)
        count: Number of slices, to validate the indices against

    Returns:
        |shared source indices| / n
    """
    for index in (a, b):
        if index < 0 or (count is not None and index >= count):
            raise DataError(f"Invalid slice index {index}")
    offset = abs(a - b) * spec.stride
    return max(0, spec.lookback - offset) / spec.lookback
