"""Train/validation/test partitioning of overlapping slices.

Slices are split into contiguous, temporally ordered blocks first and only
the training block is shuffled. An embargo of ``label_horizon`` slices at
each boundary keeps the label windows of different sets apart; this goes
beyond plain split-then-shuffle and is flagged in every serialized plan.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import SplitError
from .windowing import SliceSpec

logger = logging.getLogger(__name__)

SPLIT_THEN_SHUFFLE = 'split_then_shuffle'
SHUFFLE_THEN_SPLIT = 'shuffle_then_split'

Range = Tuple[int, int]


@dataclass(frozen=True)
class LeakageAudit:
    """Cross-set window overlap figures.

    Attributes:
        max_cross_overlap: Largest overlap fraction between a training slice
            and any validation/test slice
        mean_cross_overlap: Mean over held-out slices of their largest
            overlap with any training slice
        violating_pairs: (train, held-out) pairs sharing at least one bar
        label_overlap_pairs: (train, held-out) pairs whose label windows share bars
        cross_membership: Held-out slice indices that also appear in training
    """

    max_cross_overlap: float
    mean_cross_overlap: float
    violating_pairs: int
    label_overlap_pairs: int = 0
    cross_membership: int = 0

    def to_dict(self) -> dict:
        return {
            'max_cross_overlap': self.max_cross_overlap,
            'mean_cross_overlap': self.mean_cross_overlap,
            'violating_pairs': self.violating_pairs,
            'label_overlap_pairs': self.label_overlap_pairs,
            'cross_membership': self.cross_membership,
        }


@dataclass(frozen=True)
class SplitPlan:
    """Index assignment of K slices to train/validation/test."""

    count: int
    train_order: np.ndarray
    val_indices: np.ndarray
    test_indices: np.ndarray
    seed: int
    leakage: LeakageAudit
    method: str = SPLIT_THEN_SHUFFLE
    train_range: Optional[Range] = None
    val_range: Optional[Range] = None
    test_range: Optional[Range] = None
    embargo: int = 0
    embargo_gaps: Tuple[Range, ...] = field(default_factory=tuple)

    @property
    def train_indices(self) -> np.ndarray:
        """Training indices in ascending order."""
        return np.sort(self.train_order)

    @property
    def is_contiguous(self) -> bool:
        return self.method == SPLIT_THEN_SHUFFLE

    def sizes(self) -> dict:
        return {
            'train': int(len(self.train_order)),
            'val': int(len(self.val_indices)),
            'test': int(len(self.test_indices)),
            'embargoed': int(sum(stop - start for start, stop in self.embargo_gaps)),
        }

    def to_dict(self) -> dict:
        def as_list(r: Optional[Range]):
            return list(r) if r is not None else None

        payload = {
            'method': self.method,
            'count': self.count,
            'seed': self.seed,
            'train_range': as_list(self.train_range),
            'val_range': as_list(self.val_range),
            'test_range': as_list(self.test_range),
            'embargo': self.embargo,
            'embargo_gaps': [list(gap) for gap in self.embargo_gaps],
            'embargo_is_extension': True,
            'sizes': self.sizes(),
            'train_order': self.train_order.tolist(),
            'leakage': self.leakage.to_dict(),
        }
        if not self.is_contiguous:
            payload['val_indices'] = self.val_indices.tolist()
            payload['test_indices'] = self.test_indices.tolist()
        return payload


def _set_sizes(count: int, fractions: Sequence[float]) -> Tuple[int, int, int]:
    if len(fractions) != 3:
        raise SplitError(f"fractions must be a (train, val, test) triple, got {list(fractions)}")
    train, val, test = (float(f) for f in fractions)
    if min(train, val, test) < 0 or train <= 0:
        raise SplitError(f"fractions must be non-negative with a positive train share, got {list(fractions)}")
    if abs(train + val + test - 1.0) > 1e-9:
        raise SplitError(f"fractions must sum to 1, got {train + val + test}")
    if count < 3:
        raise SplitError(f"need at least 3 slices to split, got {count}")

    # round half up so sizes are deterministic and sum to K
    train_size = min(count, int(np.floor(count * train + 0.5)))
    val_size = min(count - train_size, int(np.floor(count * val + 0.5)))
    test_size = count - train_size - val_size
    for name, share, size in (('train', train, train_size), ('val', val, val_size), ('test', test, test_size)):
        if share > 0 and size == 0:
            raise SplitError(f"{count} slices too few for a non-empty {name} set")
    return train_size, val_size, test_size


def leakage_audit(train_indices: Sequence[int], held_out_indices: Sequence[int],
                  spec: SliceSpec, count: int) -> LeakageAudit:
    """Measure input-window and label-window overlap across sets.

    Every (train, held-out) pair whose windows can intersect is checked;
    pairs further apart than the lookback share no bars.

    Args:
        train_indices: Training slice indices
        held_out_indices: Validation and test slice indices
        spec: Slice geometry (lookback, stride, label horizon)
        count: Total number of slices K
    """
    held = np.asarray(held_out_indices, dtype=np.int64)
    if held.size == 0:
        return LeakageAudit(0.0, 0.0, 0)
    in_train = np.zeros(count, dtype=bool)
    in_train[np.asarray(train_indices, dtype=np.int64)] = True

    n, stride, horizon = spec.lookback, spec.stride, spec.label_horizon
    best = np.zeros(held.size)
    violating = 0
    label_pairs = 0
    reach = (n - 1) // stride
    label_reach = (horizon - 1) // stride if horizon > 0 else -1
    for offset in range(-max(reach, label_reach), max(reach, label_reach) + 1):
        neighbours = held + offset
        valid = (neighbours >= 0) & (neighbours < count)
        hits = np.zeros(held.size, dtype=bool)
        hits[valid] = in_train[neighbours[valid]]
        distance = abs(offset)
        if distance <= reach:
            overlap = (n - distance * stride) / n
            best = np.where(hits, np.maximum(best, overlap), best)
            violating += int(hits.sum())
        if distance <= label_reach:
            label_pairs += int(hits.sum())

    return LeakageAudit(
        max_cross_overlap=float(best.max()),
        mean_cross_overlap=float(best.mean()),
        violating_pairs=violating,
        label_overlap_pairs=label_pairs,
        cross_membership=int(in_train[held].sum()),
    )


def split_then_shuffle(count: int, fractions: Sequence[float], seed: int, spec: SliceSpec,
                       embargo: Optional[int] = None) -> SplitPlan:
    """Split contiguous blocks in temporal order, then shuffle training only.

    Args:
        count: Number of slices K
        fractions: (train, val, test) shares summing to 1
        seed: Seed of the training shuffle
        spec: Slice geometry used by the leakage audit
        embargo: Slices dropped before each boundary; None uses
            spec.label_horizon, 0 disables it

    Returns:
        SplitPlan with contiguous ranges and the shuffled training order
    """
    train_size, val_size, test_size = _set_sizes(count, fractions)
    embargo = spec.label_horizon if embargo is None else int(embargo)
    if embargo < 0:
        raise SplitError(f"embargo must be non-negative, got {embargo}")

    gaps: List[Range] = []
    train_stop = train_size
    if embargo and (val_size or test_size):
        train_stop = train_size - embargo
        gaps.append((train_stop, train_size))
    if train_stop <= 0:
        raise SplitError(f"embargo of {embargo} slices leaves no training data ({train_size} slices)")

    val_start = train_size
    val_stop = train_size + val_size
    if embargo and val_size and test_size:
        val_stop = max(val_start, val_stop - embargo)
        gaps.append((val_stop, train_size + val_size))
        if val_stop == val_start:
            raise SplitError(f"embargo of {embargo} slices leaves no validation data ({val_size} slices)")

    test_start = train_size + val_size
    rng = np.random.default_rng(seed)
    train_order = rng.permutation(np.arange(train_stop, dtype=np.int64))
    val_indices = np.arange(val_start, val_stop, dtype=np.int64)
    test_indices = np.arange(test_start, count, dtype=np.int64)

    audit = leakage_audit(train_order, np.concatenate([val_indices, test_indices]), spec, count)
    logger.info(
        f"Split {count} slices: train {train_stop}, val {len(val_indices)}, test {len(test_indices)}, "
        f"embargo {embargo} (max cross overlap {audit.max_cross_overlap:.2f})"
    )
    return SplitPlan(
        count=count,
        train_order=train_order,
        val_indices=val_indices,
        test_indices=test_indices,
        seed=seed,
        leakage=audit,
        method=SPLIT_THEN_SHUFFLE,
        train_range=(0, train_stop),
        val_range=(val_start, val_stop),
        test_range=(test_start, count),
        embargo=embargo,
        embargo_gaps=tuple(gaps),
    )


def shuffle_then_split(count: int, fractions: Sequence[float], seed: int, spec: SliceSpec) -> SplitPlan:
    """Shuffle all slices, then split.

    This is the leaky ordering; it exists to demonstrate the overlap it
    produces between training and held-out slices.
    """
    train_size, val_size, _ = _set_sizes(count, fractions)
    rng = np.random.default_rng(seed)
    order = rng.permutation(np.arange(count, dtype=np.int64))
    train_order = order[:train_size]
    val_indices = np.sort(order[train_size:train_size + val_size])
    test_indices = np.sort(order[train_size + val_size:])

    audit = leakage_audit(train_order, np.concatenate([val_indices, test_indices]), spec, count)
    logger.warning(
        f"shuffle_then_split: mean cross-set overlap {audit.mean_cross_overlap:.2f}, "
        f"{audit.violating_pairs} overlapping pairs"
    )
    return SplitPlan(
        count=count,
        train_order=train_order,
        val_indices=val_indices,
        test_indices=test_indices,
        seed=seed,
        leakage=audit,
        method=SHUFFLE_THEN_SPLIT,
    )


def downsample_majority(labels, train_indices: Sequence[int], seed: int) -> np.ndarray:
    """Reduce every class in the training set to the minority-class count.

    Args:
        labels: Classifier LabelVector covering all slices
        train_indices: Training slice indices (order is preserved)
        seed: Sampling seed

    Returns:
        Reduced training indices, in their original order

    Raises:
        SplitError: Regression labels, fewer than 2 classes, or an empty class
    """
    if not labels.is_classifier:
        raise SplitError(f"Cannot balance regression labels ({labels.family.value})")
    class_count = labels.class_count
    if class_count < 2:
        raise SplitError("Balancing needs at least 2 classes")

    train = np.asarray(train_indices, dtype=np.int64)
    train_labels = np.asarray(labels.values)[train].astype(np.int64)
    counts = np.bincount(train_labels, minlength=class_count)
    empty = [str(c) for c in range(class_count) if counts[c] == 0]
    if empty:
        raise SplitError(f"Training set has no members of class(es) {', '.join(empty)}")

    target = int(counts.min())
    rng = np.random.default_rng(seed)
    keep = np.zeros(len(train), dtype=bool)
    for cls in range(class_count):
        members = np.flatnonzero(train_labels == cls)
        keep[rng.choice(members, size=target, replace=False)] = True

    logger.info(f"Downsampled training set from {len(train)} to {int(keep.sum())} ({target} per class)")
    return train[keep]
