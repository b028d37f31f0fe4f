"""Write datasets, labels, splits and probe reports to disk."""

import hashlib
import json
import logging
from datetime import date, datetime
from enum import Enum
from pathlib import Path
from typing import Any, List, Optional, Union

import numpy as np
import pandas as pd

from .errors import DataError
from .labeling import LabelFamily, LabelVector
from .probe import ProbeReport
from .scaling import SliceScalingMeta
from .splitting import SplitPlan
from .windowing import SliceTensor, flatten

logger = logging.getLogger(__name__)

BLOB_DTYPE = '<f8'


def json_default(obj: Any):
    """JSON serializer for objects not serializable by default json code.

    Args:
        obj: Object to serialize

    Returns:
        Serializable representation
    """
    if isinstance(obj, (datetime, date)):
        return obj.isoformat()
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"Type {type(obj).__name__} not serializable")


def file_digest(path: Union[str, Path]) -> str:
    """SHA-256 hex digest of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()


def read_json(path: Union[str, Path]) -> dict:
    try:
        with open(path, 'r') as f:
            return json.load(f)
    except FileNotFoundError:
        raise DataError(f"File not found: {path}")
    except json.JSONDecodeError as e:
        raise DataError(f"{path} is not valid JSON: {e}")


class DatasetExporter:
    """Write pipeline artifacts into one output directory.

    Every file written is remembered so a failed run can remove its partial
    outputs with :meth:`cleanup`.
    """

    def __init__(self, output_dir: Union[str, Path]):
        """Initialize exporter.

        Args:
            output_dir: Directory for all artifacts
        """
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.written: List[Path] = []

    def _target(self, name: str) -> Path:
        path = self.output_dir / name
        self.written.append(path)
        return path

    def write_json(self, name: str, payload: Any) -> Path:
        """Write a JSON document with sorted keys so reruns are byte-identical."""
        path = self._target(name)
        with open(path, 'w') as f:
            json.dump(payload, f, indent=2, sort_keys=True, default=json_default)
            f.write('\n')
        logger.debug(f"Wrote {path}")
        return path

    def export_tensor(self, slices: SliceTensor, stem: str = 'tensor') -> Path:
        """Write the raw blob and its metadata document.

        The blob is little-endian float64 in row-major (m, s, i) order.

        Returns:
            Path of the metadata JSON
        """
        blob_path = self._target(f"{stem}.bin")
        blob_path.write_bytes(np.ascontiguousarray(slices.data, dtype=BLOB_DTYPE).tobytes(order='C'))
        metadata = {
            'blob': blob_path.name,
            'blob_sha256': file_digest(blob_path),
            'dtype': BLOB_DTYPE,
            'order': 'C',
            'shape': list(slices.shape),
            'channel_names': list(slices.channel_names),
            'stride': slices.stride,
            'end_indices': slices.end_indices.tolist(),
            'scaling': slices.scaling_meta.to_dict() if slices.scaling_meta is not None else None,
            'notes': dict(slices.notes),
        }
        meta_path = self.write_json(f"{stem}.json", metadata)
        size = blob_path.stat().st_size / (1024 * 1024)
        logger.info(f"Exported tensor {tuple(slices.shape)} to {blob_path} ({size:.2f} MB)")
        return meta_path

    def export_flat_csv(self, slices: SliceTensor, name: str = 'tensor_flat.csv') -> Path:
        """Flattened (m, s*i) matrix with one row per slice."""
        _, lookback, _ = slices.shape
        columns = [f"t{step}_{channel}" for step in range(lookback) for channel in slices.channel_names]
        frame = pd.DataFrame(flatten(slices), columns=columns)
        frame.insert(0, 'end_index', slices.end_indices)
        path = self._target(name)
        frame.to_csv(path, index=False, float_format='%.17g')
        return path

    def export_labels(self, labels: LabelVector, stem: str = 'labels') -> Path:
        """Labels CSV (end_index, value) plus a metadata JSON.

        Returns:
            Path of the CSV file
        """
        frame = pd.DataFrame({'end_index': labels.end_indices, 'value': labels.values})
        path = self._target(f"{stem}.csv")
        frame.to_csv(path, index=False, float_format='%.17g')
        self.write_json(f"{stem}.json", labels.to_dict())
        logger.info(f"Exported {len(labels)} {labels.family.value} labels to {path}")
        return path

    def export_split(self, plan: SplitPlan, train_indices: Optional[np.ndarray] = None,
                     name: str = 'split.json') -> Path:
        payload = plan.to_dict()
        if train_indices is not None:
            payload['balanced_train_indices'] = np.asarray(train_indices).tolist()
        return self.write_json(name, payload)

    def export_probe_report(self, report: ProbeReport, stem: str = 'probe') -> Path:
        """Report JSON plus a per-epoch loss CSV for plotting.

        Returns:
            Path of the report JSON
        """
        frame = pd.DataFrame(report.loss_rows(), columns=['epoch', 'train_loss', 'val_loss'])
        frame.to_csv(self._target(f"{stem}_losses.csv"), index=False, float_format='%.17g')
        return self.write_json(f"{stem}.json", report.to_dict())

    def cleanup(self):
        """Remove every file this exporter wrote."""
        for path in self.written:
            try:
                path.unlink()
                logger.info(f"Removed partial output {path}")
            except FileNotFoundError:
                pass
        self.written = []


def load_tensor(meta_path: Union[str, Path]) -> SliceTensor:
    """Read a tensor written by :meth:`DatasetExporter.export_tensor`.

    Raises:
        DataError: Missing blob, digest mismatch or wrong blob size
    """
    meta_path = Path(meta_path)
    metadata = read_json(meta_path)
    blob_path = meta_path.parent / metadata['blob']
    if not blob_path.exists():
        raise DataError(f"Tensor blob not found: {blob_path}")
    if metadata.get('blob_sha256') and file_digest(blob_path) != metadata['blob_sha256']:
        raise DataError(f"Tensor blob {blob_path} does not match its recorded digest")
    shape = tuple(metadata['shape'])
    raw = np.frombuffer(blob_path.read_bytes(), dtype=metadata.get('dtype', BLOB_DTYPE))
    if raw.size != int(np.prod(shape)):
        raise DataError(f"Tensor blob holds {raw.size} values, metadata shape {shape} needs {int(np.prod(shape))}")
    scaling = metadata.get('scaling')
    return SliceTensor(
        data=raw.astype(np.float64).reshape(shape),
        end_indices=np.asarray(metadata['end_indices'], dtype=np.int64),
        channel_names=tuple(metadata['channel_names']),
        stride=int(metadata['stride']),
        scaling_meta=SliceScalingMeta.from_dict(scaling) if scaling else None,
        notes=dict(metadata.get('notes') or {}),
    )


def load_labels(csv_path: Union[str, Path]) -> LabelVector:
    """Read labels written by :meth:`DatasetExporter.export_labels`."""
    csv_path = Path(csv_path)
    metadata = read_json(csv_path.with_suffix('.json'))
    try:
        frame = pd.read_csv(csv_path, float_precision='round_trip')
    except FileNotFoundError:
        raise DataError(f"File not found: {csv_path}")
    family = LabelFamily(metadata['family'])
    values = frame['value'].to_numpy()
    values = values.astype(np.int64) if metadata.get('class_count') else values.astype(np.float64)
    return LabelVector(
        family=family,
        horizon=int(metadata['horizon']),
        values=values,
        end_indices=frame['end_index'].to_numpy(dtype=np.int64),
        params=dict(metadata.get('params') or {}),
        warnings=tuple(metadata.get('warnings') or ()),
    )
