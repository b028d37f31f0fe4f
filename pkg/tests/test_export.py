import json

import numpy as np
import pandas as pd
import pytest

from tslab.errors import DataError
from tslab.export import DatasetExporter, file_digest, load_labels, load_tensor
from tslab.labeling import label_nbar, label_pctq
from tslab.scaling import ScalerConfig, scale_slices
from tslab.splitting import split_then_shuffle
from tslab.windowing import SliceSpec, make_slices


@pytest.fixture
def scaled(random_walk):
    closes = random_walk(120, seed=1)
    volume = np.linspace(1000.0, 5000.0, 120)
    slices = make_slices({'close': closes, 'volume': volume},
                         SliceSpec(lookback=10, stride=2, channels=('close', 'volume'), label_horizon=1))
    return scale_slices(slices, ScalerConfig.infer(slices.channel_names, 'standardize'))


def test_tensor_round_trip(tmp_path, scaled):
    exporter = DatasetExporter(tmp_path)

    meta_path = exporter.export_tensor(scaled)
    loaded = load_tensor(meta_path)

    assert np.array_equal(loaded.data, scaled.data)
    assert np.array_equal(loaded.end_indices, scaled.end_indices)
    assert loaded.channel_names == ('close', 'volume')
    assert loaded.stride == 2
    assert loaded.scaling_meta.to_dict() == scaled.scaling_meta.to_dict()
    assert (tmp_path / "tensor.bin").stat().st_size == scaled.data.size * 8


def test_tensor_metadata_describes_blob(tmp_path, scaled):
    meta_path = DatasetExporter(tmp_path).export_tensor(scaled)

    metadata = json.loads(meta_path.read_text())

    assert metadata['dtype'] == '<f8'
    assert metadata['order'] == 'C'
    assert metadata['shape'] == list(scaled.shape)
    assert metadata['blob_sha256'] == file_digest(tmp_path / "tensor.bin")
    assert metadata['scaling']['method'] == 'standardize'
    assert meta_path.read_text().endswith('\n')


def test_corrupted_blob_detected(tmp_path, scaled):
    meta_path = DatasetExporter(tmp_path).export_tensor(scaled)
    blob = tmp_path / "tensor.bin"
    blob.write_bytes(blob.read_bytes()[:-8])

    with pytest.raises(DataError, match='digest'):
        load_tensor(meta_path)
    blob.unlink()
    with pytest.raises(DataError, match='not found'):
        load_tensor(meta_path)


def test_flat_csv_columns(tmp_path, scaled):
    path = DatasetExporter(tmp_path).export_flat_csv(scaled)

    frame = pd.read_csv(path)

    assert list(frame.columns[:5]) == ['end_index', 't0_close', 't0_volume', 't1_close', 't1_volume']
    assert frame.shape == (len(scaled), 1 + 10 * 2)
    np.testing.assert_allclose(frame['t9_close'], scaled.data[:, 9, 0])


def test_labels_round_trip(tmp_path, random_walk):
    closes = random_walk(50, seed=2)
    exporter = DatasetExporter(tmp_path)
    classes = label_nbar(closes, np.arange(10, 40), 3)
    quantiles = label_pctq(None, None, closes, np.arange(10, 40), 3)

    loaded_classes = load_labels(exporter.export_labels(classes))
    loaded_quantiles = load_labels(exporter.export_labels(quantiles, stem='pctq'))

    assert np.array_equal(loaded_classes.values, classes.values)
    assert loaded_classes.values.dtype == np.int64
    assert np.array_equal(loaded_quantiles.values, quantiles.values)
    assert loaded_quantiles.warnings == quantiles.warnings
    assert np.array_equal(loaded_quantiles.end_indices, quantiles.end_indices)


def test_split_export_lists_balanced_indices(tmp_path):
    plan = split_then_shuffle(50, (0.8, 0.2, 0.0), seed=0, spec=SliceSpec(lookback=5))

    path = DatasetExporter(tmp_path).export_split(plan, train_indices=np.array([3, 1, 2]))

    payload = json.loads(path.read_text())
    assert payload['balanced_train_indices'] == [3, 1, 2]
    assert payload['train_range'] == [0, 40]
    assert 'val_indices' not in payload


def test_cleanup_removes_written_files(tmp_path, scaled):
    exporter = DatasetExporter(tmp_path)
    exporter.export_tensor(scaled)
    exporter.write_json('extra.json', {'a': 1})

    exporter.cleanup()

    assert list(tmp_path.iterdir()) == []
    assert exporter.written == []


def test_reexport_is_byte_identical(tmp_path, scaled):
    first = DatasetExporter(tmp_path / "a").export_tensor(scaled)
    second = DatasetExporter(tmp_path / "b").export_tensor(scaled)

    assert first.read_bytes() == second.read_bytes()
    assert (tmp_path / "a" / "tensor.bin").read_bytes() == (tmp_path / "b" / "tensor.bin").read_bytes()
