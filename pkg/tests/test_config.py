import pytest
import yaml

from tslab.config import PipelineConfig, get_config, validate_config
from tslab.errors import ConfigError
from tslab.indicators import Taxonomy
from tslab.scaling import ScaleMethod


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in ('TSLAB_SEED', 'TSLAB_OUTPUT_DIR', 'TSLAB_LOG_LEVEL'):
        monkeypatch.delenv(name, raising=False)


def write_config(tmp_path, data, name="tslab.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return path


def test_defaults_are_valid():
    config = PipelineConfig()

    assert config.validate() == []
    assert config.seed == 42
    assert config.slice_spec.lookback == 20
    assert config.embargo is None
    assert config.scaler_config.method is ScaleMethod.MINMAX


def test_file_values_overlay_defaults(tmp_path):
    path = write_config(tmp_path, {'slicing': {'lookback': 30}, 'split': {'seed': 7}})

    config = get_config(str(path))

    assert config.get('slicing.lookback') == 30
    assert config.get('slicing.stride') == 1
    assert config.seed == 7


def test_get_and_set_dot_notation():
    config = PipelineConfig()

    config.set('probe.epochs', 5)
    config.set('extra.section.value', 'x')

    assert config.get('probe.epochs') == 5
    assert config.get('extra.section.value') == 'x'
    assert config.get('missing.key', 'fallback') == 'fallback'


def test_fractions_must_sum_to_one():
    config = PipelineConfig(data={'split': {'fractions': [0.8, 0.2, 0.1]}})

    errors = config.validate()

    assert any('fractions' in e for e in errors)
    with pytest.raises(ConfigError) as excinfo:
        config.require_valid()
    assert excinfo.value.exit_code == 1


def test_unknown_scaling_method():
    errors = PipelineConfig(data={'scaling': {'method': 'robust'}}).validate()

    assert any('method' in e for e in errors)


def test_label_horizon_must_fit_reserved_window():
    errors = PipelineConfig(data={'labels': {'horizon': 5}}).validate()

    assert any('exceeds slicing.label_horizon' in e for e in errors)


def test_channel_and_indicator_errors():
    errors = PipelineConfig(data={
        'indicators': [{'name': 'macd', 'period': 12}, {'name': 'sma', 'period': 0}],
        'slicing': {'channels': ['close', 'sma20', 'close']},
    }).validate()

    joined = "\n".join(errors)
    assert "indicators[0].name 'macd' unknown" in joined
    assert "indicators[1].period" in joined
    assert "unknown channels: sma20" in joined
    assert "duplicates" in joined


def test_regression_labels_cannot_be_balanced_or_probed():
    errors = PipelineConfig(data={
        'labels': {'family': 'pctq'},
        'balance': True,
        'probe': {'enabled': True},
    }).validate()

    assert any(e.startswith('balance requires') for e in errors)
    assert any(e.startswith('probe requires') for e in errors)


def test_invalid_qclass_thresholds():
    errors = PipelineConfig(data={'labels': {'qclass': [0.3, 0.5]}}).validate()

    assert any(e.startswith('labels.qclass') for e in errors)


def test_scaling_groups_must_partition_channels():
    errors = PipelineConfig(data={
        'slicing': {'channels': ['close', 'volume']},
        'scaling': {'groups': {'overlaid': ['close']}},
    }).validate()

    assert any('without a scaling group' in e for e in errors)


def test_inferred_scaler_groups_follow_taxonomy():
    config = PipelineConfig(data={
        'indicators': [{'name': 'sma', 'period': 5}, {'name': 'rsi', 'period': 14}],
        'slicing': {'channels': ['close', 'sma5', 'rsi14', 'volume']},
    })

    scaler = config.scaler_config

    assert config.validate() == []
    assert scaler.overlaid == ('close', 'sma5')
    assert scaler.bounded == {'rsi14': 100.0}
    assert scaler.separate == ('volume',)
    assert config.channel_taxonomy['rsi14'] == (Taxonomy.BOUNDED, 100.0)


def test_save_and_reload(tmp_path):
    config = PipelineConfig(data={'slicing': {'lookback': 12}, 'split': {'embargo': 3}})

    path = config.save(tmp_path / "saved" / "config.yaml")
    reloaded = PipelineConfig(str(path))

    assert reloaded.to_dict() == config.to_dict()
    assert reloaded.embargo == 3
    with pytest.raises(ConfigError):
        PipelineConfig().save()


def test_missing_and_malformed_files(tmp_path):
    broken = tmp_path / "broken.yaml"
    broken.write_text("slicing: [unclosed\n")
    listing = tmp_path / "list.yaml"
    listing.write_text("- a\n- b\n")

    with pytest.raises(ConfigError):
        PipelineConfig(str(tmp_path / "absent.yaml"))
    assert validate_config(broken)[0].startswith("config file is not valid YAML")
    assert validate_config(listing) == ["config file must contain a mapping at the top level"]


def test_environment_overrides(monkeypatch, tmp_path):
    monkeypatch.setenv('TSLAB_SEED', '99')
    monkeypatch.setenv('TSLAB_OUTPUT_DIR', str(tmp_path / "out"))
    monkeypatch.setenv('TSLAB_LOG_LEVEL', 'debug')

    config = PipelineConfig()

    assert config.seed == 99
    assert config.output_dir == tmp_path / "out"
    assert config.log_level == 'DEBUG'
    assert config.to_dict()['split']['seed'] == 99


def test_bad_seed_environment(monkeypatch):
    monkeypatch.setenv('TSLAB_SEED', 'abc')

    with pytest.raises(ConfigError):
        PipelineConfig()


def test_bad_log_level():
    errors = PipelineConfig(data={'logging': {'level': 'LOUD'}}).validate()

    assert any(e.startswith('logging.level') for e in errors)
