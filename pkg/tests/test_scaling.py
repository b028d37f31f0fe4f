import numpy as np
import pytest

from tslab.errors import ScalingError
from tslab.indicators import INDICATOR_TAXONOMY, Taxonomy, rsi, sma
from tslab.scaling import (
    ScalerConfig,
    ScaleMethod,
    SliceScalingMeta,
    invert_scaling,
    scale_slices,
    scale_then_slice,
)
from tslab.windowing import SliceSpec, make_slices


def _close_slices(random_walk, length=300, lookback=20, seed=1):
    return make_slices({'close': random_walk(length, seed=seed)}, SliceSpec(lookback=lookback))


def test_minmax_hits_range_exactly(random_walk):
    slices = _close_slices(random_walk)

    scaled = scale_slices(slices, ScalerConfig(method='minmax', feature_range=(-1.0, 1.0)))

    assert np.allclose(scaled.data.min(axis=(1, 2)), -1.0)
    assert np.allclose(scaled.data.max(axis=(1, 2)), 1.0)
    assert scaled.scaling_meta.method is ScaleMethod.MINMAX
    assert scaled.scaling_meta.to_dict()['recommended'] is True


def test_standardize_moments(random_walk):
    slices = _close_slices(random_walk, seed=2)

    scaled = scale_slices(slices, ScalerConfig(method='standardize'))

    np.testing.assert_allclose(scaled.data.mean(axis=(1, 2)), 0.0, atol=1e-9)
    np.testing.assert_allclose(scaled.data.var(axis=(1, 2)), 1.0, rtol=1e-9)


def test_slices_scaled_independently(random_walk):
    slices = _close_slices(random_walk, seed=3)
    config = ScalerConfig()

    full = scale_slices(slices, config)
    single = scale_slices(
        make_slices({'close': slices.data[5, :, 0]}, SliceSpec(lookback=20)), config
    )

    np.testing.assert_allclose(full.data[5], single.data[0])


@pytest.mark.parametrize('method', ['minmax', 'standardize'])
def test_order_preserved_and_invertible(random_walk, method):
    slices = _close_slices(random_walk, seed=4)

    scaled = scale_slices(slices, ScalerConfig(method=method))
    restored = invert_scaling(scaled)

    for k in range(0, len(slices), 37):
        assert np.array_equal(np.argsort(slices.data[k, :, 0], kind='stable'),
                              np.argsort(scaled.data[k, :, 0], kind='stable'))
    np.testing.assert_allclose(restored.data, slices.data, atol=1e-9)
    assert restored.scaling_meta is None


def test_overlaid_group_keeps_relative_position(random_walk):
    closes = random_walk(200, seed=5)
    average = sma(closes, 5).values
    channels = {'close': closes, 'sma5': average}
    slices = make_slices(channels, SliceSpec(lookback=20, channels=('close', 'sma5')), start=4)

    config = ScalerConfig.infer(slices.channel_names, taxonomy={'sma5': INDICATOR_TAXONOMY['sma']})
    scaled = scale_slices(slices, config)

    assert config.overlaid == ('close', 'sma5')
    above_before = slices.data[:, :, 0] > slices.data[:, :, 1]
    above_after = scaled.data[:, :, 0] > scaled.data[:, :, 1]
    assert np.array_equal(above_before, above_after)
    assert np.allclose(scaled.data.min(axis=(1, 2)), 0.0)


def test_bounded_channel_divided_by_bound(random_walk):
    closes = random_walk(200, seed=6)
    strength = rsi(closes, 14).values
    channels = {'close': closes, 'rsi14': strength}
    slices = make_slices(channels, SliceSpec(lookback=10, channels=('close', 'rsi14')), start=14)

    config = ScalerConfig.infer(slices.channel_names, taxonomy={'rsi14': (Taxonomy.BOUNDED, 100.0)})
    scaled = scale_slices(slices, config)

    np.testing.assert_allclose(scaled.data[:, :, 1], slices.data[:, :, 1] / 100.0)
    group = scaled.scaling_meta.group('rsi14')
    assert group.kind is Taxonomy.BOUNDED
    assert 'bound' in group.to_dict(ScaleMethod.MINMAX)


def test_separate_channels_get_own_statistics(random_walk):
    closes = random_walk(100, seed=7)
    volume = np.linspace(1e6, 2e6, 100)
    slices = make_slices({'close': closes, 'volume': volume},
                         SliceSpec(lookback=10, channels=('close', 'volume')))

    scaled = scale_slices(slices, ScalerConfig.infer(slices.channel_names))

    for column in (0, 1):
        assert np.allclose(scaled.data[:, :, column].min(axis=1), 0.0)
        assert np.allclose(scaled.data[:, :, column].max(axis=1), 1.0)


@pytest.mark.parametrize('method,neutral', [('minmax', 0.5), ('standardize', 0.0)])
def test_flat_slices_get_neutral_value(method, neutral):
    closes = np.concatenate([np.full(10, 5.0), np.arange(1.0, 11.0)])
    slices = make_slices({'close': closes}, SliceSpec(lookback=10))

    scaled = scale_slices(slices, ScalerConfig(method=method))

    np.testing.assert_array_equal(scaled.data[0], neutral)
    assert scaled.scaling_meta.groups[0].degenerate[0]
    assert not scaled.scaling_meta.groups[0].degenerate[1:].any()
    assert scaled.scaling_meta.warnings
    np.testing.assert_allclose(invert_scaling(scaled).data, slices.data)


def test_partition_errors():
    slices = make_slices({'close': np.arange(30.0), 'volume': np.arange(30.0)},
                         SliceSpec(lookback=5, channels=('close', 'volume')))

    with pytest.raises(ScalingError, match='without a scaling group'):
        scale_slices(slices, ScalerConfig(overlaid=('close',)))
    with pytest.raises(ScalingError, match='more than one group'):
        scale_slices(slices, ScalerConfig(overlaid=('close', 'volume'), separate=('volume',)))


def test_config_validation():
    with pytest.raises(ScalingError):
        ScalerConfig(feature_range=(1.0, 0.0))
    with pytest.raises(ScalingError):
        ScalerConfig(bounded={'rsi14': 0.0})
    with pytest.raises(ValueError):
        ScalerConfig(method='robust')


def test_double_scaling_rejected(random_walk):
    scaled = scale_slices(_close_slices(random_walk), ScalerConfig())

    with pytest.raises(ScalingError):
        scale_slices(scaled, ScalerConfig())
    with pytest.raises(ScalingError):
        invert_scaling(_close_slices(random_walk))


def test_scale_then_slice_is_flagged(random_walk):
    closes = random_walk(300, seed=8)

    global_scaled = scale_then_slice({'close': closes}, SliceSpec(lookback=20), ScalerConfig())

    assert global_scaled.scaling_meta.ordering == 'scale_then_slice'
    assert global_scaled.scaling_meta.to_dict()['recommended'] is False
    assert global_scaled.notes['recommended'] is False
    assert global_scaled.data.min() == pytest.approx(0.0)
    assert global_scaled.data.max() == pytest.approx(1.0)
    # Global statistics leave most slices short of the full range
    spans = global_scaled.data.max(axis=(1, 2)) - global_scaled.data.min(axis=(1, 2))
    assert np.median(spans) < 1.0


@pytest.mark.parametrize('method', ['minmax', 'standardize'])
def test_metadata_round_trip(random_walk, method):
    closes = random_walk(120, seed=9)
    channels = {'close': closes, 'rsi14': rsi(closes, 14).values}
    slices = make_slices(channels, SliceSpec(lookback=10, channels=('close', 'rsi14')), start=14)
    config = ScalerConfig.infer(slices.channel_names, method=method,
                                taxonomy={'rsi14': (Taxonomy.BOUNDED, 100.0)})
    meta = scale_slices(slices, config).scaling_meta

    rebuilt = SliceScalingMeta.from_dict(meta.to_dict())

    assert rebuilt.to_dict() == meta.to_dict()
    for original, copy in zip(meta.groups, rebuilt.groups):
        np.testing.assert_array_equal(original.first, copy.first)
        np.testing.assert_array_equal(original.second, copy.second)


def test_default_config_infers_groups():
    slices = make_slices({'close': np.linspace(10.0, 20.0, 40), 'volume': np.linspace(5e5, 1e6, 40)[::-1]},
                         SliceSpec(lookback=10, channels=('close', 'volume')))

    scaled = scale_slices(slices, ScalerConfig(method='minmax'))

    assert [group.name for group in scaled.scaling_meta.groups] == ['overlaid', 'volume']
    np.testing.assert_allclose(scaled.data[:, 0, 0], 0.0)
    np.testing.assert_allclose(scaled.data[:, 0, 1], 1.0)


@pytest.mark.parametrize('method,neutral', [('minmax', 0.5), ('standardize', 0.0)])
def test_flat_slice_with_inexact_constant(method, neutral):
    closes = np.concatenate([np.full(20, 101.37), np.linspace(101.0, 105.0, 3)])
    slices = make_slices({'close': closes}, SliceSpec(lookback=20))

    scaled = scale_slices(slices, ScalerConfig(method=method))
    group = scaled.scaling_meta.groups[0]

    np.testing.assert_array_equal(scaled.data[0], neutral)
    assert group.degenerate[0]
    assert not group.degenerate[1:].any()
    assert group.first[0] == 101.37
    assert scaled.scaling_meta.warnings
    np.testing.assert_array_equal(invert_scaling(scaled).data[0], slices.data[0])


@pytest.mark.parametrize('method', ['minmax', 'standardize'])
def test_thousand_random_slices(random_walk, method):
    slices = make_slices({'close': random_walk(1019, seed=30, volatility=0.02)}, SliceSpec(lookback=20))
    assert len(slices) == 1000

    scaled = scale_slices(slices, ScalerConfig(method=method, feature_range=(-1.0, 1.0)))

    if method == 'minmax':
        np.testing.assert_allclose(scaled.data.min(axis=(1, 2)), -1.0, atol=1e-9)
        np.testing.assert_allclose(scaled.data.max(axis=(1, 2)), 1.0, atol=1e-9)
    else:
        np.testing.assert_allclose(scaled.data.mean(axis=(1, 2)), 0.0, atol=1e-9)
        np.testing.assert_allclose(scaled.data.var(axis=(1, 2)), 1.0, rtol=1e-9)
    raw, out = slices.data[:, :, 0], scaled.data[:, :, 0]
    assert np.array_equal(np.sign(raw[:, :, None] - raw[:, None, :]),
                          np.sign(out[:, :, None] - out[:, None, :]))
    assert np.abs(invert_scaling(scaled).data - slices.data).max() < 1e-9 * np.abs(slices.data).max()
