import numpy as np
import pytest

from tslab.errors import LabelingError
from tslab.indicators import ema
from tslab.labeling import (
    LabelFamily,
    LabelVector,
    ProbeCondition,
    QClassThresholds,
    label_ma,
    label_nbar,
    label_pctq,
    label_probe_conditions,
    label_qclass,
    label_trend,
    make_labels,
    required_history,
)


def _ohlc(random_walk, length=200, seed=0):
    closes = random_walk(length, seed=seed)
    rng = np.random.default_rng(seed + 100)
    highs = closes * (1 + rng.uniform(0, 0.01, length))
    lows = closes * (1 - rng.uniform(0, 0.01, length))
    return highs, lows, closes


def test_nbar_families():
    closes = [10.0, 11.0, 11.0, 9.0]

    updown = label_nbar(closes, [0, 1, 2], 1, 'nbar_updown')
    change = label_nbar(closes, [0, 1, 2], 1, 'nbar_change')
    logret = label_nbar(closes, [0, 1], 2, 'nbar_logret')

    assert updown.values.tolist() == [1, 0, 0]
    assert change.values.tolist() == [1.0, 0.0, -2.0]
    np.testing.assert_allclose(logret.values, [np.log(11 / 10), np.log(9 / 11)])
    assert updown.class_count == 2
    assert not change.is_classifier


def test_horizon_must_fit_reserved_window():
    with pytest.raises(LabelingError):
        label_nbar([1.0, 2.0, 3.0], [1, 2], 1)
    with pytest.raises(LabelingError):
        label_nbar([1.0, 2.0, 3.0], [0], 0)


def test_ma_updown():
    closes = np.concatenate([np.arange(1.0, 21.0), [100.0, 0.0]])

    labels = label_ma(closes, [19, 20], 1, ma_period=20)

    assert labels.values.tolist() == [1, 0]
    with pytest.raises(LabelingError):
        label_ma(closes, [10], 1, ma_period=20)


def test_pctq_anchor_values():
    # C_t=10 with a future window high 12 / low 4 -> (12 - 10) / 8
    highs = [10.0, 12.0, 11.0]
    lows = [10.0, 5.0, 4.0]
    closes = [10.0, 11.0, 5.0]

    assert label_pctq(highs, lows, closes, [0], 2).values[0] == pytest.approx(0.25)
    assert label_pctq([10, 10, 12], [10, 2, 8], [10, 3, 9], [0], 2).values[0] == pytest.approx(0.2)


def test_pctq_close_at_window_low_and_flat_window():
    closes = [4.0, 5.0, 8.0, 6.0, 6.0, 6.0]

    at_low = label_pctq(None, None, closes, [0], 2)
    flat = label_pctq(None, None, closes, [3], 2)

    assert at_low.values[0] == 1.0
    assert flat.values[0] == 0.5
    assert any('flat' in w for w in flat.warnings)
    assert any('closes' in w for w in flat.warnings)


def test_pctq_clamps_outside_range():
    closes = [20.0, 10.0, 12.0, 1.0, 2.0, 3.0]

    above = label_pctq(None, None, closes, [0], 2)
    below = label_pctq(None, None, closes, [3], 2)

    assert above.values[0] == 0.0
    assert below.values[0] == 1.0


def test_pctq_matches_brute_force(random_walk):
    highs, lows, closes = _ohlc(random_walk, length=600, seed=3)
    horizon = 10
    ends = np.arange(20, 520)

    labels = label_pctq(highs, lows, closes, ends, horizon)

    for k, t in enumerate(ends):
        hh = max(highs[t + 1:t + horizon + 1])
        ll = min(lows[t + 1:t + horizon + 1])
        expected = min(max((hh - closes[t]) / (hh - ll), 0.0), 1.0)
        assert labels.values[k] == pytest.approx(expected, abs=1e-12)
    assert labels.values.min() >= 0.0
    assert labels.values.max() <= 1.0


def test_pctq_ignores_bars_outside_future_window(random_walk):
    highs, lows, closes = _ohlc(random_walk, seed=4)
    ends = np.array([50, 80])
    baseline = label_pctq(highs, lows, closes, ends, 5).values

    perturbed_highs = highs.copy()
    perturbed_lows = lows.copy()
    for index in (0, 49, 56, 79, 86, 150):
        perturbed_highs[index] *= 3.0
        perturbed_lows[index] *= 0.1

    perturbed = label_pctq(perturbed_highs, perturbed_lows, closes, ends, 5).values

    np.testing.assert_array_equal(baseline, perturbed)


def test_qclass_boundaries():
    pctq = LabelVector(LabelFamily.PCTQ, 3, np.array([0.6, 0.5, 0.4, 1.0, 0.0, 0.61, 0.39]),
                       np.arange(7))

    classes = label_qclass(pctq)

    assert classes.values.tolist() == [0, 1, 2, 0, 2, 0, 2]
    assert classes.class_count == 3
    assert classes.params == {'up_min': 0.6, 'down_max': 0.4}


def test_qclass_thresholds_validated():
    with pytest.raises(LabelingError):
        QClassThresholds(up_min=0.4, down_max=0.6)
    with pytest.raises(LabelingError):
        QClassThresholds(up_min=1.2, down_max=0.4)


def test_qclass_rejects_other_families():
    with pytest.raises(LabelingError):
        label_qclass(label_nbar([1.0, 2.0], [0], 1))


def test_trend_regression():
    closes = np.array([10.0, 11.0, 12.0, 13.0, 14.0, 12.0, 10.0, 8.0])

    strength = label_trend(closes, [0, 4], 3)
    direction = label_trend(closes, [0, 4], 3, family='trend_direction')

    np.testing.assert_allclose(strength.values, [1.0 / 10.0, -2.0 / 14.0])
    assert direction.values.tolist() == [1, 0]
    assert direction.params['direction_threshold'] == 0.0
    with pytest.raises(LabelingError):
        label_trend(closes, [0], 1)


def test_trend_ma_fraction(random_walk):
    closes = random_walk(100, seed=5)

    strength = label_trend(closes, [30, 60], 10, method='ma_fraction', ma_period=5)
    direction = label_trend(closes, [30, 60], 10, method='ma_fraction', family='trend_direction', ma_period=5)

    average = np.convolve(closes, np.ones(5) / 5, mode='valid')
    for k, t in enumerate([30, 60]):
        above = [closes[j] > average[j - 4] for j in range(t + 1, t + 11)]
        assert strength.values[k] == pytest.approx(np.mean(above))
    assert direction.values.tolist() == (strength.values > 0.5).astype(int).tolist()


def test_probe_conditions():
    closes = np.array([5.0, 1, 2, 3, 4, 6, 7, 8, 9, 3, 10, 2])

    c5 = label_probe_conditions(closes, [5, 9, 11], 'c5')
    hc10 = label_probe_conditions(closes, [10, 11], 'hc10')

    assert c5.values.tolist() == [1, 0, 0]
    assert hc10.values.tolist() == [1, 0]
    assert c5.family is LabelFamily.PROBE
    assert c5.params == {'condition': 'c5'}


def test_hc10_excludes_current_bar():
    closes = np.arange(1.0, 21.0)

    labels = label_probe_conditions(closes, np.arange(9, 20), ProbeCondition.HC10)

    assert labels.values.tolist() == [1] * 11


def test_ema5_condition(random_walk):
    closes = random_walk(120, seed=6)
    ends = np.arange(30, 120)

    global_ema = label_probe_conditions(closes, ends, 'ema5')
    local_ema = label_probe_conditions(closes, ends, 'ema5', lookback=20)

    expected = (closes[ends] > ema(closes, 5).values[ends]).astype(int)
    assert global_ema.values.tolist() == expected.tolist()
    # EMA memory decays fast, so a 20-bar window agrees almost everywhere
    assert np.mean(global_ema.values == local_ema.values) > 0.9
    assert local_ema.params['lookback'] == 20


def test_probe_condition_history_errors():
    closes = np.arange(1.0, 30.0)

    with pytest.raises(LabelingError):
        label_probe_conditions(closes, [4], 'c5')
    with pytest.raises(LabelingError):
        label_probe_conditions(closes, [8], 'hc10')
    with pytest.raises(LabelingError):
        label_probe_conditions(closes, [20], 'hc10', lookback=5)


def test_required_history():
    assert required_history('nbar_updown') == 1
    assert required_history('ma_updown', ma_period=20) == 20
    assert required_history('trend_strength', ma_period=20, trend_method='ma_fraction') == 19
    assert required_history('trend_strength', ma_period=20) == 1


def test_make_labels_dispatch(random_walk):
    highs, lows, closes = _ohlc(random_walk, seed=7)
    ends = np.arange(30, 150)

    qclass = make_labels('qclass', closes, ends, 5, highs=highs, lows=lows,
                         thresholds=QClassThresholds(0.7, 0.3))
    direct = label_qclass(label_pctq(highs, lows, closes, ends, 5), QClassThresholds(0.7, 0.3))

    assert np.array_equal(qclass.values, direct.values)
    assert sum(qclass.histogram().values()) == len(ends)
    assert len(make_labels('nbar_change', closes, ends, 5).histogram(bins=4)) == 4
    with pytest.raises(LabelingError):
        make_labels('probe', closes, ends, 5)


def test_pctq_mirror_symmetry(random_walk):
    highs, lows, closes = _ohlc(random_walk, length=300, seed=13)
    ends = np.arange(0, 290)
    pivot = 2.0 * highs.max()

    original = label_pctq(highs, lows, closes, ends, 10)
    mirrored = label_pctq(pivot - lows, pivot - highs, pivot - closes, ends, 10)

    np.testing.assert_allclose(mirrored.values, 1.0 - original.values, atol=1e-9)


def test_qclass_up_count_shrinks_as_up_min_rises(random_walk):
    highs, lows, closes = _ohlc(random_walk, length=400, seed=14)
    pctq = label_pctq(highs, lows, closes, np.arange(0, 390), 10)

    up_counts = [
        int((label_qclass(pctq, QClassThresholds(up_min, 0.4)).values == 0).sum())
        for up_min in np.linspace(0.45, 0.95, 11)
    ]

    assert all(later <= earlier for earlier, later in zip(up_counts, up_counts[1:]))
    assert up_counts[0] > up_counts[-1]
