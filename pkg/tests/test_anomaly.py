import numpy as np
import pytest

from ts2rep import encoder as enc
from ts2rep.anomaly import (AnomalyConfig, StreamState, adjust_score, adjust_scores, delay_adjust,
                            delay_adjusted_prf, detect, difference_series, l1_score, resolve_delay,
                            run_detection, threshold_stats)
from ts2rep.encoder import EncoderConfig


def test_defaults():
    cfg = AnomalyConfig()
    assert (cfg.beta, cfg.window, cfg.diff_order) == (4.0, 21, 0)
    assert resolve_delay("minutely") == 7 and resolve_delay("hourly") == 3


@pytest.mark.parametrize("d,expected", [(0, [1, 3, 6, 10]), (1, [2, 3, 4]), (2, [1, 1])])
def test_difference(d, expected):
    np.testing.assert_array_equal(difference_series(np.array([1, 3, 6, 10]), d), expected)


def test_difference_too_short():
    with pytest.raises(ValueError):
        difference_series(np.array([1.0, 2.0]), 2)


def test_l1():
    assert l1_score(np.array([1.0, -1.0]), np.zeros(2)) == 2.0
    assert l1_score(np.ones(3), np.ones(3)) == 0.0


@pytest.mark.parametrize("alpha,hist,expected", [(2.0, [1.0], 1.0), (3.0, [3.0, 3.0], 0.0),
                                                 (4.0, [1, 2, 3], 1.0), (0.0, [0, 0], 0.0)])
def test_adjust(alpha, hist, expected):
    assert adjust_score(alpha, hist) == expected


def test_adjust_zero_mean_sentinel():
    assert adjust_score(1.0, [0.0, 0.0]) == np.inf


def test_adjust_scores_vectorised_matches_scalar(rng):
    a = rng.uniform(0.1, 2, 60)
    out = adjust_scores(a, 5)
    assert np.isnan(out[:5]).all()
    for t in range(5, 60):
        assert out[t] == pytest.approx(adjust_score(a[t], a[t - 5:t]), rel=1e-12)


def test_adjust_scale_equivariant(rng):
    a = rng.uniform(0.1, 2, 40)
    np.testing.assert_allclose(adjust_scores(a * 7.5, 21), adjust_scores(a, 21), equal_nan=True)


def test_detect_strict():
    assert not detect(np.array([4.0]), 0.0, 1.0)[0]
    assert detect(np.array([5.0]), 0.0, 1.0)[0]
    assert not detect(np.array([0.0]), 0.0, 0.0, beta=4)[0]
    assert not detect(np.array([np.nan]), 0.0, 1.0)[0]


def test_threshold_stats_population_std():
    mu, sigma = threshold_stats(np.array([np.nan, 1.0, 3.0]))
    assert (mu, sigma) == (2.0, 1.0)


def test_stream_constant_then_extreme():
    state = StreamState(AnomalyConfig(window=3))
    flags = [state.update(a)[1] for a in [1.0] * 30 + [10.0]]
    assert sum(flags) == 1 and flags[-1]


def test_stream_needs_two_points_before_flagging():
    state = StreamState(AnomalyConfig(window=2))
    out = [state.update(a) for a in [1.0, 1.0, 100.0, 1.0]]
    assert out[0] == (None, False) and out[1] == (None, False)
    assert out[2][0] == 99.0 and out[2][1] is False  # no statistics yet


def test_stream_buffer_bounded():
    state = StreamState(AnomalyConfig(window=4))
    for a in range(100):
        state.update(float(a + 1))
    assert len(state.recent) == 4


def test_stream_fixed_statistics():
    state = StreamState(AnomalyConfig(window=1), mu=0.0, sigma=0.1)
    state.update(1.0)
    assert state.update(1.5)[1]  # 0.5 > 0.4


def test_delay_fixture_credited():
    labels = np.zeros(20, bool)
    labels[10:15] = True
    pred = np.zeros(20, bool)
    pred[12] = True
    adj = delay_adjust(pred, labels, 3)
    assert adj[10:15].all() and adj.sum() == 5
    assert delay_adjusted_prf(pred, labels, 3) == (1.0, 1.0, 1.0)


def test_delay_fixture_too_late():
    labels = np.zeros(20, bool)
    labels[10:15] = True
    pred = np.zeros(20, bool)
    pred[14] = True
    assert not delay_adjust(pred, labels, 3).any()
    assert delay_adjusted_prf(pred, labels, 3) == (0.0, 0.0, 0.0)


def test_no_predictions_convention():
    labels = np.array([0, 1, 1, 0], bool)
    assert delay_adjusted_prf(np.zeros(4, bool), labels, 7) == (0.0, 0.0, 0.0)


def test_false_positives_count():
    labels = np.array([0, 1, 1, 0, 0], bool)
    pred = np.array([1, 1, 0, 0, 1], bool)
    p, r, f = delay_adjusted_prf(pred, labels, 0)
    assert (p, r) == (0.5, 1.0) and f == pytest.approx(2 / 3)


def test_delay_zero_and_large():
    labels = np.array([0, 1, 1, 1, 0, 1, 1, 0], bool)
    pred = np.array([0, 0, 1, 0, 0, 1, 0, 0], bool)
    assert delay_adjust(pred, labels, 0).tolist() == [0, 0, 0, 0, 0, 1, 1, 0]
    assert delay_adjust(pred, labels, 10).tolist() == labels.tolist()


def test_length_mismatch():
    with pytest.raises(ValueError):
        delay_adjusted_prf(np.zeros(3, bool), np.zeros(4, bool), 1)


TINY = EncoderConfig(input_dims=1, hidden_dims=4, output_dims=6, depth=2)


def test_run_detection_causal():
    params = enc.init_params(TINY, 0)
    x = np.random.default_rng(0).standard_normal(120)
    y = x.copy()
    y[90:] += 50
    cfg = AnomalyConfig(window=5)
    for cold in (False, True):
        a = run_detection(params, x, 60, cfg, cold_start=cold)
        b = run_detection(params, y, 60, cfg, cold_start=cold)
        for k in a:
            np.testing.assert_array_equal(a[k][:90], b[k][:90])


def test_run_detection_differenced_alignment():
    params = enc.init_params(TINY, 0)
    x = np.cumsum(np.random.default_rng(1).standard_normal(80))
    out = run_detection(params, x, 40, AnomalyConfig(window=5, diff_order=1))
    assert all(len(v) == 80 for v in out.values())
    assert np.isnan(out["alpha"][0]) and not out["is_anomaly"][0]


def test_spike_scores_above_flat_region():
    params = enc.init_params(TINY, 0)
    x = np.zeros(200)
    x[150] = 8.0
    out = run_detection(params, x, 100, AnomalyConfig(window=5))
    assert out["alpha"][150] > np.nanmax(out["alpha"][100:150])
