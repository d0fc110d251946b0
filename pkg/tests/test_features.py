import numpy as np
import pytest

from gaitcast import features as ft
from gaitcast import ingest

FS = 1926.0


def brute_force_windows(n, spec):
    count = 0
    start = 0
    while start + spec.window_len <= n:
        count += 1
        start += spec.stride
    return count


def test_window_count_matches_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(200):
        length = int(rng.integers(2, 400))
        overlap = int(rng.integers(0, length))
        n = int(rng.integers(0, 5000))
        spec = ft.WindowSpec(window_len=length, overlap=overlap)
        assert ft.window_count(n, spec) == brute_force_windows(n, spec)


def test_segment_agrees_with_count():
    spec = ft.WindowSpec(window_len=100, overlap=50)
    x = np.arange(1024, dtype=float)
    wins = ft.segment(x, spec)
    assert len(wins) == ft.window_count(1024, spec)
    np.testing.assert_array_equal(wins[0], x[:100])
    np.testing.assert_array_equal(wins[1], x[50:150])
    assert all(w.size == 100 for w in wins)


def test_feature_vector_alternating_window():
    window = np.array([1.0, -1.0] * 50)
    fv = ft.feature_vector(window, FS)
    named = dict(zip(ft.FEATURE_ORDER, fv))
    assert named["integral"] == pytest.approx(100.0, abs=1e-9)
    assert named["variance"] == pytest.approx(1.0, abs=1e-9)
    assert named["wavelength"] == pytest.approx(198.0, abs=1e-9)
    assert named["zero_crossing_rate"] == pytest.approx(1.0, abs=1e-9)
    assert named["correlation_coefficient"] == pytest.approx(-1.0, abs=1e-9)
    assert named["weighted_avg_frequency"] == pytest.approx(963.0, abs=1e-9)


def test_feature_vector_sine_mnf():
    t = np.arange(1926) / FS
    s = np.sin(2 * np.pi * 100.0 * t)
    mnf = ft.feature_vector(s, FS)[ft.FEATURE_ORDER.index("weighted_avg_frequency")]
    assert abs(mnf - 100.0) < 2.0


def test_feature_vector_constant_window():
    fv = ft.feature_vector(np.full(100, 3.0), FS)
    named = dict(zip(ft.FEATURE_ORDER, fv))
    assert named["variance"] == 0.0
    assert named["wavelength"] == 0.0
    assert named["zero_crossing_rate"] == 0.0
    assert named["correlation_coefficient"] == 0.0


def test_feature_scale_covariance():
    rng = np.random.default_rng(1)
    window = rng.normal(size=100)
    base = dict(zip(ft.FEATURE_ORDER, ft.feature_vector(window, FS)))
    for scale in (0.5, 3.0, 11.0):
        scaled = dict(zip(ft.FEATURE_ORDER, ft.feature_vector(scale * window, FS)))
        assert scaled["integral"] == pytest.approx(scale * base["integral"])
        assert scaled["variance"] == pytest.approx(scale ** 2 * base["variance"])
        assert scaled["wavelength"] == pytest.approx(scale * base["wavelength"])
        assert scaled["zero_crossing_rate"] == base["zero_crossing_rate"]
        assert scaled["correlation_coefficient"] == pytest.approx(
            base["correlation_coefficient"])
        assert scaled["weighted_avg_frequency"] == pytest.approx(
            base["weighted_avg_frequency"])


def test_feature_vector_rejects_short_window():
    with pytest.raises(ValueError):
        ft.feature_vector(np.ones(1), FS)


def test_featurize_shapes_and_alignment():
    rec = ingest.synth_gait(seed=4, cycles=3)
    feats, targets = ft.featurize(rec)
    n_win = ft.window_count(rec.semg.shape[0], ft.WindowSpec())
    assert feats.data.shape == (n_win, 9, 6)
    assert targets.data.shape == (n_win, 8, 2)
    assert np.all(np.isfinite(feats.data))
    # targets come from the raw joint traces
    assert np.all(np.isin(targets.data[:, :, 0], rec.angles))
    assert np.all(np.isin(targets.data[:, :, 1], rec.torques))


def test_standardizer_roundtrip():
    rec = ingest.synth_gait(seed=5, cycles=3)
    feats, _ = ft.featurize(rec)
    std = ft.fit_standardizer(feats)
    z = ft.apply_standardizer(std, feats)
    np.testing.assert_allclose(z.data.reshape(-1, 9 * 6).mean(axis=0), 0.0,
                               atol=1e-10)
    back = ft.invert_standardizer(std, z)
    np.testing.assert_allclose(back.data, feats.data, atol=1e-10)


def test_standardizer_zero_variance_channel():
    data = np.ones((10, 9, 6))
    feats = ft.FeatureTensor(data=data)
    std = ft.fit_standardizer(feats)
    assert np.all(std.zero_variance)
    z = ft.apply_standardizer(std, feats)
    assert np.all(np.isfinite(z.data))
    # degenerate columns pass through untouched
    np.testing.assert_allclose(z.data, data)
    back = ft.invert_standardizer(std, z)
    np.testing.assert_allclose(back.data, data)


def test_flattened_layout():
    rec = ingest.synth_gait(seed=6, cycles=2)
    feats, targets = ft.featurize(rec)
    flat = feats.flattened()
    assert flat.shape == (feats.data.shape[0], 54)
    np.testing.assert_array_equal(flat[0, :6], feats.data[0, 0, :])
    assert targets.flattened().shape == (targets.data.shape[0], 16)
