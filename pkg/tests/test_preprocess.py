import numpy as np
import pytest
import scipy.signal

from gaitcast import preprocess as pp


# ---------------------------------------------------------------------------
# wavelet packet denoising


def test_db4_filters_orthonormal():
    lo = pp._DB4_LO
    hi = pp._DB4_HI
    assert np.isclose(lo.sum(), np.sqrt(2.0))
    assert np.isclose(np.dot(lo, lo), 1.0)
    assert np.isclose(np.dot(hi, hi), 1.0)
    # even shifts are orthogonal
    assert np.isclose(np.dot(lo, np.roll(lo, 2)), 0.0, atol=1e-12)
    assert np.isclose(np.dot(lo, hi), 0.0, atol=1e-12)


def test_wpt_threshold_zero_is_identity():
    rng = np.random.default_rng(0)
    x = rng.normal(size=1024)
    cfg = pp.DenoiseConfig(wavelet_threshold=0.0, decomposition_level=6)
    y = pp.wpt_denoise(x, cfg)
    assert np.max(np.abs(y - x)) < 1e-10 * np.max(np.abs(x))


def test_wpt_handles_nondyadic_length():
    rng = np.random.default_rng(1)
    x = rng.normal(size=1000)
    cfg = pp.DenoiseConfig(wavelet_threshold=0.0, decomposition_level=5)
    y = pp.wpt_denoise(x, cfg)
    assert y.shape == x.shape
    assert np.max(np.abs(y - x)) < 1e-8


def test_wpt_denoise_reduces_noise():
    rng = np.random.default_rng(2)
    t = np.arange(4096) / 1926.0
    clean = np.sin(2 * np.pi * 40 * t)
    noisy = clean + 0.3 * rng.normal(size=t.size)
    den = pp.wpt_denoise(noisy, pp.DenoiseConfig())
    assert np.mean((den - clean) ** 2) < np.mean((noisy - clean) ** 2)


def test_wpt_hard_threshold_keeps_large_coeffs():
    rng = np.random.default_rng(3)
    x = rng.normal(size=512)
    soft = pp.wpt_denoise(x, pp.DenoiseConfig(threshold_mode="soft"))
    hard = pp.wpt_denoise(x, pp.DenoiseConfig(threshold_mode="hard"))
    assert not np.allclose(soft, hard)
    with pytest.raises(ValueError):
        pp.DenoiseConfig(threshold_mode="clip")


# ---------------------------------------------------------------------------
# Butterworth filtering


def test_butterworth_matches_scipy_response():
    cfg = pp.FilterConfig(order=7, kind="bandpass", cutoff_hz=(20.0, 450.0),
                          sample_rate_hz=1926.0)
    sos = pp.design_butterworth_sos(cfg)
    ref = scipy.signal.butter(7, [20.0, 450.0], btype="bandpass",
                              fs=1926.0, output="sos")
    freqs = np.linspace(1.0, 900.0, 400)
    h_mine = np.abs(pp.sos_frequency_response(sos, freqs, 1926.0))
    _, h_ref = scipy.signal.sosfreqz(ref, worN=2 * np.pi * freqs / 1926.0)
    np.testing.assert_allclose(h_mine, np.abs(h_ref), atol=1e-10)


def test_butterworth_matches_scipy_time_domain():
    rng = np.random.default_rng(4)
    x = rng.normal(size=2000)
    cfg = pp.FilterConfig(order=4, kind="lowpass", cutoff_hz=(100.0,),
                          sample_rate_hz=1926.0)
    y = pp.butterworth_filter(x, cfg)
    ref_sos = scipy.signal.butter(4, 100.0, btype="lowpass", fs=1926.0,
                                  output="sos")
    y_ref = scipy.signal.sosfilt(ref_sos, x)
    np.testing.assert_allclose(y, y_ref, atol=1e-9)


def test_butterworth_is_linear():
    rng = np.random.default_rng(5)
    a = rng.normal(size=800)
    b = rng.normal(size=800)
    cfg = pp.FilterConfig()
    lhs = pp.butterworth_filter(2.0 * a + 3.0 * b, cfg)
    rhs = 2.0 * pp.butterworth_filter(a, cfg) + 3.0 * pp.butterworth_filter(b, cfg)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


def test_cutoff_gain_is_half_power():
    cfg = pp.FilterConfig(order=7, kind="lowpass", cutoff_hz=(150.0,),
                          sample_rate_hz=1926.0)
    sos = pp.design_butterworth_sos(cfg)
    gain = np.abs(pp.sos_frequency_response(sos, np.array([150.0]), 1926.0))[0]
    assert gain == pytest.approx(1.0 / np.sqrt(2.0), rel=1e-9)


def test_filter_config_validation():
    with pytest.raises(ValueError):
        pp.FilterConfig(kind="bandpass", cutoff_hz=(450.0, 20.0))
    with pytest.raises(ValueError):
        pp.FilterConfig(kind="lowpass", cutoff_hz=(1200.0,),
                        sample_rate_hz=1926.0)
    with pytest.raises(ValueError):
        pp.FilterConfig(order=0)


# ---------------------------------------------------------------------------
# baseline correction and normalization


def test_baseline_correct_zero_mean():
    rng = np.random.default_rng(6)
    x = rng.normal(loc=3.7, size=500)
    y = pp.baseline_correct(x)
    assert abs(y.mean()) < 1e-12
    np.testing.assert_allclose(y, x - x.mean())


def test_maxabs_normalize_idempotent():
    rng = np.random.default_rng(7)
    x = rng.normal(size=300) * 17.0
    y = pp.maxabs_normalize(x)
    assert np.max(np.abs(y)) == pytest.approx(1.0)
    np.testing.assert_allclose(pp.maxabs_normalize(y), y)


def test_maxabs_normalize_all_zero():
    x = np.zeros(64)
    y = pp.maxabs_normalize(x)
    np.testing.assert_array_equal(y, x)
