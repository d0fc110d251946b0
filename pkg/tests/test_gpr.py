import numpy as np
import pytest

from gaitcast import gpr


def dense_reference(x, y, xq, params):
    """Brute-force posterior via explicit matrix inverse."""
    k_xx = gpr.kernel_matrix(x, x, params) + params.noise_variance * np.eye(len(x))
    k_qx = gpr.kernel_matrix(xq, x, params)
    k_inv = np.linalg.inv(k_xx)
    mean = k_qx @ k_inv @ y
    var = (params.signal_variance
           - np.sum((k_qx @ k_inv) * k_qx, axis=1)
           + params.noise_variance)
    return mean, var


def test_matches_dense_inverse():
    rng = np.random.default_rng(0)
    for trial in range(20):
        n = int(rng.integers(3, 51))
        d = int(rng.integers(1, 5))
        x = rng.normal(size=(n, d))
        y = rng.normal(size=n)
        params = gpr.KernelParams(signal_variance=float(rng.uniform(0.1, 5.0)),
                                  length_scale=float(rng.uniform(0.3, 3.0)),
                                  noise_variance=float(rng.uniform(1e-4, 0.1)))
        model = gpr.fit(x, y, params)
        xq = rng.normal(size=(7, d))
        mean, var = gpr.predict(model, xq)
        mean_ref, var_ref = dense_reference(x, y, xq, params)
        np.testing.assert_allclose(mean, mean_ref, atol=1e-8)
        np.testing.assert_allclose(var, var_ref, atol=1e-8)


def test_noiseless_interpolation():
    rng = np.random.default_rng(1)
    x = rng.uniform(-2, 2, size=(25, 2))
    y = np.sin(x[:, 0]) + 0.3 * x[:, 1]
    params = gpr.KernelParams(1.0, 1.0, gpr.MIN_NOISE_VARIANCE)
    model = gpr.fit(x, y, params)
    mean, _ = gpr.predict(model, x)
    assert np.max(np.abs(mean - y)) < 1e-4


def test_far_field_reverts_to_prior():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(30, 3))
    y = rng.normal(size=30) + 5.0
    params = gpr.KernelParams(2.0, 0.7, 0.01)
    model = gpr.fit(x, y, params)
    xq = np.full((1, 3), 100.0)
    mean, var = gpr.predict(model, xq)
    assert abs(mean[0]) < 1e-2 * np.abs(y).max()
    assert var[0] == pytest.approx(params.signal_variance
                                   + params.noise_variance, rel=0.01)


def test_log_marginal_likelihood_formula():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(12, 2))
    y = rng.normal(size=12)
    params = gpr.KernelParams(1.4, 0.9, 0.05)
    k = gpr.kernel_matrix(x, x, params) + params.noise_variance * np.eye(12)
    sign, logdet = np.linalg.slogdet(k)
    assert sign > 0
    ref = (-0.5 * y @ np.linalg.solve(k, y) - 0.5 * logdet
           - 6 * np.log(2 * np.pi))
    assert gpr.log_marginal_likelihood(x, y, params) == pytest.approx(ref)


def test_optimize_improves_likelihood():
    rng = np.random.default_rng(4)
    x = np.linspace(-3, 3, 40).reshape(-1, 1)
    y = np.sin(1.5 * x[:, 0]) + 0.05 * rng.normal(size=40)
    start = gpr.KernelParams(0.2, 5.0, 0.01)
    best = gpr.optimize_params(x, y, noise_variance=0.01, n_starts=3, seed=0)
    assert (gpr.log_marginal_likelihood(x, y, best)
            >= gpr.log_marginal_likelihood(x, y, start) - 1e-9)
    assert 1e-3 <= best.signal_variance <= 1e3
    assert 1e-2 <= best.length_scale <= 1e2


def test_bounds_enforced():
    with pytest.raises(ValueError):
        gpr.KernelParams(signal_variance=1e-4)
    with pytest.raises(ValueError):
        gpr.KernelParams(length_scale=1e3)
    with pytest.raises(ValueError):
        gpr.KernelParams(noise_variance=-1.0)


def test_jitter_handles_duplicates():
    x = np.zeros((6, 1))
    y = np.full(6, 2.0)
    model = gpr.fit(x, y, gpr.KernelParams(1.0, 1.0, gpr.MIN_NOISE_VARIANCE))
    mean, _ = gpr.predict(model, x)
    np.testing.assert_allclose(mean, y, atol=1e-3)


def test_evaluate_metrics():
    y = np.array([0.0, 1.0, 2.0])
    pred = np.array([0.0, 2.0, 4.0])
    mae, rmse = gpr.evaluate(y, pred)
    assert mae == pytest.approx(1.0)
    assert rmse == pytest.approx(np.sqrt(5.0 / 3.0))


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    x = rng.normal(size=(20, 3))
    y = rng.normal(size=20)
    model = gpr.fit(x, y, gpr.KernelParams(1.2, 0.8, 0.02))
    path = tmp_path / "model.json"
    gpr.save_model(model, path)
    back = gpr.load_model(path)
    xq = rng.normal(size=(5, 3))
    m1, v1 = gpr.predict(model, xq)
    m2, v2 = gpr.predict(back, xq)
    np.testing.assert_array_equal(m1, m2)
    np.testing.assert_array_equal(v1, v2)
