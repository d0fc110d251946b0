"""Exact Gaussian process regression with an RBF kernel.

One independent model per output dimension. Fitting solves
(K + noise * I) alpha = y via Cholesky; hyperparameters can optionally be
chosen by multi-start bounded maximization of the log marginal likelihood
over the configured (signal variance, length scale) box.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg, optimize

SIGNAL_VARIANCE_BOUNDS = (1e-3, 1e3)
LENGTH_SCALE_BOUNDS = (1e-2, 1e2)
MIN_NOISE_VARIANCE = 1e-10


@dataclass(frozen=True)
class KernelParams:
    signal_variance: float = 1.0
    length_scale: float = 1.0
    noise_variance: float = 1e-6

    def __post_init__(self):
        lo, hi = SIGNAL_VARIANCE_BOUNDS
        if not lo <= self.signal_variance <= hi:
            raise ValueError(f"signal_variance {self.signal_variance} outside [{lo}, {hi}]")
        lo, hi = LENGTH_SCALE_BOUNDS
        if not lo <= self.length_scale <= hi:
            raise ValueError(f"length_scale {self.length_scale} outside [{lo}, {hi}]")
        if self.noise_variance < MIN_NOISE_VARIANCE:
            raise ValueError(f"noise_variance must be >= {MIN_NOISE_VARIANCE}")


class ConditioningError(RuntimeError):
    """Kernel matrix stayed non positive definite after jitter escalation."""


def _sqdist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.sum(diff * diff, axis=-1)


def kernel_eval(x: np.ndarray, x2: np.ndarray, params: KernelParams) -> float:
    """RBF kernel k(x, x') = sv * exp(-||x - x'||^2 / (2 l^2))."""
    x = np.asarray(x, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x.shape != x2.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {x2.shape}")
    d2 = float(np.sum((x - x2) ** 2))
    return params.signal_variance * np.exp(-d2 / (2.0 * params.length_scale ** 2))


def kernel_matrix(a: np.ndarray, b: np.ndarray, params: KernelParams) -> np.ndarray:
    return params.signal_variance * np.exp(
        -_sqdist(a, b) / (2.0 * params.length_scale ** 2))


@dataclass(frozen=True)
class GprModel:
    params: KernelParams
    x_train: np.ndarray      # [N x D]
    y_train: np.ndarray      # [N]
    alpha: np.ndarray        # [N], solves (K + noise I) alpha = y
    chol_lower: np.ndarray   # [N x N]


def _cholesky_with_jitter(k: np.ndarray, noise: float) -> tuple[np.ndarray, float]:
    n = k.shape[0]
    jitter = noise
    for _ in range(4):
        try:
            lower = linalg.cholesky(k + jitter * np.eye(n), lower=True)
            return lower, jitter
        except linalg.LinAlgError:
            jitter *= 10.0
    raise ConditioningError(
        f"kernel matrix not positive definite even with jitter {jitter:.3g}")


def log_marginal_likelihood(x: np.ndarray, y: np.ndarray, params: KernelParams) -> float:
    k = kernel_matrix(x, x, params)
    lower, _ = _cholesky_with_jitter(k, params.noise_variance)
    alpha = linalg.cho_solve((lower, True), y)
    return float(-0.5 * y @ alpha - np.sum(np.log(np.diag(lower)))
                 - 0.5 * len(y) * np.log(2 * np.pi))


def optimize_params(x: np.ndarray, y: np.ndarray, noise_variance: float = 1e-6,
                    n_starts: int = 5, seed: int = 0) -> KernelParams:
    """Multi-start Nelder-Mead over log-space (signal variance, length scale)."""
    log_sv_b = np.log(SIGNAL_VARIANCE_BOUNDS)
    log_l_b = np.log(LENGTH_SCALE_BOUNDS)

    def objective(theta):
        sv = float(np.exp(np.clip(theta[0], *log_sv_b)))
        ls = float(np.exp(np.clip(theta[1], *log_l_b)))
        try:
            return -log_marginal_likelihood(
                x, y, KernelParams(sv, ls, noise_variance))
        except ConditioningError:
            return 1e12

    rng = np.random.default_rng(seed)
    starts = [np.array([0.0, 0.0])]
    starts += [np.array([rng.uniform(*log_sv_b), rng.uniform(*log_l_b)])
               for _ in range(n_starts - 1)]
    best_theta, best_val = None, np.inf
    for theta0 in starts:
        res = optimize.minimize(objective, theta0, method="Nelder-Mead",
                                options={"xatol": 1e-3, "fatol": 1e-6, "maxiter": 200})
        if res.fun < best_val:
            best_theta, best_val = res.x, res.fun
    sv = float(np.exp(np.clip(best_theta[0], *log_sv_b)))
    ls = float(np.exp(np.clip(best_theta[1], *log_l_b)))
    return KernelParams(sv, ls, noise_variance)


def fit(x: np.ndarray, y: np.ndarray,
        params: KernelParams | str = "optimize",
        noise_variance: float = 1e-6, seed: int = 0) -> GprModel:
    """Fit an exact GPR model; params="optimize" searches the bounds first."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape[0] != y.size:
        raise ValueError(f"{x.shape[0]} rows vs {y.size} targets")
    if y.size == 0:
        raise ValueError("empty training set")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("training data contains non-finite values")

    if isinstance(params, str):
        if params != "optimize":
            raise ValueError(f"params must be KernelParams or 'optimize', got {params!r}")
        params = optimize_params(x, y, noise_variance=noise_variance, seed=seed)

    k = kernel_matrix(x, x, params)
    lower, jitter = _cholesky_with_jitter(k, params.noise_variance)
    if jitter != params.noise_variance:
        params = KernelParams(params.signal_variance, params.length_scale, jitter)
    alpha = linalg.cho_solve((lower, True), y)
    if not np.all(np.isfinite(alpha)):
        raise ConditioningError("non-finite solve vector")
    return GprModel(params=params, x_train=x, y_train=y, alpha=alpha, chol_lower=lower)


def predict(model: GprModel, x_query: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance (including noise) at the query rows."""
    x_query = np.atleast_2d(np.asarray(x_query, dtype=np.float64))
    if x_query.shape[1] != model.x_train.shape[1]:
        raise ValueError(f"query dim {x_query.shape[1]} != train dim {model.x_train.shape[1]}")
    k_star = kernel_matrix(x_query, model.x_train, model.params)
    mean = k_star @ model.alpha
    v = linalg.solve_triangular(model.chol_lower, k_star.T, lower=True)
    variance = (model.params.signal_variance - np.sum(v * v, axis=0)
                + model.params.noise_variance)
    return mean, np.maximum(variance, 0.0)


def evaluate(y_true: np.ndarray, y_pred: np.ndarray) -> tuple[float, float]:
    """(MAE, RMSE) of a prediction vector."""
    y_true = np.asarray(y_true, dtype=np.float64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.float64).ravel()
    if y_true.size != y_pred.size:
        raise ValueError(f"length mismatch: {y_true.size} vs {y_pred.size}")
    if y_true.size == 0:
        raise ValueError("empty vectors")
    err = y_pred - y_true
    return float(np.mean(np.abs(err))), float(np.sqrt(np.mean(err ** 2)))


def _fmt(arr: np.ndarray) -> list:
    return [f"{v:.17g}" for v in np.asarray(arr, dtype=np.float64).ravel()]


def save_model(model: GprModel, path: str | Path) -> None:
    """JSON dump; floats as 17-significant-digit strings for exact round-trip."""
    n, d = model.x_train.shape
    doc = {
        "signal_variance": f"{model.params.signal_variance:.17g}",
        "length_scale": f"{model.params.length_scale:.17g}",
        "noise_variance": f"{model.params.noise_variance:.17g}",
        "n": n,
        "d": d,
        "x_train": _fmt(model.x_train),
        "y_train": _fmt(model.y_train),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path: str | Path) -> GprModel:
    with open(path) as fh:
        doc = json.load(fh)
    params = KernelParams(
        float(doc["signal_variance"]), float(doc["length_scale"]),
        float(doc["noise_variance"]))
    x = np.array([float(v) for v in doc["x_train"]]).reshape(doc["n"], doc["d"])
    y = np.array([float(v) for v in doc["y_train"]])
    return fit(x, y, params)
