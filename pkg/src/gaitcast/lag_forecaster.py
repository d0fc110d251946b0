"""Probabilistic autoregressive forecaster with lag features.

A small decoder-only causal self-attention network consumes a scaled
context series, with past values at fixed lag offsets attached to every
token as covariates, and emits Student-t parameters for the next step.
Forecasts are drawn autoregressively (sample, append, slide) and scored
with the empirical CRPS.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .ingest import UnivariateSeries

SCALE_STD_FLOOR = 1e-8
SIGMA_FLOOR = 1e-6


@dataclass(frozen=True)
class LagSet:
    lags: tuple[int, ...] = tuple(range(1, 65))

    def __post_init__(self):
        lags = tuple(sorted(set(int(v) for v in self.lags)))
        if not lags or lags[0] < 1:
            raise ValueError("lags must be distinct positive integers")
        object.__setattr__(self, "lags", lags)

    @property
    def max_lag(self) -> int:
        return self.lags[-1]


@dataclass(frozen=True)
class ForecastConfig:
    horizon: int = 128
    context_len: int = 256
    num_samples: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.context_len < 1:
            raise ValueError("context_len must be >= 1")
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")


@dataclass(frozen=True)
class DistHead:
    """Student-t parameters for one predicted step (scaled space)."""

    df: float
    loc: float
    scale: float

    def __post_init__(self):
        if not (self.df > 2.0 and self.scale > 0.0):
            raise ValueError(f"invalid Student-t parameters df={self.df}, scale={self.scale}")


@dataclass(frozen=True)
class ForecastDistribution:
    samples: np.ndarray  # [num_samples x horizon]
    target_name: str = ""

    def __post_init__(self):
        samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        object.__setattr__(self, "samples", samples)
        if not np.all(np.isfinite(samples)):
            raise ValueError("forecast samples contain non-finite values")

    @property
    def horizon(self) -> int:
        return self.samples.shape[1]

    def quantile(self, q: float, t: int) -> float:
        return float(np.quantile(self.samples[:, t], q))

    def quantile_curve(self, q: float) -> np.ndarray:
        return np.quantile(self.samples, q, axis=0)

    def mean_curve(self) -> np.ndarray:
        return self.samples.mean(axis=0)


def build_lag_features(series: UnivariateSeries, t: int, lags: LagSet) -> np.ndarray:
    """Values at t - lag for each lag; requires t >= max lag."""
    if t < lags.max_lag:
        raise ValueError(f"index {t} has insufficient history for max lag {lags.max_lag}")
    values = series.values
    if t >= values.size:
        raise ValueError(f"index {t} beyond series length {values.size}")
    return np.array([values[t - lag] for lag in lags.lags])


def scale_context(context: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Zero-mean/unit-variance scaling with a floored population std."""
    x = np.asarray(context, dtype=np.float64)
    if x.size < 2:
        raise ValueError("context must have at least 2 values")
    mean = float(x.mean())
    std = max(float(x.std()), SCALE_STD_FLOOR)
    return (x - mean) / std, mean, std


def _lag_tokens(contexts: torch.Tensor, lags: LagSet) -> torch.Tensor:
    """[B x L] scaled contexts -> [B x L x (1 + n_lags)] token features.

    Lags reaching before the window start are zero-filled.
    """
    n_batch, length = contexts.shape
    feats = [contexts.unsqueeze(-1)]
    for lag in lags.lags:
        shifted = torch.zeros_like(contexts)
        if lag < length:
            shifted[:, lag:] = contexts[:, :-lag]
        feats.append(shifted.unsqueeze(-1))
    return torch.cat(feats, dim=-1)


class _DecoderBlock(nn.Module):
    def __init__(self, width: int, heads: int):
        super().__init__()
        self.ln1 = nn.LayerNorm(width)
        self.attn = nn.MultiheadAttention(width, heads, batch_first=True)
        self.ln2 = nn.LayerNorm(width)
        self.mlp = nn.Sequential(
            nn.Linear(width, 4 * width), nn.GELU(), nn.Linear(4 * width, width))

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        h = self.ln1(x)
        a, _ = self.attn(h, h, h, attn_mask=mask, need_weights=False)
        x = x + a
        return x + self.mlp(self.ln2(x))


class LagForecaster(nn.Module):
    """Decoder-only causal self-attention over lag-feature tokens."""

    def __init__(self, lags: LagSet = LagSet(), width: int = 64,
                 num_layers: int = 2, num_heads: int = 4,
                 max_positions: int = 512, seed: int = 0):
        super().__init__()
        torch.manual_seed(seed)
        self.lags = lags
        self.max_positions = max_positions
        self.in_proj = nn.Linear(1 + len(lags.lags), width)
        self.pos_emb = nn.Embedding(max_positions, width)
        self.blocks = nn.ModuleList(
            [_DecoderBlock(width, num_heads) for _ in range(num_layers)])
        self.ln_out = nn.LayerNorm(width)
        self.head = nn.Linear(width, 3)

    def forward(self, contexts: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """[B x L] scaled contexts -> per-position (df, loc, scale), each [B x L].

        Position t's parameters describe the distribution of value t+1.
        """
        n_batch, length = contexts.shape
        if length > self.max_positions:
            raise ValueError(f"context length {length} exceeds max {self.max_positions}")
        tokens = _lag_tokens(contexts, self.lags)
        x = self.in_proj(tokens) + self.pos_emb(
            torch.arange(length, device=contexts.device))
        mask = torch.triu(
            torch.full((length, length), float("-inf"), device=contexts.device), diagonal=1)
        for block in self.blocks:
            x = block(x, mask)
        raw = self.head(self.ln_out(x))
        df = 2.0 + nn.functional.softplus(raw[..., 0])
        loc = raw[..., 1]
        scale = SIGMA_FLOOR + nn.functional.softplus(raw[..., 2])
        return df, loc, scale


def forward_dist(model: LagForecaster, context: np.ndarray,
                 cfg: ForecastConfig) -> DistHead:
    """Next-step Student-t parameters (scaled space) for one context."""
    context = np.asarray(context, dtype=np.float64)
    if context.size != cfg.context_len:
        raise ValueError(f"context length {context.size} != {cfg.context_len}")
    scaled, _, _ = scale_context(context)
    with torch.no_grad():
        df, loc, scale = model(torch.as_tensor(scaled, dtype=torch.float32)[None])
    return DistHead(df=float(df[0, -1]), loc=float(loc[0, -1]), scale=float(scale[0, -1]))


def _sample_student_t(rng: np.random.Generator, df, loc, scale):
    return loc + scale * rng.standard_t(df)


def sample_forecast(model: LagForecaster, context: np.ndarray, cfg: ForecastConfig,
                    target_name: str = "") -> ForecastDistribution:
    """Autoregressive sampling: draw a step, append, slide the window.

    All sample paths advance in one batch; the RNG is seeded from
    cfg.seed so forecasts are reproducible.
    """
    context = np.asarray(context, dtype=np.float64)
    if context.size != cfg.context_len:
        raise ValueError(f"context length {context.size} != {cfg.context_len}")
    scaled, mean, std = scale_context(context)
    rng = np.random.default_rng(cfg.seed)
    paths = np.tile(scaled, (cfg.num_samples, 1))
    out = np.empty((cfg.num_samples, cfg.horizon))
    model.eval()
    with torch.no_grad():
        for step in range(cfg.horizon):
            df, loc, scale = model(torch.as_tensor(paths, dtype=torch.float32))
            df = df[:, -1].numpy().astype(np.float64)
            loc = loc[:, -1].numpy().astype(np.float64)
            sc = scale[:, -1].numpy().astype(np.float64)
            draw = _sample_student_t(rng, df, loc, sc)
            bad = ~np.isfinite(draw)
            if bad.any():  # Student-t with small df can produce rare overflow
                draw[bad] = _sample_student_t(rng, df[bad], loc[bad], sc[bad])
                if not np.all(np.isfinite(draw)):
                    raise FloatingPointError(f"non-finite sample at step {step}")
            out[:, step] = draw
            paths = np.concatenate([paths[:, 1:], draw[:, None]], axis=1)
    return ForecastDistribution(samples=out * std + mean, target_name=target_name)


def _nll(df: torch.Tensor, loc: torch.Tensor, scale: torch.Tensor,
         target: torch.Tensor) -> torch.Tensor:
    dist = torch.distributions.StudentT(df, loc, scale)
    return -dist.log_prob(target).mean()


def _random_slices(rng: np.random.Generator, series_list, slice_len: int, count: int):
    starts = []
    for _ in range(count):
        idx = int(rng.integers(len(series_list)))
        values = series_list[idx].values
        start = int(rng.integers(values.size - slice_len + 1))
        starts.append(values[start:start + slice_len])
    return np.stack(starts)


def train_forecaster(model: LagForecaster, series_list, cfg: ForecastConfig,
                     epochs: int = 50, patience: int = 5, lr: float = 1e-3,
                     batch_size: int = 16, steps_per_epoch: int = 25,
                     seed: int = 0) -> tuple[LagForecaster, list[float]]:
    """Minimize Student-t NLL of next-step targets over random context
    slices; early-stop on a held-out validation slice set and return the
    best-validation weights."""
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    slice_len = cfg.context_len + 1
    for series in series_list:
        if series.values.size < slice_len:
            raise ValueError(
                f"series {series.name!r} shorter than context_len + 1 = {slice_len}")
    if epochs == 0:
        return model, []

    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    val_slices = _random_slices(rng, series_list, slice_len, max(4, batch_size))
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)

    def batch_nll(slices: np.ndarray) -> torch.Tensor:
        scaled = np.stack([scale_context(s)[0] for s in slices])
        contexts = torch.as_tensor(scaled[:, :-1], dtype=torch.float32)
        targets = torch.as_tensor(scaled[:, 1:], dtype=torch.float32)
        df, loc, scale = model(contexts)
        return _nll(df, loc, scale, targets)

    best_val = math.inf
    best_state = copy.deepcopy(model.state_dict())
    stale = 0
    curve = []
    for epoch in range(epochs):
        model.train()
        for _ in range(steps_per_epoch):
            loss = batch_nll(_random_slices(rng, series_list, slice_len, batch_size))
            if not torch.isfinite(loss):
                raise FloatingPointError(f"non-finite training loss at epoch {epoch}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        model.eval()
        with torch.no_grad():
            val = float(batch_nll(val_slices))
        curve.append(val)
        if val < best_val - 1e-6:
            best_val = val
            best_state = copy.deepcopy(model.state_dict())
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                break
    model.load_state_dict(best_state)
    return model, curve


def climatological_forecast(history: np.ndarray, horizon: int, num_samples: int,
                            seed: int = 0, target_name: str = "") -> ForecastDistribution:
    """Unconditional baseline: resample the empirical history at every step."""
    rng = np.random.default_rng(seed)
    draws = rng.choice(np.asarray(history, dtype=np.float64),
                       size=(num_samples, horizon), replace=True)
    return ForecastDistribution(samples=draws, target_name=target_name)


def crps_empirical(samples: np.ndarray, y: float) -> float:
    """CRPS = mean|X - y| - (1/(2 S^2)) sum_ij |X_i - X_j| (empirical form)."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("empty sample set")
    s = x.size
    term1 = np.mean(np.abs(x - y))
    xs = np.sort(x)
    # sum_{i,j} |X_i - X_j| = 2 * sum_k (2k + 1 - S) * X_(k)
    coeffs = 2.0 * np.arange(s) + 1.0 - s
    term2 = (coeffs @ xs) / (s * s)
    return float(term1 - term2)


@dataclass(frozen=True)
class CrpsSummary:
    mean: float
    std: float
    per_series: tuple[float, ...]
    box_stats: dict = field(default_factory=dict)


def evaluate_forecasts(dists: list[ForecastDistribution],
                       truths: list[np.ndarray]) -> CrpsSummary:
    """Per-step CRPS averaged over the horizon per forecast, then
    aggregated to mean/std plus box-plot statistics."""
    if len(dists) != len(truths):
        raise ValueError(f"{len(dists)} forecasts vs {len(truths)} truth series")
    per_series = []
    for dist, truth in zip(dists, truths):
        truth = np.asarray(truth, dtype=np.float64).ravel()
        if truth.size != dist.horizon:
            raise ValueError(f"truth length {truth.size} != horizon {dist.horizon}")
        steps = [crps_empirical(dist.samples[:, t], truth[t])
                 for t in range(dist.horizon)]
        per_series.append(float(np.mean(steps)))
    arr = np.array(per_series)
    box = {
        "min": float(arr.min()),
        "q1": float(np.quantile(arr, 0.25)),
        "median": float(np.quantile(arr, 0.5)),
        "q3": float(np.quantile(arr, 0.75)),
        "max": float(arr.max()),
    }
    return CrpsSummary(mean=float(arr.mean()), std=float(arr.std()),
                       per_series=tuple(per_series), box_stats=box)
