"""Figure rendering for experiment reports.

Every report figure is rendered from the same arrays that go into the
delimited plot-data files, so the PNGs are a convenience view; the CSVs
remain the canonical output.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_PNG_META = {"Software": "gaitcast"}


def _save(fig, path: Path) -> None:
    fig.savefig(path, dpi=110, metadata=_PNG_META)
    plt.close(fig)


def plot_predictions(truth: np.ndarray, pred: np.ndarray, names: list[str],
                     path: str | Path, title: str) -> None:
    """Grid of per-output prediction-vs-truth traces ([N x K] arrays)."""
    n_out = truth.shape[1]
    ncols = 4
    nrows = int(np.ceil(n_out / ncols))
    fig, axes = plt.subplots(nrows, ncols, figsize=(4 * ncols, 2.2 * nrows),
                             sharex=True, squeeze=False)
    for k in range(nrows * ncols):
        ax = axes[k // ncols][k % ncols]
        if k >= n_out:
            ax.axis("off")
            continue
        ax.plot(truth[:, k], lw=0.8, label="truth")
        ax.plot(pred[:, k], lw=0.8, label="prediction")
        ax.set_title(names[k], fontsize=8)
        ax.tick_params(labelsize=7)
    axes[0][0].legend(fontsize=7)
    fig.suptitle(title)
    fig.tight_layout()
    _save(fig, Path(path))


def plot_loss_curve(losses: list[float], path: str | Path,
                    title: str = "RMSE loss") -> None:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(range(len(losses)), losses, marker="o", ms=3)
    ax.set_xlabel("step")
    ax.set_ylabel("RMSE")
    ax.set_title(title)
    fig.tight_layout()
    _save(fig, Path(path))


def plot_forecast_fan(context: np.ndarray, truth: np.ndarray,
                      quantiles: dict[str, np.ndarray], path: str | Path,
                      title: str) -> None:
    """Context tail, truth, median forecast and q05-q95 / q25-q75 bands."""
    fig, ax = plt.subplots(figsize=(7, 3.2))
    n_ctx, horizon = context.size, truth.size
    t_ctx = np.arange(-n_ctx, 0)
    t_fc = np.arange(horizon)
    ax.plot(t_ctx, context, lw=0.8, color="gray", label="context")
    ax.plot(t_fc, truth, lw=1.0, color="C0", label="truth")
    ax.plot(t_fc, quantiles["q50"], lw=1.0, color="C2", label="median forecast")
    ax.fill_between(t_fc, quantiles["q05"], quantiles["q95"],
                    color="C2", alpha=0.15, label="5-95%")
    ax.fill_between(t_fc, quantiles["q25"], quantiles["q75"],
                    color="C2", alpha=0.3, label="25-75%")
    ax.axvline(0, color="k", lw=0.5, ls="--")
    ax.set_title(title)
    ax.legend(fontsize=7, ncol=3)
    fig.tight_layout()
    _save(fig, Path(path))


def plot_crps_box(groups: dict[str, list[float]], path: str | Path,
                  title: str = "CRPS by target group") -> None:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    labels = list(groups)
    ax.boxplot([groups[k] for k in labels], tick_labels=labels)
    ax.set_ylabel("CRPS")
    ax.set_title(title)
    fig.tight_layout()
    _save(fig, Path(path))
