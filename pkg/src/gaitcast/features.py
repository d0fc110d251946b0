"""Overlapping-window segmentation and per-window sEMG features.

Each window of each channel yields six features, in fixed order:
integral (integrated absolute value), population variance, waveform
length, zero-crossing rate, lag-1 autocorrelation, and power-weighted
mean frequency. A record becomes a [W x 9 x 6] feature tensor paired
with a [W x 8 x 2] (angle, torque) target tensor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ingest import NUM_EMG_CHANNELS, NUM_JOINTS, RawRecord

FEATURE_ORDER = (
    "integral", "variance", "wavelength", "zero_crossing_rate",
    "correlation_coefficient", "weighted_avg_frequency",
)
NUM_FEATURES = len(FEATURE_ORDER)
TARGET_QUANTITIES = ("angle", "torque")


@dataclass(frozen=True)
class WindowSpec:
    window_len: int = 100
    overlap: int = 50

    def __post_init__(self):
        if self.window_len < 1:
            raise ValueError("window_len must be >= 1")
        if not 0 <= self.overlap < self.window_len:
            raise ValueError("overlap must satisfy 0 <= overlap < window_len")

    @property
    def stride(self) -> int:
        return self.window_len - self.overlap


@dataclass(frozen=True)
class FeatureTensor:
    data: np.ndarray  # [W x 9 x 6]
    feature_order: tuple[str, ...] = FEATURE_ORDER

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        if data.ndim != 3 or data.shape[1:] != (NUM_EMG_CHANNELS, NUM_FEATURES):
            raise ValueError(f"expected [W x {NUM_EMG_CHANNELS} x {NUM_FEATURES}], "
                             f"got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("feature tensor contains non-finite values")

    @property
    def num_windows(self) -> int:
        return self.data.shape[0]

    def flattened(self) -> np.ndarray:
        """[W x 54] view for regressors that take flat feature rows."""
        return self.data.reshape(self.num_windows, -1)


@dataclass(frozen=True)
class TargetTensor:
    data: np.ndarray  # [W x 8 x 2]
    units: tuple[str, str] = ("degrees", "newton_meters")

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        if data.ndim != 3 or data.shape[1:] != (NUM_JOINTS, 2):
            raise ValueError(f"expected [W x {NUM_JOINTS} x 2], got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("target tensor contains non-finite values")

    @property
    def num_windows(self) -> int:
        return self.data.shape[0]

    def flattened(self) -> np.ndarray:
        return self.data.reshape(self.num_windows, -1)


def window_count(n_samples: int, spec: WindowSpec) -> int:
    if n_samples < spec.window_len:
        return 0
    return (n_samples - spec.window_len) // spec.stride + 1


def segment(signal: np.ndarray, spec: WindowSpec) -> list[np.ndarray]:
    """Overlapping windows; window i covers [i*stride, i*stride + window_len)."""
    x = np.asarray(signal, dtype=np.float64)
    count = window_count(x.size, spec)
    return [x[i * spec.stride: i * spec.stride + spec.window_len]
            for i in range(count)]


def feature_vector(window: np.ndarray, sample_rate_hz: float) -> np.ndarray:
    """The six features of one window, in FEATURE_ORDER."""
    x = np.asarray(window, dtype=np.float64)
    n = x.size
    if n < 2:
        raise ValueError("window must have at least 2 samples")

    integral = np.sum(np.abs(x))
    variance = np.var(x)
    wavelength = np.sum(np.abs(np.diff(x)))

    # Zero treated as positive, strict sign changes only.
    sign = x >= 0
    zcr = np.count_nonzero(sign[1:] != sign[:-1]) / (n - 1)

    a, b = x[:-1], x[1:]
    sa, sb = a.std(), b.std()
    if sa == 0.0 or sb == 0.0:
        corr = 0.0
    else:
        corr = float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))

    centered = x - x.mean()
    spectrum = np.abs(np.fft.rfft(centered)) ** 2
    freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate_hz)
    total = spectrum.sum()
    mnf = float(freqs @ spectrum / total) if total > 0 else 0.0

    return np.array([integral, variance, wavelength, zcr, corr, mnf])


def featurize(record: RawRecord, spec: WindowSpec = WindowSpec()
              ) -> tuple[FeatureTensor, TargetTensor]:
    """Window every sEMG channel, compute features, and pair each window
    with the joint sample at its final index (mapped onto the joint
    timeline by nearest-index scaling)."""
    t_emg = record.num_samples
    t_joint = record.num_joint_samples
    w = window_count(t_emg, spec)
    if w == 0:
        raise ValueError(f"record too short: {t_emg} samples < window {spec.window_len}")

    feats = np.empty((w, NUM_EMG_CHANNELS, NUM_FEATURES))
    for c in range(NUM_EMG_CHANNELS):
        for i, win in enumerate(segment(record.semg[:, c], spec)):
            feats[i, c] = feature_vector(win, record.sample_rate_hz)

    targets = np.empty((w, NUM_JOINTS, 2))
    for i in range(w):
        end_idx = i * spec.stride + spec.window_len - 1
        j_idx = min(int(round(end_idx * t_joint / t_emg)), t_joint - 1)
        targets[i, :, 0] = record.angles[j_idx]
        targets[i, :, 1] = record.torques[j_idx]

    return FeatureTensor(feats), TargetTensor(targets)


@dataclass(frozen=True)
class Standardizer:
    """Per-(channel, feature) z-score transform fitted on a feature tensor."""

    mean: np.ndarray       # [9 x 6]
    std: np.ndarray        # [9 x 6], zero-variance columns forced to 1
    zero_variance: np.ndarray = field(default_factory=lambda: np.zeros((NUM_EMG_CHANNELS, NUM_FEATURES), dtype=bool))
    fit_scope: str = "record"

    @property
    def has_degenerate_columns(self) -> bool:
        return bool(self.zero_variance.any())


def fit_standardizer(features: FeatureTensor, fit_scope: str = "record") -> Standardizer:
    if features.num_windows < 2:
        raise ValueError("need at least 2 windows to fit a standardizer")
    mean = features.data.mean(axis=0)
    std = features.data.std(axis=0)
    zero_var = std == 0.0
    std = np.where(zero_var, 1.0, std)
    return Standardizer(mean=mean, std=std, zero_variance=zero_var, fit_scope=fit_scope)


def apply_standardizer(standardizer: Standardizer, features: FeatureTensor) -> FeatureTensor:
    data = (features.data - standardizer.mean) / standardizer.std
    # Zero-variance columns are passed through untouched.
    if standardizer.has_degenerate_columns:
        data = np.where(standardizer.zero_variance, features.data, data)
    return FeatureTensor(data)


def invert_standardizer(standardizer: Standardizer, features: FeatureTensor) -> FeatureTensor:
    data = features.data * standardizer.std + standardizer.mean
    if standardizer.has_degenerate_columns:
        data = np.where(standardizer.zero_variance, features.data, data)
    return FeatureTensor(data)
