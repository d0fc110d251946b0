"""Signal conditioning: baseline removal, wavelet packet denoising,
Butterworth IIR filtering and max-abs normalization.

The wavelet packet transform is the periodized orthogonal Daubechies-4
transform, so with threshold 0 it is an exact identity (up to float error)
for lengths divisible by 2^level. The Butterworth filter is designed from
the analog prototype via the bilinear transform and applied causally as a
cascade of second-order sections.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Daubechies-4 scaling (lowpass decomposition) coefficients; sum = sqrt(2).
_DB4_LO = np.array([
    0.23037781330885523, 0.71484657055254153, 0.63088076792959036,
    -0.027983769416983849, -0.18703481171888114, 0.030841381835986965,
    0.032883011666982945, -0.010597401784997278,
])
_DB4_HI = (_DB4_LO[::-1] * np.array([1.0, -1.0] * 4))  # quadrature mirror


@dataclass(frozen=True)
class DenoiseConfig:
    wavelet_threshold: float = 0.08
    decomposition_level: int = 8
    threshold_mode: str = "soft"

    def __post_init__(self):
        if self.wavelet_threshold < 0:
            raise ValueError("wavelet_threshold must be >= 0")
        if self.decomposition_level < 1:
            raise ValueError("decomposition_level must be >= 1")
        if self.threshold_mode not in ("soft", "hard"):
            raise ValueError(f"unknown threshold_mode {self.threshold_mode!r}")


@dataclass(frozen=True)
class FilterConfig:
    order: int = 7
    kind: str = "bandpass"
    cutoff_hz: tuple[float, ...] = (20.0, 450.0)
    sample_rate_hz: float = 1926.0

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.kind not in ("lowpass", "bandpass"):
            raise ValueError(f"unknown filter kind {self.kind!r}")
        cutoffs = self.cutoff_hz
        if np.isscalar(cutoffs):
            cutoffs = (float(cutoffs),)
        object.__setattr__(self, "cutoff_hz", tuple(float(c) for c in cutoffs))
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        nyq = self.sample_rate_hz / 2.0
        expected = 1 if self.kind == "lowpass" else 2
        if len(self.cutoff_hz) != expected:
            raise ValueError(f"{self.kind} needs {expected} cutoff(s), got {len(self.cutoff_hz)}")
        for c in self.cutoff_hz:
            if not 0 < c < nyq:
                raise ValueError(f"cutoff {c} Hz outside (0, {nyq}) Hz")
        if self.kind == "bandpass" and not self.cutoff_hz[0] < self.cutoff_hz[1]:
            raise ValueError("bandpass requires low cutoff < high cutoff")


def baseline_correct(signal: np.ndarray) -> np.ndarray:
    """Remove the DC baseline by subtracting the signal mean."""
    x = np.asarray(signal, dtype=np.float64)
    if x.size == 0:
        raise ValueError("signal is empty")
    return x - x.mean()


def _split(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One periodized analysis step: even length -> (low, high) halves."""
    n = x.size
    idx = (2 * np.arange(n // 2)[:, None] + np.arange(_DB4_LO.size)[None, :]) % n
    seg = x[idx]
    return seg @ _DB4_LO, seg @ _DB4_HI


def _merge(low: np.ndarray, high: np.ndarray) -> np.ndarray:
    """Transpose of _split: exact inverse by orthogonality."""
    n = 2 * low.size
    idx = (2 * np.arange(low.size)[:, None] + np.arange(_DB4_LO.size)[None, :]) % n
    x = np.zeros(n)
    np.add.at(x, idx, np.outer(low, _DB4_LO) + np.outer(high, _DB4_HI))
    return x


def _wpt_forward(x: np.ndarray, level: int) -> list[np.ndarray]:
    if level == 0:
        return [x]
    low, high = _split(x)
    return _wpt_forward(low, level - 1) + _wpt_forward(high, level - 1)


def _wpt_inverse(leaves: list[np.ndarray], level: int) -> np.ndarray:
    if level == 0:
        return leaves[0]
    half = len(leaves) // 2
    low = _wpt_inverse(leaves[:half], level - 1)
    high = _wpt_inverse(leaves[half:], level - 1)
    return _merge(low, high)


def wpt_denoise(signal: np.ndarray, cfg: DenoiseConfig = DenoiseConfig(),
                pad: bool = True) -> np.ndarray:
    """Full wavelet-packet decomposition, per-subband relative thresholding,
    reconstruction.

    Each leaf subband is thresholded at `wavelet_threshold * max|coeff|`
    of that subband. Lengths not divisible by 2^level are symmetric-padded
    at the tail and cropped back after reconstruction.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.size == 0:
        raise ValueError("signal is empty")
    if not np.all(np.isfinite(x)):
        raise ValueError("signal contains non-finite values")
    block = 2 ** cfg.decomposition_level
    n0 = x.size
    if n0 % block != 0:
        if not pad:
            raise ValueError(
                f"signal length {n0} is not a multiple of 2^{cfg.decomposition_level}"
                " and padding is disabled")
        pad_len = block - n0 % block
        x = np.pad(x, (0, pad_len), mode="symmetric")

    leaves = _wpt_forward(x, cfg.decomposition_level)
    thresholded = []
    for leaf in leaves:
        thr = cfg.wavelet_threshold * np.max(np.abs(leaf), initial=0.0)
        if cfg.threshold_mode == "soft":
            leaf = np.sign(leaf) * np.maximum(np.abs(leaf) - thr, 0.0)
        else:
            leaf = np.where(np.abs(leaf) > thr, leaf, 0.0)
        thresholded.append(leaf)
    out = _wpt_inverse(thresholded, cfg.decomposition_level)
    return out[:n0]


def _conjugate_pairs(roots: np.ndarray) -> tuple[list[tuple[complex, complex]], list[complex]]:
    """Sort roots into conjugate pairs plus leftover (real) singles."""
    pos = sorted((r for r in roots if r.imag > 1e-12), key=lambda r: (r.real, r.imag))
    neg = sorted((r for r in roots if r.imag < -1e-12), key=lambda r: (r.real, -r.imag))
    reals = [r for r in roots if abs(r.imag) <= 1e-12]
    if len(pos) != len(neg):
        raise ValueError("roots do not come in conjugate pairs")
    return list(zip(pos, neg)), reals


def design_butterworth_sos(cfg: FilterConfig) -> np.ndarray:
    """Design the digital Butterworth filter as second-order sections.

    Returns an array [n_sections x 6] of (b0, b1, b2, 1, a1, a2); the
    overall gain is folded into the first section.
    """
    n = cfg.order
    fs = cfg.sample_rate_hz
    fs2 = 2.0 * fs

    # Analog prototype: n poles on the unit circle, left half-plane.
    k = np.arange(n)
    proto = np.exp(1j * np.pi * (2 * k + n + 1) / (2 * n))

    if cfg.kind == "lowpass":
        wc = fs2 * np.tan(np.pi * cfg.cutoff_hz[0] / fs)
        poles = proto * wc
        zeros = np.array([], dtype=complex)
        gain = wc ** n
    else:
        w1 = fs2 * np.tan(np.pi * cfg.cutoff_hz[0] / fs)
        w2 = fs2 * np.tan(np.pi * cfg.cutoff_hz[1] / fs)
        bw, w0 = w2 - w1, np.sqrt(w1 * w2)
        half = proto * bw / 2.0
        shift = np.sqrt(half ** 2 - w0 ** 2)
        poles = np.concatenate([half + shift, half - shift])
        zeros = np.zeros(n, dtype=complex)
        gain = bw ** n

    # Bilinear transform.
    zd = (fs2 + zeros) / (fs2 - zeros)
    pd = (fs2 + poles) / (fs2 - poles)
    gain = float(np.real(gain * np.prod(fs2 - zeros) / np.prod(fs2 - poles)))
    zd = np.concatenate([zd, -np.ones(len(pd) - len(zd))])

    pole_pairs, real_poles = _conjugate_pairs(pd)
    zero_pairs, real_zeros = _conjugate_pairs(zd)
    # All remaining zeros are real (at +/-1); pair +1 with -1 where possible
    # so each biquad stays well scaled across the band.
    real_zeros.sort(key=lambda z: -z.real)
    sections = []
    for p1, p2 in pole_pairs:
        if zero_pairs:
            z1, z2 = zero_pairs.pop()
        else:
            z1 = real_zeros.pop(0) if real_zeros else 0.0
            z2 = real_zeros.pop() if real_zeros else 0.0
        b = np.real(np.poly([z1, z2]))
        a = np.real(np.poly([p1, p2]))
        sections.append(np.concatenate([b, a]))
    for p in real_poles:
        z = real_zeros.pop() if real_zeros else 0.0
        b = np.real(np.poly([z]))
        a = np.real(np.poly([p]))
        sections.append(np.array([b[0], b[1], 0.0, a[0], a[1], 0.0]))
    sos = np.asarray(sections)
    sos[0, :3] *= gain
    return sos


def sos_frequency_response(sos: np.ndarray, freqs_hz: np.ndarray,
                           sample_rate_hz: float) -> np.ndarray:
    """Complex response H(e^{j w}) of an SOS cascade at the given frequencies."""
    w = 2 * np.pi * np.asarray(freqs_hz, dtype=np.float64) / sample_rate_hz
    z1 = np.exp(-1j * w)
    z2 = z1 * z1
    h = np.ones_like(z1, dtype=complex)
    for b0, b1, b2, a0, a1, a2 in sos:
        h *= (b0 + b1 * z1 + b2 * z2) / (a0 + a1 * z1 + a2 * z2)
    return h


def sos_apply(sos: np.ndarray, signal: np.ndarray) -> np.ndarray:
    """Causal single-pass filtering through the cascade (direct form II-T)."""
    y = np.asarray(signal, dtype=np.float64).copy()
    for b0, b1, b2, _a0, a1, a2 in sos:
        s1 = s2 = 0.0
        for i in range(y.size):
            x = y[i]
            out = b0 * x + s1
            s1 = b1 * x - a1 * out + s2
            s2 = b2 * x - a2 * out
            y[i] = out
    return y


def butterworth_filter(signal: np.ndarray, cfg: FilterConfig) -> np.ndarray:
    """Design and causally apply the configured Butterworth filter."""
    x = np.asarray(signal, dtype=np.float64)
    if x.size == 0:
        raise ValueError("signal is empty")
    sos = design_butterworth_sos(cfg)
    y = sos_apply(sos, x)
    if not np.all(np.isfinite(y)):
        raise FloatingPointError("filter output is non-finite (unstable configuration)")
    return y


def maxabs_normalize(signal: np.ndarray) -> np.ndarray:
    """Scale by the maximum absolute value into [-1, 1]; all-zero maps to itself."""
    x = np.asarray(signal, dtype=np.float64)
    peak = np.max(np.abs(x), initial=0.0)
    if peak == 0.0:
        return x.copy()
    return x / peak
