"""Canonical gait record model: parsing, serialization and synthetic data.

A record on disk is a CSV (time column, 9 sEMG channels, 8 joint angle
columns, 8 joint torque columns) plus a JSON sidecar carrying subject id,
gait label and sample rate. sEMG rows and joint rows may differ in length;
joint columns are blank-padded at the tail in that case.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

GAIT_LABELS = ("DNS", "UPS")
NUM_EMG_CHANNELS = 9
NUM_JOINTS = 8
CANONICAL_SAMPLE_RATE_HZ = 1926.0

# Bilateral hip adduction, hip flexion, knee flexion, ankle flexion.
JOINT_NAMES = (
    "L_hipAdd", "L_hipFlex", "L_kneeFlex", "L_ankleFlex",
    "R_hipAdd", "R_hipFlex", "R_kneeFlex", "R_ankleFlex",
)

CSV_HEADER = (
    ["t"]
    + [f"emg{i + 1}" for i in range(NUM_EMG_CHANNELS)]
    + [f"angle{name}" for name in JOINT_NAMES]
    + [f"torque{name}" for name in JOINT_NAMES]
)

# Fundamental frequency of the synthetic gait cycle.
SYNTH_GAIT_FREQ_HZ = 1.0


class FormatError(ValueError):
    """Malformed record file (bad header, unparseable value, bad sidecar)."""


class DimensionError(ValueError):
    """Record arrays have the wrong number of columns or inconsistent rows."""


@dataclass(frozen=True)
class RawRecord:
    """One subject/trial: sEMG in mV plus joint angles (deg) and torques (Nm)."""

    subject_id: str
    gait_label: str
    semg: np.ndarray      # [T x 9]
    angles: np.ndarray    # [T_j x 8]
    torques: np.ndarray   # [T_j x 8]
    sample_rate_hz: float

    def __post_init__(self):
        semg = np.asarray(self.semg, dtype=np.float64)
        angles = np.asarray(self.angles, dtype=np.float64)
        torques = np.asarray(self.torques, dtype=np.float64)
        object.__setattr__(self, "semg", semg)
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "torques", torques)
        if self.gait_label not in GAIT_LABELS:
            raise FormatError(f"gait_label must be one of {GAIT_LABELS}, got {self.gait_label!r}")
        if semg.ndim != 2 or semg.shape[1] != NUM_EMG_CHANNELS:
            raise DimensionError(f"semg must have {NUM_EMG_CHANNELS} columns, got shape {semg.shape}")
        if angles.ndim != 2 or angles.shape[1] != NUM_JOINTS:
            raise DimensionError(f"angles must have {NUM_JOINTS} columns, got shape {angles.shape}")
        if torques.shape != angles.shape:
            raise DimensionError(
                f"torques shape {torques.shape} must match angles shape {angles.shape}")
        if not (self.sample_rate_hz > 0):
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        for name, arr in (("semg", semg), ("angles", angles), ("torques", torques)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")

    @property
    def num_samples(self) -> int:
        return self.semg.shape[0]

    @property
    def num_joint_samples(self) -> int:
        return self.angles.shape[0]


@dataclass(frozen=True)
class UnivariateSeries:
    """A single joint quantity as an iso-sampled scalar series."""

    values: np.ndarray
    dt_ms: float
    name: str

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("values must be a nonempty 1-D array")
        if not np.all(np.isfinite(values)):
            raise ValueError("values contain non-finite entries")
        if not (self.dt_ms > 0):
            raise ValueError(f"dt_ms must be positive, got {self.dt_ms}")


def _sidecar_path(csv_path: Path) -> Path:
    return csv_path.with_suffix(".json")


def serialize_record(record: RawRecord, csv_path: str | Path) -> None:
    """Write a record as canonical CSV plus JSON sidecar.

    Values are written with 17 significant digits, so parse(serialize(r))
    reproduces every float exactly.
    """
    csv_path = Path(csv_path)
    t_emg = record.num_samples
    t_joint = record.num_joint_samples
    n_rows = max(t_emg, t_joint)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for i in range(n_rows):
            row = [f"{i / record.sample_rate_hz:.17g}"]
            if i < t_emg:
                row += [f"{v:.17g}" for v in record.semg[i]]
            else:
                row += [""] * NUM_EMG_CHANNELS
            if i < t_joint:
                row += [f"{v:.17g}" for v in record.angles[i]]
                row += [f"{v:.17g}" for v in record.torques[i]]
            else:
                row += [""] * (2 * NUM_JOINTS)
            writer.writerow(row)
    sidecar = {
        "subject_id": record.subject_id,
        "gait_label": record.gait_label,
        "sample_rate_hz": record.sample_rate_hz,
    }
    with open(_sidecar_path(csv_path), "w") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")


def _parse_columns(rows: list[list[str]], col_offset: int, n_cols: int,
                   path: Path) -> np.ndarray:
    """Parse a contiguous block of columns; blank tails are allowed."""
    out = []
    for r, row in enumerate(rows):
        cells = row[col_offset:col_offset + n_cols]
        if all(c == "" for c in cells):
            # Blank padding may only appear at the tail.
            for later in rows[r + 1:]:
                if any(c != "" for c in later[col_offset:col_offset + n_cols]):
                    raise FormatError(
                        f"{path}: blank cells before data row {r + 2} in columns "
                        f"{col_offset}..{col_offset + n_cols - 1}")
            break
        vals = []
        for c, cell in enumerate(cells):
            try:
                v = float(cell)
            except ValueError:
                raise FormatError(
                    f"{path}: unparseable value {cell!r} at row {r + 2}, "
                    f"column {CSV_HEADER[col_offset + c]!r}") from None
            if not math.isfinite(v):
                raise FormatError(f"{path}: non-finite value at row {r + 2}, "
                                  f"column {CSV_HEADER[col_offset + c]!r}")
            vals.append(v)
        out.append(vals)
    return np.asarray(out, dtype=np.float64).reshape(len(out), n_cols)


def parse_record(path: str | Path) -> RawRecord:
    """Parse a canonical CSV + sidecar pair into a validated RawRecord."""
    path = Path(path)
    sidecar_path = _sidecar_path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if not sidecar_path.exists():
        raise FormatError(f"missing sidecar {sidecar_path}")
    with open(sidecar_path) as fh:
        meta = json.load(fh)
    for key in ("subject_id", "gait_label", "sample_rate_hz"):
        if key not in meta:
            raise FormatError(f"{sidecar_path}: missing key {key!r}")

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        rows = list(reader)

    if len(header) != len(CSV_HEADER):
        raise DimensionError(
            f"{path}: expected {len(CSV_HEADER)} columns, got {len(header)}")
    for got, want in zip(header, CSV_HEADER):
        if got != want:
            raise FormatError(f"{path}: unexpected header column {got!r}, expected {want!r}")
    for r, row in enumerate(rows):
        if len(row) != len(CSV_HEADER):
            raise DimensionError(f"{path}: row {r + 2} has {len(row)} cells, "
                                 f"expected {len(CSV_HEADER)}")

    semg = _parse_columns(rows, 1, NUM_EMG_CHANNELS, path)
    angles = _parse_columns(rows, 1 + NUM_EMG_CHANNELS, NUM_JOINTS, path)
    torques = _parse_columns(rows, 1 + NUM_EMG_CHANNELS + NUM_JOINTS, NUM_JOINTS, path)
    return RawRecord(
        subject_id=str(meta["subject_id"]),
        gait_label=str(meta["gait_label"]),
        semg=semg,
        angles=angles,
        torques=torques,
        sample_rate_hz=float(meta["sample_rate_hz"]),
    )


def to_univariate(record: RawRecord, joint: int, quantity: str) -> UnivariateSeries:
    """Extract one joint quantity as a univariate series (dt in ms)."""
    if not 0 <= joint < NUM_JOINTS:
        raise IndexError(f"joint index {joint} out of range 0..{NUM_JOINTS - 1}")
    if quantity == "angle":
        col = record.angles[:, joint]
    elif quantity == "torque":
        col = record.torques[:, joint]
    else:
        raise ValueError(f"quantity must be 'angle' or 'torque', got {quantity!r}")
    return UnivariateSeries(
        values=col.copy(),
        dt_ms=1000.0 / record.sample_rate_hz,
        name=f"{quantity}_{JOINT_NAMES[joint]}",
    )


def _smooth_noise(rng: np.random.Generator, n: int) -> np.ndarray:
    """Band-limited unit-ish noise: white noise through a short Hann FIR."""
    kernel = np.hanning(7)
    kernel /= kernel.sum()
    noise = rng.standard_normal(n + len(kernel) - 1)
    return np.convolve(noise, kernel, mode="valid")


def synth_gait(seed: int, cycles: int,
               sample_rate_hz: float = CANONICAL_SAMPLE_RATE_HZ,
               gait_label: str = "DNS") -> RawRecord:
    """Generate a deterministic synthetic gait record.

    Joint angles are low-harmonic oscillations at the gait frequency,
    torques are scaled angle derivatives plus a harmonic, and each sEMG
    channel is band-limited noise amplitude-modulated by the rectified
    velocity of an assigned joint, so sEMG features genuinely carry
    information about the targets.
    """
    if cycles < 1:
        raise ValueError(f"cycles must be >= 1, got {cycles}")
    if not sample_rate_hz > 0:
        raise ValueError("sample_rate_hz must be positive")

    rng = np.random.default_rng(seed)
    n = int(round(cycles * sample_rate_hz / SYNTH_GAIT_FREQ_HZ))
    t = np.arange(n) / sample_rate_hz

    # Label-dependent offset keeps DNS-like and UPS-like records distinct.
    label_shift = 0.0 if gait_label == "DNS" else 0.35

    angles = np.empty((n, NUM_JOINTS))
    torques = np.empty((n, NUM_JOINTS))
    for j in range(NUM_JOINTS):
        offset = rng.uniform(-10.0, 10.0)
        phase = rng.uniform(0, 2 * np.pi, size=3) + label_shift
        amps = rng.uniform(5.0, 25.0) / (1.0 + np.arange(3)) ** 2
        angle = offset + sum(
            a * np.sin(2 * np.pi * (k + 1) * SYNTH_GAIT_FREQ_HZ * t + p)
            for k, (a, p) in enumerate(zip(amps, phase)))
        vel = np.gradient(angle, 1.0 / sample_rate_hz)
        torque = 0.05 * vel + rng.uniform(1.0, 4.0) * np.sin(
            2 * np.pi * SYNTH_GAIT_FREQ_HZ * t + rng.uniform(0, 2 * np.pi))
        angles[:, j] = angle
        torques[:, j] = torque

    semg = np.empty((n, NUM_EMG_CHANNELS))
    for c in range(NUM_EMG_CHANNELS):
        j = c % NUM_JOINTS
        vel = np.gradient(angles[:, j], 1.0 / sample_rate_hz)
        env = np.abs(vel) / max(np.max(np.abs(vel)), 1e-12) + 0.2
        gain = rng.uniform(0.5, 1.5)
        semg[:, c] = gain * env * _smooth_noise(rng, n)

    return RawRecord(
        subject_id=f"synth-{seed:04d}",
        gait_label=gait_label,
        semg=semg,
        angles=angles,
        torques=torques,
        sample_rate_hz=float(sample_rate_hz),
    )
