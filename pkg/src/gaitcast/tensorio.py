"""On-disk tensor formats.

Binary format: little-endian, uint32 ndim, ndim x uint64 dims, then the
float64 payload in C order. Checkpoints are one binary file holding the
tensors back to back in manifest order, next to a JSON manifest carrying
the config and tensor names.

Flat CSV format for feature/target tensors:
    window,channel_or_joint,feature_or_quantity,value
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np


def write_tensor(fh, array: np.ndarray) -> None:
    arr = np.ascontiguousarray(array, dtype="<f8")
    fh.write(struct.pack("<I", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    fh.write(arr.tobytes())


def read_tensor(fh) -> np.ndarray:
    ndim = struct.unpack("<I", fh.read(4))[0]
    shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
    count = int(np.prod(shape)) if ndim else 1
    data = np.frombuffer(fh.read(8 * count), dtype="<f8")
    return data.reshape(shape).astype(np.float64)


def save_tensor(path: str | Path, array: np.ndarray) -> None:
    with open(path, "wb") as fh:
        write_tensor(fh, array)


def load_tensor(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_tensor(fh)


def save_checkpoint(prefix: str | Path, config: dict,
                    tensors: dict[str, np.ndarray]) -> None:
    """Write <prefix>.json (config + tensor names) and <prefix>.bin."""
    prefix = Path(prefix)
    names = sorted(tensors)
    manifest = {"config": config, "tensors": names}
    with open(prefix.with_suffix(".json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    with open(prefix.with_suffix(".bin"), "wb") as fh:
        for name in names:
            write_tensor(fh, tensors[name])


def load_checkpoint(prefix: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    prefix = Path(prefix)
    with open(prefix.with_suffix(".json")) as fh:
        manifest = json.load(fh)
    tensors = {}
    with open(prefix.with_suffix(".bin"), "rb") as fh:
        for name in manifest["tensors"]:
            tensors[name] = read_tensor(fh)
    return manifest["config"], tensors


def save_flat_csv(path: str | Path, data: np.ndarray) -> None:
    """Flatten a [W x A x B] tensor to the canonical 4-column CSV."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 3:
        raise ValueError(f"expected a 3-axis tensor, got shape {data.shape}")
    with open(path, "w") as fh:
        fh.write("window,channel_or_joint,feature_or_quantity,value\n")
        for w in range(data.shape[0]):
            for a in range(data.shape[1]):
                for b in range(data.shape[2]):
                    fh.write(f"{w},{a},{b},{data[w, a, b]:.17g}\n")


def load_flat_csv(path: str | Path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "window,channel_or_joint,feature_or_quantity,value":
            raise ValueError(f"{path}: unexpected header {header!r}")
        for line in fh:
            w, a, b, v = line.strip().split(",")
            rows.append((int(w), int(a), int(b), float(v)))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    shape = tuple(max(r[i] for r in rows) + 1 for i in range(3))
    out = np.empty(shape)
    for w, a, b, v in rows:
        out[w, a, b] = v
    return out
