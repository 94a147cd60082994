"""Binary matrix persistence and snapshot file round-trips.

File layout (little-endian throughout):

    bytes 0-3    magic b"WLSD"
    bytes 4-7    format version, unsigned 32-bit (currently 1)
    bytes 8-15   row count, unsigned 64-bit
    bytes 16-23  column count, unsigned 64-bit
    then rows*cols IEEE-754 binary64 values, row-major

Every matrix file has a JSON sidecar at ``<path>.meta.json``. For snapshot
files the sidecar holds exactly {"t_final": number, "steps": int,
"mu": [numbers] | null}; other consumers store free-form metadata.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .core import SnapshotMatrix, TimeGrid

__all__ = [
    "FormatError",
    "ConsistencyError",
    "write_matrix",
    "read_matrix",
    "write_snapshot",
    "read_snapshot",
    "sidecar_path",
]

MAGIC = b"WLSD"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


class FormatError(Exception):
    """Malformed file: bad magic, version, dimensions, or truncation."""


class ConsistencyError(Exception):
    """Binary payload and metadata sidecar disagree."""


def sidecar_path(path) -> Path:
    return Path(str(path) + ".meta.json")


def write_matrix(path, array, meta: dict | None = None) -> None:
    """Write a 2-d float64 matrix plus its JSON sidecar."""
    a = np.ascontiguousarray(np.asarray(array, dtype="<f8"))
    if a.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {a.shape}")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, a.shape[0], a.shape[1]))
        fh.write(a.tobytes(order="C"))
    with open(sidecar_path(path), "w") as fh:
        json.dump(meta or {}, fh, indent=1)
        fh.write("\n")


def read_matrix(path, with_meta: bool = False):
    """Read a matrix file; returns the array, or (array, meta) if asked.

    Raises FormatError for a bad header or truncated payload. A missing
    sidecar reads as empty metadata.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: file shorter than header")
    magic, version, rows, cols = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = rows * cols * 8
    payload = raw[_HEADER.size:]
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes, header implies {expected}"
        )
    a = np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(float)
    if not with_meta:
        return a
    meta_file = sidecar_path(path)
    meta = json.loads(meta_file.read_text()) if meta_file.exists() else {}
    return a, meta


def write_snapshot(snapshots: SnapshotMatrix, path) -> None:
    mu = None if snapshots.mu is None else [float(v) for v in snapshots.mu]
    meta = {
        "t_final": snapshots.grid.t_final,
        "steps": snapshots.grid.steps,
        "mu": mu,
    }
    write_matrix(path, snapshots.data, meta)


def read_snapshot(path) -> SnapshotMatrix:
    data, meta = read_matrix(path, with_meta=True)
    try:
        grid = TimeGrid(float(meta["t_final"]), int(meta["steps"]))
        mu = meta["mu"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConsistencyError(f"{path}: invalid snapshot sidecar ({exc})") from exc
    if data.shape[0] != grid.steps + 1:
        raise ConsistencyError(
            f"{path}: {data.shape[0]} rows but sidecar declares {grid.steps} steps"
        )
    return SnapshotMatrix(data, grid, None if mu is None else np.asarray(mu, float))
