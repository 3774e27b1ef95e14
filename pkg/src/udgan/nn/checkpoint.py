"""Versioned binary checkpoints.

Layout::

    b"UDGANCKP" | u32 format_version | u32 header_len | header JSON (utf-8)
    | tensor bytes (float64, little-endian, C order) in header order

The header carries ``model_kind``, ``layer_specs``, ``seed``, free-form
``config`` and the ``tensors`` list of ``{name, shape}``. Writing is fully
deterministic, so ``save(load(blob)) == blob``.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .autograd import ConfigError

MAGIC = b"UDGANCKP"
FORMAT_VERSION = 1
_LE_F64 = np.dtype("<f8")


class CheckpointError(ValueError):
    pass


def dumps(model_kind: str, tensors: dict[str, np.ndarray], layer_specs: list[dict],
          seed: int | None, config: dict | None = None) -> bytes:
    names = list(tensors)
    header = {
        "format_version": FORMAT_VERSION,
        "model_kind": model_kind,
        "layer_specs": layer_specs,
        "seed": seed,
        "config": config or {},
        "tensors": [{"name": n, "shape": list(np.shape(tensors[n]))} for n in names],
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(hbytes)), hbytes]
    for n in names:
        parts.append(np.ascontiguousarray(tensors[n], dtype=_LE_F64).tobytes())
    return b"".join(parts)


def loads(blob: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if blob[:8] != MAGIC:
        raise CheckpointError("not a udgan checkpoint (bad magic)")
    version, hlen = struct.unpack("<II", blob[8:16])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version}")
    header = json.loads(blob[16:16 + hlen].decode("utf-8"))
    offset = 16 + hlen
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype=_LE_F64, count=n, offset=offset).reshape(shape)
        tensors[entry["name"]] = arr.astype(np.float64)
        offset += 8 * n
    if offset != len(blob):
        raise CheckpointError("trailing bytes after last tensor")
    return header, tensors


def save(path, model_kind: str, tensors, layer_specs, seed, config=None) -> str:
    """Write a checkpoint and return its sha256 hex digest."""
    blob = dumps(model_kind, tensors, layer_specs, seed, config)
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def load(path, expected_kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    header, tensors = loads(Path(path).read_bytes())
    if expected_kind is not None and header["model_kind"] != expected_kind:
        raise ConfigError(f"checkpoint holds {header['model_kind']!r}, expected {expected_kind!r}")
    return header, tensors


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
