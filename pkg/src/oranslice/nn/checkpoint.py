"""Binary checkpoints: one JSON header line, then little-endian float64 blocks.

The header lists every network section (dims, activation tags) and every
extra array (name, shape) in the order their blocks follow; no timestamps
are stored, so equal parameters give byte-identical files.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .core import DenseNet

MAGIC = "oranslice-checkpoint"
SCHEMA_VERSION = 1
_DTYPE = np.dtype("<f8")


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, nets: dict[str, DenseNet], *, arrays: dict[str, np.ndarray] | None = None,
                    meta: dict | None = None, step: int = 0) -> str:
    """Write the checkpoint and return its sha256 hex digest."""
    arrays = arrays or {}
    header = {
        "magic": MAGIC,
        "schema_version": SCHEMA_VERSION,
        "step": int(step),
        "sections": [{"name": k, "dims": net.dims, "activations": list(net.activations)}
                     for k, net in nets.items()],
        "arrays": [{"name": k, "shape": list(np.shape(v))} for k, v in arrays.items()],
        "meta": meta or {},
    }
    blob = bytearray(json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n")
    for net in nets.values():
        for p in net.params():
            blob += np.ascontiguousarray(p, dtype=_DTYPE).tobytes()
    for v in arrays.values():
        blob += np.ascontiguousarray(v, dtype=_DTYPE).tobytes()
    Path(path).write_bytes(bytes(blob))
    return hashlib.sha256(blob).hexdigest()


def load_checkpoint(path):
    """Returns (nets, arrays, header)."""
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    if nl < 0:
        raise CheckpointError(f"{path}: missing header line")
    try:
        header = json.loads(data[:nl])
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: unreadable header") from exc
    if header.get("magic") != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if header.get("schema_version") != SCHEMA_VERSION:
        raise CheckpointError(f"{path}: unsupported schema_version {header.get('schema_version')}")
    offset = nl + 1

    def take(shape):
        nonlocal offset
        n = int(np.prod(shape, dtype=int))
        end = offset + n * _DTYPE.itemsize
        if end > len(data):
            raise CheckpointError(f"{path}: truncated parameter block")
        out = np.frombuffer(data[offset:end], dtype=_DTYPE).reshape(shape).astype(float)
        offset = end
        return out

    nets = {}
    for sec in header["sections"]:
        dims = sec["dims"]
        ws, bs = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            ws.append(take((fan_in, fan_out)))
            bs.append(take((fan_out,)))
        nets[sec["name"]] = DenseNet(ws, bs, list(sec["activations"]))
    arrays = {a["name"]: take(tuple(a["shape"])) for a in header["arrays"]}
    if offset != len(data):
        raise CheckpointError(f"{path}: {len(data) - offset} trailing bytes")
    return nets, arrays, header


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
