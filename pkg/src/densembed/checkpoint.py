"""Versioned flat checkpoint files.

Layout::

    b"DEMBCKPT"                magic, 8 bytes
    uint32 LE                  format version (1)
    uint32 LE                  header length in bytes
    header                     UTF-8 JSON, keys sorted
    payload                    little-endian float64 arrays, back to back

The header carries the model kind and config, the seed, and for every
parameter its path, shape and element offset into the payload.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .layers import Model, model_from_config

MAGIC = b"DEMBCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(model: Model, seed: int | None = None, extra: dict | None = None) -> bytes:
    entries, chunks, offset = [], [], 0
    for path, p in model.params.items():
        entries.append({"path": path, "shape": list(p.shape), "offset": offset})
        chunks.append(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
        offset += p.size
    header = {"model": model.kind, "config": model.config(), "seed": seed, "params": entries,
              **({"extra": extra} if extra else {})}
    blob = json.dumps(header, sort_keys=True).encode()
    return MAGIC + struct.pack("<II", VERSION, len(blob)) + blob + b"".join(chunks)


def loads(raw: bytes) -> tuple[Model, dict]:
    if raw[:8] != MAGIC:
        raise CheckpointError("not a density-embedding checkpoint (bad magic)")
    version, hlen = struct.unpack("<II", raw[8:16])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header = json.loads(raw[16:16 + hlen].decode())
    payload = np.frombuffer(raw[16 + hlen:], dtype="<f8")
    model = model_from_config(header["model"], header["config"])
    values = {}
    for e in header["params"]:
        count = int(np.prod(e["shape"], dtype=np.int64))
        if e["offset"] + count > payload.size:
            raise CheckpointError(f"payload truncated at parameter {e['path']!r}")
        values[e["path"]] = payload[e["offset"]:e["offset"] + count].reshape(e["shape"])
    missing = set(model.params) - set(values)
    if missing:
        raise CheckpointError(f"checkpoint lacks parameters {sorted(missing)}")
    model.set_parameters(values)
    return model, header


def save(path, model: Model, seed: int | None = None, extra: dict | None = None) -> None:
    Path(path).write_bytes(dumps(model, seed, extra))


def load(path) -> tuple[Model, dict]:
    return loads(Path(path).read_bytes())
