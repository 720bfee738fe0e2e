"""Versioned binary checkpoints: JSON header + little-endian float32 blob.

Layout: magic ``ECGN``, u32 header length, UTF-8 JSON header, then the
tensor payload concatenated in the header's declared order. The header
records the net config, epoch, validation metric and each tensor's name
and shape, so the file is self-describing.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .model import NetConfig

_MAGIC = b"ECGN"
_FORMAT = "ecgnet-ckpt/1"


def save_checkpoint(path: Path | str, config: NetConfig,
                    state: dict[str, np.ndarray],
                    epoch: int = 0, metric: float | None = None) -> Path:
    path = Path(path)
    names = list(state.keys())
    header = {
        "format": _FORMAT,
        "config": config.to_json(),
        "epoch": epoch,
        "metric": metric,
        "tensors": [{"name": k, "shape": list(state[k].shape)} for k in names],
    }
    blob = b"".join(np.ascontiguousarray(state[k], dtype="<f4").tobytes()
                    for k in names)
    head = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        fh.write(blob)
    return path


def load_checkpoint(path: Path | str) -> tuple[NetConfig, dict[str, np.ndarray], dict]:
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("format") != _FORMAT:
            raise ValueError(f"{path}: unknown checkpoint format")
        state: dict[str, np.ndarray] = {}
        for t in header["tensors"]:
            shape = tuple(t["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(4 * count)
            if len(buf) != 4 * count:
                raise ValueError(f"{path}: truncated tensor {t['name']!r}")
            state[t["name"]] = np.frombuffer(buf, dtype="<f4").reshape(shape).copy()
    config = NetConfig.from_json(header["config"])
    meta = {"epoch": header.get("epoch"), "metric": header.get("metric")}
    return config, state, meta
