"""Bit-exact checkpoint files.

Layout: magic ``CTAE1``, a 4-byte little-endian header length, a UTF-8 JSON
header (layer specs, metadata, block shapes), then every state array
concatenated as little-endian float32 in declaration order.

Saving snaps the live model's state to float32-representable values first,
so the file and the in-memory model agree bit for bit afterwards: forward
passes before and after a save/load round trip are identical, and re-saving
reproduces identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import ShapeMismatch
from .layers import LayerSpec
from .model import Sequential

MAGIC = b"CTAE1"


def snap_to_storage_precision(model: Sequential) -> None:
    """Round every state array in place to the nearest float32 value."""
    for a in model.state():
        a[...] = a.astype("<f4").astype(np.float64)


def save_checkpoint(path: Path, model: Sequential, meta: dict | None = None) -> None:
    snap_to_storage_precision(model)
    arrays = model.state()
    header = {
        "meta": meta or {},
        "layers": model.spec_dicts(),
        "param_count": model.param_count(),
        "blocks": [list(a.shape) for a in arrays],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def load_checkpoint(path: Path) -> tuple[Sequential, dict]:
    """Rebuild the model (float64 state from the float32 block) plus metadata."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ShapeMismatch(f"{path}: not a checkpoint file")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode())
        specs = [LayerSpec.from_dict(d) for d in header["layers"]]
        model = Sequential(specs, np.random.default_rng(0))
        state = model.state()
        if len(state) != len(header["blocks"]):
            raise ShapeMismatch(f"{path}: block count does not match layer specs")
        for dst, shape in zip(state, header["blocks"]):
            if list(dst.shape) != shape:
                raise ShapeMismatch(f"{path}: block shape {shape} != expected {dst.shape}")
            raw = fh.read(dst.size * 4)
            if len(raw) != dst.size * 4:
                raise ShapeMismatch(f"{path}: truncated parameter block")
            dst[...] = np.frombuffer(raw, dtype="<f4").reshape(dst.shape)
    return model, header["meta"]
