"""
SBLB checkpoint container.

    magic "SBLB" | version u16 | sha256 (32 bytes) of everything that follows
    config JSON (u32 len + utf-8) | metadata JSON (u32 len + utf-8)
    blob count u32 | per blob: name (u16 len + utf-8) | dtype u8 | ndim u8
                     | shape u32×ndim | raw bytes
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from core.errors import FormatError
from core.resunet import ModelConfig, ResUNet, build
from parsers.base import (
    array_bytes, array_from_bytes, read_array_header, read_exact, read_str, write_array_header, write_str,
)


__all__ = ["CHECKPOINT_MAGIC", "CHECKPOINT_VERSION", "Checkpoint", "write_checkpoint", "read_checkpoint", "load_model"]

CHECKPOINT_MAGIC = b"SBLB"
CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    config: ModelConfig
    state: "OrderedDict[str, np.ndarray]"
    metadata: Dict = field(default_factory=dict)


def _write_json_block(buffer: io.BytesIO, payload: Dict) -> None:
    raw = json.dumps(payload, sort_keys=True).encode("utf-8")
    buffer.write(struct.pack("<I", len(raw)))
    buffer.write(raw)


def _read_json_block(handle) -> Dict:
    (length,) = struct.unpack("<I", read_exact(handle, 4))
    return json.loads(read_exact(handle, length).decode("utf-8"))


def write_checkpoint(path: str, config: ModelConfig, state: Dict[str, np.ndarray],
                     metadata: Optional[Dict] = None) -> str:
    body = io.BytesIO()
    _write_json_block(body, config.model_dump())
    _write_json_block(body, dict(metadata or {}, config_digest=config.digest()))
    body.write(struct.pack("<I", len(state)))
    for name, value in state.items():
        array = np.asarray(value)
        write_str(body, name)
        write_array_header(body, array)
        body.write(array_bytes(array))
    payload = body.getvalue()

    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "wb") as handle:
        handle.write(CHECKPOINT_MAGIC)
        handle.write(struct.pack("<H", CHECKPOINT_VERSION))
        handle.write(hashlib.sha256(payload).digest())
        handle.write(payload)
    return str(target)


def read_checkpoint(path: str) -> Checkpoint:
    target = Path(path)
    raw = target.read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{target.name}: magic {raw[:4]!r} non è un checkpoint SBLB")
    if len(raw) < 38:
        raise FormatError(f"{target.name}: header troncato")
    (version,) = struct.unpack("<H", raw[4:6])
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{target.name}: versione {version} non supportata", version=version)
    digest, payload = raw[6:38], raw[38:]
    if hashlib.sha256(payload).digest() != digest:
        raise FormatError(f"{target.name}: digest sha256 non corrisponde")

    handle = io.BytesIO(payload)
    config = ModelConfig(**_read_json_block(handle))
    metadata = _read_json_block(handle)
    if metadata.get("config_digest") not in (None, config.digest()):
        raise FormatError(f"{target.name}: digest della config non corrisponde")
    (count,) = struct.unpack("<I", read_exact(handle, 4))
    state: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for _ in range(count):
        name = read_str(handle)
        dtype, shape = read_array_header(handle)
        size = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        state[name] = array_from_bytes(read_exact(handle, size), dtype, shape)
    return Checkpoint(config=config, state=state, metadata=metadata)


def load_model(path: str) -> Tuple[ResUNet, Checkpoint]:
    """Ricostruisce il modello dalla config salvata e carica i pesi."""
    checkpoint = read_checkpoint(path)
    model = build(checkpoint.config)
    model.load_state_dict(checkpoint.state)
    return model, checkpoint
