"""
SBDS dataset container.

Layout (little-endian):

    magic "SBDS" | version u16 | field count u32
    per field: name (u16 len + utf-8) | dtype u8 | ndim u8 | shape u32×ndim
               | dt f64 | norm_min f64 | norm_max f64
    payload: raw field arrays in header order

A JSON manifest with the same stem sits next to the container (solver
parameters, seeds, split assignment, mask field names).
"""

from __future__ import annotations

import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from core.errors import FormatError, ValidationError
from parsers.base import (
    array_bytes, array_from_bytes, read_array_header, read_exact, read_str, write_array_header, write_str,
)


__all__ = [
    "DATASET_MAGIC",
    "DATASET_VERSION",
    "DatasetField",
    "DatasetContainer",
    "write_dataset",
    "read_dataset",
    "normalize",
    "denormalize",
    "split_indices",
]

DATASET_MAGIC = b"SBDS"
DATASET_VERSION = 1
MASK_PREFIX = "mask_"


@dataclass
class DatasetField:
    name: str
    data: np.ndarray
    dt: float = 0.0
    norm_min: float = -1.0
    norm_max: float = 1.0

    @property
    def is_mask(self) -> bool:
        return self.name.startswith(MASK_PREFIX)

    def raw(self) -> np.ndarray:
        """Valori in scala fisica (inverso della normalizzazione)."""
        return denormalize(self.data.astype(np.float64), self.norm_min, self.norm_max)


@dataclass
class DatasetContainer:
    fields: "OrderedDict[str, DatasetField]" = field(default_factory=OrderedDict)
    manifest: Dict = field(default_factory=dict)

    def add(self, item: DatasetField) -> None:
        if item.name in self.fields:
            raise ValidationError(f"campo duplicato: {item.name}")
        self.fields[item.name] = item

    def __getitem__(self, name: str) -> DatasetField:
        try:
            return self.fields[name]
        except KeyError as exc:
            raise ValidationError(f"campo assente nel dataset: {name}", available=list(self.fields)) from exc

    def mask_names(self) -> List[str]:
        return [name for name, f in self.fields.items() if f.is_mask]

    def split(self, name: str) -> List[int]:
        return list(self.manifest.get("splits", {}).get(name, []))


# ────────────────────────────────────────────────────────────────────────────────
# Normalizzazione
# ────────────────────────────────────────────────────────────────────────────────

def normalize(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """[lo, hi] → [−1, 1]."""
    if not hi > lo:
        raise ValidationError(f"limiti di normalizzazione degeneri: [{lo}, {hi}]")
    return 2.0 * (np.asarray(x, dtype=np.float64) - lo) / (hi - lo) - 1.0


def denormalize(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    return (np.asarray(x, dtype=np.float64) + 1.0) * 0.5 * (hi - lo) + lo


def split_indices(count: int, fractions: Sequence[float] = (0.8, 0.1, 0.1)) -> Dict[str, List[int]]:
    """Assegnazione ordinata train/val/test; il test prende il resto."""
    if count <= 0:
        raise ValidationError("nessun elemento da suddividere")
    n_train = int(round(fractions[0] * count))
    n_val = int(round(fractions[1] * count))
    n_train = min(n_train, count)
    n_val = min(n_val, count - n_train)
    return {
        "train": list(range(n_train)),
        "val": list(range(n_train, n_train + n_val)),
        "test": list(range(n_train + n_val, count)),
    }


# ────────────────────────────────────────────────────────────────────────────────
# I/O
# ────────────────────────────────────────────────────────────────────────────────

def write_dataset(path: str, container: DatasetContainer) -> str:
    """Scrive container e manifest sidecar; restituisce il percorso del container."""
    from exporters.json_exporter import export_manifest

    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "wb") as handle:
        handle.write(DATASET_MAGIC)
        handle.write(struct.pack("<HI", DATASET_VERSION, len(container.fields)))
        for item in container.fields.values():
            write_str(handle, item.name)
            write_array_header(handle, item.data)
            handle.write(struct.pack("<ddd", item.dt, item.norm_min, item.norm_max))
        for item in container.fields.values():
            handle.write(array_bytes(item.data))

    manifest = dict(container.manifest)
    manifest["fields"] = list(container.fields)
    manifest["mask_fields"] = container.mask_names()
    export_manifest(manifest, str(target))
    return str(target)


def read_dataset(path: str, with_manifest: bool = True) -> DatasetContainer:
    from exporters.json_exporter import read_json

    target = Path(path)
    with open(target, "rb") as handle:
        magic = read_exact(handle, 4)
        if magic != DATASET_MAGIC:
            raise FormatError(f"{target.name}: magic {magic!r} non è un dataset SBDS")
        version, count = struct.unpack("<HI", read_exact(handle, 6))
        if version != DATASET_VERSION:
            raise FormatError(f"{target.name}: versione {version} non supportata", version=version)

        headers = []
        for _ in range(count):
            name = read_str(handle)
            dtype, shape = read_array_header(handle)
            dt, lo, hi = struct.unpack("<ddd", read_exact(handle, 24))
            headers.append((name, dtype, shape, dt, lo, hi))

        container = DatasetContainer()
        for name, dtype, shape, dt, lo, hi in headers:
            size = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            data = array_from_bytes(read_exact(handle, size), dtype, shape)
            container.add(DatasetField(name=name, data=data, dt=dt, norm_min=lo, norm_max=hi))
        if handle.read(1):
            raise FormatError(f"{target.name}: byte in eccesso dopo il payload")

    manifest_path = target.with_suffix(".json")
    if with_manifest and manifest_path.exists():
        container.manifest = read_json(str(manifest_path))
    return container
