"""
Universal field loading entrypoint: picks the reader from the file extension,
falling back to magic-byte detection.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np

from core.errors import FormatError, ValidationError
from parsers.dataset import DATASET_MAGIC, read_dataset
from parsers.raster import read_pgm_field
from utils.logging_config import debug


def _field_from_dataset(path: str, field: Optional[str], sample: int, step: int) -> np.ndarray:
    container = read_dataset(path)
    names = [n for n in container.fields if not container.fields[n].is_mask]
    if not names:
        raise ValidationError(f"{Path(path).name}: nessun campo dati")
    data = container[field or names[0]].data
    # (n, T, h, w) → (h, w)
    while data.ndim > 2:
        index = sample if data.ndim == 4 else step
        if not 0 <= index < data.shape[0]:
            raise ValidationError(f"indice {index} fuori range per asse di lunghezza {data.shape[0]}")
        data = data[index]
    return np.asarray(data, dtype=np.float64)


def load_field(path: str, field: Optional[str] = None, sample: int = 0, step: int = 0) -> np.ndarray:
    """
    Carica un campo 2D da .sbds, .pgm o .npy.

    Args:
        path: file sorgente
        field: nome del campo nel dataset (default: primo campo non maschera)
        sample, step: indici di campione e step temporale nel dataset

    Returns:
        Array float64 (h, w)
    """
    ext = Path(path).suffix.lower()

    if ext == ".sbds":
        debug("Loading dataset field", path=path, field=field, sample=sample, step=step)
        return _field_from_dataset(path, field, sample, step)

    if ext == ".pgm":
        debug("Loading PGM raster", path=path)
        return read_pgm_field(path)

    if ext == ".npy":
        array = np.load(path, allow_pickle=False)
        if array.ndim != 2:
            raise ValidationError(f"{Path(path).name}: atteso array 2D, ricevuto {array.shape}")
        return array.astype(np.float64)

    with open(path, "rb") as handle:
        head = handle.read(4)
    if head == DATASET_MAGIC:
        return _field_from_dataset(path, field, sample, step)
    if head[:2] == b"P5":
        return read_pgm_field(path)

    raise FormatError(f"Formato file non supportato: {path}. Supportati: SBDS, PGM, NPY")


__all__ = ["load_field"]
