"""
Binary portable graymap (P5) read/write, 8 or 16 bit.

16-bit samples are big-endian as the format requires.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from core.errors import FormatError, ValidationError


__all__ = ["write_pgm", "read_pgm", "read_pgm_field", "to_graylevels"]


def to_graylevels(field: np.ndarray, bits: int = 8, vmin: Optional[float] = None,
                  vmax: Optional[float] = None) -> np.ndarray:
    """Scala un campo float su [0, 2^bits − 1]; NaN → 0."""
    if bits not in (8, 16):
        raise ValidationError(f"profondità PGM {bits} non supportata (8 o 16)")
    f = np.asarray(field, dtype=np.float64)
    finite = np.isfinite(f)
    lo = float(np.min(f[finite])) if vmin is None and finite.any() else (vmin or 0.0)
    hi = float(np.max(f[finite])) if vmax is None and finite.any() else (vmax if vmax is not None else 1.0)
    maxval = (1 << bits) - 1
    span = hi - lo if hi > lo else 1.0
    scaled = np.clip((np.where(finite, f, lo) - lo) / span, 0.0, 1.0) * maxval
    return np.rint(scaled).astype(np.uint8 if bits == 8 else np.uint16)


def write_pgm(path: str, image: np.ndarray, bits: Optional[int] = None) -> str:
    """
    Scrive un'immagine 2D intera (uint8/uint16) o float (riscalata a 8 bit).

    Returns:
        Percorso scritto
    """
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValidationError(f"PGM richiede un'immagine 2D, ricevuto {img.shape}")
    if img.dtype.kind == "f":
        img = to_graylevels(img, bits or 8)
    elif bits is not None:
        img = img.astype(np.uint8 if bits == 8 else np.uint16)
    if img.dtype == np.uint8:
        maxval, payload = 255, img.tobytes()
    elif img.dtype == np.uint16:
        maxval, payload = 65535, img.astype(">u2").tobytes()
    else:
        raise ValidationError(f"dtype {img.dtype} non scrivibile in PGM")

    h, w = img.shape
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "wb") as handle:
        handle.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        handle.write(payload)
    return str(target)


def _header_tokens(raw: bytes) -> Tuple[list, int]:
    """Quattro token di header (magic, w, h, maxval) saltando i commenti; restituisce l'offset dei dati."""
    tokens, pos = [], 0
    while len(tokens) < 4:
        if pos >= len(raw):
            raise FormatError("header PGM troncato")
        ch = raw[pos:pos + 1]
        if ch == b"#":
            end = raw.find(b"\n", pos)
            pos = len(raw) if end < 0 else end + 1
        elif ch.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(raw) and not raw[pos:pos + 1].isspace() and raw[pos:pos + 1] != b"#":
                pos += 1
            tokens.append(raw[start:pos].decode("ascii"))
    # un solo whitespace separa maxval dai dati
    return tokens, pos + 1


def read_pgm(path: str) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:2] != b"P5":
        raise FormatError(f"{Path(path).name}: non è un PGM binario (P5)")
    tokens, offset = _header_tokens(raw)
    try:
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as exc:
        raise FormatError(f"header PGM non numerico: {tokens}") from exc
    if not 0 < maxval < 65536:
        raise FormatError(f"maxval PGM fuori range: {maxval}")
    dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
    expected = w * h * dtype.itemsize
    data = raw[offset:offset + expected]
    if len(data) != expected:
        raise FormatError(f"payload PGM troncato: attesi {expected} byte, letti {len(data)}")
    image = np.frombuffer(data, dtype=dtype).reshape(h, w)
    return image.astype(np.uint8 if maxval < 256 else np.uint16)


def read_pgm_field(path: str) -> np.ndarray:
    """Immagine come campo float in [0, 1]."""
    image = read_pgm(path)
    return image.astype(np.float64) / float(np.iinfo(image.dtype).max)
