"""
Common types and helpers for the binary containers.

All multi-byte integers and payloads are little-endian.
"""

from __future__ import annotations

import struct
from typing import BinaryIO, Dict, Tuple

import numpy as np

from core.errors import FormatError


__all__ = [
    "DTYPE_CODES",
    "dtype_code",
    "dtype_from_code",
    "write_str",
    "read_str",
    "write_array_header",
    "read_array_header",
    "read_exact",
    "array_bytes",
    "array_from_bytes",
]

# codice → dtype little-endian
DTYPE_CODES: Dict[int, str] = {
    1: "<f4",
    2: "<f8",
    3: "|u1",
    4: "<u2",
    5: "<i4",
    6: "<i8",
    7: "<i2",
    8: "|i1",
    9: "|b1",
}

_CODE_BY_DTYPE = {np.dtype(v).newbyteorder("<"): k for k, v in DTYPE_CODES.items()}


def dtype_code(dtype) -> int:
    key = np.dtype(dtype).newbyteorder("<")
    try:
        return _CODE_BY_DTYPE[key]
    except KeyError as exc:
        raise FormatError(f"dtype non supportato dal container: {dtype}") from exc


def dtype_from_code(code: int) -> np.dtype:
    try:
        return np.dtype(DTYPE_CODES[code])
    except KeyError as exc:
        raise FormatError(f"codice dtype sconosciuto: {code}", code=code) from exc


def read_exact(handle: BinaryIO, size: int) -> bytes:
    data = handle.read(size)
    if len(data) != size:
        raise FormatError(f"file troncato: attesi {size} byte, letti {len(data)}")
    return data


def write_str(handle: BinaryIO, text: str) -> None:
    raw = text.encode("utf-8")
    handle.write(struct.pack("<H", len(raw)))
    handle.write(raw)


def read_str(handle: BinaryIO) -> str:
    (length,) = struct.unpack("<H", read_exact(handle, 2))
    return read_exact(handle, length).decode("utf-8")


def write_array_header(handle: BinaryIO, array: np.ndarray) -> None:
    """dtype code u8, ndim u8, shape u32×ndim."""
    handle.write(struct.pack("<BB", dtype_code(array.dtype), array.ndim))
    handle.write(struct.pack(f"<{array.ndim}I", *array.shape))


def read_array_header(handle: BinaryIO) -> Tuple[np.dtype, Tuple[int, ...]]:
    code, ndim = struct.unpack("<BB", read_exact(handle, 2))
    shape = struct.unpack(f"<{ndim}I", read_exact(handle, 4 * ndim)) if ndim else ()
    return dtype_from_code(code), tuple(shape)


def array_bytes(array: np.ndarray) -> bytes:
    little = array.astype(array.dtype.newbyteorder("<"), copy=False)
    return np.ascontiguousarray(little).tobytes()


def array_from_bytes(raw: bytes, dtype: np.dtype, shape: Tuple[int, ...]) -> np.ndarray:
    return np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
