"""
Discrete Fourier helpers shared by HFS scaling, spectral metrics and the solver.

Convention: unnormalized forward transform, 1/(h·w) on the inverse
(numpy.fft default, pocketfft handles any size via mixed radix + Bluestein).
"""

from __future__ import annotations

from functools import lru_cache
from typing import Tuple

import numpy as np


__all__ = [
    "fft2",
    "ifft2",
    "integer_wavenumbers",
    "radial_shell_index",
    "max_shell",
    "shell_counts",
    "radial_accumulate",
]


def fft2(x: np.ndarray) -> np.ndarray:
    """DFT 2D sugli ultimi due assi."""
    return np.fft.fft2(x, axes=(-2, -1))


def ifft2(x: np.ndarray) -> np.ndarray:
    return np.fft.ifft2(x, axes=(-2, -1))


def integer_wavenumbers(h: int, w: int) -> Tuple[np.ndarray, np.ndarray]:
    """Griglia (ky, kx) di numeri d'onda interi con segno, layout fft."""
    ky = np.fft.fftfreq(h, d=1.0 / h)
    kx = np.fft.fftfreq(w, d=1.0 / w)
    return np.meshgrid(ky, kx, indexing="ij")


@lru_cache(maxsize=64)
def _shell_index_cached(h: int, w: int) -> np.ndarray:
    ky, kx = integer_wavenumbers(h, w)
    shells = np.rint(np.sqrt(kx ** 2 + ky ** 2)).astype(np.int64)
    shells.setflags(write=False)
    return shells


def radial_shell_index(h: int, w: int) -> np.ndarray:
    """Indice di shell radiale round(√(kx²+ky²)) per ogni bin della griglia."""
    return _shell_index_cached(int(h), int(w))


def max_shell(h: int, w: int) -> int:
    return int(radial_shell_index(h, w).max())


def shell_counts(h: int, w: int) -> np.ndarray:
    shells = radial_shell_index(h, w)
    return np.bincount(shells.ravel(), minlength=max_shell(h, w) + 1)


def radial_accumulate(values: np.ndarray) -> np.ndarray:
    """Somma valori (…, h, w) per shell radiale; restituisce (…, k_max+1)."""
    h, w = values.shape[-2:]
    shells = radial_shell_index(h, w).ravel()
    n_shells = max_shell(h, w) + 1
    lead = values.shape[:-2]
    flat = values.reshape(-1, h * w)
    out = np.zeros((flat.shape[0], n_shells), dtype=np.float64)
    for row, vals in enumerate(flat):
        out[row] = np.bincount(shells, weights=vals, minlength=n_shells)
    return out.reshape(lead + (n_shells,))
