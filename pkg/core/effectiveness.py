"""
Effectiveness check for high-frequency scaling applied directly to raw
snapshots: does HFS amplify gradients selectively (sharp features more than
smooth regions) or uniformly?

The score is the coefficient of variation of |∇x_HFS| / |∇x| over a region of
interest; zero means a uniform rescaling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Literal, Optional, Tuple

import numpy as np

from core.errors import FlatRegionError, ShapeError, ValidationError
from core.hfs import hfs_apply_array
from utils.config import GRADIENT_FLOOR, PATCH_SIZE, VERDICT_CV


__all__ = [
    "Roi",
    "EffectivenessReport",
    "gradient_magnitude",
    "hfs_gradient_ratio",
    "localized_field",
    "mixed_scale_field",
    "white_noise_field",
    "generate_field",
    "parse_roi",
]

# (y0, y1, x0, x1), estremi superiori esclusi
Roi = Tuple[int, int, int, int]

DEFAULT_LAMBDA_DC = 0.85
DEFAULT_LAMBDA_HFC = 1.15


@dataclass
class EffectivenessReport:
    baseline_gradient: np.ndarray
    scaled_gradient: np.ndarray
    ratio: np.ndarray            # NaN fuori roi o sotto il floor
    roi: Roi
    cv: float
    mean_ratio: float
    valid_pixels: int
    threshold: float = VERDICT_CV

    @property
    def verdict(self) -> Literal["selective", "uniform"]:
        return "selective" if self.cv >= self.threshold else "uniform"

    def summary(self) -> Dict[str, object]:
        return {
            "cv": self.cv,
            "mean_ratio": self.mean_ratio,
            "valid_pixels": self.valid_pixels,
            "verdict": self.verdict,
        }


def gradient_magnitude(field: np.ndarray) -> np.ndarray:
    """√((∂x f)² + (∂y f)²), differenze centrali all'interno e unilaterali ai bordi."""
    f = np.asarray(field, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] < 3 or f.shape[1] < 3:
        raise ShapeError(f"gradient_magnitude: campo 2D almeno 3×3, ricevuto {f.shape}")
    dy, dx = np.gradient(f)
    return np.sqrt(dx * dx + dy * dy)


def parse_roi(text: Optional[str], shape: Tuple[int, int]) -> Roi:
    """'y0:y1,x0:x1' oppure None per l'intero campo."""
    h, w = shape
    if text is None or str(text).strip() in ("", "full"):
        return (0, h, 0, w)
    try:
        rows, cols = str(text).split(",")
        y0, y1 = (int(v) for v in rows.split(":"))
        x0, x1 = (int(v) for v in cols.split(":"))
    except ValueError as exc:
        raise ValidationError(f"roi non valida: {text!r} (atteso 'y0:y1,x0:x1')") from exc
    return (y0, y1, x0, x1)


def _check_roi(roi: Roi, shape: Tuple[int, int]) -> None:
    y0, y1, x0, x1 = roi
    h, w = shape
    if not (0 <= y0 < y1 <= h and 0 <= x0 < x1 <= w):
        raise ValidationError(f"roi {roi} fuori dal campo {h}×{w}", roi=list(roi))


def hfs_gradient_ratio(field: np.ndarray, patch_size: int = PATCH_SIZE,
                       lambda_dc: float = DEFAULT_LAMBDA_DC, lambda_hfc: float = DEFAULT_LAMBDA_HFC,
                       roi: Optional[Roi] = None, floor: float = GRADIENT_FLOOR,
                       threshold: float = VERDICT_CV) -> EffectivenessReport:
    """
    Applica HFS al campo grezzo (un canale, λ scalari) e confronta i gradienti.

    Args:
        field: campo 2D
        patch_size: lato della patch, deve dividere il campo
        lambda_dc, lambda_hfc: pesi scalari
        roi: regione (y0, y1, x0, x1); None = campo intero
        floor: pixel con |∇x| ≤ floor sono esclusi dal rapporto
        threshold: soglia di CV per il verdetto

    Returns:
        EffectivenessReport
    """
    f = np.asarray(field, dtype=np.float64)
    if f.ndim != 2:
        raise ShapeError(f"hfs_gradient_ratio: campo 2D atteso, ricevuto {f.shape}")
    roi = roi or (0, f.shape[0], 0, f.shape[1])
    _check_roi(roi, f.shape)

    scaled = hfs_apply_array(f[None, None], lambda_dc, lambda_hfc, patch_size)[0, 0]
    base_grad = gradient_magnitude(f)
    scaled_grad = gradient_magnitude(scaled)

    y0, y1, x0, x1 = roi
    in_roi = np.zeros(f.shape, dtype=bool)
    in_roi[y0:y1, x0:x1] = True
    valid = in_roi & (base_grad > floor)
    if not valid.any():
        raise FlatRegionError("roi interamente piatta", roi=list(roi), floor=floor)

    ratio = np.full(f.shape, np.nan)
    ratio[valid] = scaled_grad[valid] / base_grad[valid]
    values = ratio[valid]
    mean = float(values.mean())
    cv = float(values.std() / mean) if mean > 0 else 0.0
    return EffectivenessReport(
        baseline_gradient=base_grad,
        scaled_gradient=scaled_grad,
        ratio=ratio,
        roi=roi,
        cv=cv,
        mean_ratio=mean,
        valid_pixels=int(valid.sum()),
        threshold=threshold,
    )


# ────────────────────────────────────────────────────────────────────────────────
# Campi costruiti
# ────────────────────────────────────────────────────────────────────────────────

def _gaussian_blob(size: int, cy: float, cx: float, sigma: float, amplitude: float) -> np.ndarray:
    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    return amplitude * np.exp(-((y - cy) ** 2 + (x - cx) ** 2) / (2.0 * sigma ** 2))


def localized_field(size: int = 64, seed: int = 0, patch_size: int = PATCH_SIZE,
                    amplitude: float = 1.0, sigma: float = 1.25, background: float = 0.0) -> np.ndarray:
    """Fondo costante con un blob gaussiano netto centrato in una patch scelta a caso."""
    rng = np.random.default_rng(seed)
    cells = size // patch_size
    py, px = rng.integers(0, cells, size=2)
    centre = patch_size // 2
    blob = _gaussian_blob(size, py * patch_size + centre, px * patch_size + centre, sigma, amplitude)
    return background + blob


def mixed_scale_field(size: int = 64, seed: int = 0, n_blobs: int = 4, amplitude: float = 1.0,
                      sigma: float = 1.25, wave_amplitude: float = 0.5) -> np.ndarray:
    """Onda a periodo pieno sul dominio più alcuni blob netti."""
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=2)
    field = wave_amplitude * (np.sin(2 * np.pi * x / size + phase[0]) + np.sin(2 * np.pi * y / size + phase[1]))
    for cy, cx in rng.uniform(4.0, size - 4.0, size=(n_blobs, 2)):
        field += _gaussian_blob(size, cy, cx, sigma, amplitude)
    return field


def white_noise_field(size: int = 64, seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal((size, size))


_GENERATORS = {
    "localized": localized_field,
    "mixed": mixed_scale_field,
    "white": white_noise_field,
}


def generate_field(kind: str, size: int = 64, seed: int = 0) -> np.ndarray:
    try:
        generator = _GENERATORS[kind]
    except KeyError as exc:
        raise ValidationError(f"generatore sconosciuto: {kind}", choices=sorted(_GENERATORS)) from exc
    return generator(size=size, seed=seed)
