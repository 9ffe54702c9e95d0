"""
Evaluation metrics: field errors, boundary and masked RMSE, radial energy
spectra, band-restricted spectral errors and latent high-frequency ratios.

Field arguments may be (h, w), (k, h, w) or (n, k, h, w); per-field quantities
are computed on each (sample, step) map and averaged.
"""

from __future__ import annotations

import math
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

from core.errors import EmptyMaskError, ShapeError, ValidationError, ZeroEnergyError
from core.fourier import fft2, max_shell, radial_accumulate, radial_shell_index
from utils.config import LATENT_CUTOFFS


__all__ = [
    "BandSpec",
    "MetricsReport",
    "rmse",
    "rel_error",
    "max_mean",
    "max_max",
    "brmse",
    "masked_rmse",
    "energy_spectrum",
    "mean_energy_spectrum",
    "f_band_error",
    "spectrum_band_error",
    "rel_spectrum_band_error",
    "hf_energy_ratio",
    "latent_cutoff_schedule",
    "compute_report",
]


def _as_fields(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return x[None, None]
    if x.ndim == 3:
        return x[None]
    if x.ndim == 4:
        return x
    raise ShapeError(f"campo atteso (h,w), (k,h,w) o (n,k,h,w), ricevuto {x.shape}")


def _pair(pred, truth) -> Tuple[np.ndarray, np.ndarray]:
    p, t = _as_fields(pred), _as_fields(truth)
    if p.shape != t.shape:
        raise ShapeError(f"predizione {p.shape} e verità {t.shape} non coincidono")
    return p, t


# ────────────────────────────────────────────────────────────────────────────────
# Bande
# ────────────────────────────────────────────────────────────────────────────────

class BandSpec(BaseModel):
    """Frazioni di shell radiali: low = prime 2%, mid = fino al 6.2%, high = resto."""

    low_fraction: float = Field(0.02, gt=0)
    mid_fraction: float = Field(0.042, gt=0)

    @model_validator(mode="after")
    def _check_fractions(self):
        if not self.low_fraction + self.mid_fraction < 1.0:
            raise ValueError("low_fraction + mid_fraction deve essere < 1")
        return self

    def shell_limits(self, h: int, w: int) -> Tuple[int, int]:
        """(numero shell low, numero shell low+mid)."""
        n_shells = max_shell(h, w) + 1
        low = max(1, math.ceil(self.low_fraction * n_shells - 1e-9))
        low_mid = max(low + 1, math.ceil((self.low_fraction + self.mid_fraction) * n_shells - 1e-9))
        low_mid = min(low_mid, n_shells - 1)
        if low >= low_mid:
            raise ValidationError(f"griglia {h}×{w} troppo piccola per tre bande", shells=n_shells)
        return low, low_mid

    def masks(self, h: int, w: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        shells = radial_shell_index(h, w)
        low, low_mid = self.shell_limits(h, w)
        low_mask = shells < low
        mid_mask = (shells >= low) & (shells < low_mid)
        return low_mask, mid_mask, shells >= low_mid


class MetricsReport(BaseModel):
    rel_error: float
    rmse: float
    brmse: float
    bubble_rmse: Optional[float] = None
    max_mean: float
    max_max: float
    F_low: float
    F_mid: float
    F_high: float
    E_F_total: float
    E_F_low: float
    E_F_mid: float
    E_F_high: float
    rel_E_F_total: float
    rel_E_F_low: float
    rel_E_F_mid: float
    rel_E_F_high: float

    def as_row(self) -> Dict[str, object]:
        row = self.model_dump()
        if row["bubble_rmse"] is None:
            row["bubble_rmse"] = ""
        return row

    def format_table(self) -> str:
        lines = [f"{'metric':<16}{'value':>14}", "-" * 30]
        for key, value in self.model_dump().items():
            shown = "n/a" if value is None else f"{value:.6g}"
            lines.append(f"{key:<16}{shown:>14}")
        return "\n".join(lines)


# ────────────────────────────────────────────────────────────────────────────────
# Errori di campo
# ────────────────────────────────────────────────────────────────────────────────

def rmse(pred, truth) -> float:
    """√mean((pred−truth)²) su campioni, step e pixel insieme."""
    p, t = _pair(pred, truth)
    return float(np.sqrt(np.mean((p - t) ** 2)))


def rel_error(pred, truth) -> float:
    """‖pred−truth‖₂/‖truth‖₂ per campione (su step e pixel), mediato."""
    p, t = _pair(pred, truth)
    norms = np.sqrt(np.sum(t ** 2, axis=(1, 2, 3)))
    if np.any(norms == 0):
        raise ValidationError("rel_error: verità a norma nulla")
    return float(np.mean(np.sqrt(np.sum((p - t) ** 2, axis=(1, 2, 3))) / norms))


def max_mean(pred, truth) -> float:
    p, t = _pair(pred, truth)
    return float(np.abs(p - t).max(axis=(1, 2, 3)).mean())


def max_max(pred, truth) -> float:
    p, t = _pair(pred, truth)
    return float(np.abs(p - t).max())


def boundary_mask(h: int, w: int) -> np.ndarray:
    mask = np.zeros((h, w), dtype=bool)
    mask[0, :] = mask[-1, :] = True
    mask[:, 0] = mask[:, -1] = True
    return mask


def brmse(pred, truth) -> float:
    """RMSE sulla cornice di 1 pixel (2h+2w−4 celle per campo), globale come rmse."""
    p, t = _pair(pred, truth)
    h, w = p.shape[-2:]
    if h < 2 or w < 2:
        raise ShapeError("brmse richiede h, w ≥ 2")
    frame = boundary_mask(h, w)
    err = (p - t)[..., frame]
    return float(np.sqrt(np.mean(err ** 2)))


def masked_rmse(pred, truth, mask) -> float:
    """RMSE globale sulle sole celle della maschera."""
    p, t = _pair(pred, truth)
    m = np.asarray(mask, dtype=bool)
    if m.ndim == 2:
        m = np.broadcast_to(m, p.shape)
    elif m.ndim == 3:
        m = np.broadcast_to(m[None], p.shape) if m.shape[0] == p.shape[1] else np.broadcast_to(m[:, None], p.shape)
    else:
        m = np.broadcast_to(m, p.shape)
    counts = m.sum(axis=(2, 3))
    if counts.sum() == 0:
        raise EmptyMaskError("masked_rmse: maschera vuota")
    sq = np.where(m, (p - t) ** 2, 0.0).sum()
    return float(np.sqrt(sq / counts.sum()))


# ────────────────────────────────────────────────────────────────────────────────
# Spettri
# ────────────────────────────────────────────────────────────────────────────────

def energy_spectrum(field) -> np.ndarray:
    """p(k): |F|²/(h·w) accumulato per shell; Σ p(k) = Σ field² (Parseval)."""
    f = np.asarray(field, dtype=np.float64)
    if f.ndim != 2:
        raise ShapeError(f"energy_spectrum: campo 2D atteso, ricevuto {f.shape}")
    h, w = f.shape
    return radial_accumulate(np.abs(fft2(f)) ** 2 / (h * w))


def mean_energy_spectrum(fields) -> np.ndarray:
    """Media di p(k) su tutti gli assi iniziali."""
    f = np.asarray(fields, dtype=np.float64)
    h, w = f.shape[-2:]
    spectra = radial_accumulate(np.abs(fft2(f.reshape(-1, h, w))) ** 2 / (h * w))
    return spectra.mean(axis=0)


def f_band_error(pred, truth, bands: BandSpec) -> Tuple[float, float, float]:
    """√(media sulla banda di |F(T)−F(T̂)|²), per campo e poi mediato."""
    p, t = _pair(pred, truth)
    diff = np.abs(fft2(t) - fft2(p)) ** 2
    out = []
    for mask in bands.masks(*p.shape[-2:]):
        out.append(float(np.sqrt(diff[..., mask].mean(axis=-1)).mean()))
    return out[0], out[1], out[2]


def spectrum_band_error(pred, truth, bands: BandSpec) -> Tuple[float, float, float, float]:
    """√(media sulla banda di (|F(T)|²−|F(T̂)|²)²); ultimo valore sulla griglia intera."""
    p, t = _pair(pred, truth)
    diff = (np.abs(fft2(t)) ** 2 - np.abs(fft2(p)) ** 2) ** 2
    out = [float(np.sqrt(diff[..., mask].mean(axis=-1)).mean()) for mask in bands.masks(*p.shape[-2:])]
    total = float(np.sqrt(diff.mean(axis=(-2, -1))).mean())
    return out[0], out[1], out[2], total


def rel_spectrum_band_error(pred, truth, bands: BandSpec) -> Tuple[float, float, float, float]:
    """E_F di banda normalizzato dall'RMS di |F(T)|² sulla stessa banda."""
    p, t = _pair(pred, truth)
    energy_t = np.abs(fft2(t)) ** 2
    diff = (energy_t - np.abs(fft2(p)) ** 2) ** 2
    masks = list(bands.masks(*p.shape[-2:])) + [np.ones(p.shape[-2:], dtype=bool)]
    out = []
    for mask in masks:
        num = np.sqrt(diff[..., mask].mean(axis=-1))
        den = np.sqrt((energy_t[..., mask] ** 2).mean(axis=-1))
        ratio = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
        out.append(float(ratio.mean()))
    return out[0], out[1], out[2], out[3]


def hf_energy_ratio(feature_map, cutoff_fraction: float) -> float:
    """Energia nelle shell > round(cutoff·k_max) sull'energia totale senza shell 0."""
    if not 0.0 < cutoff_fraction < 1.0:
        raise ValidationError(f"cutoff {cutoff_fraction} fuori da (0,1)")
    f = np.asarray(feature_map, dtype=np.float64)
    if f.ndim < 2:
        raise ShapeError("hf_energy_ratio: mappa almeno 2D")
    h, w = f.shape[-2:]
    power = (np.abs(fft2(f.reshape(-1, h, w))) ** 2).sum(axis=0)
    total = float(power.sum())
    if total == 0.0:
        raise ZeroEnergyError("hf_energy_ratio: energia totale nulla")
    shells = radial_shell_index(h, w)
    non_dc = float(power[shells > 0].sum())
    if non_dc <= 1e-300 or non_dc <= 1e-24 * total:
        return 0.0
    threshold = int(round(cutoff_fraction * max_shell(h, w)))
    return float(power[shells > threshold].sum()) / non_dc


def latent_cutoff_schedule(levels: int) -> Sequence[float]:
    """Soglie per livello, dalla risoluzione più alta alla più bassa."""
    if levels <= 0:
        raise ValidationError("levels deve essere positivo")
    base = np.asarray(LATENT_CUTOFFS)
    if levels == len(base):
        return list(base)
    positions = np.linspace(0, len(base) - 1, levels)
    return list(np.interp(positions, np.arange(len(base)), base))


# ────────────────────────────────────────────────────────────────────────────────
# Report
# ────────────────────────────────────────────────────────────────────────────────

def compute_report(pred, truth, bands: Optional[BandSpec] = None, mask=None) -> MetricsReport:
    bands = bands or BandSpec()
    f_low, f_mid, f_high = f_band_error(pred, truth, bands)
    e_low, e_mid, e_high, e_total = spectrum_band_error(pred, truth, bands)
    r_low, r_mid, r_high, r_total = rel_spectrum_band_error(pred, truth, bands)
    return MetricsReport(
        rel_error=rel_error(pred, truth),
        rmse=rmse(pred, truth),
        brmse=brmse(pred, truth),
        bubble_rmse=masked_rmse(pred, truth, mask) if mask is not None else None,
        max_mean=max_mean(pred, truth),
        max_max=max_max(pred, truth),
        F_low=f_low, F_mid=f_mid, F_high=f_high,
        E_F_total=e_total, E_F_low=e_low, E_F_mid=e_mid, E_F_high=e_high,
        rel_E_F_total=r_total, rel_E_F_low=r_low, rel_E_F_mid=r_mid, rel_E_F_high=r_high,
    )
