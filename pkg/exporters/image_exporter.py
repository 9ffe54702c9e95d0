"""
Image export utilities.

Plots are optional (matplotlib may be missing on headless runners); raster
maps are always written as PGM.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    MATPLOTLIB_AVAILABLE = True
except ImportError:
    plt = None
    MATPLOTLIB_AVAILABLE = False

from parsers.raster import write_pgm
from utils.logging_config import warning


__all__ = [
    "MATPLOTLIB_AVAILABLE",
    "save_map",
    "plot_loss_curves",
    "plot_lambda_history",
    "plot_spectra",
    "plot_sweep",
]


def save_map(field: np.ndarray, out_path: str, bits: int = 8) -> str:
    """Mappa float → PGM riscalata sul suo range."""
    return write_pgm(out_path, np.asarray(field, dtype=np.float64), bits=bits)


def _save(fig, out_path: str) -> str:
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=100, bbox_inches="tight", facecolor="white")
    plt.close(fig)
    return out_path


def plot_loss_curves(train_log: List[Dict], val_log: List[Dict], out_path: str) -> Optional[str]:
    if not MATPLOTLIB_AVAILABLE:
        return None
    try:
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.semilogy([float(r["iteration"]) for r in train_log], [float(r["loss"]) for r in train_log],
                    lw=0.8, alpha=0.7, label="train")
        if val_log:
            per_epoch = max(1, len(train_log) // max(1, int(float(train_log[-1]["epoch"])) + 1))
            ax.semilogy([(float(r["epoch"]) + 1) * per_epoch for r in val_log],
                        [float(r["val_loss"]) for r in val_log], "o-", ms=2, label="val")
        ax.set_xlabel("iteration")
        ax.set_ylabel("MSE")
        ax.grid(True, alpha=0.3)
        ax.legend()
        return _save(fig, out_path)
    except Exception as exc:
        warning("Plot loss fallito", error=str(exc))
        return None


def plot_lambda_history(lambda_log: List[Dict], out_path: str) -> Optional[str]:
    """Media λ_DC e λ_HFC per layer nel tempo."""
    if not MATPLOTLIB_AVAILABLE or not lambda_log:
        return None
    try:
        layers: Dict[str, List[Dict]] = {}
        for row in lambda_log:
            layers.setdefault(row["layer"], []).append(row)
        fig, (ax_dc, ax_hfc) = plt.subplots(1, 2, figsize=(10, 4), sharey=True)
        for name, rows in layers.items():
            epochs = [int(float(r["epoch"])) for r in rows]
            ax_dc.plot(epochs, [float(r["mean_lambda_dc"]) for r in rows], lw=0.7)
            ax_hfc.plot(epochs, [float(r["mean_lambda_hfc"]) for r in rows], lw=0.7, label=name)
        ax_dc.set_title("mean λ_DC")
        ax_hfc.set_title("mean λ_HFC")
        for ax in (ax_dc, ax_hfc):
            ax.set_xlabel("epoch")
            ax.grid(True, alpha=0.3)
        return _save(fig, out_path)
    except Exception as exc:
        warning("Plot λ fallito", error=str(exc))
        return None


def plot_spectra(spectra: Dict[str, np.ndarray], out_path: str, title: str = "") -> Optional[str]:
    if not MATPLOTLIB_AVAILABLE:
        return None
    try:
        fig, ax = plt.subplots(figsize=(6, 4))
        for name, values in spectra.items():
            k = np.arange(1, len(values))
            ax.loglog(k, np.maximum(values[1:], 1e-30), label=name)
        ax.set_xlabel("k")
        ax.set_ylabel("p(k)")
        ax.set_title(title)
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
        return _save(fig, out_path)
    except Exception as exc:
        warning("Plot spettri fallito", error=str(exc))
        return None


def plot_sweep(rows: Sequence[Dict], out_path: str, metric: str = "rel_error") -> Optional[str]:
    """Metrica vs numero di parametri, una serie per variante."""
    if not MATPLOTLIB_AVAILABLE or not rows:
        return None
    try:
        fig, ax = plt.subplots(figsize=(6, 4))
        variants = sorted({r["variant"] for r in rows})
        for variant in variants:
            sel = sorted((r for r in rows if r["variant"] == variant), key=lambda r: int(r["parameters"]))
            ax.semilogx([int(r["parameters"]) for r in sel], [float(r[metric]) for r in sel], "o-", label=variant)
        ax.set_xlabel("parameters")
        ax.set_ylabel(metric)
        ax.grid(True, alpha=0.3)
        ax.legend()
        return _save(fig, out_path)
    except Exception as exc:
        warning("Plot sweep fallito", error=str(exc))
        return None
