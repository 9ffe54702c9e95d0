"""Exporter CSV per log di training, metriche, spettri e confronti."""

import csv
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

__all__ = ["export_rows", "read_rows", "spectrum_rows"]


def _cell(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return int(value)
    return value


def export_rows(rows: Iterable[Dict], out_path: str, fieldnames: Optional[Sequence[str]] = None) -> str:
    """
    Scrive righe dict in CSV; le colonne seguono la prima riga se non indicate.

    I float sono scritti con repr per avere round-trip esatti.
    """
    rows = list(rows)
    if fieldnames is None:
        fieldnames = []
        for row in rows:
            fieldnames.extend(k for k in row if k not in fieldnames)
    target = Path(out_path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(fieldnames), extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(v) for k, v in row.items()})
    return str(target)


def read_rows(path: str) -> List[Dict[str, str]]:
    with open(path, "r", newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def spectrum_rows(spectra: Dict[str, np.ndarray], step: int) -> List[Dict]:
    """Righe (step, k, <serie>...) per un insieme di spettri radiali della stessa lunghezza."""
    names = list(spectra)
    length = len(next(iter(spectra.values())))
    return [{"step": step, "k": k, **{name: float(spectra[name][k]) for name in names}} for k in range(length)]
