"""
Esperimento accoppiato baseline vs HFS su Kolmogorov.

Genera le traiettorie una sola volta, addestra le due varianti con gli stessi
seed e confronta le mediane di errore relativo e di errore spettrale ad alta
frequenza. Riporta anche la frazione di siti HFS con λ_HFC > λ_DC a fine training.

Uso: python analysis/kolmogorov_experiment.py [epochs] [n_trajectories] [out_dir]
"""

import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np

from core.hfs import lambda_snapshot
from core.kolmogorov import SolverConfig, generate_trajectories
from core.resunet import build, kolmogorov_layout
from core.training import OperatorDataset, TrainConfig, evaluate, fit
from exporters.csv_exporter import export_rows
from parsers.dataset import normalize, split_indices
from utils.file_manager import get_organized_output_path

SEEDS = (0, 1, 2)
VARIANTS = ("none", "hfs")


def build_datasets(n_trajectories: int, history: int = 20, horizon: int = 5):
    solver = SolverConfig(n_trajectories=n_trajectories)
    records = generate_trajectories(solver, list(range(n_trajectories)))
    raw = np.stack([r.snapshots for r in records])
    splits = split_indices(n_trajectories, [0.8, 0.1, 0.1])
    lo, hi = float(raw[splits["train"]].min()), float(raw[splits["train"]].max())
    snapshots = normalize(raw, lo, hi).astype(np.float32)

    def make(name):
        return OperatorDataset.from_trajectories(snapshots[splits[name]], history=history, horizon=horizon)

    return {name: make(name) for name in ("train", "val", "test")}, (lo, hi)


def run(epochs: int, n_trajectories: int, out_dir=None):
    datasets, bounds = build_datasets(n_trajectories)
    decay_start = max(0, int(epochs * 0.7))
    rows, lambda_rows = [], []

    for variant in VARIANTS:
        for seed in SEEDS:
            print(f"   ▶ {variant} seed {seed}")
            model = build(kolmogorov_layout(scaling_variant=variant), seed=seed)
            config = TrainConfig(epochs=epochs, decay_start=decay_start, seed=seed)
            result = fit(model, datasets["train"], datasets["val"], config)
            report = evaluate(model, datasets["test"], bounds=bounds)
            rows.append({"variant": variant, "seed": seed, "best_epoch": result.best_epoch,
                         **report.as_row()})
            if variant == "hfs":
                sites = lambda_snapshot(model)
                passed = sum(s.mean_lambda_hfc > s.mean_lambda_dc for s in sites)
                lambda_rows.append({"seed": seed, "sites": len(sites), "hfc_gt_dc": passed})

    export_rows(rows, get_organized_output_path("kolmogorov_experiment.csv", base_output=out_dir))
    return rows, lambda_rows


def median_of(rows, variant, key):
    return float(np.median([r[key] for r in rows if r["variant"] == variant]))


def main():
    epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 300
    n_trajectories = int(sys.argv[2]) if len(sys.argv) > 2 else 250
    out_dir = sys.argv[3] if len(sys.argv) > 3 else None

    print("🌀 KOLMOGOROV: BASELINE vs HFS")
    print("=" * 50)
    rows, lambda_rows = run(epochs, n_trajectories, out_dir)

    rel = {v: median_of(rows, v, "rel_error") for v in VARIANTS}
    high = {v: median_of(rows, v, "rel_E_F_high") for v in VARIANTS}
    print(f"\n   rel_error mediano     baseline {rel['none']:.4f}   HFS {rel['hfs']:.4f}")
    print(f"   rel_E_F_high mediano  baseline {high['none']:.4f}   HFS {high['hfs']:.4f}")

    sites = sum(r["sites"] for r in lambda_rows)
    passed = sum(r["hfc_gt_dc"] for r in lambda_rows)
    fraction = passed / sites if sites else 0.0
    print(f"   siti con λ_HFC > λ_DC: {passed}/{sites} ({fraction:.0%})")

    ok = rel["hfs"] <= rel["none"] and high["hfs"] < high["none"]
    print(f"\n   HFS migliora errore e spettro alto: {'PASS' if ok else 'FAIL'}")
    print(f"   λ_HFC > λ_DC su ≥80% dei siti: {'PASS' if fraction >= 0.8 else 'FAIL'}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
