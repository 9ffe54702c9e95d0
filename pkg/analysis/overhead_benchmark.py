"""
Overhead di HFS: parametri (conteggio esatto) e tempo per iterazione.

Confronta baseline, HFS e scaling in Fourier sulla config desk. Il limite di
0.1% sui parametri è valutato su entrambi i preset: a larghezze desk ogni sito
HFS aggiunge 2·C parametri contro ~9·C² della conv, quindi desk risulta FAIL e
solo full lo rispetta.

Uso: python analysis/overhead_benchmark.py [iterations]
"""

import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np

from core.resunet import ModelConfig, build, hfs_parameter_count, kolmogorov_layout, parameter_count
from core.training import OperatorDataset, TrainConfig, benchmark_iterations
from utils.config import HFS_OVERHEAD_LIMIT
from utils.run_config import PRESETS


def parameter_overheads():
    desk = kolmogorov_layout(scaling_variant="hfs")
    full_values = {k.split(".", 1)[1]: v for k, v in PRESETS["full"].items() if k.startswith("model.")}
    full = ModelConfig(**{**desk.model_dump(), **full_values})
    rows = []
    for name, cfg in (("desk", desk), ("full", full)):
        total = parameter_count(cfg)
        extra = hfs_parameter_count(cfg)
        rows.append({"preset": name, "parameters": total, "hfs_parameters": extra, "overhead": extra / total})
    return rows


def timing(iterations: int = 50, batch_size: int = 4, seed: int = 0):
    """Mediana (ms) per variante su un batch casuale fisso."""
    rng = np.random.default_rng(seed)
    base = kolmogorov_layout()
    x = rng.standard_normal((batch_size, base.in_channels, base.height, base.width)).astype(np.float32)
    y = rng.standard_normal((batch_size, base.out_channels, base.height, base.width)).astype(np.float32)
    dataset = OperatorDataset(x, y)
    config = TrainConfig(batch_size=batch_size)

    medians = {}
    for variant in ("none", "hfs", "fourier"):
        model = build(kolmogorov_layout(scaling_variant=variant), seed=seed)
        timings = benchmark_iterations(model, dataset, config, iterations)
        medians[variant] = float(np.median(timings))
    return medians


def main():
    iterations = int(sys.argv[1]) if len(sys.argv) > 1 else 50

    print("⏱️  OVERHEAD HFS")
    print("=" * 50)
    overheads = {row["preset"]: row for row in parameter_overheads()}
    for row in overheads.values():
        verdict = "PASS" if row["overhead"] < HFS_OVERHEAD_LIMIT else "FAIL"
        print(f"   {row['preset']:<6} parametri {row['parameters']:>12,}  HFS {row['hfs_parameters']:>8,}"
              f"  overhead {row['overhead']:.4%}  {verdict} (< {HFS_OVERHEAD_LIMIT:.1%})")

    medians = timing(iterations)
    ratio = medians["hfs"] / medians["none"]
    print(f"\n   mediana iterazione (ms) su {iterations} iterazioni:")
    for variant, value in medians.items():
        print(f"     {variant:<8} {value:9.2f}")
    print(f"\n   HFS / baseline: {ratio:.3f}  ({'OK' if ratio <= 1.35 else 'OLTRE'} il limite 1.35)")
    print(f"   Fourier > HFS:  {'sì' if medians['fourier'] > medians['hfs'] else 'no'}")
    desk_ok = overheads["desk"]["overhead"] < HFS_OVERHEAD_LIMIT
    print(f"\n   overhead parametri sulla config desk: {'PASS' if desk_ok else 'FAIL'}")
    return 0 if ratio <= 1.35 and medians["fourier"] > medians["hfs"] and desk_ok else 1


if __name__ == "__main__":
    sys.exit(main())
