"""
specbias command-line interface.

    specbias gen-data|train|eval|sweep|spectrum|latents|effectiveness|compare
             [--config FILE] [--seed N] [--deterministic] [--out DIR]
             [--set key=value ...] [--plots]

Exit codes: 0 success, 2 validation error, 3 numerical failure.
"""

import os
import sys

# BLAS a thread singolo prima che numpy venga importato
if "--deterministic" in sys.argv:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[_var] = "1"

import argparse
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

# Logging strutturato
from utils.logging_config import attach_run_log, debug, error, info, log_operation

from core.effectiveness import generate_field, hfs_gradient_ratio, parse_roi
from core.errors import EXIT_OK, ConfigError, LayerIndexError, NumericalError, ValidationError
from core.kolmogorov import generate_trajectories
from core.metrics import hf_energy_ratio, latent_cutoff_schedule, mean_energy_spectrum
from core.resunet import WIDTH_TABLE, build, hfs_parameter_count, parameter_count
from core.tensor import Tensor, precision
from core.training import OperatorDataset, evaluate, fit, predict
from exporters.csv_exporter import export_rows, read_rows, spectrum_rows
from exporters.image_exporter import (
    plot_lambda_history, plot_loss_curves, plot_spectra, plot_sweep, save_map,
)
from parsers.checkpoint import load_model
from parsers.dataset import DatasetContainer, DatasetField, normalize, read_dataset, split_indices, write_dataset
from parsers.universal import load_field
from utils.config import get_environment_info
from utils.file_manager import get_organized_output_path, setup_output_directories
from utils.run_config import RunConfig, load_run_config, write_resolved_config


COMMANDS = ("gen-data", "train", "eval", "sweep", "spectrum", "latents", "effectiveness", "compare")


# ────────────────────────────────────────────────────────────────────────────────
# Dataset helpers
# ────────────────────────────────────────────────────────────────────────────────

def _load_splits(cfg: RunConfig):
    """Finestre train/val/test dal container indicato in data.path."""
    container = read_dataset(cfg.data.path)
    data_field = container[cfg.data.field]
    trajectories = data_field.data
    if trajectories.ndim != 4:
        raise ValidationError(f"campo {cfg.data.field}: atteso (n, T, h, w), ricevuto {trajectories.shape}")
    masks = None
    mask_names = container.mask_names()
    if mask_names:
        masks = container[mask_names[0]].data.astype(bool)

    splits = container.manifest.get("splits") or split_indices(trajectories.shape[0], cfg.data.splits)
    datasets = {}
    for name in ("train", "val", "test"):
        idx = np.asarray(splits.get(name, []), dtype=np.int64)
        if idx.size == 0:
            datasets[name] = None
            continue
        datasets[name] = OperatorDataset.from_trajectories(
            trajectories[idx], cfg.data.history, cfg.data.horizon, cfg.data.stride,
            masks=masks[idx] if masks is not None else None,
        )
    bounds = (data_field.norm_min, data_field.norm_max)
    return datasets, bounds


def _require(dataset, name: str) -> OperatorDataset:
    if dataset is None:
        raise ValidationError(f"split {name} vuoto nel dataset")
    return dataset


def _model_config_for_data(cfg: RunConfig, dataset: OperatorDataset, **updates):
    """Canali e risoluzione del modello allineati alle finestre del dataset."""
    _, c_in, h, w = dataset.inputs.shape
    values = {"in_channels": c_in, "out_channels": dataset.targets.shape[1], "height": h, "width": w}
    values.update(updates)
    try:
        return cfg.model.model_validate({**cfg.model.model_dump(), **values})
    except ValueError as exc:
        raise ConfigError(f"modello incompatibile col dataset: {exc}") from exc


def _load_checkpoint(cfg: RunConfig):
    if not cfg.checkpoint:
        raise ConfigError("checkpoint non indicato (usa --checkpoint o --set checkpoint=...)")
    return load_model(cfg.checkpoint)


def _out(cfg: RunConfig, filename: str) -> str:
    return get_organized_output_path(filename, base_output=cfg.out_dir)


# ────────────────────────────────────────────────────────────────────────────────
# Comandi
# ────────────────────────────────────────────────────────────────────────────────

def cmd_gen_data(cfg: RunConfig) -> int:
    solver = cfg.solver
    seeds = [solver.seed + i for i in range(solver.n_trajectories)]
    workers = 1 if cfg.deterministic else solver.workers
    records = generate_trajectories(solver, seeds, workers=workers)

    raw = np.stack([r.snapshots for r in records])
    splits = split_indices(len(seeds), cfg.data.splits)
    train_raw = raw[np.asarray(splits["train"], dtype=np.int64)] if splits["train"] else raw
    lo, hi = float(train_raw.min()), float(train_raw.max())

    container = DatasetContainer(manifest={
        "generator": "kolmogorov",
        "solver": solver.model_dump(),
        "seeds": seeds,
        "splits": splits,
        "normalization": {"field": cfg.data.field, "min": lo, "max": hi, "source": "train"},
        "times": [float(t) for t in records[0].times],
    })
    container.add(DatasetField(
        name=cfg.data.field,
        data=normalize(raw, lo, hi).astype(cfg.data.dtype),
        dt=solver.record_interval,
        norm_min=lo,
        norm_max=hi,
    ))
    path = write_dataset(_out(cfg, Path(cfg.data.path).name), container)
    info("dataset_written", path=path, trajectories=len(seeds), frames=raw.shape[1],
         train=len(splits["train"]), val=len(splits["val"]), test=len(splits["test"]))
    print(f"dataset: {path}")
    return EXIT_OK


def cmd_train(cfg: RunConfig) -> int:
    datasets, _ = _load_splits(cfg)
    train_set, val_set = _require(datasets["train"], "train"), _require(datasets["val"], "val")
    model_cfg = _model_config_for_data(cfg, train_set)
    model = build(model_cfg, seed=cfg.seed)
    write_resolved_config(cfg.model_copy(update={"model": model_cfg}), cfg.out_dir)

    result = fit(model, train_set, val_set, cfg.train, out_dir=cfg.out_dir)
    if cfg.plots:
        plot_loss_curves(result.train_log, result.val_log, _out(cfg, "loss_curves.png"))
        plot_lambda_history(result.lambda_log, _out(cfg, "lambda_history.png"))
    print(f"best epoch {result.best_epoch}  val loss {result.best_val_loss:.6g}")
    print(f"checkpoint: {result.checkpoint_path}")
    return EXIT_OK


def cmd_eval(cfg: RunConfig) -> int:
    model, _ = _load_checkpoint(cfg)
    datasets, bounds = _load_splits(cfg)
    test_set = _require(datasets["test"], "test")
    report = evaluate(model, test_set, cfg.bands, cfg.data.eval_batch_size,
                      bounds=bounds if cfg.data.denormalize else None)
    row = {"variant": model.config.scaling_variant, "parameters": model.parameter_count(), **report.as_row()}
    path = export_rows([row], _out(cfg, "metrics.csv"))
    print(report.format_table())
    info("metrics_written", path=path, rel_error=report.rel_error)
    return EXIT_OK


def _width_value(label: str) -> int:
    if label in WIDTH_TABLE:
        return WIDTH_TABLE[label]
    try:
        return int(label)
    except ValueError as exc:
        raise ConfigError(f"larghezza sconosciuta: {label}", choices=sorted(WIDTH_TABLE)) from exc


def cmd_sweep(cfg: RunConfig) -> int:
    datasets, bounds = _load_splits(cfg)
    train_set = _require(datasets["train"], "train")
    val_set = _require(datasets["val"], "val")
    test_set = _require(datasets["test"], "test")

    rows: List[Dict] = []
    for variant in cfg.sweep.variants:
        for label in cfg.sweep.widths:
            model_cfg = _model_config_for_data(cfg, train_set, base_width=_width_value(label),
                                               scaling_variant=variant)
            member_dir = str(Path(cfg.out_dir) / "sweep" / f"{variant}_{label}")
            with log_operation("sweep_member", variant=variant, width=label):
                model = build(model_cfg, seed=cfg.seed)
                result = fit(model, train_set, val_set, cfg.train, out_dir=member_dir)
                report = evaluate(model, test_set, cfg.bands, cfg.data.eval_batch_size,
                                  bounds=bounds if cfg.data.denormalize else None)
            rows.append({
                "variant": variant,
                "width": label,
                "base_width": model_cfg.base_width,
                "parameters": parameter_count(model_cfg),
                "hfs_parameters": hfs_parameter_count(model_cfg),
                "best_epoch": result.best_epoch,
                "median_iter_ms": result.median_iter_ms(),
                **report.as_row(),
            })

    rows.sort(key=lambda r: (r["variant"], r["parameters"]))
    path = export_rows(rows, _out(cfg, "sweep.csv"))
    if cfg.plots:
        plot_sweep(rows, _out(cfg, "sweep.png"))
    info("sweep_completed", path=path, members=len(rows))
    print(f"sweep: {path}")
    return EXIT_OK


def cmd_spectrum(cfg: RunConfig) -> int:
    model, _ = _load_checkpoint(cfg)
    datasets, _ = _load_splits(cfg)
    test_set = _require(datasets["test"], "test")
    pred = predict(model, test_set, cfg.data.eval_batch_size)
    truth = test_set.targets

    rows = []
    for step in range(truth.shape[1]):
        spectra = {
            "truth": mean_energy_spectrum(truth[:, step]),
            "prediction": mean_energy_spectrum(pred[:, step]),
        }
        rows.extend(spectrum_rows(spectra, step))
        if cfg.plots:
            plot_spectra(spectra, _out(cfg, f"spectrum_step{step}.png"), title=f"step {step}")
    path = export_rows(rows, _out(cfg, "spectrum.csv"))
    print(f"spectrum: {path}")
    return EXIT_OK


def cmd_latents(cfg: RunConfig) -> int:
    model, _ = _load_checkpoint(cfg)
    datasets, _ = _load_splits(cfg)
    dataset = _require(datasets[cfg.latents.split], cfg.latents.split)
    levels = model.config.levels
    if not 0 <= cfg.data.sample < len(dataset):
        raise ValidationError(f"campione {cfg.data.sample} fuori range ({len(dataset)} campioni)")
    if cfg.latents.layer is not None and cfg.latents.layer > levels:
        raise LayerIndexError(f"layer {cfg.latents.layer} fuori range (0..{levels})", levels=levels)

    features: Dict = {}
    x = dataset.inputs[cfg.data.sample:cfg.data.sample + 1]
    model.forward(Tensor(x), features)

    cutoffs = latent_cutoff_schedule(levels)
    ratio_rows, spectrum_out = [], []
    for (component, level), fmap in features.items():
        if cfg.latents.layer is not None and level != cfg.latents.layer:
            continue
        cutoff = cutoffs[min(level, levels - 1)]
        maps = fmap[0]
        ratios = [hf_energy_ratio(channel, cutoff) for channel in maps if np.any(channel != channel.flat[0])]
        ratio_rows.append({
            "component": component,
            "level": level,
            "height": maps.shape[-2],
            "cutoff": cutoff,
            "hf_energy_ratio": float(np.mean(ratios)) if ratios else 0.0,
        })
        spectrum = mean_energy_spectrum(maps)
        total = spectrum.sum()
        for k, value in enumerate(spectrum):
            spectrum_out.append({"component": component, "level": level, "k": k,
                                 "p_normalized": float(value / total) if total > 0 else 0.0})
        save_map(maps.mean(axis=0), _out(cfg, f"latent_{component}{level}.pgm"))

    path = export_rows(ratio_rows, _out(cfg, "latent_ratios.csv"))
    export_rows(spectrum_out, _out(cfg, "latent_spectra.csv"))
    print(f"latents: {path}")
    return EXIT_OK


def cmd_effectiveness(cfg: RunConfig) -> int:
    eff = cfg.effectiveness
    rows = []
    for index in range(eff.samples):
        if eff.input:
            field = load_field(eff.input, sample=index, step=eff.step)
            source = eff.input
        else:
            field = generate_field(eff.generator, size=eff.size, seed=cfg.seed + index)
            source = eff.generator
        report = hfs_gradient_ratio(field, eff.patch_size, eff.lambda_dc, eff.lambda_hfc,
                                    roi=parse_roi(eff.roi, field.shape), floor=eff.floor,
                                    threshold=eff.threshold)
        save_map(report.baseline_gradient, _out(cfg, f"effectiveness_{index}_baseline.pgm"))
        save_map(report.scaled_gradient, _out(cfg, f"effectiveness_{index}_hfs.pgm"))
        save_map(report.ratio, _out(cfg, f"effectiveness_{index}_ratio.pgm"))
        rows.append({"sample": index, "source": source, **report.summary()})
        info("effectiveness_sample", sample=index, cv=round(report.cv, 6), verdict=report.verdict)

    path = export_rows(rows, _out(cfg, "effectiveness.csv"))
    print(f"effectiveness: {path}")
    return EXIT_OK


# ────────────────────────────────────────────────────────────────────────────────
# Compare
# ────────────────────────────────────────────────────────────────────────────────

_LOWER_IS_BETTER_SKIP = {"variant", "width", "parameters", "hfs_parameters", "base_width", "best_epoch",
                         "median_iter_ms"}


def _to_float(value) -> Optional[float]:
    try:
        return float(value)
    except (TypeError, ValueError):
        return None


def compare_metrics(baseline: Sequence[Dict], candidate: Sequence[Dict]) -> List[Dict]:
    """Confronto riga per riga (per width se presente); delta = candidate − baseline."""
    def key(row, index):
        return row.get("width") or str(index)

    base_by_key = {key(r, i): r for i, r in enumerate(baseline)}
    rows = []
    for i, cand in enumerate(candidate):
        k = key(cand, i)
        base = base_by_key.get(k)
        if base is None:
            continue
        for metric, value in cand.items():
            if metric in _LOWER_IS_BETTER_SKIP:
                continue
            b, c = _to_float(base.get(metric)), _to_float(value)
            if b is None or c is None:
                continue
            rows.append({"key": k, "metric": metric, "baseline": b, "candidate": c, "delta": c - b,
                         "improved": int(c < b)})
        b_rel, c_rel = _to_float(base.get("rel_error")), _to_float(cand.get("rel_error"))
        b_high, c_high = _to_float(base.get("rel_E_F_high")), _to_float(cand.get("rel_E_F_high"))
        if None not in (b_rel, c_rel, b_high, c_high):
            passed = c_rel <= b_rel and c_high < b_high
            rows.append({"key": k, "metric": "verdict", "baseline": "", "candidate": "",
                         "delta": "", "improved": int(passed)})
    return rows


def compare_latents(baseline: Sequence[Dict], candidate: Sequence[Dict]) -> List[Dict]:
    """Delta del rapporto di energia HF per (component, level)."""
    base = {(r["component"], r["level"]): float(r["hf_energy_ratio"]) for r in baseline}
    rows = []
    for r in candidate:
        k = (r["component"], r["level"])
        if k not in base:
            continue
        c = float(r["hf_energy_ratio"])
        rows.append({"key": f"{k[0]}{k[1]}", "metric": "hf_energy_ratio", "baseline": base[k],
                     "candidate": c, "delta": c - base[k], "improved": int(c > base[k])})
    return rows


def cmd_compare(cfg: RunConfig) -> int:
    if not cfg.compare.baseline or not cfg.compare.candidate:
        raise ConfigError("compare richiede compare.baseline e compare.candidate")
    baseline, candidate = read_rows(cfg.compare.baseline), read_rows(cfg.compare.candidate)
    if not baseline or not candidate:
        raise ValidationError("CSV di confronto vuoti")
    kind = cfg.compare.kind
    if kind == "auto":
        kind = "latents" if "hf_energy_ratio" in baseline[0] else "metrics"
    rows = compare_latents(baseline, candidate) if kind == "latents" else compare_metrics(baseline, candidate)
    path = export_rows(rows, _out(cfg, "compare.csv"),
                       fieldnames=["key", "metric", "baseline", "candidate", "delta", "improved"])
    improved = sum(int(r["improved"]) for r in rows)
    info("comparison_written", path=path, kind=kind, rows=len(rows), improved=improved)
    print(f"compare ({kind}): {improved}/{len(rows)} improved  ->  {path}")
    return EXIT_OK


HANDLERS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "spectrum": cmd_spectrum,
    "latents": cmd_latents,
    "effectiveness": cmd_effectiveness,
    "compare": cmd_compare,
}


# ────────────────────────────────────────────────────────────────────────────────
# Entry point
# ────────────────────────────────────────────────────────────────────────────────

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="file key=value con la configurazione del run")
    common.add_argument("--seed", type=int, help="seed globale (modello, training, solver)")
    common.add_argument("--deterministic", action="store_true", help="thread singolo, replay bit-esatto")
    common.add_argument("--out", dest="out_dir", help="cartella di output del run")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override di una chiave (ripetibile)")
    common.add_argument("--plots", action="store_true", help="grafici matplotlib se disponibile")
    common.add_argument("--checkpoint", help="checkpoint .sblb (eval, spectrum, latents)")
    common.add_argument("--input", help="campo sorgente per effectiveness (.sbds, .pgm, .npy)")
    common.add_argument("--baseline", help="CSV baseline per compare")
    common.add_argument("--candidate", help="CSV candidato per compare")

    parser = argparse.ArgumentParser(prog="specbias", description="Spectral-bias lab: HFS neural operators")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _cli_overrides(args: argparse.Namespace) -> Dict[str, object]:
    cli: Dict[str, object] = {"seed": args.seed, "out_dir": args.out_dir, "checkpoint": args.checkpoint}
    if args.deterministic:
        cli["deterministic"] = True
    if args.plots:
        cli["plots"] = True
    if args.input:
        cli["effectiveness.input"] = args.input
    if args.baseline:
        cli["compare.baseline"] = args.baseline
    if args.candidate:
        cli["compare.candidate"] = args.candidate
    return cli


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse esce con 2 sugli errori di sintassi, 0 con --help
        return int(exc.code or 0)

    try:
        cfg = load_run_config(args.config, args.overrides, _cli_overrides(args))
        setup_output_directories(cfg.out_dir)
        attach_run_log(os.path.join(cfg.out_dir, "logs"))
        debug("environment", **get_environment_info())
        write_resolved_config(cfg)
        with log_operation(args.command, out_dir=cfg.out_dir, preset=cfg.preset, seed=cfg.seed):
            with precision(cfg.data.dtype):
                return HANDLERS[args.command](cfg)
    except (ValidationError, NumericalError) as exc:
        error("command_failed", command=args.command, exit_code=exc.exit_code, **exc.as_log_fields())
        print(f"specbias {args.command}: {exc.message}", file=sys.stderr)
        return exc.exit_code


def cli() -> None:
    """Entry point console_scripts."""
    sys.exit(main())


if __name__ == "__main__":
    cli()
