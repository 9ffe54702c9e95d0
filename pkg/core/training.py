"""
Training harness: Lion optimizer, step learning-rate schedule, global-norm
gradient clipping, mini-batch fit loop with validation-based selection and
the evaluation entry points.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

from core.errors import (
    DivergenceError, NonFiniteError, NonFiniteGradientError, ShapeError, ValidationError,
)
from core.hfs import lambda_snapshot
from core.metrics import BandSpec, MetricsReport, compute_report
from core.ops import mse_loss
from core.tensor import Tape, Tensor, backward, get_default_dtype
from utils.logging_config import debug, info, log_operation, warning


__all__ = [
    "TrainConfig",
    "LionState",
    "OperatorDataset",
    "FitResult",
    "lion_step",
    "clip_grad_norm",
    "lr_at",
    "fit",
    "predict",
    "evaluate",
    "evaluate_loss",
    "benchmark_iterations",
]


# ────────────────────────────────────────────────────────────────────────────────
# Config
# ────────────────────────────────────────────────────────────────────────────────

class TrainConfig(BaseModel):
    """Ricetta di training; i default sono quelli desk-scale."""

    epochs: int = Field(300, gt=0)
    lr: float = Field(8e-4, gt=0)
    lr_final: float = Field(8e-5, gt=0)
    decay_start: int = Field(210, ge=0)
    decay_steps: int = Field(10, gt=0)
    batch_size: int = Field(4, gt=0)
    clip_norm: float = Field(1.0, gt=0)
    beta1: float = Field(0.9, gt=0, lt=1)
    beta2: float = Field(0.99, gt=0, lt=1)
    weight_decay: float = Field(0.05, ge=0)
    eval_every: int = Field(1, gt=0)
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check_schedule(self):
        if self.decay_start >= self.epochs:
            raise ValueError(f"decay_start ({self.decay_start}) deve precedere epochs ({self.epochs})")
        if self.lr_final > self.lr:
            raise ValueError("lr_final non può superare lr")
        return self

    @classmethod
    def full_recipe(cls, **overrides) -> "TrainConfig":
        """1000 epoche, decadimento dopo la 700."""
        values = {"epochs": 1000, "decay_start": 700}
        values.update(overrides)
        return cls(**values)

    def clip_in_declared_range(self) -> bool:
        return 0.4 <= self.clip_norm <= 1.0


def lr_at(epoch: int, config: TrainConfig) -> float:
    """
    lr costante fino a decay_start, poi decade linearmente verso lr_final in
    decay_steps gradini uguali; l'ultima epoca è esattamente lr_final.
    """
    if epoch < 0:
        raise ValidationError(f"epoca negativa: {epoch}")
    if epoch < config.decay_start:
        return config.lr
    span = config.epochs - config.decay_start
    elapsed = epoch - config.decay_start + 1
    # ceil intero per non dipendere dall'arrotondamento float
    step = min(config.decay_steps, -(-config.decay_steps * elapsed // span))
    if step >= config.decay_steps:
        return config.lr_final
    return config.lr - (config.lr - config.lr_final) * step / config.decay_steps


# ────────────────────────────────────────────────────────────────────────────────
# Lion
# ────────────────────────────────────────────────────────────────────────────────

@dataclass
class LionState:
    momentum: List[np.ndarray]
    names: List[Optional[str]]
    lr: float = 8e-4
    beta1: float = 0.9
    beta2: float = 0.99
    weight_decay: float = 0.05
    exempt: set = field(default_factory=set)

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValidationError("β1, β2 devono stare in (0,1)", beta1=self.beta1, beta2=self.beta2)

    @classmethod
    def create(cls, params: Sequence[Tensor], lr: float = 8e-4, beta1: float = 0.9, beta2: float = 0.99,
               weight_decay: float = 0.05, exempt: Optional[set] = None) -> "LionState":
        return cls(
            momentum=[np.zeros_like(p.data) for p in params],
            names=[p.name for p in params],
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            weight_decay=weight_decay,
            exempt=set(exempt or ()),
        )

    @classmethod
    def from_config(cls, params: Sequence[Tensor], config: TrainConfig,
                    exempt: Optional[set] = None) -> "LionState":
        return cls.create(params, lr=config.lr, beta1=config.beta1, beta2=config.beta2,
                          weight_decay=config.weight_decay, exempt=exempt)


def lion_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: LionState) -> None:
    """Aggiorna params in place; rifiuta l'intero step se un gradiente non è finito."""
    if len(params) != len(grads) or len(params) != len(state.momentum):
        raise ShapeError("lion_step: parametri, gradienti e momenti non allineati")
    for p, g, m in zip(params, grads, state.momentum):
        if g.shape != p.shape or m.shape != p.shape:
            raise ShapeError(f"lion_step: shape incoerenti per {p.name}", param=p.shape, grad=g.shape)
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"gradiente non finito per {p.name}", parameter=p.name)

    b1, b2, lr = state.beta1, state.beta2, state.lr
    for index, (p, g) in enumerate(zip(params, grads)):
        m = state.momentum[index]
        wd = 0.0 if state.names[index] in state.exempt else state.weight_decay
        update = np.sign(b1 * m + (1.0 - b1) * g)
        if wd:
            update = update + wd * p.data
        p.data[...] = p.data - lr * update
        state.momentum[index] = b2 * m + (1.0 - b2) * g


def clip_grad_norm(grads: Sequence[np.ndarray], max_norm: float) -> Tuple[List[np.ndarray], float]:
    """Clipping sulla norma L2 globale; sotto soglia restituisce gli stessi array."""
    if max_norm <= 0:
        raise ValidationError(f"max_norm deve essere positivo, ricevuto {max_norm}")
    total = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads))
    if total <= max_norm:
        return list(grads), total
    scale = max_norm / total
    return [g * np.asarray(scale, dtype=g.dtype) for g in grads], total


# ────────────────────────────────────────────────────────────────────────────────
# Dataset
# ────────────────────────────────────────────────────────────────────────────────

class OperatorDataset:
    """Coppie (storia → orizzonte) con maschere opzionali sui target."""

    def __init__(self, inputs: np.ndarray, targets: np.ndarray, masks: Optional[np.ndarray] = None):
        inputs = np.asarray(inputs)
        targets = np.asarray(targets)
        if inputs.ndim != 4 or targets.ndim != 4:
            raise ShapeError("OperatorDataset: input e target (n, c, h, w)",
                             inputs=inputs.shape, targets=targets.shape)
        if inputs.shape[0] != targets.shape[0] or inputs.shape[2:] != targets.shape[2:]:
            raise ShapeError("OperatorDataset: input e target non allineati",
                             inputs=inputs.shape, targets=targets.shape)
        if masks is not None:
            masks = np.asarray(masks, dtype=bool)
            if masks.shape != targets.shape:
                raise ShapeError("OperatorDataset: maschere e target non allineati", masks=masks.shape)
        self.inputs = inputs
        self.targets = targets
        self.masks = masks

    @classmethod
    def from_trajectories(cls, snapshots: np.ndarray, history: int = 20, horizon: int = 5,
                          stride: int = 1, masks: Optional[np.ndarray] = None) -> "OperatorDataset":
        """Finestre scorrevoli su traiettorie (n_traj, T, h, w)."""
        snapshots = np.asarray(snapshots)
        if snapshots.ndim != 4:
            raise ShapeError("traiettorie attese (n_traj, T, h, w)", shape=snapshots.shape)
        window = history + horizon
        frames = snapshots.shape[1]
        if frames < window:
            raise ValidationError(f"{frames} frame non bastano per storia {history} + orizzonte {horizon}")
        starts = range(0, frames - window + 1, stride)
        inputs, targets, mask_windows = [], [], []
        for traj_index, traj in enumerate(snapshots):
            for s in starts:
                inputs.append(traj[s:s + history])
                targets.append(traj[s + history:s + window])
                if masks is not None:
                    mask_windows.append(masks[traj_index, s + history:s + window])
        return cls(np.stack(inputs), np.stack(targets), np.stack(mask_windows) if masks is not None else None)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def subset(self, indices: Sequence[int]) -> "OperatorDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return OperatorDataset(self.inputs[idx], self.targets[idx],
                               self.masks[idx] if self.masks is not None else None)

    def batches(self, batch_size: int, rng: Optional[np.random.Generator] = None) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        order = rng.permutation(len(self)) if rng is not None else np.arange(len(self))
        dtype = get_default_dtype()
        for start in range(0, len(self), batch_size):
            idx = order[start:start + batch_size]
            yield self.inputs[idx].astype(dtype, copy=False), self.targets[idx].astype(dtype, copy=False)


def _check_compatible(model, dataset: OperatorDataset, label: str) -> None:
    cfg = model.config
    if len(dataset) == 0:
        raise ValidationError(f"dataset {label} vuoto")
    if dataset.inputs.shape[1:] != (cfg.in_channels, cfg.height, cfg.width):
        raise ShapeError(f"dataset {label}: input {dataset.inputs.shape[1:]} incompatibili col modello",
                         expected=(cfg.in_channels, cfg.height, cfg.width))
    if dataset.targets.shape[1] != cfg.out_channels:
        raise ShapeError(f"dataset {label}: {dataset.targets.shape[1]} step target, modello ne predice "
                         f"{cfg.out_channels}")


# ────────────────────────────────────────────────────────────────────────────────
# Fit
# ────────────────────────────────────────────────────────────────────────────────

@dataclass
class FitResult:
    best_epoch: int
    best_val_loss: float
    final_val_loss: float
    best_state: Dict[str, np.ndarray]
    train_log: List[Dict[str, object]]
    val_log: List[Dict[str, object]]
    lambda_log: List[Dict[str, object]]
    checkpoint_path: Optional[str] = None

    def median_iter_ms(self) -> float:
        return float(np.median([row["iter_ms"] for row in self.train_log])) if self.train_log else 0.0


def _train_iteration(model, params: List[Tensor], state: LionState, x: np.ndarray, y: np.ndarray,
                     clip_norm: float) -> Tuple[float, float]:
    model.zero_grad()
    with Tape():
        loss = mse_loss(model(Tensor(x)), Tensor(y))
        backward(loss, leaves=params)
    grads, norm = clip_grad_norm([p.grad for p in params], clip_norm)
    lion_step(params, grads, state)
    return loss.item(), norm


def _lambda_rows(model, epoch: int) -> List[Dict[str, object]]:
    return [{"epoch": epoch, **record._asdict()} for record in lambda_snapshot(model)]


def fit(model, train_set: OperatorDataset, val_set: OperatorDataset, config: TrainConfig,
        out_dir: Optional[str] = None) -> FitResult:
    """
    Loop di training con selezione sul minimo della loss di validazione.

    Args:
        model: ResUNet costruito
        train_set, val_set: dataset non vuoti compatibili col modello
        config: ricetta di training
        out_dir: se dato, scrive train_log.csv, val_log.csv, lambda_log.csv e best.sblb

    Returns:
        FitResult; il modello viene lasciato con i pesi migliori caricati.
    """
    _check_compatible(model, train_set, "train")
    _check_compatible(model, val_set, "val")
    if not config.clip_in_declared_range():
        warning("clip_norm fuori dall'intervallo [0.4, 1.0]", clip_norm=config.clip_norm)

    params = model.parameters()
    state = LionState.from_config(params, config, exempt=model.scaling_parameter_names())
    rng = np.random.default_rng(config.seed)

    train_log: List[Dict[str, object]] = []
    val_log: List[Dict[str, object]] = []
    lambda_log: List[Dict[str, object]] = _lambda_rows(model, -1)
    best_val, best_epoch = math.inf, -1
    best_state = model.state_dict()
    last_good_state, last_good_epoch = model.state_dict(), -1
    val_loss = math.nan
    iteration = 0

    with log_operation("fit", epochs=config.epochs, train=len(train_set), val=len(val_set),
                       variant=model.config.scaling_variant):
        for epoch in range(config.epochs):
            state.lr = lr_at(epoch, config)
            epoch_losses = []
            for x, y in train_set.batches(config.batch_size, rng):
                start = time.perf_counter()
                try:
                    loss, norm = _train_iteration(model, params, state, x, y, config.clip_norm)
                except (NonFiniteError, NonFiniteGradientError) as exc:
                    checkpoint = None
                    if out_dir is not None:
                        checkpoint = _write_divergence_outputs(model, last_good_state, last_good_epoch,
                                                               (train_log, val_log, lambda_log), config, out_dir)
                    raise DivergenceError(
                        f"training divergente all'epoca {epoch}: {exc.message}",
                        last_good_state=last_good_state, last_good_epoch=last_good_epoch,
                        epoch=epoch, iteration=iteration, checkpoint_path=checkpoint,
                    ) from exc
                iter_ms = (time.perf_counter() - start) * 1000.0
                train_log.append({"iteration": iteration, "epoch": epoch, "loss": loss, "lr": state.lr,
                                  "grad_norm": norm, "iter_ms": round(iter_ms, 3)})
                epoch_losses.append(loss)
                iteration += 1
            last_good_state, last_good_epoch = model.state_dict(), epoch

            if (epoch + 1) % config.eval_every == 0 or epoch == config.epochs - 1:
                val_loss = evaluate_loss(model, val_set, config.batch_size)
                improved = val_loss < best_val
                if improved:
                    best_val, best_epoch = val_loss, epoch
                    best_state = model.state_dict()
                val_log.append({"epoch": epoch, "val_loss": val_loss, "best": int(improved)})
                lambda_log.extend(_lambda_rows(model, epoch))
                info("epoch_completed", epoch=epoch, train_loss=float(np.mean(epoch_losses)),
                     val_loss=val_loss, lr=state.lr, best_epoch=best_epoch)
            else:
                debug("epoch_completed", epoch=epoch, train_loss=float(np.mean(epoch_losses)), lr=state.lr)

    model.load_state_dict(best_state)
    result = FitResult(best_epoch=best_epoch, best_val_loss=best_val, final_val_loss=val_loss,
                       best_state=best_state, train_log=train_log, val_log=val_log, lambda_log=lambda_log)
    if out_dir is not None:
        result.checkpoint_path = _write_fit_outputs(model, result, config, out_dir)
    return result


def _write_logs(logs: Tuple[List, List, List], out_dir: str) -> None:
    from exporters.csv_exporter import export_rows
    from utils.file_manager import get_organized_output_path

    for name, rows in zip(("train_log.csv", "val_log.csv", "lambda_log.csv"), logs):
        export_rows(rows, get_organized_output_path(name, base_output=out_dir))


def _write_fit_outputs(model, result: FitResult, config: TrainConfig, out_dir: str) -> str:
    from parsers.checkpoint import write_checkpoint
    from utils.file_manager import get_organized_output_path

    _write_logs((result.train_log, result.val_log, result.lambda_log), out_dir)
    return write_checkpoint(
        get_organized_output_path("best.sblb", base_output=out_dir), model.config, result.best_state,
        metadata={"best_epoch": result.best_epoch, "best_val_loss": result.best_val_loss,
                  "train": config.model_dump()},
    )


def _write_divergence_outputs(model, state: Dict[str, np.ndarray], epoch: int,
                              logs: Tuple[List, List, List], config: TrainConfig, out_dir: str) -> str:
    """Log parziali e last_good.sblb con i pesi dell'ultima epoca completa."""
    from parsers.checkpoint import write_checkpoint
    from utils.file_manager import get_organized_output_path

    _write_logs(logs, out_dir)
    path = write_checkpoint(
        get_organized_output_path("last_good.sblb", base_output=out_dir), model.config, state,
        metadata={"last_good_epoch": epoch, "diverged": True, "train": config.model_dump()},
    )
    warning("last_good_checkpoint_written", path=path, last_good_epoch=epoch)
    return path


# ────────────────────────────────────────────────────────────────────────────────
# Valutazione
# ────────────────────────────────────────────────────────────────────────────────

def predict(model, dataset: OperatorDataset, batch_size: int = 8) -> np.ndarray:
    """Forward senza tape su tutto il dataset, nell'ordine originale."""
    _check_compatible(model, dataset, "eval")
    chunks = [model(Tensor(x)).data for x, _ in dataset.batches(batch_size)]
    return np.concatenate(chunks, axis=0)


def evaluate_loss(model, dataset: OperatorDataset, batch_size: int = 8) -> float:
    total, count = 0.0, 0
    for x, y in dataset.batches(batch_size):
        pred = model(Tensor(x)).data
        total += float(np.mean((pred.astype(np.float64) - y) ** 2)) * x.shape[0]
        count += x.shape[0]
    return total / count


def evaluate(model, test_set: OperatorDataset, bands: Optional[BandSpec] = None, batch_size: int = 8,
             bounds: Optional[Tuple[float, float]] = None) -> MetricsReport:
    """
    MetricsReport sulle k predizioni di ogni campione di test.

    Con bounds=(lo, hi) predizioni e verità vengono riportate alla scala fisica
    prima del calcolo.
    """
    from parsers.dataset import denormalize

    with log_operation("evaluate", samples=len(test_set), variant=model.config.scaling_variant):
        pred = predict(model, test_set, batch_size).astype(np.float64)
        truth = test_set.targets.astype(np.float64)
        if bounds is not None:
            pred, truth = denormalize(pred, *bounds), denormalize(truth, *bounds)
        return compute_report(pred, truth, bands or BandSpec(), mask=test_set.masks)


def benchmark_iterations(model, dataset: OperatorDataset, config: TrainConfig,
                         iterations: int = 50) -> List[float]:
    """Tempi (ms) di iterazioni complete forward+backward+step su un batch fisso."""
    params = model.parameters()
    state = LionState.from_config(params, config, exempt=model.scaling_parameter_names())
    x, y = next(dataset.batches(config.batch_size))
    timings = []
    for _ in range(iterations):
        start = time.perf_counter()
        _train_iteration(model, params, state, x, y, config.clip_norm)
        timings.append((time.perf_counter() - start) * 1000.0)
    return timings
