#!/usr/bin/env python3
"""
Test training: Lion, clipping, schedule lr, dataset a finestre, fit ed evaluate.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from core.errors import DivergenceError, NonFiniteGradientError, ShapeError, ValidationError
from core.resunet import ModelConfig, build
from core.tensor import Tensor
from core.training import (LionState, OperatorDataset, TrainConfig, benchmark_iterations, clip_grad_norm,
                           evaluate, fit, lion_step, lr_at, predict)


def _param(value):
    return Tensor(np.asarray(value, dtype=np.float64), requires_grad=True, name="p")


def micro_config(**overrides):
    base = dict(in_channels=1, out_channels=1, height=8, width=8, levels=1, base_width=4,
                width_multipliers=[1, 1], patch_size=4)
    base.update(overrides)
    return ModelConfig(**base)


def micro_dataset(samples=1, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((samples, 1, 8, 8)).astype(np.float32)
    return OperatorDataset(x, 0.5 * x)


# ────────────────────────────────────────────────────────────────────────────────
# Lion
# ────────────────────────────────────────────────────────────────────────────────

def test_lion_zero_gradient_no_decay_is_noop():
    p = _param([1.0, -2.0])
    state = LionState.create([p], lr=0.1, weight_decay=0.0)
    lion_step([p], [np.zeros(2)], state)
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_lion_sign_update():
    p = _param([1.0])
    state = LionState.create([p], lr=0.1, weight_decay=0.0)
    lion_step([p], [np.array([5.0])], state)
    assert p.data[0] == pytest.approx(0.9)
    assert state.momentum[0][0] == pytest.approx(0.01 * 5.0)


def test_lion_decay_skips_exempt_parameters():
    decayed = Tensor(np.array([1.0]), requires_grad=True, name="w")
    exempt = Tensor(np.array([1.0]), requires_grad=True, name="hfs.lambda_dc")
    state = LionState.create([decayed, exempt], lr=0.1, weight_decay=0.5, exempt={"hfs.lambda_dc"})
    lion_step([decayed, exempt], [np.zeros(1), np.zeros(1)], state)
    assert decayed.data[0] == pytest.approx(1.0 - 0.1 * 0.5)
    assert exempt.data[0] == 1.0


def test_lion_converges_on_quadratic_bowl():
    p = _param([1.0])
    state = LionState.create([p], lr=0.01, weight_decay=0.0)
    for _ in range(100):
        lion_step([p], [2.0 * p.data], state)
    assert abs(p.data[0]) < 0.2


def test_lion_rejects_non_finite_before_any_update():
    a, b = _param([1.0]), _param([2.0])
    state = LionState.create([a, b], lr=0.1)
    with pytest.raises(NonFiniteGradientError):
        lion_step([a, b], [np.array([1.0]), np.array([np.nan])], state)
    assert a.data[0] == 1.0 and b.data[0] == 2.0


# ────────────────────────────────────────────────────────────────────────────────
# Clipping e schedule
# ────────────────────────────────────────────────────────────────────────────────

def test_clip_below_threshold_returns_same_arrays():
    grads = [np.array([0.3, 0.4])]
    clipped, norm = clip_grad_norm(grads, 1.0)
    assert clipped[0] is grads[0]
    assert norm == pytest.approx(0.5)


def test_clip_halves_norm_two():
    clipped, norm = clip_grad_norm([np.array([2.0, 0.0])], 1.0)
    assert norm == pytest.approx(2.0)
    np.testing.assert_array_equal(clipped[0], [1.0, 0.0])


def test_clip_property_random():
    rng = np.random.default_rng(0)
    for _ in range(50):
        grads = [rng.standard_normal(s) * rng.uniform(0.1, 10) for s in [(3,), (2, 4), (5,)]]
        clipped, _ = clip_grad_norm(grads, 0.7)
        total = np.sqrt(sum(float(np.sum(g ** 2)) for g in clipped))
        assert total <= 0.7 + 1e-6


def test_lr_schedule_boundaries():
    cfg = TrainConfig.full_recipe()
    assert lr_at(0, cfg) == 8e-4
    assert lr_at(699, cfg) == 8e-4
    assert lr_at(999, cfg) == 8e-5
    values = [lr_at(e, cfg) for e in range(cfg.epochs)]
    assert all(a >= b for a, b in zip(values, values[1:]))
    assert len(set(values[700:])) == 10


def test_train_config_validation():
    with pytest.raises(Exception):
        TrainConfig(epochs=10, decay_start=10)
    with pytest.raises(Exception):
        TrainConfig(lr=1e-4, lr_final=1e-3)
    assert not TrainConfig(clip_norm=2.0).clip_in_declared_range()


# ────────────────────────────────────────────────────────────────────────────────
# Dataset
# ────────────────────────────────────────────────────────────────────────────────

def test_windows_from_trajectories():
    snapshots = np.arange(2 * 27 * 4 * 4, dtype=np.float64).reshape(2, 27, 4, 4)
    ds = OperatorDataset.from_trajectories(snapshots, history=20, horizon=5)
    assert len(ds) == 2 * 3
    np.testing.assert_array_equal(ds.inputs[1], snapshots[0, 1:21])
    np.testing.assert_array_equal(ds.targets[1], snapshots[0, 21:26])
    with pytest.raises(ValidationError):
        OperatorDataset.from_trajectories(snapshots[:, :10], history=20, horizon=5)


def test_dataset_shape_checks():
    with pytest.raises(ShapeError):
        OperatorDataset(np.zeros((2, 1, 4, 4)), np.zeros((3, 1, 4, 4)))
    with pytest.raises(ShapeError):
        OperatorDataset(np.zeros((2, 1, 4, 4)), np.zeros((2, 1, 4, 4)), masks=np.zeros((2, 1, 2, 2)))


def test_batches_cover_dataset_once():
    ds = micro_dataset(samples=5)
    seen = [x.shape[0] for x, _ in ds.batches(2, np.random.default_rng(0))]
    assert seen == [2, 2, 1]


# ────────────────────────────────────────────────────────────────────────────────
# Fit / evaluate
# ────────────────────────────────────────────────────────────────────────────────

def test_memorizes_single_sample():
    ds = micro_dataset()
    model = build(micro_config(), seed=0)
    cfg = TrainConfig(epochs=200, decay_start=150, lr=1e-2, lr_final=1e-3, weight_decay=0.0, batch_size=1)
    result = fit(model, ds, ds, cfg)
    first = result.train_log[0]["loss"]
    assert result.train_log[-1]["loss"] < 0.5 * first
    assert result.best_val_loss <= result.val_log[0]["val_loss"]
    assert result.best_epoch >= 0


def test_deterministic_replay():
    ds = micro_dataset(samples=3)
    cfg = TrainConfig(epochs=4, decay_start=2, batch_size=2, seed=5)
    runs = []
    for _ in range(2):
        result = fit(build(micro_config(scaling_variant="hfs"), seed=1), ds, ds, cfg)
        runs.append([row["loss"] for row in result.train_log])
    assert runs[0] == runs[1]


def test_fit_writes_logs_and_checkpoint(tmp_path):
    ds = micro_dataset(samples=2)
    cfg = TrainConfig(epochs=2, decay_start=1, batch_size=2)
    result = fit(build(micro_config(scaling_variant="hfs"), seed=0), ds, ds, cfg, out_dir=str(tmp_path))
    assert Path(result.checkpoint_path).is_file()
    assert (tmp_path / "csv" / "train_log.csv").is_file()
    assert (tmp_path / "csv" / "lambda_log.csv").is_file()
    assert result.lambda_log[0]["epoch"] == -1


def test_divergence_writes_last_good_checkpoint_and_logs(tmp_path, monkeypatch):
    import core.training as training
    from parsers.checkpoint import read_checkpoint

    ds = micro_dataset(samples=2)
    model = build(micro_config(scaling_variant="hfs"), seed=0)
    real_iteration = training._train_iteration
    calls, states = [], []

    def iteration_then_nan(*args, **kwargs):
        calls.append(1)
        if len(calls) == 3:
            raise NonFiniteGradientError("gradiente non finito")
        out = real_iteration(*args, **kwargs)
        states.append(model.state_dict())
        return out

    monkeypatch.setattr(training, "_train_iteration", iteration_then_nan)
    cfg = TrainConfig(epochs=5, decay_start=4, batch_size=2)
    with pytest.raises(DivergenceError) as excinfo:
        fit(model, ds, ds, cfg, out_dir=str(tmp_path))

    assert excinfo.value.last_good_epoch == 1
    checkpoint_path = tmp_path / "checkpoints" / "last_good.sblb"
    assert excinfo.value.context["checkpoint_path"] == str(checkpoint_path)
    saved = read_checkpoint(str(checkpoint_path))
    assert saved.metadata["last_good_epoch"] == 1
    for name, value in states[-1].items():
        np.testing.assert_array_equal(saved.state[name], value)

    train_rows = (tmp_path / "csv" / "train_log.csv").read_text().splitlines()
    assert len(train_rows) == 1 + 2
    assert (tmp_path / "csv" / "val_log.csv").is_file()
    assert (tmp_path / "csv" / "lambda_log.csv").is_file()
    assert not (tmp_path / "checkpoints" / "best.sblb").exists()


def test_fit_rejects_incompatible_dataset():
    model = build(micro_config(), seed=0)
    bad = OperatorDataset(np.zeros((1, 2, 8, 8)), np.zeros((1, 1, 8, 8)))
    with pytest.raises(ShapeError):
        fit(model, bad, bad, TrainConfig(epochs=1, decay_start=0))


def test_truth_as_prediction_report_is_zero():
    from core.metrics import compute_report

    truth = np.random.default_rng(0).standard_normal((2, 3, 16, 16))
    report = compute_report(truth, truth)
    assert all(value == 0.0 for key, value in report.model_dump().items() if value is not None)


def test_zero_lambda_hfs_evaluates_like_baseline():
    ds = micro_dataset(samples=2)
    baseline = build(micro_config(), seed=4)
    hfs = build(micro_config(scaling_variant="hfs"), seed=4)
    for _, _, params in hfs.hfs_sites():
        params.lambda_dc.data[:] = 0.0
        params.lambda_hfc.data[:] = 0.0
    np.testing.assert_array_equal(predict(hfs, ds), predict(baseline, ds))
    assert evaluate(hfs, ds) == evaluate(baseline, ds)


def test_benchmark_returns_timings():
    ds = micro_dataset(samples=2)
    timings = benchmark_iterations(build(micro_config()), ds, TrainConfig(batch_size=2), iterations=3)
    assert len(timings) == 3 and all(t > 0 for t in timings)
