#!/usr/bin/env python3
"""
Test scaling ad alta frequenza (patch, DC/HFC, HFS) e scaling in Fourier.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from core.errors import DivisibilityError, ValidationError
from core.gradcheck import finite_difference_check
from core.hfs import (FourierScaleParams, HfsParams, compute_dc, compute_hfc, fourier_scale, hfs_apply,
                      hfs_apply_array, lambda_snapshot, low_frequency_mask, patchify, unpatchify)
from core.ops import mse_loss
from core.resunet import ModelConfig, build
from core.tensor import Tape, Tensor, backward, precision
from core.training import LionState, lion_step


def _loop_hfs(x, lambda_dc, lambda_hfc, p):
    """Riferimento esplicito: media delle patch e scaling per patch."""
    n, c, h, w = x.shape
    out = np.empty_like(x)
    for s in range(n):
        for ch in range(c):
            blocks = [x[s, ch, i:i + p, j:j + p] for i in range(0, h, p) for j in range(0, w, p)]
            dc = sum(blocks) / len(blocks)
            for i in range(0, h, p):
                for j in range(0, w, p):
                    patch = x[s, ch, i:i + p, j:j + p]
                    out[s, ch, i:i + p, j:j + p] = patch + lambda_dc[ch] * dc + lambda_hfc[ch] * (patch - dc)
    return out


# ────────────────────────────────────────────────────────────────────────────────
# Patch
# ────────────────────────────────────────────────────────────────────────────────

def test_patchify_indexing():
    x = np.arange(16.0).reshape(1, 1, 4, 4)
    patches = patchify(x, 2)
    assert patches.shape == (1, 4, 1, 2, 2)
    np.testing.assert_array_equal(patches[0, 0, 0], x[0, 0, :2, :2])
    np.testing.assert_array_equal(patches[0, 1, 0], x[0, 0, :2, 2:])


def test_single_patch_is_whole_map():
    x = np.random.default_rng(0).standard_normal((1, 2, 4, 4))
    patches = patchify(x, 4)
    assert patches.shape == (1, 1, 2, 4, 4)
    np.testing.assert_array_equal(patches[0, 0], x[0])


def test_patch_round_trip_is_exact():
    x = np.random.default_rng(1).standard_normal((2, 3, 8, 8))
    np.testing.assert_array_equal(unpatchify(patchify(x, 4), 8, 8), x)


def test_patchify_rejects_non_divisible():
    with pytest.raises(DivisibilityError):
        patchify(np.zeros((1, 1, 6, 6)), 4)


# ────────────────────────────────────────────────────────────────────────────────
# DC / HFC
# ────────────────────────────────────────────────────────────────────────────────

def test_dc_of_identical_patches():
    tile = np.arange(4.0).reshape(2, 2)
    x = np.tile(tile, (2, 2))[None, None]
    np.testing.assert_array_equal(compute_dc(patchify(x, 2))[0, 0], tile)


def test_dc_of_opposite_patches_is_zero():
    v = np.array([[1.0, -2.0], [3.0, 0.5]])
    x = np.concatenate([v, -v], axis=1)[None, None]
    assert np.all(compute_dc(patchify(x, 2)) == 0.0)


def test_dc_matches_loop_average():
    x = np.random.default_rng(2).standard_normal((1, 2, 8, 8))
    dc = compute_dc(patchify(x, 4))
    for ch in range(2):
        blocks = [x[0, ch, i:i + 4, j:j + 4] for i in (0, 4) for j in (0, 4)]
        np.testing.assert_allclose(dc[0, ch], sum(blocks) / 4.0, atol=1e-12)


def test_hfc_identities():
    x = np.random.default_rng(3).standard_normal((1, 2, 8, 8))
    patches = patchify(x, 2)
    dc = compute_dc(patches)
    hfc = compute_hfc(patches, dc)
    assert np.abs(hfc.sum(axis=1)).max() <= 1e-12
    np.testing.assert_allclose(dc[:, None] + hfc, patches, atol=1e-15)

    uniform = np.full((1, 1, 4, 4), 3.0)
    up = patchify(uniform, 2)
    assert np.all(compute_hfc(up, compute_dc(up)) == 0.0)


# ────────────────────────────────────────────────────────────────────────────────
# HFS
# ────────────────────────────────────────────────────────────────────────────────

def test_hfs_zero_lambda_is_identity():
    x = np.random.default_rng(4).standard_normal((2, 3, 8, 8))
    np.testing.assert_array_equal(hfs_apply_array(x, 0.0, 0.0, 4), x)


def test_hfs_equal_lambda_is_uniform_scaling():
    x = np.random.default_rng(5).standard_normal((1, 2, 8, 8))
    np.testing.assert_allclose(hfs_apply_array(x, 0.7, 0.7, 2), 1.7 * x, atol=1e-12)
    np.testing.assert_allclose(hfs_apply_array(x, 1.0, 1.0, 2), 2.0 * x, atol=1e-12)


def test_hfs_matches_loop_reference():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((2, 3, 8, 8))
    ld, lh = rng.uniform(0.5, 1.5, 3), rng.uniform(0.5, 1.5, 3)
    np.testing.assert_allclose(hfs_apply_array(x, ld, lh, 4), _loop_hfs(x, ld, lh, 4), atol=1e-12)

    params = HfsParams(Tensor(ld, requires_grad=True), Tensor(lh, requires_grad=True), patch_size=4)
    np.testing.assert_allclose(hfs_apply(Tensor(x), params).data, _loop_hfs(x, ld, lh, 4), atol=1e-12)


def test_hfs_gradients():
    rng = np.random.default_rng(7)
    with precision("float64"):
        x = Tensor(rng.standard_normal((2, 3, 8, 8)), requires_grad=True)
        params = HfsParams(Tensor(rng.uniform(0.5, 1.5, 3), requires_grad=True),
                           Tensor(rng.uniform(0.5, 1.5, 3), requires_grad=True), patch_size=4)
        target = Tensor(rng.standard_normal((2, 3, 8, 8)))
        err = finite_difference_check(lambda: mse_loss(hfs_apply(x, params), target),
                                      [x, params.lambda_dc, params.lambda_hfc], max_coords=40)
    assert err < 1e-5


# ────────────────────────────────────────────────────────────────────────────────
# Fourier
# ────────────────────────────────────────────────────────────────────────────────

def test_fourier_unit_lambda_is_identity():
    x = np.random.default_rng(8).standard_normal((1, 2, 16, 16))
    with precision("float64"):
        params = FourierScaleParams.create(2, tau=0.25)
        out = fourier_scale(Tensor(x), params).data
    np.testing.assert_allclose(out, x, atol=1e-6)


def test_fourier_removes_high_sinusoid():
    n = 16
    coords = np.arange(n)
    wave = np.sin(2 * np.pi * 6 * coords / n)[None, :] * np.ones((n, 1))
    assert not low_frequency_mask(n, n, 0.25)[0, 6]
    with precision("float64"):
        params = FourierScaleParams.create(1, tau=0.25)
        params.lambda_high.data[:] = 0.0
        out = fourier_scale(Tensor(wave[None, None]), params).data
    assert np.sum(out ** 2) < 1e-8 * np.sum(wave ** 2)


def test_fourier_bands_partition_the_grid():
    x = np.random.default_rng(14).standard_normal((1, 1, 12, 16))
    for tau in (0.1, 0.25, 0.6):
        low = low_frequency_mask(12, 16, tau)
        mirrored = low[(-np.arange(12)) % 12][:, (-np.arange(16)) % 16]
        np.testing.assert_array_equal(low, mirrored)
        parts = []
        with precision("float64"):
            for keep_low in (True, False):
                params = FourierScaleParams.create(1, tau=tau)
                params.lambda_low.data[:] = 1.0 if keep_low else 0.0
                params.lambda_high.data[:] = 0.0 if keep_low else 1.0
                parts.append(fourier_scale(Tensor(x), params).data)
        np.testing.assert_allclose(parts[0] + parts[1], x, atol=1e-12)
        assert np.abs(parts[0]).max() > 0 and np.abs(parts[1]).max() > 0


def test_fourier_gradients():
    rng = np.random.default_rng(9)
    with precision("float64"):
        x = Tensor(rng.standard_normal((1, 2, 8, 8)), requires_grad=True)
        params = FourierScaleParams.create(2, tau=0.25)
        params.lambda_low.data[:] = rng.uniform(0.5, 1.5, 2)
        params.lambda_high.data[:] = rng.uniform(0.5, 1.5, 2)
        target = Tensor(rng.standard_normal((1, 2, 8, 8)))
        err = finite_difference_check(lambda: mse_loss(fourier_scale(x, params), target),
                                      [x, params.lambda_low, params.lambda_high], max_coords=40)
    assert err < 1e-5


def test_fourier_tau_range():
    with pytest.raises(ValidationError):
        FourierScaleParams.create(2, tau=1.0)


# ────────────────────────────────────────────────────────────────────────────────
# λ snapshot
# ────────────────────────────────────────────────────────────────────────────────

def _tiny(**overrides):
    base = dict(in_channels=2, out_channels=1, height=16, width=16, levels=2, base_width=4,
                width_multipliers=[1, 2, 2], scaling_variant="hfs")
    base.update(overrides)
    return ModelConfig(**base)


def test_snapshot_at_initialization():
    rows = lambda_snapshot(build(_tiny(), seed=0))
    assert rows
    assert all(r.mean_lambda_dc == 1.0 and r.mean_lambda_hfc == 1.0 for r in rows)

    rows = lambda_snapshot(build(_tiny(lambda_dc_init=0.85, lambda_hfc_init=1.15), seed=0))
    assert all(r.mean_lambda_dc == pytest.approx(0.85) for r in rows)
    assert all(r.mean_lambda_hfc == pytest.approx(1.15) for r in rows)


def test_snapshot_moves_after_one_step():
    model = build(_tiny(), seed=0)
    rng = np.random.default_rng(10)
    x = Tensor(rng.standard_normal((2, 2, 16, 16)).astype(np.float32))
    y = Tensor(rng.standard_normal((2, 1, 16, 16)).astype(np.float32))
    params = model.parameters()
    state = LionState.create(params, lr=1e-2)
    with Tape():
        loss = mse_loss(model(x), y)
    backward(loss, leaves=params)
    lion_step(params, [p.grad for p in params], state)
    rows = lambda_snapshot(model)
    assert any(r.mean_lambda_dc != 1.0 or r.mean_lambda_hfc != 1.0 for r in rows)
