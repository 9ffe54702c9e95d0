#!/usr/bin/env python3
"""
Test metriche: errori di campo, bordo, maschera, spettri e rapporti latenti.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from core.errors import EmptyMaskError, ZeroEnergyError
from core.fourier import max_shell, radial_shell_index
from core.metrics import (BandSpec, brmse, compute_report, energy_spectrum, f_band_error, hf_energy_ratio,
                          latent_cutoff_schedule, masked_rmse, max_max, max_mean, mean_energy_spectrum,
                          rel_error, rmse, spectrum_band_error)


def _sinusoid(n, kx, ky=0):
    y, x = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return np.cos(2 * np.pi * (kx * x + ky * y) / n)


# ────────────────────────────────────────────────────────────────────────────────
# Errori di campo
# ────────────────────────────────────────────────────────────────────────────────

def test_identical_fields_have_zero_error():
    t = np.random.default_rng(0).standard_normal((2, 3, 8, 8))
    assert rmse(t, t) == rel_error(t, t) == max_mean(t, t) == max_max(t, t) == 0.0


def test_uniform_offset():
    t = np.random.default_rng(1).standard_normal((2, 3, 8, 8))
    assert rmse(t + 0.1, t) == pytest.approx(0.1)
    assert max_max(t + 0.1, t) == pytest.approx(0.1)
    assert brmse(t + 0.1, t) == pytest.approx(0.1)


def test_field_errors_match_loop_reference():
    rng = np.random.default_rng(2)
    p, t = rng.standard_normal((2, 3, 8, 8)), rng.standard_normal((2, 3, 8, 8))
    sq_sum, count, ref_rel, ref_max = 0.0, 0, [], []
    for s in range(2):
        ref_rel.append(np.linalg.norm(p[s] - t[s]) / np.linalg.norm(t[s]))
        ref_max.append(np.abs(p[s] - t[s]).max())
        for k in range(3):
            for i in range(8):
                for j in range(8):
                    sq_sum += (p[s, k, i, j] - t[s, k, i, j]) ** 2
                    count += 1
    assert rmse(p, t) == pytest.approx(np.sqrt(sq_sum / count), abs=1e-12)
    assert rel_error(p, t) == pytest.approx(np.mean(ref_rel), abs=1e-12)
    assert max_mean(p, t) == pytest.approx(np.mean(ref_max), abs=1e-12)


def test_rmse_pools_fields_before_the_root():
    t = np.zeros((2, 1, 4, 4))
    p = t.copy()
    p[0] = 1.0
    p[1] = 3.0
    assert rmse(p, t) == pytest.approx(np.sqrt(5.0))
    assert masked_rmse(p, t, np.ones((4, 4), dtype=bool)) == pytest.approx(rmse(p, t))


def test_field_metrics_ignore_batch_order():
    rng = np.random.default_rng(11)
    p, t = rng.standard_normal((5, 2, 16, 16)), rng.standard_normal((5, 2, 16, 16))
    order = rng.permutation(5)
    original = compute_report(p, t).model_dump()
    permuted = compute_report(p[order], t[order]).model_dump()
    for key, value in original.items():
        if value is None:
            assert permuted[key] is None
        else:
            assert permuted[key] == pytest.approx(value, rel=1e-12, abs=1e-12)


def test_brmse_ignores_interior():
    t = np.zeros((8, 8))
    p = t.copy()
    p[2:6, 2:6] = 3.0
    assert brmse(p, t) == 0.0


def test_brmse_matches_edge_loop():
    rng = np.random.default_rng(3)
    p, t = rng.standard_normal((6, 7)), rng.standard_normal((6, 7))
    edge = [(i, j) for i in range(6) for j in range(7) if i in (0, 5) or j in (0, 6)]
    assert len(edge) == 2 * 6 + 2 * 7 - 4
    expected = np.sqrt(np.mean([(p[i, j] - t[i, j]) ** 2 for i, j in edge]))
    assert brmse(p, t) == pytest.approx(expected, abs=1e-12)


def test_masked_rmse_cases():
    rng = np.random.default_rng(4)
    p, t = rng.standard_normal((8, 8)), rng.standard_normal((8, 8))
    assert masked_rmse(p, t, np.ones((8, 8), dtype=bool)) == pytest.approx(rmse(p, t))
    single = np.zeros((8, 8), dtype=bool)
    single[3, 4] = True
    assert masked_rmse(p, t, single) == pytest.approx(abs(p[3, 4] - t[3, 4]))
    with pytest.raises(EmptyMaskError):
        masked_rmse(p, t, np.zeros((8, 8), dtype=bool))


# ────────────────────────────────────────────────────────────────────────────────
# Spettri
# ────────────────────────────────────────────────────────────────────────────────

def test_constant_field_energy_in_shell_zero():
    spectrum = energy_spectrum(np.full((16, 16), 2.0))
    assert spectrum[0] > 0
    assert spectrum[1:].sum() < 1e-20 * spectrum[0]


def test_sinusoid_energy_in_its_shell():
    spectrum = energy_spectrum(_sinusoid(32, 5))
    assert spectrum[5] >= 0.999 * spectrum[1:].sum()


def test_parseval():
    f = np.random.default_rng(5).standard_normal((16, 20))
    assert energy_spectrum(f).sum() == pytest.approx(np.sum(f ** 2), abs=1e-10)


def test_mean_spectrum_shape():
    fields = np.random.default_rng(6).standard_normal((3, 2, 16, 16))
    assert mean_energy_spectrum(fields).shape == (max_shell(16, 16) + 1,)


def test_band_limits_at_64():
    assert BandSpec().shell_limits(64, 64) == (1, 3)


def test_low_band_perturbation_stays_in_low_band():
    t = np.random.default_rng(7).standard_normal((64, 64))
    f_low, f_mid, f_high = f_band_error(t + 0.3, t, BandSpec())
    assert f_low > 0
    assert f_mid == pytest.approx(0.0, abs=1e-9)
    assert f_high == pytest.approx(0.0, abs=1e-9)


def test_band_error_matches_dft_loop():
    rng = np.random.default_rng(8)
    p, t = rng.standard_normal((8, 8)), rng.standard_normal((8, 8))
    n = 8
    idx = np.arange(n)
    basis = np.exp(-2j * np.pi * np.outer(idx, idx) / n)
    fp, ft = basis @ p @ basis.T, basis @ t @ basis.T
    low, mid, high = BandSpec().masks(n, n)
    diff = np.abs(ft - fp) ** 2
    expected = [np.sqrt(diff[m].mean()) for m in (low, mid, high)]
    np.testing.assert_allclose(f_band_error(p, t, BandSpec()), expected, atol=1e-10)


def test_band_errors_recombine_to_full_grid_rmse():
    rng = np.random.default_rng(12)
    p, t = rng.standard_normal((16, 16)), rng.standard_normal((16, 16))
    bands = BandSpec()
    sizes = [int(mask.sum()) for mask in bands.masks(16, 16)]
    assert sum(sizes) == 16 * 16
    errors = f_band_error(p, t, bands)
    recombined = np.sqrt(sum(n * e ** 2 for n, e in zip(sizes, errors)) / (16 * 16))
    full_grid = np.sqrt(np.mean(np.abs(np.fft.fft2(t) - np.fft.fft2(p)) ** 2))
    assert recombined == pytest.approx(full_grid, rel=1e-10)


def test_energy_spectrum_ignores_cyclic_shifts():
    field = np.random.default_rng(13).standard_normal((16, 16))
    reference = energy_spectrum(field)
    scale = reference.sum()
    for dy, dx in ((1, 0), (0, 5), (7, 3), (15, 15)):
        shifted = np.roll(field, (dy, dx), axis=(0, 1))
        np.testing.assert_allclose(energy_spectrum(shifted), reference, atol=1e-10 * scale)


def test_spectrum_error_is_phase_blind():
    t = _sinusoid(32, 3, 2) + 0.5 * _sinusoid(32, 7)
    shifted = np.roll(t, 5, axis=1)
    values = spectrum_band_error(shifted, t, BandSpec())
    scale = np.sum(t ** 2) ** 2
    assert all(v <= 1e-10 * scale for v in values)
    assert rmse(shifted, t) > 0


def test_hf_ratio_cases():
    assert hf_energy_ratio(np.full((16, 16), 4.0), 0.25) == 0.0
    assert hf_energy_ratio(_sinusoid(16, 6), 0.25) == pytest.approx(1.0)
    with pytest.raises(ZeroEnergyError):
        hf_energy_ratio(np.zeros((8, 8)), 0.25)


def test_hf_ratio_on_white_noise():
    n, cutoff = 32, 0.25
    shells = radial_shell_index(n, n)
    threshold = int(round(cutoff * max_shell(n, n)))
    expected = np.sum(shells > threshold) / np.sum(shells > 0)
    rng = np.random.default_rng(9)
    ratios = [hf_energy_ratio(rng.standard_normal((n, n)), cutoff) for _ in range(100)]
    assert np.mean(ratios) == pytest.approx(expected, rel=0.05)


def test_latent_cutoff_schedule():
    assert latent_cutoff_schedule(5) == [0.125, 0.1875, 0.25, 0.375, 0.5]
    three = latent_cutoff_schedule(3)
    assert three[0] == pytest.approx(0.125) and three[-1] == pytest.approx(0.5)


def test_report_with_mask():
    rng = np.random.default_rng(10)
    p, t = rng.standard_normal((1, 2, 16, 16)), rng.standard_normal((1, 2, 16, 16))
    mask = np.zeros((1, 2, 16, 16), dtype=bool)
    mask[..., 4:8, 4:8] = True
    report = compute_report(p, t, mask=mask)
    assert report.bubble_rmse is not None and report.bubble_rmse > 0
    assert compute_report(p, t).bubble_rmse is None
    row = report.as_row()
    assert set(["rel_error", "rel_E_F_high", "E_F_total"]) <= set(row)
    assert "rel_error" in report.format_table()
