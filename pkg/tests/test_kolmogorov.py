#!/usr/bin/env python3
"""
Test solver pseudo-spettrale: GRF, inversione vorticità-velocità, decadimento
Taylor–Green, ordine temporale, dealiasing, forzante e traiettorie.
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from core.errors import CFLViolationError, ValidationError
from core.fourier import radial_accumulate
from core.kolmogorov import (SolverConfig, enstrophy, forcing_field, generate_trajectories, grf_sample,
                             integrate, kinetic_energy, solve, solve_config, spectral_grid, state_from_field,
                             step, to_physical, vorticity_to_velocity)


def _grid(n, length):
    x = np.arange(n) * (length / n)
    return np.meshgrid(x, x, indexing="xy")


def _small_config(**overrides):
    values = dict(grid=32, viscosity=1e-2, t_final=1.0, record_interval=0.5, dt=0.01, n_trajectories=2)
    values.update(overrides)
    return SolverConfig(**values)


# ────────────────────────────────────────────────────────────────────────────────
# Campo iniziale
# ────────────────────────────────────────────────────────────────────────────────

def test_grf_zero_mean_and_reproducible():
    a = grf_sample(32, seed=5)
    assert abs(a.mean()) < 1e-10
    np.testing.assert_array_equal(a, grf_sample(32, seed=5))
    assert not np.array_equal(a, grf_sample(32, seed=6))


def test_grf_rejects_tiny_grid():
    with pytest.raises(ValidationError):
        grf_sample(8, seed=0)


def test_grf_ensemble_spectrum_shape():
    n = 32
    k2 = spectral_grid(n, 1.0).k2
    expected = radial_accumulate((k2 + 196.0) ** -3.0)
    measured = np.zeros_like(expected)
    for seed in range(500):
        measured += radial_accumulate(np.abs(np.fft.fft2(grf_sample(n, seed))) ** 2)
    ratio = measured[1:11] / expected[1:11]
    ratio /= ratio.mean()
    assert np.all(np.abs(ratio - 1.0) < 0.10)


# ────────────────────────────────────────────────────────────────────────────────
# Velocità
# ────────────────────────────────────────────────────────────────────────────────

def test_velocity_of_single_shear_mode():
    n, length = 32, 2 * math.pi
    x, y = _grid(n, length)
    ux_hat, uy_hat = vorticity_to_velocity(np.fft.fft2(np.sin(y)), length)
    np.testing.assert_allclose(np.fft.ifft2(ux_hat).real, np.cos(y), atol=1e-12)
    np.testing.assert_allclose(np.fft.ifft2(uy_hat).real, 0.0, atol=1e-12)


def test_velocity_of_taylor_green():
    n, length = 32, 2 * math.pi
    x, y = _grid(n, length)
    omega = 2 * np.cos(x) * np.cos(y)
    ux_hat, uy_hat = vorticity_to_velocity(np.fft.fft2(omega), length)
    # ψ = cos x cos y, u = (∂y ψ, −∂x ψ)
    np.testing.assert_allclose(np.fft.ifft2(ux_hat).real, -np.cos(x) * np.sin(y), atol=1e-12)
    np.testing.assert_allclose(np.fft.ifft2(uy_hat).real, np.sin(x) * np.cos(y), atol=1e-12)


def test_velocity_is_divergence_free():
    rng = np.random.default_rng(0)
    omega_hat = np.fft.fft2(rng.standard_normal((16, 16)))
    ux_hat, uy_hat = vorticity_to_velocity(omega_hat)
    grid = spectral_grid(16, 1.0)
    assert np.abs(grid.kx * ux_hat + grid.ky * uy_hat).max() < 1e-12 * np.abs(omega_hat).max()


# ────────────────────────────────────────────────────────────────────────────────
# Dinamica
# ────────────────────────────────────────────────────────────────────────────────

def test_taylor_green_decay():
    n, length, nu = 64, 2 * math.pi, 1e-2
    x, y = _grid(n, length)
    omega0 = 2 * np.cos(x) * np.cos(y)
    state = integrate(state_from_field(omega0, nu, 0.0, domain="2pi"), 0.01, 100)
    expected = omega0 * math.exp(-nu * 2.0 * state.t)
    assert state.t == pytest.approx(1.0)
    assert np.abs(to_physical(state.omega_hat) - expected).max() < 1e-6 * np.abs(expected).max()


def test_time_stepping_is_second_order():
    n, nu, t_end = 32, 1e-2, 1.0
    x, y = _grid(n, 1.0)
    omega0 = 2 * np.cos(2 * np.pi * x) * np.cos(2 * np.pi * y)
    exact = omega0 * math.exp(-nu * 2 * (2 * np.pi) ** 2 * t_end)
    errors = []
    for dt in (0.02, 0.01):
        state = integrate(state_from_field(omega0, nu), dt, int(round(t_end / dt)))
        errors.append(np.abs(to_physical(state.omega_hat) - exact).max())
    assert 3.0 <= errors[0] / errors[1] <= 5.0


def test_unforced_energy_does_not_grow():
    state = state_from_field(grf_sample(32, seed=1, scale=100.0), viscosity=1e-2)
    energies = [kinetic_energy(state)]
    for _ in range(20):
        state = step(state, 0.01)
        energies.append(kinetic_energy(state))
    assert all(b <= a * (1 + 1e-12) for a, b in zip(energies, energies[1:]))


def test_single_high_mode_creates_no_spurious_energy():
    n = 32
    m = int(round(0.9 * n / 2))
    x, _ = _grid(n, 1.0)
    state = step(state_from_field(np.cos(2 * np.pi * m * x), 1e-3), 0.001)
    power = np.abs(state.omega_hat) ** 2
    own = power[0, m] + power[0, n - m]
    assert power.sum() - own < 1e-20 * own


def test_cfl_violation_and_bad_dt():
    state = state_from_field(grf_sample(32, seed=2, scale=400.0), viscosity=1e-3)
    with pytest.raises(CFLViolationError):
        step(state, 10.0)
    with pytest.raises(ValidationError):
        step(state, 0.0)


def test_unforced_enstrophy_decays():
    record = solve_config(_small_config(forcing_amplitude=0.0, ic_scale=100.0), seed=3)
    initial = state_from_field(grf_sample(32, seed=3, scale=100.0), 1e-2)
    assert np.mean(record.snapshots[-1] ** 2) < enstrophy(initial)


# ────────────────────────────────────────────────────────────────────────────────
# Forzante
# ────────────────────────────────────────────────────────────────────────────────

def test_forcing_properties():
    chi, n = 0.1, 64
    f = forcing_field(n, chi)
    assert abs(f.mean()) < 1e-12
    assert f.max() == pytest.approx(chi * math.sqrt(2.0), abs=1e-12)
    power = np.abs(np.fft.fft2(f)) ** 2
    assert power[1, 1] + power[n - 1, n - 1] >= (1 - 1e-12) * power.sum()


# ────────────────────────────────────────────────────────────────────────────────
# Traiettorie
# ────────────────────────────────────────────────────────────────────────────────

def test_desk_defaults_give_twenty_five_records():
    config = SolverConfig()
    assert config.n_records == 25
    assert config.steps_per_record == 50


def test_config_rejects_non_integer_ratios():
    with pytest.raises(Exception):
        SolverConfig(record_interval=0.5, dt=0.03)


def test_trajectory_is_deterministic():
    config = _small_config()
    a, b = solve_config(config, 4), solve_config(config, 4)
    assert a.snapshots.shape == (2, 32, 32)
    np.testing.assert_array_equal(a.snapshots, b.snapshots)
    np.testing.assert_allclose(a.times, [0.5, 1.0])
    assert a.metadata["seed"] == 4


def test_generate_preserves_seed_order():
    config = _small_config()
    records = generate_trajectories(config, [3, 1], workers=1)
    np.testing.assert_array_equal(records[0].snapshots, solve_config(config, 3).snapshots)
    np.testing.assert_array_equal(records[1].snapshots, solve_config(config, 1).snapshots)


@pytest.mark.slow
def test_desk_trajectory_is_stable():
    record = solve(seed=0)
    assert record.snapshots.shape == (25, 64, 64)
    assert np.all(np.isfinite(record.snapshots))
