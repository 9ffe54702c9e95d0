"""
Pseudo-spectral solver for 2D incompressible Navier–Stokes in vorticity form
on a periodic square, driven by a diagonal Kolmogorov-type forcing.

    ∂t ω + u·∇ω = ν Δω + f,   ∇·u = 0,   ω = ∂x u_y − ∂y u_x

Time stepping: Crank–Nicolson on diffusion, Heun predictor–corrector on the
advection and forcing terms, 2/3-rule dealiasing on the quadratic product.
Arrays are indexed [y, x].
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

from core.errors import BlowUpError, CFLViolationError, ValidationError
from utils.config import CFL_SAFETY, NUM_WORKERS
from utils.logging_config import debug, info, log_operation


__all__ = [
    "SolverConfig",
    "SpectralState",
    "SpectralGrid",
    "TrajectoryRecord",
    "spectral_grid",
    "grf_sample",
    "forcing_field",
    "vorticity_to_velocity",
    "initial_state",
    "step",
    "integrate",
    "state_from_field",
    "solve_config",
    "solve",
    "generate_trajectories",
    "kinetic_energy",
    "enstrophy",
    "imaginary_residue",
    "to_physical",
]

Domain = Literal["unit", "2pi"]

_GRF_SIGMA = math.sqrt(14.0)
_GRF_TAU2 = 196.0


def domain_length(domain: str) -> float:
    if domain == "unit":
        return 1.0
    if domain == "2pi":
        return 2.0 * math.pi
    raise ValidationError(f"dominio sconosciuto: {domain}", domain=domain)


# ────────────────────────────────────────────────────────────────────────────────
# Config
# ────────────────────────────────────────────────────────────────────────────────

class SolverConfig(BaseModel):
    """Parametri di generazione traiettorie (default desk-scale)."""

    grid: int = Field(64, ge=16)
    viscosity: float = Field(1e-3, gt=0)
    forcing_amplitude: float = Field(0.1, ge=0)
    t_final: float = Field(12.5, gt=0)
    record_interval: float = Field(0.5, gt=0)
    dt: float = Field(0.01, gt=0)
    domain: Domain = "unit"
    ic_scale: float = Field(400.0, gt=0)
    cfl_safety: float = Field(CFL_SAFETY, gt=0)
    n_trajectories: int = Field(10, gt=0)
    seed: int = Field(0, ge=0)
    workers: int = Field(NUM_WORKERS, ge=1)

    @model_validator(mode="after")
    def _check_times(self):
        _ratio_as_int(self.record_interval, self.dt, "record_interval/dt")
        _ratio_as_int(self.t_final, self.record_interval, "t_final/record_interval")
        return self

    @property
    def steps_per_record(self) -> int:
        return _ratio_as_int(self.record_interval, self.dt, "record_interval/dt")

    @property
    def n_records(self) -> int:
        return _ratio_as_int(self.t_final, self.record_interval, "t_final/record_interval")


def _ratio_as_int(numerator: float, denominator: float, label: str) -> int:
    ratio = numerator / denominator
    count = int(round(ratio))
    if count < 1 or abs(ratio - count) > 1e-9 * max(1.0, ratio):
        raise ValueError(f"{label} = {ratio} non è un intero positivo")
    return count


# ────────────────────────────────────────────────────────────────────────────────
# Griglia spettrale
# ────────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class SpectralGrid:
    n: int
    length: float
    kx: np.ndarray
    ky: np.ndarray
    k2: np.ndarray
    k2_inv: np.ndarray
    dealias: np.ndarray

    @property
    def dx(self) -> float:
        return self.length / self.n


@lru_cache(maxsize=16)
def spectral_grid(n: int, length: float = 1.0) -> SpectralGrid:
    """Numeri d'onda fisici 2π/L·m, maschera 2/3 per asse."""
    m = np.fft.fftfreq(n, d=1.0 / n)
    my, mx = np.meshgrid(m, m, indexing="ij")
    factor = 2.0 * math.pi / length
    kx, ky = factor * mx, factor * my
    k2 = kx ** 2 + ky ** 2
    k2_inv = np.zeros_like(k2)
    k2_inv[k2 > 0] = 1.0 / k2[k2 > 0]
    cutoff = n / 3.0
    dealias = (np.abs(mx) < cutoff) & (np.abs(my) < cutoff)
    for arr in (kx, ky, k2, k2_inv, dealias):
        arr.setflags(write=False)
    return SpectralGrid(n=n, length=length, kx=kx, ky=ky, k2=k2, k2_inv=k2_inv, dealias=dealias)


def _coordinates(n: int, length: float) -> Tuple[np.ndarray, np.ndarray]:
    x = np.arange(n) * (length / n)
    return np.meshgrid(x, x, indexing="xy")  # X varia lungo l'asse 1


# ────────────────────────────────────────────────────────────────────────────────
# Stato
# ────────────────────────────────────────────────────────────────────────────────

@dataclass
class SpectralState:
    omega_hat: np.ndarray
    t: float
    grid: int
    length: float
    viscosity: float
    forcing_amplitude: float
    domain: str = "unit"

    def copy(self) -> "SpectralState":
        return replace(self, omega_hat=self.omega_hat.copy())


@dataclass
class TrajectoryRecord:
    snapshots: np.ndarray                     # (T, N, N), float64
    record_interval: float
    times: np.ndarray
    metadata: Dict[str, object] = field(default_factory=dict)

    def __len__(self) -> int:
        return self.snapshots.shape[0]


def to_physical(omega_hat: np.ndarray) -> np.ndarray:
    return np.fft.ifft2(omega_hat).real


def imaginary_residue(omega_hat: np.ndarray) -> float:
    """Residuo immaginario della trasformata inversa, relativo all'ampiezza."""
    field_ = np.fft.ifft2(omega_hat)
    scale = max(1.0, float(np.abs(field_.real).max()))
    return float(np.abs(field_.imag).max()) / scale


# ────────────────────────────────────────────────────────────────────────────────
# Condizione iniziale e forzante
# ────────────────────────────────────────────────────────────────────────────────

def grf_sample(n: int, seed: int, length: float = 1.0, scale: float = 1.0) -> np.ndarray:
    """
    Campo gaussiano a media nulla: ogni modo è un gaussiano complesso con
    ampiezza √14·(|k|²+196)^(−1.5), simmetrizzato coniugato.
    """
    if n < 16:
        raise ValidationError(f"griglia {n} troppo piccola (minimo 16)", grid=n)
    grid = spectral_grid(n, length)
    rng = np.random.default_rng(seed)
    amplitude = _GRF_SIGMA * (grid.k2 + _GRF_TAU2) ** -1.5
    xi = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(2.0)
    coeff = amplitude * xi
    mirrored = np.conj(np.roll(np.flip(coeff, axis=(0, 1)), 1, axis=(0, 1)))  # c(−k)*
    coeff = 0.5 * (coeff + mirrored)
    coeff[0, 0] = 0.0
    return np.fft.ifft2(coeff * (n * n)).real * scale


def forcing_field(n: int, amplitude: float = 0.1, domain: str = "unit") -> np.ndarray:
    """χ(sin(2π(x+y)) + cos(2π(x+y))) sul dominio unitario, χ(sin(x+y)+cos(x+y)) su (0,2π)²."""
    length = domain_length(domain)
    x, y = _coordinates(n, length)
    phase = 2.0 * math.pi * (x + y) / length
    return amplitude * (np.sin(phase) + np.cos(phase))


@lru_cache(maxsize=16)
def _forcing_hat(n: int, amplitude: float, domain: str) -> np.ndarray:
    f_hat = np.fft.fft2(forcing_field(n, amplitude, domain))
    f_hat[0, 0] = 0.0
    f_hat.setflags(write=False)
    return f_hat


def vorticity_to_velocity(omega_hat: np.ndarray, length: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    """ψ̂ = ω̂/|k|², û = (i k_y ψ̂, −i k_x ψ̂)."""
    grid = spectral_grid(omega_hat.shape[0], length)
    psi_hat = omega_hat * grid.k2_inv
    return 1j * grid.ky * psi_hat, -1j * grid.kx * psi_hat


def initial_state(config: SolverConfig, seed: int) -> SpectralState:
    length = domain_length(config.domain)
    omega0 = grf_sample(config.grid, seed, length, config.ic_scale)
    return state_from_field(omega0, config.viscosity, config.forcing_amplitude, config.domain)


def state_from_field(omega: np.ndarray, viscosity: float, forcing_amplitude: float = 0.0,
                     domain: str = "unit", t: float = 0.0) -> SpectralState:
    n = omega.shape[0]
    if omega.shape != (n, n):
        raise ValidationError("la vorticità deve essere un campo quadrato", shape=omega.shape)
    omega_hat = np.fft.fft2(omega)
    omega_hat[0, 0] = 0.0
    return SpectralState(omega_hat=omega_hat, t=t, grid=n, length=domain_length(domain),
                         viscosity=viscosity, forcing_amplitude=forcing_amplitude, domain=domain)


# ────────────────────────────────────────────────────────────────────────────────
# Dinamica
# ────────────────────────────────────────────────────────────────────────────────

def _rhs(omega_hat: np.ndarray, grid: SpectralGrid, forcing_hat: Optional[np.ndarray]) -> np.ndarray:
    """−FFT(u·∇ω) dealiasato + forzante."""
    w = omega_hat * grid.dealias
    ux_hat, uy_hat = vorticity_to_velocity(w, grid.length)
    ux = np.fft.ifft2(ux_hat).real
    uy = np.fft.ifft2(uy_hat).real
    wx = np.fft.ifft2(1j * grid.kx * w).real
    wy = np.fft.ifft2(1j * grid.ky * w).real
    advection = np.fft.fft2(ux * wx + uy * wy) * grid.dealias
    if forcing_hat is None:
        return -advection
    return forcing_hat - advection


def cfl_number(state: SpectralState, dt: float) -> float:
    ux_hat, uy_hat = vorticity_to_velocity(state.omega_hat, state.length)
    speed = max(float(np.abs(np.fft.ifft2(ux_hat).real).max()),
                float(np.abs(np.fft.ifft2(uy_hat).real).max()))
    return speed * dt / (state.length / state.grid)


def step(state: SpectralState, dt: float, cfl_safety: float = CFL_SAFETY) -> SpectralState:
    """Un passo semi-implicito; rifiuta dt che violano il CFL."""
    if dt <= 0:
        raise ValidationError(f"dt deve essere positivo, ricevuto {dt}", dt=dt)
    cfl = cfl_number(state, dt)
    if cfl > cfl_safety:
        raise CFLViolationError(f"CFL {cfl:.3f} oltre il limite {cfl_safety}", cfl=cfl, dt=dt, t=state.t)

    grid = spectral_grid(state.grid, state.length)
    forcing_hat = (_forcing_hat(state.grid, state.forcing_amplitude, state.domain)
                   if state.forcing_amplitude else None)
    half_diffusion = 0.5 * dt * state.viscosity * grid.k2
    explicit = (1.0 - half_diffusion) * state.omega_hat
    implicit = 1.0 + half_diffusion

    n0 = _rhs(state.omega_hat, grid, forcing_hat)
    predictor = (explicit + dt * n0) / implicit
    n1 = _rhs(predictor, grid, forcing_hat)
    omega_hat = (explicit + 0.5 * dt * (n0 + n1)) / implicit
    omega_hat[0, 0] = 0.0

    if not np.all(np.isfinite(omega_hat)):
        raise BlowUpError(f"vorticità non finita a t={state.t + dt:.4f}", t=state.t + dt)
    return replace(state, omega_hat=omega_hat, t=state.t + dt)


def kinetic_energy(state: SpectralState) -> float:
    """Σ|ω̂|²/|k|² (modo nullo escluso)."""
    grid = spectral_grid(state.grid, state.length)
    return float(np.sum(np.abs(state.omega_hat) ** 2 * grid.k2_inv))


def enstrophy(state: SpectralState) -> float:
    return float(np.mean(to_physical(state.omega_hat) ** 2))


# ────────────────────────────────────────────────────────────────────────────────
# Traiettorie
# ────────────────────────────────────────────────────────────────────────────────

def integrate(state: SpectralState, dt: float, n_steps: int, cfl_safety: float = CFL_SAFETY) -> SpectralState:
    for _ in range(n_steps):
        state = step(state, dt, cfl_safety)
    return state


def solve(seed: int, grid: int = 64, viscosity: float = 1e-3, forcing_amplitude: float = 0.1,
          t_final: float = 12.5, record_interval: float = 0.5, dt: float = 0.01,
          domain: str = "unit", ic_scale: float = 400.0, cfl_safety: float = CFL_SAFETY) -> TrajectoryRecord:
    """Integra dal campione GRF del seed registrando ogni record_interval fino a t_final."""
    config = SolverConfig(grid=grid, viscosity=viscosity, forcing_amplitude=forcing_amplitude,
                          t_final=t_final, record_interval=record_interval, dt=dt, domain=domain,
                          ic_scale=ic_scale, cfl_safety=cfl_safety)
    return solve_config(config, seed)


def solve_config(config: SolverConfig, seed: int) -> TrajectoryRecord:
    state = initial_state(config, seed)
    per_record = config.steps_per_record
    snapshots = np.empty((config.n_records, config.grid, config.grid), dtype=np.float64)

    with log_operation("solve", seed=seed, grid=config.grid, viscosity=config.viscosity):
        for record in range(config.n_records):
            try:
                state = integrate(state, config.dt, per_record, config.cfl_safety)
            except BlowUpError as exc:
                raise BlowUpError(f"traiettoria seed={seed} esplosa: {exc.message}", seed=seed,
                                  record=record, **exc.context) from exc
            snapshots[record] = to_physical(state.omega_hat)
            debug("record_saved", seed=seed, t=round(state.t, 6))

    if not np.all(np.isfinite(snapshots)):
        raise BlowUpError(f"snapshot non finiti nella traiettoria seed={seed}", seed=seed)

    times = config.record_interval * np.arange(1, config.n_records + 1)
    info("trajectory_completed", seed=seed, steps=config.n_records * per_record,
         max_abs_vorticity=float(np.abs(snapshots).max()))
    metadata = {
        "seed": seed,
        "grid": config.grid,
        "viscosity": config.viscosity,
        "forcing_amplitude": config.forcing_amplitude,
        "domain": config.domain,
        "dt": config.dt,
        "ic_scale": config.ic_scale,
    }
    return TrajectoryRecord(snapshots=snapshots, record_interval=config.record_interval, times=times,
                            metadata=metadata)


def _solve_worker(args: Tuple[dict, int]) -> TrajectoryRecord:
    config_dict, seed = args
    return solve_config(SolverConfig(**config_dict), seed)


def generate_trajectories(config: SolverConfig, seeds: Sequence[int],
                          workers: Optional[int] = None) -> List[TrajectoryRecord]:
    """Una traiettoria per seed; parallelo su processi se workers > 1, ordine dei seed preservato."""
    workers = workers or config.workers
    seeds = list(seeds)
    if workers <= 1 or len(seeds) <= 1:
        return [solve_config(config, seed) for seed in seeds]
    payload = [(config.model_dump(), seed) for seed in seeds]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_solve_worker, payload))
