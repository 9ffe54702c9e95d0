"""
High-frequency scaling of convolutional feature maps.

Patch decomposition: the DC is the mean patch over all non-overlapping
patches of a map, each patch's HFC is the patch minus the DC, and the scaled
patch is X + λ_DC·DC + λ_HFC·HFC with per-channel λ. A Fourier-domain
variant scales low/high radial bands directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, List, NamedTuple, Union

import numpy as np

from core.errors import DivisibilityError, FourierResidueError, ShapeError, ValidationError
from core.fourier import fft2, ifft2, max_shell, radial_shell_index
from core.tensor import Tensor, get_default_dtype, record_op
from utils.config import FOURIER_RESIDUE_TOL, FOURIER_TAU, LAMBDA_INIT

if TYPE_CHECKING:  # pragma: no cover
    from core.resunet import ResUNet


__all__ = [
    "HfsParams",
    "FourierScaleParams",
    "LambdaRecord",
    "patchify",
    "unpatchify",
    "compute_dc",
    "compute_hfc",
    "hfs_apply",
    "hfs_apply_array",
    "low_frequency_mask",
    "fourier_scale",
    "lambda_snapshot",
]


# ────────────────────────────────────────────────────────────────────────────────
# Parametri
# ────────────────────────────────────────────────────────────────────────────────

@dataclass
class HfsParams:
    lambda_dc: Tensor
    lambda_hfc: Tensor
    patch_size: int

    def __post_init__(self):
        if self.patch_size <= 0:
            raise ValidationError("patch_size deve essere positivo", patch_size=self.patch_size)
        if self.lambda_dc.shape != self.lambda_hfc.shape or self.lambda_dc.ndim != 1:
            raise ShapeError("λ_DC e λ_HFC devono essere vettori della stessa lunghezza")

    @classmethod
    def create(cls, channels: int, patch_size: int, init_dc: float = LAMBDA_INIT,
               init_hfc: float = LAMBDA_INIT, name: str = "hfs") -> "HfsParams":
        dtype = get_default_dtype()
        return cls(
            lambda_dc=Tensor(np.full(channels, init_dc, dtype=dtype), requires_grad=True, name=f"{name}.lambda_dc"),
            lambda_hfc=Tensor(np.full(channels, init_hfc, dtype=dtype), requires_grad=True, name=f"{name}.lambda_hfc"),
            patch_size=patch_size,
        )

    @property
    def channels(self) -> int:
        return self.lambda_dc.shape[0]


@dataclass
class FourierScaleParams:
    lambda_low: Tensor
    lambda_high: Tensor
    tau: float

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValidationError(f"τ deve stare in (0,1), ricevuto {self.tau}", tau=self.tau)
        if self.lambda_low.shape != self.lambda_high.shape or self.lambda_low.ndim != 1:
            raise ShapeError("λ_low e λ_high devono essere vettori della stessa lunghezza")

    @classmethod
    def create(cls, channels: int, tau: float = FOURIER_TAU, init: float = 1.0,
               name: str = "fourier") -> "FourierScaleParams":
        dtype = get_default_dtype()
        return cls(
            lambda_low=Tensor(np.full(channels, init, dtype=dtype), requires_grad=True, name=f"{name}.lambda_low"),
            lambda_high=Tensor(np.full(channels, init, dtype=dtype), requires_grad=True, name=f"{name}.lambda_high"),
            tau=tau,
        )


# ────────────────────────────────────────────────────────────────────────────────
# Patch decomposition
# ────────────────────────────────────────────────────────────────────────────────

def _check_divisible(h: int, w: int, p: int) -> None:
    if p <= 0 or h % p or w % p:
        raise DivisibilityError(f"patch {p} non divide la mappa {h}×{w}", height=h, width=w, patch_size=p)


def patchify(x: np.ndarray, p: int) -> np.ndarray:
    """(n, c, h, w) → (n, N, c, p, p), patch in ordine row-major."""
    n, c, h, w = x.shape
    _check_divisible(h, w, p)
    patches = x.reshape(n, c, h // p, p, w // p, p).transpose(0, 2, 4, 1, 3, 5)
    return np.ascontiguousarray(patches).reshape(n, (h // p) * (w // p), c, p, p)


def unpatchify(patches: np.ndarray, height: int, width: int) -> np.ndarray:
    """Inversa di patchify."""
    n, count, c, p, _ = patches.shape
    rows, cols = height // p, width // p
    if rows * cols != count or rows * p != height or cols * p != width:
        raise ShapeError(f"{count} patch {p}×{p} non ricompongono {height}×{width}")
    grid = patches.reshape(n, rows, cols, c, p, p).transpose(0, 3, 1, 4, 2, 5)
    return np.ascontiguousarray(grid).reshape(n, c, height, width)


def compute_dc(patches: np.ndarray) -> np.ndarray:
    """Patch media (n, c, p, p)."""
    return patches.mean(axis=1)


def compute_hfc(patches: np.ndarray, dc: np.ndarray) -> np.ndarray:
    return patches - dc[:, None]


def _as_channel_vector(lam: Union[float, np.ndarray], channels: int) -> np.ndarray:
    lam = np.asarray(lam, dtype=np.float64)
    if lam.ndim == 0:
        return np.full(channels, float(lam))
    if lam.shape != (channels,):
        raise ShapeError(f"λ di lunghezza {lam.shape[0]} per {channels} canali")
    return lam


def hfs_apply_array(x: np.ndarray, lambda_dc, lambda_hfc, patch_size: int) -> np.ndarray:
    """Kernel numpy senza tape; λ scalari o per canale."""
    n, c, h, w = x.shape
    patches = patchify(x, patch_size)
    dc = compute_dc(patches)
    hfc = compute_hfc(patches, dc)
    ld = _as_channel_vector(lambda_dc, c).astype(x.dtype)[None, None, :, None, None]
    lh = _as_channel_vector(lambda_hfc, c).astype(x.dtype)[None, None, :, None, None]
    scaled = patches + ld * dc[:, None] + lh * hfc
    return unpatchify(scaled, h, w)


def hfs_apply(x: Tensor, params: HfsParams) -> Tensor:
    if x.ndim != 4:
        raise ShapeError("hfs_apply: atteso tensore (n, c, h, w)", shape=x.shape)
    n, c, h, w = x.shape
    if params.channels != c:
        raise ShapeError(f"hfs_apply: λ per {params.channels} canali, mappa con {c}")
    p = params.patch_size
    patches = patchify(x.data, p)
    count = patches.shape[1]
    dc = compute_dc(patches)
    hfc = compute_hfc(patches, dc)
    ld = params.lambda_dc.data[None, None, :, None, None]
    lh = params.lambda_hfc.data[None, None, :, None, None]
    out = unpatchify(patches + ld * dc[:, None] + lh * hfc, h, w)

    def backward_fn(grad: np.ndarray):
        g = patchify(grad, p)
        grad_ld = (g * dc[:, None]).sum(axis=(0, 1, 3, 4))
        grad_lh = (g * hfc).sum(axis=(0, 1, 3, 4))
        # out_i = (1+λ_HFC)·P_i + (λ_DC−λ_HFC)·DC
        g_patches = (1.0 + lh) * g + (ld - lh) * g.sum(axis=1, keepdims=True) / count
        return unpatchify(g_patches, h, w), grad_ld, grad_lh

    return record_op("hfs_apply", (x, params.lambda_dc, params.lambda_hfc), out, backward_fn)


# ────────────────────────────────────────────────────────────────────────────────
# Fourier-domain scaling
# ────────────────────────────────────────────────────────────────────────────────

def low_frequency_mask(h: int, w: int, tau: float) -> np.ndarray:
    """Bin "low" sse shell ≤ round(τ·k_max); il complemento è "high"."""
    shells = radial_shell_index(h, w)
    return shells <= int(round(tau * max_shell(h, w)))


def fourier_scale(x: Tensor, params: FourierScaleParams) -> Tensor:
    if x.ndim != 4:
        raise ShapeError("fourier_scale: atteso tensore (n, c, h, w)", shape=x.shape)
    n, c, h, w = x.shape
    if params.lambda_low.shape != (c,):
        raise ShapeError(f"fourier_scale: λ per {params.lambda_low.shape[0]} canali, mappa con {c}")

    low = low_frequency_mask(h, w, params.tau)
    high = ~low
    ll = params.lambda_low.data[None, :, None, None]
    lh = params.lambda_high.data[None, :, None, None]

    spectrum = fft2(x.data)
    scaled = ifft2(ll * spectrum * low + lh * spectrum * high)
    residue = float(np.abs(scaled.imag).max()) if scaled.size else 0.0
    scale = max(1.0, float(np.abs(scaled.real).max()) if scaled.size else 0.0)
    if residue > FOURIER_RESIDUE_TOL * scale:
        raise FourierResidueError(f"residuo immaginario {residue:.3e} oltre tolleranza", residue=residue)
    out = scaled.real.astype(x.dtype)

    def backward_fn(grad: np.ndarray):
        # la pipeline maschera-scala è autoaggiunta per maschere simmetriche
        g_hat = fft2(grad)
        grad_x = ifft2(ll * g_hat * low + lh * g_hat * high).real
        x_low = ifft2(spectrum * low).real
        x_high = ifft2(spectrum * high).real
        grad_ll = (grad * x_low).sum(axis=(0, 2, 3))
        grad_lh = (grad * x_high).sum(axis=(0, 2, 3))
        return grad_x.astype(x.dtype), grad_ll, grad_lh

    return record_op("fourier_scale", (x, params.lambda_low, params.lambda_high), out, backward_fn)


# ────────────────────────────────────────────────────────────────────────────────
# λ snapshot
# ────────────────────────────────────────────────────────────────────────────────

class LambdaRecord(NamedTuple):
    component: str
    layer: str
    mean_lambda_dc: float
    mean_lambda_hfc: float
    min_lambda_hfc: float
    max_lambda_hfc: float


def lambda_snapshot(model: "ResUNet") -> List[LambdaRecord]:
    """Media per canale di λ_DC e λ_HFC per ogni sito HFS, encoder poi decoder."""
    records = []
    for component, layer, params in model.hfs_sites():
        records.append(LambdaRecord(
            component=component,
            layer=layer,
            mean_lambda_dc=float(np.mean(params.lambda_dc.data, dtype=np.float64)),
            mean_lambda_hfc=float(np.mean(params.lambda_hfc.data, dtype=np.float64)),
            min_lambda_hfc=float(params.lambda_hfc.data.min()),
            max_lambda_hfc=float(params.lambda_hfc.data.max()),
        ))
    return records
