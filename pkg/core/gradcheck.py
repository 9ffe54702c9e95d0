"""
Finite-difference oracle for the tensor engine.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from core.errors import ValidationError
from core.tensor import Tape, Tensor, backward


__all__ = ["finite_difference_check", "relative_error"]


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return np.abs(analytic - numeric) / denom


def finite_difference_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
    max_coords: Optional[int] = None,
    seed: int = 0,
) -> float:
    """
    Confronta il gradiente analitico con differenze centrali coordinata per coordinata.

    Args:
        f: funzione senza argomenti che restituisce una loss scalare calcolata dai params
        params: tensori foglia (float64, requires_grad) da perturbare in place
        eps: passo delle differenze centrali
        max_coords: se impostato, campiona al più max_coords coordinate per parametro

    Returns:
        Errore relativo massimo con denominatore max(|analitico|, |numerico|, 1e-8)
    """
    for p in params:
        if p.dtype != np.float64:
            raise ValidationError("finite_difference_check richiede precisione float64",
                                  param=p.name, dtype=str(p.dtype))
        p.zero_grad()

    with Tape():
        loss = f()
    backward(loss, leaves=params)
    analytic = [p.grad.copy() for p in params]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, grad in zip(params, analytic):
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        grad_flat = grad.reshape(-1)
        for idx in coords:
            original = flat[idx]
            flat[idx] = original + eps
            plus = f().item()
            flat[idx] = original - eps
            minus = f().item()
            flat[idx] = original
            numeric = (plus - minus) / (2.0 * eps)
            err = float(relative_error(np.asarray(grad_flat[idx]), np.asarray(numeric)))
            worst = max(worst, err)
    return worst
