"""
Gerarchia errori di specbias.

Due famiglie: ValidationError (input/config non validi, exit code 2) e
NumericalError (stati numerici non recuperabili, exit code 3).
"""

from __future__ import annotations

from typing import Any, Dict, Optional


__all__ = [
    "SpecBiasError",
    "ValidationError",
    "ShapeError",
    "DivisibilityError",
    "ConfigError",
    "EmptyMaskError",
    "DetachedGraphError",
    "NonScalarLossError",
    "FormatError",
    "LayerIndexError",
    "FlatRegionError",
    "NumericalError",
    "NonFiniteError",
    "NonFiniteGradientError",
    "FourierResidueError",
    "CFLViolationError",
    "BlowUpError",
    "DivergenceError",
    "ZeroEnergyError",
    "EXIT_OK",
    "EXIT_VALIDATION",
    "EXIT_NUMERICAL",
]


EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


class SpecBiasError(Exception):
    """Radice di tutti gli errori del progetto."""

    code = "specbias_error"
    exit_code = 1

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context: Dict[str, Any] = context

    def as_log_fields(self) -> Dict[str, Any]:
        """Campi strutturati per il logger."""
        fields = {"error_code": self.code, "error": self.message}
        fields.update({k: v for k, v in self.context.items() if _is_loggable(v)})
        return fields


def _is_loggable(value: Any) -> bool:
    return isinstance(value, (str, int, float, bool, tuple, list)) or value is None


# ────────────────────────────────────────────────────────────────────────────────
# Validation (exit 2)
# ────────────────────────────────────────────────────────────────────────────────

class ValidationError(SpecBiasError):
    code = "validation_error"
    exit_code = EXIT_VALIDATION


class ShapeError(ValidationError):
    code = "shape_mismatch"


class DivisibilityError(ValidationError):
    code = "divisibility_violation"


class ConfigError(ValidationError):
    code = "invalid_config"


class EmptyMaskError(ValidationError):
    code = "empty_mask"


class DetachedGraphError(ValidationError):
    code = "detached_graph"


class NonScalarLossError(ValidationError):
    code = "loss_not_scalar"


class FormatError(ValidationError):
    code = "bad_container"


class LayerIndexError(ValidationError):
    code = "layer_out_of_range"


class FlatRegionError(ValidationError):
    code = "flat_roi"


# ────────────────────────────────────────────────────────────────────────────────
# Numerical failures (exit 3)
# ────────────────────────────────────────────────────────────────────────────────

class NumericalError(SpecBiasError):
    code = "numerical_error"
    exit_code = EXIT_NUMERICAL


class NonFiniteError(NumericalError):
    code = "non_finite_output"


class NonFiniteGradientError(NumericalError):
    code = "non_finite_gradient"


class FourierResidueError(NumericalError):
    code = "fourier_imaginary_residue"


class CFLViolationError(NumericalError):
    code = "cfl_violation"


class BlowUpError(NumericalError):
    code = "solver_blow_up"


class ZeroEnergyError(NumericalError):
    code = "zero_energy"


class DivergenceError(NumericalError):
    """Loss non finita durante il fit: porta con sé l'ultimo stato valido."""

    code = "training_diverged"

    def __init__(self, message: str, last_good_state: Optional[Dict[str, Any]] = None,
                 last_good_epoch: Optional[int] = None, **context: Any):
        super().__init__(message, last_good_epoch=last_good_epoch, **context)
        self.last_good_state = last_good_state
        self.last_good_epoch = last_good_epoch
