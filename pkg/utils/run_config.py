"""
Run Configuration
RunConfig: albero pydantic con i parametri di un singolo comando.

Il file di configurazione è un key=value letto con python-dotenv; le chiavi
sono percorsi puntati (model.base_width=16). Ordine di applicazione:
preset → file → override CLI (--seed, --out, ...) → --set, nell'ordine dato.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Iterable, List, Literal, Mapping, Optional, Tuple

from pydantic import BaseModel, Field, ValidationError as PydanticValidationError, field_validator

from core.errors import ConfigError
from core.kolmogorov import SolverConfig
from core.metrics import BandSpec
from core.resunet import ModelConfig
from core.training import TrainConfig
from utils.config import GRADIENT_FLOOR, OUTPUT_DIR, PATCH_SIZE, VERDICT_CV

try:
    from dotenv import dotenv_values
    DOTENV_AVAILABLE = True
except ImportError:
    dotenv_values = None
    DOTENV_AVAILABLE = False


__all__ = [
    "DataConfig",
    "EffectivenessConfig",
    "SweepConfig",
    "LatentsConfig",
    "CompareConfig",
    "RunConfig",
    "PRESETS",
    "load_run_config",
    "parse_overrides",
    "flatten_config",
    "write_resolved_config",
]

RESOLVED_CONFIG_NAME = "resolved_config.env"


def _split_csv(value):
    if isinstance(value, str):
        return [v.strip() for v in value.split(",") if v.strip()]
    return value


# ────────────────────────────────────────────────────────────────────────────────
# Sezioni
# ────────────────────────────────────────────────────────────────────────────────

class DataConfig(BaseModel):
    path: str = f"{OUTPUT_DIR}/data/kolmogorov.sbds"
    field: str = "vorticity"
    history: int = Field(20, gt=0)
    horizon: int = Field(5, gt=0)
    stride: int = Field(1, gt=0)
    splits: List[float] = Field(default_factory=lambda: [0.8, 0.1, 0.1])
    dtype: Literal["float32", "float64"] = "float32"
    eval_batch_size: int = Field(8, gt=0)
    sample: int = Field(0, ge=0)
    denormalize: bool = False

    @field_validator("splits", mode="before")
    @classmethod
    def _split_values(cls, value):
        return _split_csv(value)

    @field_validator("splits")
    @classmethod
    def _check_splits(cls, value):
        if len(value) != 3 or any(v < 0 for v in value) or abs(sum(value) - 1.0) > 1e-9:
            raise ValueError("splits: tre frazioni non negative con somma 1")
        return value


class EffectivenessConfig(BaseModel):
    input: Optional[str] = None
    generator: Literal["localized", "mixed", "white"] = "localized"
    size: int = Field(64, ge=3)
    samples: int = Field(1, gt=0)
    step: int = Field(0, ge=0)
    patch_size: int = Field(PATCH_SIZE, gt=0)
    lambda_dc: float = 0.85
    lambda_hfc: float = 1.15
    roi: Optional[str] = None
    floor: float = Field(GRADIENT_FLOOR, gt=0)
    threshold: float = Field(VERDICT_CV, gt=0)


class SweepConfig(BaseModel):
    widths: List[str] = Field(default_factory=lambda: ["xs", "s", "m"])
    variants: List[Literal["none", "hfs", "fourier"]] = Field(default_factory=lambda: ["none", "hfs"])

    @field_validator("widths", "variants", mode="before")
    @classmethod
    def _split_values(cls, value):
        return _split_csv(value)


class LatentsConfig(BaseModel):
    layer: Optional[int] = Field(None, ge=0)
    split: Literal["train", "val", "test"] = "test"


class CompareConfig(BaseModel):
    baseline: Optional[str] = None
    candidate: Optional[str] = None
    kind: Literal["auto", "metrics", "latents"] = "auto"


class RunConfig(BaseModel):
    preset: Literal["desk", "full"] = "desk"
    seed: int = Field(0, ge=0)
    deterministic: bool = False
    out_dir: str = OUTPUT_DIR
    plots: bool = False
    checkpoint: Optional[str] = None
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    bands: BandSpec = Field(default_factory=BandSpec)
    data: DataConfig = Field(default_factory=DataConfig)
    effectiveness: EffectivenessConfig = Field(default_factory=EffectivenessConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    latents: LatentsConfig = Field(default_factory=LatentsConfig)
    compare: CompareConfig = Field(default_factory=CompareConfig)

    model_config = {"extra": "forbid"}


# Valori dei preset come chiavi puntate
PRESETS: Dict[str, Dict[str, str]] = {
    "desk": {},
    "full": {
        "model.base_width": "32",
        "model.width_multipliers": "1,2,4,8,16,16",
        "model.max_hfs_overhead": "0.001",
        "train.epochs": "1000",
        "train.decay_start": "700",
    },
}


# ────────────────────────────────────────────────────────────────────────────────
# Parsing
# ────────────────────────────────────────────────────────────────────────────────

def parse_overrides(items: Iterable[str]) -> List[Tuple[str, str]]:
    """['a.b=1', ...] → [('a.b', '1'), ...]."""
    pairs = []
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"override non valido: {item!r} (atteso key=value)")
        key, value = item.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"override senza chiave: {item!r}")
        pairs.append((key, value.strip()))
    return pairs


def _read_file(path: str) -> List[Tuple[str, str]]:
    if not Path(path).is_file():
        raise ConfigError(f"file di configurazione non trovato: {path}", path=path)
    if not DOTENV_AVAILABLE:
        raise ConfigError("python-dotenv non installato: impossibile leggere il file di configurazione")
    values = dotenv_values(path, interpolate=False)
    return [(k, "" if v is None else v) for k, v in values.items()]


def _nest(pairs: Iterable[Tuple[str, str]]) -> Dict:
    tree: Dict = {}
    sections = set(RunConfig.model_fields)
    for key, value in pairs:
        parts = key.split(".")
        if parts[0] not in sections:
            raise ConfigError(f"chiave di configurazione sconosciuta: {key}", key=key)
        if len(parts) > 2:
            raise ConfigError(f"chiave troppo profonda: {key}", key=key)
        if len(parts) == 2:
            tree.setdefault(parts[0], {})
            if not isinstance(tree[parts[0]], dict):
                raise ConfigError(f"{parts[0]} non è una sezione", key=key)
            tree[parts[0]][parts[1]] = value
        else:
            tree[parts[0]] = value
    # campi opzionali lasciati vuoti = None
    for key, section in list(tree.items()):
        if section == "":
            tree[key] = None
        elif isinstance(section, dict):
            for name, value in list(section.items()):
                if value == "":
                    section[name] = None
    return tree


def _check_section_keys(tree: Dict) -> None:
    for name, section in tree.items():
        if not isinstance(section, dict):
            continue
        model_cls = RunConfig.model_fields[name].annotation
        unknown = sorted(set(section) - set(model_cls.model_fields))
        if unknown:
            raise ConfigError(f"chiavi sconosciute in [{name}]: {', '.join(unknown)}",
                              section=name, keys=unknown)


def load_run_config(path: Optional[str] = None, overrides: Optional[Iterable[str]] = None,
                    cli: Optional[Mapping[str, object]] = None) -> RunConfig:
    """
    Costruisce e valida la RunConfig completa prima di qualsiasi calcolo.

    Args:
        path: file key=value opzionale
        overrides: lista 'chiave=valore' da --set
        cli: override dei flag globali (seed, out_dir, deterministic, plots)

    Returns:
        RunConfig validata

    Raises:
        ConfigError: chiavi sconosciute o valori non validi
    """
    file_pairs = _read_file(path) if path else []
    set_pairs = parse_overrides(overrides or [])
    cli_pairs: List[Tuple[str, str]] = []
    for key, value in (cli or {}).items():
        if value is None:
            continue
        if key == "seed":
            cli_pairs += [("seed", str(value)), ("train.seed", str(value)), ("solver.seed", str(value))]
        else:
            cli_pairs.append((key, str(value).lower() if isinstance(value, bool) else str(value)))

    preset = "desk"
    for key, value in file_pairs + cli_pairs + set_pairs:
        if key == "preset":
            preset = value
    if preset not in PRESETS:
        raise ConfigError(f"preset sconosciuto: {preset}", choices=sorted(PRESETS))

    pairs = list(PRESETS[preset].items()) + file_pairs + cli_pairs + set_pairs
    tree = _nest(pairs)
    _check_section_keys(tree)
    try:
        return RunConfig.model_validate(tree)
    except PydanticValidationError as exc:
        first = exc.errors()[0]
        location = ".".join(str(p) for p in first.get("loc", ()))
        raise ConfigError(f"configurazione non valida ({location}): {first.get('msg')}",
                          location=location, errors=len(exc.errors())) from exc


# ────────────────────────────────────────────────────────────────────────────────
# Echo
# ────────────────────────────────────────────────────────────────────────────────

def _format_value(value) -> Optional[str]:
    if value is None:
        return None
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    return str(value)


def flatten_config(config: RunConfig) -> List[Tuple[str, str]]:
    """Coppie (chiave puntata, valore) in ordine di dichiarazione; i None sono omessi."""
    pairs = []
    for key, value in config.model_dump().items():
        if isinstance(value, dict):
            for sub, sub_value in value.items():
                text = _format_value(sub_value)
                if text is not None:
                    pairs.append((f"{key}.{sub}", text))
        else:
            text = _format_value(value)
            if text is not None:
                pairs.append((key, text))
    return pairs


def write_resolved_config(config: RunConfig, out_dir: Optional[str] = None) -> str:
    """Scrive <out>/resolved_config.env, rileggibile con --config."""
    target = Path(out_dir or config.out_dir) / RESOLVED_CONFIG_NAME
    target.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# specbias resolved configuration"]
    for key, value in flatten_config(config):
        needs_quotes = any(ch in value for ch in " #'\"")
        lines.append(f'{key}="{value}"' if needs_quotes else f"{key}={value}")
    target.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(target)
