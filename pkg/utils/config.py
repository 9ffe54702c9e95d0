"""
Default di processo per specbias, letti dall'ambiente (.env via python-dotenv).

I parametri di un singolo run (modello, training, solver) vivono in
utils/run_config.py: qui restano solo soglie numeriche, worker, logging e
cartella di output.
"""

import os
from typing import Any, Callable, Dict, List, TypeVar

try:
    from dotenv import find_dotenv, load_dotenv
    _DOTENV_PATH = find_dotenv(usecwd=True)
    _ENV_LOADED = load_dotenv(_DOTENV_PATH) if _DOTENV_PATH else False
except ImportError:
    _DOTENV_PATH = ""
    _ENV_LOADED = False

T = TypeVar("T")

_TRUTHY = frozenset({"true", "1", "yes", "on"})


def _read_env(key: str, parse: Callable[[str], T], default: T) -> T:
    raw = os.getenv(key)
    if raw is None or not raw.strip():
        return default
    try:
        return parse(raw.strip())
    except ValueError:
        return default


def get_env_bool(key: str, default: bool) -> bool:
    return _read_env(key, lambda raw: raw.lower() in _TRUTHY, default)


def get_env_int(key: str, default: int) -> int:
    """Intero da env; un valore non numerico lascia il default."""
    return _read_env(key, int, default)


def get_env_float(key: str, default: float) -> float:
    return _read_env(key, float, default)


def get_env_list_int(key: str, default: List[int]) -> List[int]:
    """Lista di interi separati da virgola, es. ``SPECBIAS_X=1,2,3``."""
    return _read_env(key, lambda raw: [int(part) for part in raw.split(",") if part.strip()], default)


# ────────────────────────────────────────────────────────────────────────────────
# Numerica
# ────────────────────────────────────────────────────────────────────────────────

DEFAULT_PRECISION = os.getenv("SPECBIAS_PRECISION", "float32")     # float64 solo per il gradient check
FOURIER_RESIDUE_TOL = get_env_float("SPECBIAS_FOURIER_RESIDUE_TOL", 1e-6)
GROUP_NORM_EPS = get_env_float("SPECBIAS_GROUP_NORM_EPS", 1e-5)
GROUP_NORM_GROUPS = get_env_int("SPECBIAS_GROUP_NORM_GROUPS", 8)

# ────────────────────────────────────────────────────────────────────────────────
# HFS
# ────────────────────────────────────────────────────────────────────────────────

PATCH_SIZE = get_env_int("SPECBIAS_PATCH_SIZE", 8)                 # a piena risoluzione
MIN_PATCH_SIZE = get_env_int("SPECBIAS_MIN_PATCH_SIZE", 2)         # floor dopo i dimezzamenti
LAMBDA_INIT = get_env_float("SPECBIAS_LAMBDA_INIT", 1.0)
FOURIER_TAU = get_env_float("SPECBIAS_FOURIER_TAU", 0.25)
HFS_OVERHEAD_LIMIT = 1e-3                                           # frazione dei parametri

# ────────────────────────────────────────────────────────────────────────────────
# Solver e analisi
# ────────────────────────────────────────────────────────────────────────────────

CFL_SAFETY = get_env_float("SPECBIAS_CFL_SAFETY", 0.5)
GRADIENT_FLOOR = get_env_float("SPECBIAS_GRAD_FLOOR", 1e-6)        # pixel piatti fuori dal ratio
VERDICT_CV = get_env_float("SPECBIAS_VERDICT_CV", 0.05)
LATENT_CUTOFFS = [0.125, 0.1875, 0.25, 0.375, 0.5]                 # dal livello fine al grossolano

# ────────────────────────────────────────────────────────────────────────────────
# Runtime, logging, output
# ────────────────────────────────────────────────────────────────────────────────

NUM_WORKERS = get_env_int("SPECBIAS_NUM_WORKERS", min(4, os.cpu_count() or 1))

LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
LOG_FORMAT = os.getenv("LOG_FORMAT", "text")                       # text | json
VERBOSE_LOGGING = get_env_bool("VERBOSE_LOGGING", False)

OUTPUT_DIR = os.getenv("SPECBIAS_OUTPUT_DIR", "output")


def get_environment_info() -> Dict[str, Any]:
    """Istantanea dei default di processo, loggata a livello debug da ogni comando."""
    return {
        "dotenv_loaded": bool(_ENV_LOADED),
        "env_file": _DOTENV_PATH or None,
        "precision": DEFAULT_PRECISION,
        "num_workers": NUM_WORKERS,
        "output_dir": OUTPUT_DIR,
        "log": {"level": LOG_LEVEL, "format": LOG_FORMAT, "verbose": VERBOSE_LOGGING},
        "hfs": {
            "patch_size": PATCH_SIZE,
            "min_patch_size": MIN_PATCH_SIZE,
            "lambda_init": LAMBDA_INIT,
            "fourier_tau": FOURIER_TAU,
        },
    }
