"""Exporter per manifest e report in formato JSON."""

import json
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from utils.file_manager import get_organized_output_path

__all__ = ["export_json", "export_manifest", "read_json"]


def _default(value: Any):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, set):
        return sorted(value)
    raise TypeError(f"non serializzabile in JSON: {type(value).__name__}")


def export_json(data: Dict, out_path: str, base_output: Optional[str] = None) -> str:
    """Scrive data in JSON indentato; con base_output il file va nella sottocartella per tipo."""
    path = get_organized_output_path(out_path, None, base_output) if base_output else out_path
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(data, handle, indent=2, sort_keys=True, default=_default)
    return str(path)


def export_manifest(manifest: Dict, container_path: str) -> str:
    """Manifest sidecar accanto al container: stesso nome, estensione .json."""
    return export_json(dict(manifest, schema_version="1.0"), str(Path(container_path).with_suffix(".json")))


def read_json(path: str) -> Dict:
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)
