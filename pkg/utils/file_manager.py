"""
File Management Utilities
Cartelle di output organizzate per run.
"""

import os
from typing import Dict, Optional

from .config import OUTPUT_DIR


SUBDIRS = ('logs', 'checkpoints', 'csv', 'plots', 'data', 'maps', 'configs', 'temp')

_TYPE_MAPPING = {
    '.sblb': 'checkpoints',
    '.sbds': 'data',
    '.json': 'data',
    '.csv': 'csv',
    '.png': 'plots',
    '.pdf': 'plots',
    '.pgm': 'maps',
    '.npy': 'maps',
    '.env': 'configs',
    '.log': 'logs',
}


def setup_output_directories(base_output: Optional[str] = None) -> Dict[str, str]:
    """Crea e restituisce i percorsi delle cartelle di output di un run."""
    base_output = base_output or OUTPUT_DIR
    os.makedirs(base_output, exist_ok=True)

    subdirs = {name: os.path.join(base_output, name) for name in SUBDIRS}
    for subdir in subdirs.values():
        os.makedirs(subdir, exist_ok=True)

    return subdirs


def get_organized_output_path(filename: str, file_type: str = None, base_output: Optional[str] = None) -> str:
    """
    Determina il percorso organizzato per un file di output.

    Args:
        filename: Nome del file
        file_type: Tipo esplicito ('checkpoints', 'csv', 'plots', 'maps', ...)
        base_output: Cartella del run (default: OUTPUT_DIR)

    Returns:
        Percorso completo organizzato
    """
    dirs = setup_output_directories(base_output)

    if not file_type:
        ext = os.path.splitext(filename)[1].lower()
        file_type = _TYPE_MAPPING.get(ext, 'temp')

    if file_type not in dirs:
        file_type = 'temp'

    return os.path.join(dirs[file_type], filename)

