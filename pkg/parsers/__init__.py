"""
Public reading API exposed by the parsers package.
"""

from .checkpoint import Checkpoint, load_model, read_checkpoint, write_checkpoint
from .dataset import DatasetContainer, DatasetField, read_dataset, write_dataset
from .raster import read_pgm, write_pgm
from .universal import load_field

__all__ = [
    "load_field",
    "read_dataset",
    "write_dataset",
    "DatasetContainer",
    "DatasetField",
    "read_checkpoint",
    "write_checkpoint",
    "load_model",
    "Checkpoint",
    "read_pgm",
    "write_pgm",
]
