#!/usr/bin/env python3
"""
Test I/O: container dataset, checkpoint, PGM, caricamento campi, CSV e JSON.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from core.errors import FormatError, ValidationError
from core.resunet import ModelConfig, build
from core.tensor import Tensor
from exporters.csv_exporter import export_rows, read_rows, spectrum_rows
from exporters.json_exporter import export_json, read_json
from parsers import (DatasetContainer, DatasetField, load_field, load_model, read_checkpoint, read_dataset,
                     read_pgm, write_checkpoint, write_dataset, write_pgm)
from parsers.dataset import denormalize, normalize, split_indices
from parsers.raster import read_pgm_field


def _container(rng):
    raw = rng.uniform(-3.0, 5.0, size=(3, 4, 8, 8))
    lo, hi = float(raw.min()), float(raw.max())
    container = DatasetContainer(manifest={"splits": split_indices(3), "generator": "test"})
    container.add(DatasetField("vorticity", normalize(raw, lo, hi).astype(np.float32), 0.5, lo, hi))
    container.add(DatasetField("mask_bubble", rng.random((3, 4, 8, 8)) > 0.5))
    return container, raw


# ────────────────────────────────────────────────────────────────────────────────
# Dataset
# ────────────────────────────────────────────────────────────────────────────────

def test_split_indices_ordered():
    splits = split_indices(10)
    assert splits == {"train": list(range(8)), "val": [8], "test": [9]}
    with pytest.raises(ValidationError):
        split_indices(0)


def test_normalization_round_trip():
    x = np.linspace(-2.0, 7.0, 50)
    y = normalize(x, -2.0, 7.0)
    assert y.min() == pytest.approx(-1.0) and y.max() == pytest.approx(1.0)
    np.testing.assert_allclose(denormalize(y, -2.0, 7.0), x, atol=1e-12)
    with pytest.raises(ValidationError):
        normalize(x, 1.0, 1.0)


def test_dataset_round_trip(tmp_path):
    container, raw = _container(np.random.default_rng(0))
    path = write_dataset(str(tmp_path / "toy.sbds"), container)
    assert (tmp_path / "toy.json").is_file()

    loaded = read_dataset(path)
    assert list(loaded.fields) == ["vorticity", "mask_bubble"]
    assert loaded.mask_names() == ["mask_bubble"]
    np.testing.assert_array_equal(loaded["vorticity"].data, container["vorticity"].data)
    assert loaded["vorticity"].data.dtype == np.float32
    assert loaded["mask_bubble"].data.dtype == np.bool_
    np.testing.assert_allclose(loaded["vorticity"].raw(), raw, atol=1e-6 * np.abs(raw).max())
    assert loaded.split("train") == [0, 1]
    assert loaded.manifest["fields"] == ["vorticity", "mask_bubble"]


def test_dataset_rejects_corruption(tmp_path):
    container, _ = _container(np.random.default_rng(1))
    path = Path(write_dataset(str(tmp_path / "toy.sbds"), container))
    raw = path.read_bytes()

    bad_magic = tmp_path / "bad.sbds"
    bad_magic.write_bytes(b"XXXX" + raw[4:])
    truncated = tmp_path / "short.sbds"
    truncated.write_bytes(raw[:-10])
    trailing = tmp_path / "long.sbds"
    trailing.write_bytes(raw + b"\x00")
    for target in (bad_magic, truncated, trailing):
        with pytest.raises(FormatError):
            read_dataset(str(target), with_manifest=False)


def test_duplicate_field_rejected():
    container = DatasetContainer()
    container.add(DatasetField("a", np.zeros(2)))
    with pytest.raises(ValidationError):
        container.add(DatasetField("a", np.ones(2)))
    with pytest.raises(ValidationError):
        container["missing"]


# ────────────────────────────────────────────────────────────────────────────────
# Checkpoint
# ────────────────────────────────────────────────────────────────────────────────

def _small_model():
    cfg = ModelConfig(in_channels=2, out_channels=1, height=16, width=16, levels=2, base_width=4,
                      width_multipliers=[1, 2, 2], scaling_variant="hfs")
    return build(cfg, seed=2)


def test_checkpoint_round_trip(tmp_path):
    model = _small_model()
    path = write_checkpoint(str(tmp_path / "m.sblb"), model.config, model.state_dict(), {"best_epoch": 3})
    checkpoint = read_checkpoint(path)
    assert checkpoint.config == model.config
    assert checkpoint.metadata["best_epoch"] == 3
    assert checkpoint.metadata["config_digest"] == model.config.digest()

    restored, _ = load_model(path)
    x = Tensor(np.random.default_rng(0).standard_normal((1, 2, 16, 16)).astype(np.float32))
    np.testing.assert_array_equal(restored(x).data, model(x).data)


def test_checkpoint_detects_tampering(tmp_path):
    model = _small_model()
    path = Path(write_checkpoint(str(tmp_path / "m.sblb"), model.config, model.state_dict()))
    raw = bytearray(path.read_bytes())
    raw[-1] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        read_checkpoint(str(path))

    other = tmp_path / "other.sblb"
    other.write_bytes(b"SBDS" + bytes(40))
    with pytest.raises(FormatError):
        read_checkpoint(str(other))


# ────────────────────────────────────────────────────────────────────────────────
# PGM e load_field
# ────────────────────────────────────────────────────────────────────────────────

@pytest.mark.parametrize("dtype", [np.uint8, np.uint16])
def test_pgm_round_trip(tmp_path, dtype):
    rng = np.random.default_rng(3)
    image = rng.integers(0, np.iinfo(dtype).max, size=(5, 7), endpoint=True).astype(dtype)
    path = write_pgm(str(tmp_path / "img.pgm"), image)
    loaded = read_pgm(path)
    assert loaded.dtype == dtype
    np.testing.assert_array_equal(loaded, image)


def test_pgm_16_bit_is_big_endian(tmp_path):
    path = write_pgm(str(tmp_path / "one.pgm"), np.array([[258]], dtype=np.uint16))
    assert Path(path).read_bytes()[-2:] == b"\x01\x02"


def test_pgm_header_comments(tmp_path):
    target = tmp_path / "c.pgm"
    target.write_bytes(b"P5\n# commento\n2 1\n# ancora\n255\n" + bytes([0, 255]))
    np.testing.assert_array_equal(read_pgm(str(target)), [[0, 255]])
    np.testing.assert_allclose(read_pgm_field(str(target)), [[0.0, 1.0]])


def test_pgm_truncated_payload(tmp_path):
    target = tmp_path / "t.pgm"
    target.write_bytes(b"P5\n4 4\n255\n" + bytes(5))
    with pytest.raises(FormatError):
        read_pgm(str(target))


def test_float_image_is_rescaled(tmp_path):
    field = np.linspace(-1.0, 1.0, 12).reshape(3, 4)
    image = read_pgm(write_pgm(str(tmp_path / "f.pgm"), field))
    assert image.min() == 0 and image.max() == 255


def test_load_field_dispatch(tmp_path):
    rng = np.random.default_rng(4)
    field = rng.standard_normal((6, 6))
    np.save(tmp_path / "f.npy", field)
    np.testing.assert_array_equal(load_field(str(tmp_path / "f.npy")), field)

    container, _ = _container(rng)
    ds_path = write_dataset(str(tmp_path / "toy.sbds"), container)
    expected = container["vorticity"].data[1, 2].astype(np.float64)
    np.testing.assert_array_equal(load_field(ds_path, sample=1, step=2), expected)

    renamed = tmp_path / "toy.bin"
    renamed.write_bytes(Path(ds_path).read_bytes())
    np.testing.assert_array_equal(load_field(str(renamed), sample=1, step=2), expected)

    pgm = write_pgm(str(tmp_path / "g.pgm"), np.array([[0, 255]], dtype=np.uint8))
    np.testing.assert_allclose(load_field(pgm), [[0.0, 1.0]])

    unknown = tmp_path / "x.txt"
    unknown.write_text("hello")
    with pytest.raises(FormatError):
        load_field(str(unknown))
    with pytest.raises(ValidationError):
        load_field(ds_path, sample=9)


# ────────────────────────────────────────────────────────────────────────────────
# CSV / JSON
# ────────────────────────────────────────────────────────────────────────────────

def test_csv_round_trip_keeps_floats(tmp_path):
    rows = [{"epoch": 0, "loss": 0.1 + 0.2}, {"epoch": 1, "loss": np.float32(0.5), "extra": "x"}]
    path = export_rows(rows, str(tmp_path / "log.csv"))
    back = read_rows(path)
    assert list(back[0]) == ["epoch", "loss", "extra"]
    assert float(back[0]["loss"]) == 0.1 + 0.2
    assert back[1]["extra"] == "x"


def test_spectrum_rows():
    rows = spectrum_rows({"truth": np.array([1.0, 2.0]), "prediction": np.array([1.0, 1.5])}, step=3)
    assert rows == [{"step": 3, "k": 0, "truth": 1.0, "prediction": 1.0},
                    {"step": 3, "k": 1, "truth": 2.0, "prediction": 1.5}]


def test_json_handles_numpy(tmp_path):
    path = export_json({"a": np.float64(1.5), "b": np.arange(3), "c": np.int64(4)}, str(tmp_path / "x.json"))
    assert read_json(path) == {"a": 1.5, "b": [0, 1, 2], "c": 4}
