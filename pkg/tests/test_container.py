import numpy as np
import pytest

from spcw import codec
from spcw.container import (
    CompressedLayerRecord,
    read_compressed,
    record_from_layer,
    write_compressed,
)
from spcw.errors import ContainerError


def _records(rng):
    w = rng.standard_normal((4, 8, 1, 1)).astype(np.float32)
    bias = rng.standard_normal(4).astype(np.float32)
    return [
        record_from_layer("conv.weight", codec.compress_layer(w, 4, r=2)),
        record_from_layer("conv.l1", codec.l1_prune_layer(w, 4, r=2)),
        record_from_layer("conv.bias", codec.passthrough_layer(bias)),
    ]


def test_roundtrip_structural_equality(tmp_path, rng):
    records = _records(rng)
    path = tmp_path / "c.spcw"
    write_compressed(records, path)
    back = read_compressed(path)
    assert len(back) == len(records)
    for a, b in zip(records, back):
        assert a.name == b.name
        assert a.original_shape == b.original_shape
        assert a.method == b.method
        assert a.dtype == b.dtype
        assert (a.g, a.t) == (b.g, b.t)
        assert np.array_equal(a.coefficients, b.coefficients)
        assert np.array_equal(a.ordering, b.ordering)


def test_decompresses_after_roundtrip(tmp_path, rng):
    w = rng.standard_normal((4, 8, 1, 1)).astype(np.float32)
    path = tmp_path / "c.spcw"
    write_compressed([record_from_layer("w", codec.compress_layer(w, 2, r=1))], path)
    restored = codec.decompress_layer(read_compressed(path)[0].to_layer())
    assert np.max(np.abs(restored.astype(np.float64) - w)) < 1e-5


def test_empty_container(tmp_path):
    path = tmp_path / "empty.spcw"
    write_compressed([], path)
    assert path.stat().st_size == 6  # magic + version
    assert read_compressed(path) == []


def test_file_size_arithmetic(tmp_path, rng):
    # g=2, t=3, L=4 on an f32 layer named "x": 6-byte header, then
    # 2 + 1 (name) + 16 (shape) + 1 + 1 (method/dtype) + 4 + 4 (g/t)
    # + 6*4 coefficient bytes + 4*4 ordering bytes
    w = rng.standard_normal((2, 4, 1, 1)).astype(np.float32)
    layer = codec.compress_layer(w, 2, r=None, t=3)
    path = tmp_path / "one.spcw"
    write_compressed([record_from_layer("x", layer)], path)
    assert path.stat().st_size == 6 + (2 + 1 + 16 + 1 + 1 + 4 + 4) + 6 * 4 + 4 * 4


def test_serialization_is_deterministic(tmp_path, rng):
    records = _records(rng)
    p1, p2 = tmp_path / "a.spcw", tmp_path / "b.spcw"
    write_compressed(records, p1)
    write_compressed(records, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_write_of_read_reproduces_bytes(tmp_path, rng):
    p1, p2 = tmp_path / "a.spcw", tmp_path / "b.spcw"
    write_compressed(_records(rng), p1)
    write_compressed(read_compressed(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.spcw"
    path.write_bytes(b"NOPE" + b"\x01\x00")
    with pytest.raises(ContainerError, match="magic"):
        read_compressed(path)


def test_bad_version_rejected(tmp_path):
    path = tmp_path / "bad.spcw"
    path.write_bytes(b"SPCW" + b"\x02\x00")
    with pytest.raises(ContainerError, match="version"):
        read_compressed(path)


def test_truncated_file_rejected(tmp_path, rng):
    path = tmp_path / "c.spcw"
    write_compressed(_records(rng), path)
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) - 5])
    with pytest.raises(ContainerError, match="truncated"):
        read_compressed(path)


def test_missing_file_rejected(tmp_path):
    with pytest.raises(ContainerError, match="no such file"):
        read_compressed(tmp_path / "absent.spcw")


def test_invalid_permutation_rejected(tmp_path, rng):
    w = rng.standard_normal((2, 4, 1, 1)).astype(np.float32)
    good = record_from_layer("w", codec.compress_layer(w, 2, r=1))
    bad = CompressedLayerRecord(
        name=good.name, original_shape=good.original_shape, method=good.method,
        dtype=good.dtype, g=good.g, t=good.t, coefficients=good.coefficients,
        ordering=np.zeros_like(good.ordering),
    )
    with pytest.raises(ContainerError, match="permutation"):
        write_compressed([bad], tmp_path / "x.spcw")


def test_rank1_shape_survives_roundtrip(tmp_path, rng):
    bias = rng.standard_normal(7)
    path = tmp_path / "c.spcw"
    write_compressed([record_from_layer("b", codec.passthrough_layer(bias))], path)
    rec = read_compressed(path)[0]
    assert rec.original_shape == (7,)
    assert np.array_equal(codec.decompress_layer(rec.to_layer()), bias)


def test_rank2_shape_survives_roundtrip(tmp_path, rng):
    w = rng.standard_normal((6, 4)).astype(np.float32)
    path = tmp_path / "c.spcw"
    write_compressed([record_from_layer("fc", codec.compress_layer(w, 2, r=1))], path)
    rec = read_compressed(path)[0]
    assert rec.original_shape == (6, 4)
    restored = codec.decompress_layer(rec.to_layer())
    assert restored.shape == (6, 4)


def test_l1_indices_validated(tmp_path, rng):
    w = rng.standard_normal((2, 4, 1, 1)).astype(np.float32)
    good = record_from_layer("w", codec.l1_prune_layer(w, 2, r=2))
    bad = CompressedLayerRecord(
        name=good.name, original_shape=good.original_shape, method=good.method,
        dtype=good.dtype, g=good.g, t=good.t, coefficients=good.coefficients,
        ordering=np.array([9, 1], dtype=np.uint32),
    )
    with pytest.raises(ContainerError, match="ascend"):
        write_compressed([bad], tmp_path / "x.spcw")
