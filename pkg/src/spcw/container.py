"""Binary container (.spcw) for compressed layers.

Little-endian throughout.  The file starts with the magic bytes ``SPCW``
and a u16 format version, then records back to back until EOF:

    name_len u16 | name bytes (UTF-8) | shape 4 x u32 | method u8 |
    dtype u8 | g u32 | t u32 | coefficients (g*t elements of dtype) |
    ordering (u32 indices)

``shape`` is the original tensor shape zero-padded to four entries, so
rank-1 and rank-2 passthrough tensors survive a round trip with their
rank intact.  The ordering length is implied by the method: the full
column permutation (L = m*n*k^2 / g entries) for dct, the kept-column
indices (t entries) for l1_prune, and nothing for passthrough.  Identical
containers serialize to identical bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .codec import METHOD_DCT, METHOD_L1, METHOD_PASSTHROUGH, CompressedLayer
from .errors import ContainerError

__all__ = [
    "CompressedLayerRecord",
    "record_from_layer",
    "write_compressed",
    "read_compressed",
]

MAGIC = b"SPCW"
VERSION = 1

_METHOD_CODES = {METHOD_DCT: 0, METHOD_L1: 1, METHOD_PASSTHROUGH: 2}
_METHOD_NAMES = {v: k for k, v in _METHOD_CODES.items()}
_DTYPE_CODES = {"f32": 0, "f64": 1}
_DTYPE_NAMES = {v: k for k, v in _DTYPE_CODES.items()}
_NP_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}


@dataclass(frozen=True)
class CompressedLayerRecord:
    """One serialized layer; ``original_shape`` is the true (unpadded) shape."""

    name: str
    original_shape: tuple[int, ...]
    method: str
    dtype: str  # "f32" | "f64"
    g: int
    t: int
    coefficients: np.ndarray  # (g, t), in `dtype`
    ordering: np.ndarray  # uint32

    @property
    def element_count(self) -> int:
        return int(np.prod(self.original_shape))

    @property
    def row_length(self) -> int:
        return self.element_count // self.g

    def validate(self) -> None:
        if not self.name:
            raise ContainerError("record has an empty name")
        if self.method not in _METHOD_CODES:
            raise ContainerError(f"layer {self.name!r}: unknown method {self.method!r}")
        if self.dtype not in _DTYPE_CODES:
            raise ContainerError(f"layer {self.name!r}: unknown dtype {self.dtype!r}")
        if len(self.original_shape) not in (1, 2, 4) or any(d < 1 for d in self.original_shape):
            raise ContainerError(f"layer {self.name!r}: bad shape {self.original_shape}")
        if max(self.original_shape) >= 2**32 or self.element_count >= 2**32:
            raise ContainerError(f"layer {self.name!r}: shape too large for u32 fields")
        count = self.element_count
        if self.g < 1 or count % self.g != 0:
            raise ContainerError(f"layer {self.name!r}: g={self.g} does not divide {count} elements")
        if self.coefficients.shape != (self.g, self.t):
            raise ContainerError(
                f"layer {self.name!r}: coefficient block {self.coefficients.shape} "
                f"does not match g={self.g}, t={self.t}"
            )
        L = count // self.g
        ordering = np.asarray(self.ordering)
        if self.method == METHOD_PASSTHROUGH:
            if self.g != 1 or self.t != count or ordering.size != 0:
                raise ContainerError(f"layer {self.name!r}: malformed passthrough record")
            return
        if not 1 <= self.t <= L:
            raise ContainerError(f"layer {self.name!r}: t={self.t} outside 1..{L}")
        if self.method == METHOD_DCT:
            if ordering.shape != (L,) or not np.array_equal(
                np.sort(ordering), np.arange(L, dtype=np.uint32)
            ):
                raise ContainerError(f"layer {self.name!r}: ordering is not a permutation of 0..{L - 1}")
        else:  # l1_prune
            if ordering.shape != (self.t,):
                raise ContainerError(f"layer {self.name!r}: expected {self.t} kept-column indices")
            if ordering.size and (
                (np.diff(ordering.astype(np.int64)) <= 0).any() or int(ordering[-1]) >= L
            ):
                raise ContainerError(f"layer {self.name!r}: kept-column indices must ascend below {L}")

    def to_layer(self) -> CompressedLayer:
        return CompressedLayer(
            method=self.method,
            origin_shape=self.original_shape,
            g=self.g,
            t=self.t,
            coefficients=np.asarray(self.coefficients),
            ordering=np.asarray(self.ordering, dtype=np.uint32),
            store_dtype=np.dtype(np.float32 if self.dtype == "f32" else np.float64),
        )


def record_from_layer(name: str, layer: CompressedLayer) -> CompressedLayerRecord:
    """Cast coefficients to the layer's storage dtype and wrap for serialization."""
    dtype = "f32" if np.dtype(layer.store_dtype) == np.float32 else "f64"
    coeffs = np.ascontiguousarray(layer.coefficients, dtype=_NP_DTYPES[dtype])
    return CompressedLayerRecord(
        name=name,
        original_shape=layer.origin_shape,
        method=layer.method,
        dtype=dtype,
        g=layer.g,
        t=layer.t,
        coefficients=coeffs,
        ordering=np.ascontiguousarray(layer.ordering, dtype="<u4"),
    )


def _pad_shape(shape: tuple[int, ...]) -> tuple[int, int, int, int]:
    return tuple(shape) + (0,) * (4 - len(shape))


def _unpad_shape(padded: tuple[int, int, int, int], name: str) -> tuple[int, ...]:
    shape = []
    seen_zero = False
    for d in padded:
        if d == 0:
            seen_zero = True
        elif seen_zero:
            raise ContainerError(f"layer {name!r}: malformed shape field {padded}")
        else:
            shape.append(int(d))
    if len(shape) not in (1, 2, 4):
        raise ContainerError(f"layer {name!r}: malformed shape field {padded}")
    return tuple(shape)


def write_compressed(records, path) -> Path:
    """Serialize records in order; identical input yields identical bytes."""
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<H", VERSION)
    for rec in records:
        rec.validate()
        name_bytes = rec.name.encode("utf-8")
        if len(name_bytes) > 0xFFFF:
            raise ContainerError(f"layer {rec.name!r}: name too long")
        blob += struct.pack("<H", len(name_bytes))
        blob += name_bytes
        blob += struct.pack("<4I", *_pad_shape(rec.original_shape))
        blob += struct.pack("<BB", _METHOD_CODES[rec.method], _DTYPE_CODES[rec.dtype])
        blob += struct.pack("<II", rec.g, rec.t)
        blob += np.ascontiguousarray(rec.coefficients, dtype=_NP_DTYPES[rec.dtype]).tobytes()
        blob += np.ascontiguousarray(rec.ordering, dtype="<u4").tobytes()
    out = Path(path)
    out.write_bytes(bytes(blob))
    return out


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    @property
    def remaining(self) -> int:
        return len(self.data) - self.pos

    def take(self, n: int) -> bytes:
        if self.remaining < n:
            raise ContainerError(f"{self.path}: truncated file")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_compressed(path) -> list[CompressedLayerRecord]:
    """Parse and validate a container; exact inverse of :func:`write_compressed`."""
    p = Path(path)
    if not p.is_file():
        raise ContainerError(f"{p}: no such file")
    rd = _Reader(p.read_bytes(), p)
    if rd.take(4) != MAGIC:
        raise ContainerError(f"{p}: bad magic bytes (not a .spcw container)")
    (version,) = rd.unpack("<H")
    if version != VERSION:
        raise ContainerError(f"{p}: unsupported container version {version}")

    records = []
    while rd.remaining:
        (name_len,) = rd.unpack("<H")
        try:
            name = rd.take(name_len).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ContainerError(f"{p}: undecodable layer name") from exc
        padded = rd.unpack("<4I")
        method_code, dtype_code = rd.unpack("<BB")
        g, t = rd.unpack("<II")
        if method_code not in _METHOD_NAMES:
            raise ContainerError(f"layer {name!r}: unknown method code {method_code}")
        if dtype_code not in _DTYPE_NAMES:
            raise ContainerError(f"layer {name!r}: unknown dtype code {dtype_code}")
        method = _METHOD_NAMES[method_code]
        dtype = _DTYPE_NAMES[dtype_code]
        shape = _unpad_shape(padded, name)
        count = int(np.prod(shape))
        if g < 1 or count % g != 0:
            raise ContainerError(f"layer {name!r}: g={g} does not divide {count} elements")
        np_dtype = _NP_DTYPES[dtype]
        coeffs = np.frombuffer(rd.take(g * t * np_dtype.itemsize), dtype=np_dtype).reshape(g, t)
        n_indices = {METHOD_DCT: count // g, METHOD_L1: t, METHOD_PASSTHROUGH: 0}[method]
        ordering = np.frombuffer(rd.take(4 * n_indices), dtype="<u4")
        rec = CompressedLayerRecord(
            name=name,
            original_shape=shape,
            method=method,
            dtype=dtype,
            g=int(g),
            t=int(t),
            coefficients=coeffs,
            ordering=ordering,
        )
        rec.validate()
        records.append(rec)
    return records
