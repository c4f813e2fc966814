"""Layer codec: reshape -> reorder -> truncated DCT, and its inverse.

Compression flattens a weight tensor in row-major order, splits it into g
contiguous rows of length L = m*n*k^2 / g, reorders the columns with the
greedy chain from :mod:`spcw.reorder`, and keeps the t = floor(L / r)
lowest DCT frequencies of every row.  Decompression inverts each step.
The stored footprint of a layer is g*t coefficients plus the L ordering
indices.

``l1_prune_layer`` is the magnitude baseline: instead of transforming, it
keeps the t columns with the largest l1 norm and zero-fills the rest on
reconstruction, storing g*t values plus t column indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dct import build_basis, forward_truncated, inverse_truncated
from .errors import CodecError
from .reorder import DistanceMetric, Ordering, apply_inverse_ordering, apply_ordering, compute_ordering

__all__ = [
    "GroupMatrix",
    "CompressedLayer",
    "conv_shape",
    "reshape_to_groups",
    "reshape_from_groups",
    "compress_layer",
    "decompress_layer",
    "l1_prune_layer",
    "passthrough_layer",
]

METHOD_DCT = "dct"
METHOD_L1 = "l1_prune"
METHOD_PASSTHROUGH = "passthrough"


def conv_shape(shape: tuple[int, ...]) -> tuple[int, int, int, int] | None:
    """Normalize a tensor shape to (m, n, k, k), or None if not compressible.

    Rank-4 tensors must have square kernels; rank-2 matrices are treated as
    1x1 convolutions; anything else (biases, batch-norm vectors) is carried
    through uncompressed.
    """
    if len(shape) == 4:
        m, n, k1, k2 = shape
        if k1 != k2:
            raise CodecError(f"non-square kernel shape {tuple(shape)} is not supported")
        return (int(m), int(n), int(k1), int(k2))
    if len(shape) == 2:
        return (int(shape[0]), int(shape[1]), 1, 1)
    return None


@dataclass(frozen=True)
class GroupMatrix:
    """A weight tensor viewed as g contiguous rows of length L."""

    g: int
    L: int
    data: np.ndarray  # (g, L) float64
    origin_shape: tuple[int, ...]


@dataclass(frozen=True)
class CompressedLayer:
    """Codec output for one layer.

    ``ordering`` depends on the method: the forward column permutation for
    dct, the kept column indices (ascending) for l1_prune, and empty for
    passthrough.  Coefficients stay float64 in memory; ``store_dtype``
    records the dtype they are cast to when serialized.
    """

    method: str
    origin_shape: tuple[int, ...]
    g: int
    t: int
    coefficients: np.ndarray
    ordering: np.ndarray
    store_dtype: np.dtype

    @property
    def row_length(self) -> int:
        return int(np.prod(self.origin_shape)) // self.g


def reshape_to_groups(w: np.ndarray, g: int, name: str = "") -> GroupMatrix:
    """Flatten row-major and split into g contiguous rows."""
    w = np.asarray(w)
    shape = tuple(int(d) for d in w.shape)
    if conv_shape(shape) is None:
        raise CodecError(f"layer {name!r}: shape {shape} is not a weight tensor")
    count = w.size
    if g < 1 or count % g != 0:
        raise CodecError(f"layer {name!r}: g={g} does not divide {count} elements")
    data = np.ascontiguousarray(w, dtype=np.float64).reshape(g, count // g)
    return GroupMatrix(g=g, L=count // g, data=data, origin_shape=shape)


def reshape_from_groups(gm: GroupMatrix) -> np.ndarray:
    """Exact inverse of :func:`reshape_to_groups`."""
    return np.asarray(gm.data, dtype=np.float64).reshape(gm.origin_shape)


def _resolve_t(L: int, r: float | None, t: int | None, name: str) -> int:
    if t is None:
        if r is None:
            raise CodecError(f"layer {name!r}: either r or t must be given")
        if r < 1:
            raise CodecError(f"layer {name!r}: compression rate r={r} must be >= 1")
        t = math.floor(L / r)
    t = int(t)
    if t < 1:
        raise CodecError(f"layer {name!r}: r={r} keeps no coefficients of a length-{L} row")
    if t > L:
        raise CodecError(f"layer {name!r}: t={t} exceeds row length {L}")
    return t


def _storage_dtype(w: np.ndarray, name: str) -> np.dtype:
    dt = np.dtype(w.dtype)
    if dt == np.float32 or dt == np.float64:
        return dt
    raise CodecError(f"layer {name!r}: unsupported dtype {dt}, expected float32 or float64")


def compress_layer(
    w: np.ndarray,
    g: int,
    r: float | None = None,
    metric: DistanceMetric | str = DistanceMetric.EUCLIDEAN,
    *,
    t: int | None = None,
    reorder: bool = True,
    name: str = "",
) -> CompressedLayer:
    """Reshape, reorder, and keep the t lowest frequencies of each row.

    ``r`` is the compression rate (t = floor(L / r)); pass ``t`` directly to
    pin the coefficient count instead.  ``reorder=False`` skips the greedy
    ordering (identity permutation), which is the ablation baseline.
    """
    dtype = _storage_dtype(np.asarray(w), name)
    gm = reshape_to_groups(w, g, name)
    t = _resolve_t(gm.L, r, t, name)
    if reorder:
        ordering = compute_ordering(gm.data, metric)
    else:
        ordering = Ordering.identity(gm.L)
    reordered = apply_ordering(gm.data, ordering)
    basis = build_basis(gm.L).truncated(t)
    coeffs = forward_truncated(basis, reordered)
    return CompressedLayer(
        method=METHOD_DCT,
        origin_shape=gm.origin_shape,
        g=g,
        t=t,
        coefficients=coeffs,
        ordering=ordering.forward,
        store_dtype=dtype,
    )


def l1_prune_layer(
    w: np.ndarray,
    g: int,
    r: float | None = None,
    *,
    t: int | None = None,
    name: str = "",
) -> CompressedLayer:
    """Magnitude baseline: keep the t columns with the largest l1 norm.

    Ties resolve to the lowest column index; kept indices are stored in
    ascending order.
    """
    dtype = _storage_dtype(np.asarray(w), name)
    gm = reshape_to_groups(w, g, name)
    t = _resolve_t(gm.L, r, t, name)
    norms = np.abs(gm.data).sum(axis=0)
    top = np.argsort(-norms, kind="stable")[:t]  # stable: equal norms keep low indices
    kept = np.sort(top).astype(np.uint32)
    return CompressedLayer(
        method=METHOD_L1,
        origin_shape=gm.origin_shape,
        g=g,
        t=t,
        coefficients=gm.data[:, kept],
        ordering=kept,
        store_dtype=dtype,
    )


def passthrough_layer(data: np.ndarray, name: str = "") -> CompressedLayer:
    """Carry a tensor through the container uncompressed."""
    data = np.asarray(data)
    dtype = _storage_dtype(data, name)
    flat = np.ascontiguousarray(data, dtype=np.float64).reshape(1, -1)
    return CompressedLayer(
        method=METHOD_PASSTHROUGH,
        origin_shape=tuple(int(d) for d in data.shape),
        g=1,
        t=flat.shape[1],
        coefficients=flat,
        ordering=np.empty(0, dtype=np.uint32),
        store_dtype=dtype,
    )


def decompress_layer(c: CompressedLayer) -> np.ndarray:
    """Invert the codec: returns a tensor of ``origin_shape`` in the stored dtype."""
    coeffs = np.asarray(c.coefficients, dtype=np.float64)
    if c.method == METHOD_PASSTHROUGH:
        return coeffs.reshape(c.origin_shape).astype(c.store_dtype)

    count = int(np.prod(c.origin_shape))
    if c.g < 1 or count % c.g != 0:
        raise CodecError(f"g={c.g} does not divide {count} elements of shape {c.origin_shape}")
    L = count // c.g
    if coeffs.shape != (c.g, c.t):
        raise CodecError(f"coefficient block {coeffs.shape} does not match g={c.g}, t={c.t}")

    if c.method == METHOD_DCT:
        if not 1 <= c.t <= L:
            raise CodecError(f"t={c.t} outside 1..{L}")
        basis = build_basis(L).truncated(c.t)
        rows = inverse_truncated(basis, coeffs)
        ordering = Ordering.from_forward(c.ordering)
        if len(ordering) != L:
            raise CodecError(f"ordering length {len(ordering)} does not match row length {L}")
        rows = apply_inverse_ordering(rows, ordering)
    elif c.method == METHOD_L1:
        kept = np.asarray(c.ordering, dtype=np.int64)
        if kept.shape != (c.t,) or (kept >= L).any():
            raise CodecError(f"kept-column indices invalid for t={c.t}, L={L}")
        rows = np.zeros((c.g, L), dtype=np.float64)
        rows[:, kept] = coeffs
    else:
        raise CodecError(f"unknown method {c.method!r}")

    gm = GroupMatrix(g=c.g, L=L, data=rows, origin_shape=c.origin_shape)
    return reshape_from_groups(gm).astype(c.store_dtype)
