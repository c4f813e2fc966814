"""Orthonormal DCT basis and truncated transforms over group rows.

The basis matrix for length-n vectors has entries

    C[a, u] = sqrt(alpha(u) / n) * cos(pi / n * (a + 1/2) * u)

with alpha(0) = 1 and alpha(u > 0) = 2.  Columns are the cosine basis
functions ordered by frequency, and C is orthogonal, so keeping the first
t columns and reconstructing via C_t @ C_t.T @ w is the least-squares
approximation of w from its t lowest frequencies.

Transforms are explicit matrix products against cached basis matrices
(no FFT); at the row lengths this library targets that is both simple and
fast.  For very long rows the product is streamed over column blocks so
peak memory stays bounded.  All arithmetic is float64 regardless of the
stored dtype.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

__all__ = [
    "DctBasis",
    "TruncatedBasis",
    "build_basis",
    "forward_truncated",
    "inverse_truncated",
]

# Largest basis block (elements) materialized at once; beyond this the
# transform streams over frequency blocks instead of one big matmul.
_DENSE_LIMIT = 1 << 24


def _basis_block(n: int, u0: int, count: int) -> np.ndarray:
    """Columns u0 .. u0+count-1 of the n-point DCT basis, shape (n, count)."""
    a = np.arange(n, dtype=np.float64)[:, None]
    u = np.arange(u0, u0 + count, dtype=np.float64)[None, :]
    block = np.cos((np.pi / n) * (a + 0.5) * u)
    block *= np.sqrt(np.where(u == 0, 1.0, 2.0) / n)
    return block


class DctBasis:
    """Orthonormal DCT basis for length-n vectors.

    The full n x n matrix is built on first access and kept read-only, so
    instances are safe to share between threads.
    """

    __slots__ = ("n", "_matrix")

    def __init__(self, n: int):
        if n < 1:
            raise ValueError(f"basis length must be >= 1, got {n}")
        self.n = int(n)
        self._matrix = None

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            m = _basis_block(self.n, 0, self.n)
            m.setflags(write=False)
            self._matrix = m
        return self._matrix

    def truncated(self, t: int) -> "TruncatedBasis":
        return TruncatedBasis(self, t)

    def __repr__(self) -> str:  # pragma: no cover
        return f"DctBasis(n={self.n})"


class TruncatedBasis:
    """First t columns of a DCT basis: the t lowest frequencies."""

    __slots__ = ("base", "t")

    def __init__(self, base: DctBasis, t: int):
        if not 1 <= t <= base.n:
            raise ValueError(f"t={t} outside 1..{base.n}")
        self.base = base
        self.t = int(t)

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def columns(self) -> np.ndarray:
        """The n x t block C_t (a view of the full matrix when cached)."""
        n, t = self.base.n, self.t
        if n * n <= _DENSE_LIMIT:
            return self.base.matrix[:, :t]
        return _basis_block(n, 0, t)

    def __repr__(self) -> str:  # pragma: no cover
        return f"TruncatedBasis(n={self.n}, t={self.t})"


@lru_cache(maxsize=16)
def build_basis(n: int) -> DctBasis:
    """Basis for length-n vectors, cached per distinct n."""
    return DctBasis(n)


def _check_last_dim(arr: np.ndarray, expected: int, what: str) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim not in (1, 2):
        raise ValueError(f"{what} must be a vector or a matrix of rows")
    if arr.shape[-1] != expected:
        raise ValueError(f"{what} length {arr.shape[-1]} does not match {expected}")
    return arr


def forward_truncated(basis: TruncatedBasis, rows: np.ndarray) -> np.ndarray:
    """C_t.T @ row for each row: keep the t lowest-frequency coefficients.

    Accepts one row of length n or a (g, n) stack; the output replaces the
    last axis with t.
    """
    rows = _check_last_dim(rows, basis.n, "row")
    n, t = basis.n, basis.t
    if n * t <= _DENSE_LIMIT:
        return rows @ basis.columns
    step = max(1, _DENSE_LIMIT // n)
    parts = [rows @ _basis_block(n, u0, min(step, t - u0)) for u0 in range(0, t, step)]
    return np.concatenate(parts, axis=-1)


def inverse_truncated(basis: TruncatedBasis, coeffs: np.ndarray) -> np.ndarray:
    """C_t @ coeffs for each coefficient row: reconstruct length-n rows."""
    coeffs = _check_last_dim(coeffs, basis.t, "coefficient row")
    n, t = basis.n, basis.t
    if n * t <= _DENSE_LIMIT:
        return coeffs @ basis.columns.T
    step = max(1, _DENSE_LIMIT // n)
    out = np.zeros(coeffs.shape[:-1] + (n,), dtype=np.float64)
    for u0 in range(0, t, step):
        count = min(step, t - u0)
        out += coeffs[..., u0 : u0 + count] @ _basis_block(n, u0, count).T
    return out
