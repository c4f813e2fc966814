"""Greedy nearest-neighbor column reordering of group matrices.

Frequency truncation works best on smooth rows, but the columns of a
reshaped weight matrix arrive in arbitrary channel order.  The ordering
built here starts from the column with the largest l2 norm and repeatedly
appends the remaining column closest to its predecessor, which chains
similar columns next to each other.  The resulting permutation must be
stored alongside the coefficients so decompression can undo it.

Complexity is O(L^2 * g) from the full pairwise scan; this is the known
hot loop of the codec and is fine at the row lengths it is used on.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "DistanceMetric",
    "Ordering",
    "compute_ordering",
    "apply_ordering",
    "apply_inverse_ordering",
]


class DistanceMetric(str, Enum):
    EUCLIDEAN = "euclidean"
    MANHATTAN = "manhattan"
    COSINE = "cosine"


@dataclass(frozen=True)
class Ordering:
    """A column permutation and its inverse.

    ``forward[j]`` is the source column placed at position j; ``inverse``
    undoes the move: ``inverse[forward[j]] == j``.
    """

    forward: np.ndarray
    inverse: np.ndarray

    def __post_init__(self):
        fwd = np.asarray(self.forward, dtype=np.uint32)
        inv = np.asarray(self.inverse, dtype=np.uint32)
        fwd.setflags(write=False)
        inv.setflags(write=False)
        object.__setattr__(self, "forward", fwd)
        object.__setattr__(self, "inverse", inv)
        if fwd.shape != inv.shape or fwd.ndim != 1:
            raise ValueError("forward/inverse must be 1-D and equally long")
        if not np.array_equal(inv[fwd], np.arange(len(fwd), dtype=np.uint32)):
            raise ValueError("inverse is not the inverse permutation of forward")

    def __len__(self) -> int:
        return len(self.forward)

    @classmethod
    def from_forward(cls, forward: np.ndarray) -> "Ordering":
        forward = np.asarray(forward, dtype=np.uint32)
        L = len(forward)
        sorted_copy = np.sort(forward)
        if not np.array_equal(sorted_copy, np.arange(L, dtype=np.uint32)):
            raise ValueError("forward is not a permutation of 0..L-1")
        inverse = np.empty(L, dtype=np.uint32)
        inverse[forward] = np.arange(L, dtype=np.uint32)
        return cls(forward, inverse)

    @classmethod
    def identity(cls, L: int) -> "Ordering":
        idx = np.arange(L, dtype=np.uint32)
        return cls(idx, idx.copy())


def _distances_to(mat: np.ndarray, cand: np.ndarray, cur: np.ndarray,
                  norms: np.ndarray, cur_norm: float, metric: DistanceMetric) -> np.ndarray:
    cols = mat[:, cand]
    if metric is DistanceMetric.EUCLIDEAN:
        # squared distance; same argmin/tie structure as the plain distance
        diff = cols - cur[:, None]
        return np.einsum("ij,ij->j", diff, diff)
    if metric is DistanceMetric.MANHATTAN:
        return np.abs(cols - cur[:, None]).sum(axis=0)
    # cosine: 1 - a.b / (|a||b|); defined as 1 when either vector is zero
    out = np.ones(len(cand), dtype=np.float64)
    if cur_norm > 0.0:
        cn = norms[cand]
        nz = cn > 0.0
        out[nz] = 1.0 - (cur @ cols[:, nz]) / (cur_norm * cn[nz])
    return out


def compute_ordering(mat: np.ndarray, metric: DistanceMetric | str = DistanceMetric.EUCLIDEAN) -> Ordering:
    """Greedy ordering of the columns of a g x L matrix.

    Starts at the column with the largest l2 norm, then repeatedly picks
    the remaining column with the smallest distance to the previous pick.
    Ties (in both the argmax and the argmin) resolve to the lowest column
    index, which keeps the result deterministic.
    """
    metric = DistanceMetric(metric)
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] < 1 or mat.shape[1] < 1:
        raise ValueError(f"expected a non-empty g x L matrix, got shape {mat.shape}")
    g, L = mat.shape

    norms = np.sqrt(np.einsum("ij,ij->j", mat, mat))
    forward = np.empty(L, dtype=np.uint32)
    start = int(np.argmax(norms))  # first occurrence wins ties
    forward[0] = start

    alive = np.ones(L, dtype=bool)
    alive[start] = False
    cur = mat[:, start]
    cur_norm = norms[start]
    for j in range(1, L):
        cand = np.flatnonzero(alive)  # ascending, so argmin ties pick the lowest index
        d = _distances_to(mat, cand, cur, norms, cur_norm, metric)
        pick = int(cand[int(np.argmin(d))])
        forward[j] = pick
        alive[pick] = False
        cur = mat[:, pick]
        cur_norm = norms[pick]
    return Ordering.from_forward(forward)


def _check_width(mat: np.ndarray, ordering: Ordering) -> np.ndarray:
    mat = np.asarray(mat)
    if mat.ndim != 2 or mat.shape[1] != len(ordering):
        raise ValueError(
            f"matrix has {mat.shape[-1] if mat.ndim else 0} columns, ordering has {len(ordering)}"
        )
    return mat


def apply_ordering(mat: np.ndarray, ordering: Ordering) -> np.ndarray:
    """Gather columns: output column j is input column ``forward[j]``."""
    return _check_width(mat, ordering)[:, ordering.forward]


def apply_inverse_ordering(mat: np.ndarray, ordering: Ordering) -> np.ndarray:
    """Undo :func:`apply_ordering`, restoring original column positions."""
    return _check_width(mat, ordering)[:, ordering.inverse]
