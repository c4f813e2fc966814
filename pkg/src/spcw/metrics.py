"""Reconstruction error, parameter-footprint accounting, and a reference convolution.

nSSE is the normalized summed squared error

    nSSE(w, w~) = |vec(w) - vec(w~)|_2^2 / |vec(w)|_2^2,

zero iff the reconstruction is exact.  Footprint accounting counts one
parameter per stored element, whether it is a float coefficient or a u32
ordering index: a dct layer stores g*t trainable coefficients plus
L = m*n*k^2/g frozen indices, an l1 layer g*t values plus t indices, and a
passthrough layer its original elements (all trainable).  Byte sizes are
reported alongside but the parameter counts are the headline numbers.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .codec import METHOD_DCT, METHOD_L1, METHOD_PASSTHROUGH
from .errors import SpcwError
from .store import WeightStore

__all__ = [
    "nsse",
    "FootprintRow",
    "FootprintReport",
    "ErrorReport",
    "layer_budget",
    "footprint",
    "plan_footprint",
    "error_report",
    "conv2d_reference",
    "write_report_csv",
]

CSV_COLUMNS = ["layer", "method", "g", "r", "t", "original", "stored", "trainable", "index", "nsse"]

_DTYPE_BYTES = {"f32": 4, "f64": 8}


def nsse(w: np.ndarray, w_tilde: np.ndarray) -> float:
    """Normalized summed squared error between a tensor and its reconstruction."""
    w = np.asarray(w, dtype=np.float64)
    w_tilde = np.asarray(w_tilde, dtype=np.float64)
    if w.shape != w_tilde.shape:
        raise ValueError(f"shape mismatch: {w.shape} vs {w_tilde.shape}")
    denom = float(np.sum(w * w))
    if denom == 0.0:
        raise ValueError("nSSE is undefined for an all-zero reference tensor")
    diff = w - w_tilde
    return float(np.sum(diff * diff)) / denom


def layer_budget(method: str, element_count: int, g: int | None, t: int | None) -> tuple[int, int, int]:
    """(stored, trainable, index) parameter counts for one layer."""
    if method == METHOD_PASSTHROUGH:
        return element_count, element_count, 0
    if method == METHOD_DCT:
        index = element_count // g
    elif method == METHOD_L1:
        index = t
    else:
        raise ValueError(f"unknown method {method!r}")
    trainable = g * t
    return trainable + index, trainable, index


@dataclass(frozen=True)
class FootprintRow:
    layer: str
    method: str
    g: int | None
    r: float | None
    t: int | None
    original: int
    stored: int
    trainable: int
    index: int
    weight_shaped: bool
    stored_bytes: int
    nsse: float | None = None


def _sum(rows, attr):
    return sum(getattr(row, attr) for row in rows)


@dataclass
class FootprintReport:
    rows: list[FootprintRow] = field(default_factory=list)

    def _totals(self, rows) -> dict:
        stored = _sum(rows, "stored")
        trainable = _sum(rows, "trainable")
        return {
            "original_params": _sum(rows, "original"),
            "stored_params": stored,
            "trainable_params": trainable,
            "index_params": _sum(rows, "index"),
            "stored_bytes": _sum(rows, "stored_bytes"),
            "trainable_fraction": (trainable / stored) if stored else 0.0,
        }

    @property
    def totals(self) -> dict:
        """All container layers, untouched 1-D tensors included."""
        return self._totals(self.rows)

    @property
    def weight_totals(self) -> dict:
        """Weight tensors only, for comparisons that ignore 1-D passthrough."""
        return self._totals([r for r in self.rows if r.weight_shaped])

    def to_json_dict(self) -> dict:
        return {
            "totals": self.totals,
            "weight_totals": self.weight_totals,
            "layers": [
                {c: getattr(row, "layer" if c == "layer" else c) for c in CSV_COLUMNS}
                for row in self.rows
            ],
        }


def _row(name, method, g, r, t, count, weight_shaped, dtype, nsse_value=None) -> FootprintRow:
    stored, trainable, index = layer_budget(method, count, g, t)
    return FootprintRow(
        layer=name, method=method, g=g, r=r, t=t,
        original=count, stored=stored, trainable=trainable, index=index,
        weight_shaped=weight_shaped,
        stored_bytes=trainable * _DTYPE_BYTES[dtype] + 4 * index,
        nsse=nsse_value,
    )


def footprint(records, store: WeightStore | None = None, plan=None,
              layer_nsse: dict | None = None) -> FootprintReport:
    """Accounting over container records, optionally cross-checked against a store.

    ``plan`` fills the r column (the container itself only stores g and t);
    ``layer_nsse`` attaches per-layer reconstruction errors.
    """
    if store is not None:
        store_names = store.names()
        rec_names = [r.name for r in records]
        if rec_names != store_names:
            missing = set(store_names) ^ set(rec_names)
            raise SpcwError(f"container/store layer mismatch: {sorted(missing)[:5]}")
    rows = []
    for rec in records:
        count = rec.element_count
        if store is not None and store.layer(rec.name).param_count != count:
            raise SpcwError(f"layer {rec.name!r}: element count differs between container and store")
        r_value = None
        if plan is not None:
            try:
                r_value = plan.entry(rec.name).r
            except SpcwError:
                r_value = None
        rows.append(_row(
            rec.name, rec.method,
            rec.g if rec.method != METHOD_PASSTHROUGH else None,
            r_value,
            rec.t if rec.method != METHOD_PASSTHROUGH else None,
            count,
            weight_shaped=len(rec.original_shape) in (2, 4),
            dtype=rec.dtype,
            nsse_value=(layer_nsse or {}).get(rec.name),
        ))
    return FootprintReport(rows=rows)


def plan_footprint(specs, plan, dtype: str = "f32") -> FootprintReport:
    """Pure accounting from layer shapes and a plan; no weight data needed."""
    rows = []
    for spec in specs:
        entry = plan.entry(spec.name)
        count = spec.param_count
        if entry.method == METHOD_PASSTHROUGH:
            rows.append(_row(spec.name, METHOD_PASSTHROUGH, None, None, None, count,
                             weight_shaped=len(spec.shape) in (2, 4), dtype=dtype))
        else:
            rows.append(_row(spec.name, entry.method, entry.g, entry.r, entry.t, count,
                             weight_shaped=True, dtype=dtype))
    return FootprintReport(rows=rows)


@dataclass
class ErrorReport:
    per_layer: dict  # name -> nSSE (None when undefined: all-zero original)
    aggregate: float  # parameter-weighted mean over defined layers


def error_report(original: WeightStore, restored: WeightStore) -> ErrorReport:
    per_layer = {}
    weighted = 0.0
    total_p = 0
    for rec in original.layers:
        other = restored.layer(rec.name)
        if float(np.sum(np.asarray(rec.data, dtype=np.float64) ** 2)) == 0.0:
            per_layer[rec.name] = None
            continue
        e = nsse(rec.data, other.data)
        per_layer[rec.name] = e
        weighted += rec.param_count * e
        total_p += rec.param_count
    return ErrorReport(per_layer=per_layer, aggregate=(weighted / total_p) if total_p else 0.0)


def conv2d_reference(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Plain stride-1, no-padding multi-channel correlation: y_j = sum_i x_i * w_ji.

    ``x`` is an n x H x W feature stack, ``w`` an m x n x k x k weight
    tensor; the result is m x (H-k+1) x (W-k+1).  Used as the functional
    oracle when checking that decompressed weights behave like originals.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if x.ndim != 3 or w.ndim != 4:
        raise ValueError(f"expected x (n,H,W) and w (m,n,k,k), got {x.shape} and {w.shape}")
    n, H, W = x.shape
    m, n2, k1, k2 = w.shape
    if n2 != n:
        raise ValueError(f"input has {n} channels but weights expect {n2}")
    if k1 != k2:
        raise ValueError(f"non-square kernel {k1}x{k2}")
    hp, wp = H - k1 + 1, W - k1 + 1
    if hp < 1 or wp < 1:
        raise ValueError(f"kernel {k1}x{k2} larger than input {H}x{W}")
    out = np.zeros((m, hp, wp), dtype=np.float64)
    for dy in range(k1):
        for dx in range(k1):
            out += np.einsum("mn,nhw->mhw", w[:, :, dy, dx], x[:, dy : dy + hp, dx : dx + wp])
    return out


def write_report_csv(report: FootprintReport, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in report.rows:
            values = [row.layer, row.method, row.g, row.r, row.t, row.original,
                      row.stored, row.trainable, row.index, row.nsse]
            writer.writerow(["" if v is None else v for v in values])


def write_report_json(doc: dict, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
