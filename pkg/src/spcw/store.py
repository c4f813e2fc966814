"""On-disk weight store: a JSON manifest plus one NPY file per tensor.

The manifest is ``{"model": str, "layers": [{"name", "shape", "file"}]}``
and fixes the layer order.  Tensor files use the NPY v1.0 layout, C order,
little-endian float32/float64.  Rank-4 tensors (square kernels) and rank-2
matrices are compressible weights; rank-1 tensors (biases, batch-norm
parameters) are carried through untouched.  An entry may carry an optional
``"role"`` of ``"weight"`` or ``"passthrough"`` to override that inference,
which is how exporters mark e.g. depthwise convolutions as not-to-compress.

Records are immutable after load, so a store can be shared freely between
threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .codec import conv_shape
from .errors import CodecError, StoreError

__all__ = [
    "LayerRecord",
    "WeightStore",
    "ManifestEntry",
    "read_manifest",
    "read_weight_store",
    "write_weight_store",
]

ROLE_WEIGHT = "weight"
ROLE_PASSTHROUGH = "passthrough"

_DTYPE_NAMES = {np.dtype(np.float32): "f32", np.dtype(np.float64): "f64"}


def dtype_name(dt) -> str:
    dt = np.dtype(dt)
    if dt not in _DTYPE_NAMES:
        raise StoreError(f"unsupported dtype {dt}, expected float32 or float64")
    return _DTYPE_NAMES[dt]


@dataclass(frozen=True)
class ManifestEntry:
    name: str
    shape: tuple[int, ...]
    file: str
    role: str


@dataclass(frozen=True)
class LayerRecord:
    """One named tensor: rank 1, 2, or 4, float32 or float64."""

    name: str
    shape: tuple[int, ...]
    dtype: str  # "f32" | "f64"
    data: np.ndarray
    role: str = ROLE_WEIGHT

    def __post_init__(self):
        self.data.setflags(write=False)

    @property
    def param_count(self) -> int:
        return int(np.prod(self.shape))

    @property
    def conv_shape(self) -> tuple[int, int, int, int] | None:
        return conv_shape(self.shape)

    @property
    def compressible(self) -> bool:
        return self.role == ROLE_WEIGHT and self.conv_shape is not None


@dataclass
class WeightStore:
    model: str
    layers: list[LayerRecord] = field(default_factory=list)

    def names(self) -> list[str]:
        return [rec.name for rec in self.layers]

    def layer(self, name: str) -> LayerRecord:
        for rec in self.layers:
            if rec.name == name:
                return rec
        raise StoreError(f"store has no layer named {name!r}")

    @property
    def total_elements(self) -> int:
        return sum(rec.param_count for rec in self.layers)


def _infer_role(entry_role, shape: tuple[int, ...], name: str) -> str:
    if entry_role is not None:
        if entry_role not in (ROLE_WEIGHT, ROLE_PASSTHROUGH):
            raise StoreError(f"layer {name!r}: unknown role {entry_role!r}")
        return entry_role
    return ROLE_WEIGHT if len(shape) in (2, 4) else ROLE_PASSTHROUGH


def read_manifest(path) -> tuple[str, list[ManifestEntry]]:
    """Parse and validate manifest.json without touching tensor files."""
    root = Path(path)
    manifest_path = root / "manifest.json" if root.is_dir() else root
    if not manifest_path.is_file():
        raise StoreError(f"no manifest.json found at {root}")
    try:
        doc = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise StoreError(f"{manifest_path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict) or "layers" not in doc:
        raise StoreError(f"{manifest_path}: expected an object with a 'layers' list")

    entries = []
    seen = set()
    for raw in doc["layers"]:
        try:
            name = raw["name"]
            shape = tuple(int(d) for d in raw["shape"])
            file = raw["file"]
        except (KeyError, TypeError, ValueError) as exc:
            raise StoreError(f"{manifest_path}: malformed layer entry {raw!r}") from exc
        if name in seen:
            raise StoreError(f"layer {name!r}: duplicate name in manifest")
        seen.add(name)
        if len(shape) not in (1, 2, 4) or any(d < 1 for d in shape):
            raise StoreError(f"layer {name!r}: unsupported shape {shape}")
        try:
            conv_shape(shape)
        except CodecError as exc:
            raise StoreError(f"layer {name!r}: {exc}") from exc
        entries.append(ManifestEntry(name, shape, file, _infer_role(raw.get("role"), shape, name)))
    return str(doc.get("model", "")), entries


def _load_npy(path: Path, name: str) -> np.ndarray:
    try:
        arr = np.load(path, allow_pickle=False)
    except FileNotFoundError:
        raise StoreError(f"layer {name!r}: tensor file {path} is missing") from None
    except Exception as exc:
        raise StoreError(f"layer {name!r}: cannot read {path} ({exc})") from exc
    if arr.dtype not in (np.float32, np.float64):
        raise StoreError(f"layer {name!r}: unsupported dtype {arr.dtype}, expected float32 or float64")
    return np.ascontiguousarray(arr)


def read_weight_store(path) -> WeightStore:
    """Load every layer listed in the manifest, validating shapes against it."""
    root = Path(path)
    model, entries = read_manifest(root)
    base = root if root.is_dir() else root.parent
    layers = []
    for entry in entries:
        arr = _load_npy(base / entry.file, entry.name)
        if tuple(arr.shape) != entry.shape:
            raise StoreError(
                f"layer {entry.name!r}: file shape {tuple(arr.shape)} does not match "
                f"manifest shape {entry.shape}"
            )
        layers.append(
            LayerRecord(
                name=entry.name,
                shape=entry.shape,
                dtype=dtype_name(arr.dtype),
                data=arr,
                role=entry.role,
            )
        )
    return WeightStore(model=model, layers=layers)


def _file_name(layer_name: str) -> str:
    safe = "".join(ch if ch.isalnum() or ch in "._-" else "_" for ch in layer_name)
    return f"{safe}.npy"


def write_weight_store(store: WeightStore, path) -> Path:
    """Write manifest.json plus one NPY file per layer; returns the directory."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {"model": store.model, "layers": []}
    for rec in store.layers:
        fname = _file_name(rec.name)
        np.save(root / fname, np.ascontiguousarray(rec.data))
        entry = {"name": rec.name, "shape": list(rec.shape), "file": fname}
        if rec.role != _infer_role(None, rec.shape, rec.name):
            entry["role"] = rec.role
        manifest["layers"].append(entry)
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return root
