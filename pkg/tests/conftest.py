import json
from pathlib import Path

import numpy as np
import pytest

from spcw.store import LayerRecord, WeightStore, write_weight_store

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_store(path, shapes, seed=0, model="toy", dtype=np.float32, roles=None, names=None):
    """Write a little weight store with seeded random tensors; returns its path."""
    rng = np.random.default_rng(seed)
    layers = []
    for i, shape in enumerate(shapes):
        name = names[i] if names else f"block{i}.weight"
        data = rng.standard_normal(shape).astype(dtype)
        role = (roles or {}).get(name) or ("weight" if len(shape) in (2, 4) else "passthrough")
        layers.append(LayerRecord(name, tuple(shape), "f32" if dtype == np.float32 else "f64",
                                  data, role=role))
    write_weight_store(WeightStore(model, layers), path)
    return path


@pytest.fixture
def toy_store(tmp_path):
    return make_store(
        tmp_path / "store",
        [(8, 16, 1, 1), (16, 16, 3, 3), (32, 8, 1, 1), (16,)],
        names=["block0.weight", "block1.weight", "block2.weight", "block1.bias"],
        seed=7,
    )


def resnet50_manifest_entries():
    doc = json.loads((FIXTURES / "resnet50_manifest.json").read_text())
    return doc["layers"]
