"""Dump a checkpoint into a weight-store directory (manifest.json + NPY files).

Supports the torchvision zoo ids ``resnet50`` and ``mobilenet_v2`` (with
preset rules deciding what is compressible) or a path to a local
state-dict file (classified by shape).  Fully connected weights are
exported reshaped to (m, n, 1, 1); everything else keeps its shape.
Tensors classified as passthrough but shaped like weights (e.g. depthwise
convolutions) get an explicit ``"role": "passthrough"`` manifest entry so
downstream tools skip them.

Exports are deterministic: the same checkpoint always produces
byte-identical NPY payloads.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .rules import CONV_WEIGHT, FC_WEIGHT, GENERIC_BY_SHAPE, PASSTHROUGH, PRESETS, ExportError, classify

__all__ = ["export_checkpoint", "main"]


def _file_name(layer_name: str) -> str:
    safe = "".join(ch if ch.isalnum() or ch in "._-" else "_" for ch in layer_name)
    return f"{safe}.npy"


def _zoo_state_dict(model_id: str, pretrained: bool, weights_file):
    import torch
    import torchvision.models as models

    builders = {"resnet50": models.resnet50, "mobilenet_v2": models.mobilenet_v2}
    if pretrained:
        try:
            model = builders[model_id](weights="DEFAULT")
        except Exception as exc:
            raise ExportError(f"could not download pretrained weights for {model_id}: {exc}") from exc
    else:
        model = builders[model_id](weights=None)
    if weights_file:
        state = torch.load(weights_file, map_location="cpu", weights_only=True)
        model.load_state_dict(state)
    # named_parameters: the trainable tensors, excluding running statistics
    return [(name, p.detach().cpu()) for name, p in model.named_parameters()]


def _file_state_dict(path: Path):
    import torch

    try:
        state = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise ExportError(f"cannot load checkpoint {path}: {exc}") from exc
    if not isinstance(state, dict):
        raise ExportError(f"{path}: expected a state dict")
    out = []
    for name, tensor in state.items():
        if not getattr(tensor, "is_floating_point", lambda: False)():
            continue  # integer buffers like num_batches_tracked
        out.append((name, tensor.detach().cpu()))
    return out


def export_checkpoint(model_id: str, out_dir, *, weights_file=None, pretrained=False) -> dict:
    """Write the store; returns a manifest summary with parameter counts."""
    if model_id in PRESETS:
        tensors = _zoo_state_dict(model_id, pretrained, weights_file)
        rules = PRESETS[model_id]
        model_name = model_id
    elif Path(model_id).is_file():
        tensors = _file_state_dict(Path(model_id))
        rules = GENERIC_BY_SHAPE
        model_name = Path(model_id).stem
    else:
        raise ExportError(f"unknown model id or checkpoint path: {model_id!r}")

    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    total = 0
    compressible = 0
    for name, tensor in tensors:
        shape = tuple(tensor.shape)
        kind = classify(name, shape, rules)
        arr = tensor.numpy().astype(np.float32, copy=False)
        if kind == FC_WEIGHT:
            if len(shape) != 2:
                raise ExportError(f"tensor {name!r}: fc rule expects a 2-D matrix, got {shape}")
            arr = arr.reshape(shape[0], shape[1], 1, 1)
        elif kind == CONV_WEIGHT:
            if len(arr.shape) != 4 or arr.shape[2] != arr.shape[3]:
                raise ExportError(f"tensor {name!r}: conv rule expects square 4-D weights, got {shape}")
        else:
            if arr.ndim == 0:
                arr = arr.reshape(1)
            if arr.ndim not in (1, 2, 4):
                raise ExportError(f"tensor {name!r}: rank-{arr.ndim} tensors are not supported")
        fname = _file_name(name)
        np.save(root / fname, np.ascontiguousarray(arr))
        entry = {"name": name, "shape": list(arr.shape), "file": fname}
        if kind == PASSTHROUGH and arr.ndim in (2, 4):
            entry["role"] = "passthrough"
        entries.append(entry)
        total += arr.size
        compressible += arr.size if kind != PASSTHROUGH else 0

    manifest = {"model": model_name, "layers": entries}
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    summary = {
        "model": model_name,
        "layers": len(entries),
        "compressible_layers": sum(1 for e in entries
                                   if len(e["shape"]) == 4 and "role" not in e),
        "total_params": total,
        "compressible_params": compressible,
        "out": str(root),
    }
    return summary


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="spcw-export",
        description="dump a checkpoint into a spcw weight-store directory",
    )
    parser.add_argument("--model", required=True,
                        help="resnet50, mobilenet_v2, or a path to a .pt state dict")
    parser.add_argument("--out", required=True, help="output store directory")
    parser.add_argument("--weights", default=None,
                        help="local state-dict file to load into the zoo architecture")
    parser.add_argument("--pretrained", action="store_true",
                        help="download pretrained zoo weights (needs network)")
    args = parser.parse_args(argv)
    try:
        summary = export_checkpoint(args.model, args.out,
                                    weights_file=args.weights, pretrained=args.pretrained)
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"exported {summary['layers']} tensors ({summary['total_params']:,} parameters, "
          f"{summary['compressible_params']:,} compressible) -> {summary['out']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
