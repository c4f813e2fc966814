"""Command-line driver: compress, decompress, stats, sweep, verify.

Exit codes: 0 on success, 1 for input errors (bad files, flags, or
parameters), 2 for unexpected internal failures.  All commands are
deterministic functions of their inputs; ``--jobs`` only changes how many
layers are processed concurrently, never the output bytes.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import codec, container, metrics, strategy
from .errors import SpcwError
from .store import (
    ROLE_PASSTHROUGH,
    ROLE_WEIGHT,
    LayerRecord,
    WeightStore,
    dtype_name,
    read_manifest,
    read_weight_store,
    write_weight_store,
)

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    # usage mistakes are input errors (exit 1), not internal errors
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SpcwError(message)


def _split_names(text: str) -> tuple[str, ...]:
    return tuple(part for part in (text or "").split(",") if part)


def _split_floats(text: str, flag: str) -> list[float]:
    try:
        return [float(part) for part in _split_names(text)]
    except ValueError as exc:
        raise SpcwError(f"{flag}: expected a comma-separated list of numbers, got {text!r}") from exc


def _split_ints(text: str, flag: str) -> list[int]:
    try:
        return [int(part) for part in _split_names(text)]
    except ValueError as exc:
        raise SpcwError(f"{flag}: expected a comma-separated list of integers, got {text!r}") from exc


def _add_policy_flags(p):
    p.add_argument("--exclude", default="", metavar="NAME,...",
                   help="layer names to leave uncompressed")
    p.add_argument("--min-params", type=int, default=0, metavar="N",
                   help="leave layers with fewer elements uncompressed")
    p.add_argument("--keep-first", action="store_true",
                   help="also compress the first weight layer (excluded by default)")


def _add_strategy_flags(p):
    p.add_argument("--strategy", choices=[strategy.STRATEGY_UNIFORM,
                                          strategy.STRATEGY_PROGRESSIVE_R,
                                          strategy.STRATEGY_PROGRESSIVE_G],
                   default=strategy.STRATEGY_UNIFORM)
    p.add_argument("--g", type=int, default=4, help="group count (uniform, progressive-r)")
    p.add_argument("--r", type=float, default=None, help="compression rate (uniform, progressive-g)")
    p.add_argument("--r-prime", type=float, default=None, help="rate increase r' (progressive-r)")
    p.add_argument("--metric", choices=["euclidean", "manhattan", "cosine"], default="euclidean")
    p.add_argument("--method", choices=["dct", "l1"], default="dct")


def _policy(args) -> strategy.InclusionPolicy:
    return strategy.InclusionPolicy(
        exclude=_split_names(args.exclude),
        min_params=args.min_params,
        skip_first=not args.keep_first,
    )


def _method(args) -> str:
    return codec.METHOD_L1 if args.method == "l1" else codec.METHOD_DCT


def _plan_from_args(args, specs) -> strategy.CompressionPlan:
    if args.strategy == strategy.STRATEGY_UNIFORM:
        if args.r is None:
            raise SpcwError("uniform strategy requires --r")
        return strategy.plan_uniform(specs, args.r, args.g, args.metric, _method(args))
    if args.strategy == strategy.STRATEGY_PROGRESSIVE_R:
        if args.r_prime is None:
            raise SpcwError("progressive-r strategy requires --r-prime")
        return strategy.plan_progressive_r(specs, args.r_prime, args.g, args.metric, _method(args))
    if args.r is None:
        raise SpcwError("progressive-g strategy requires --r")
    return strategy.plan_progressive_g(specs, args.r, args.metric, _method(args))


def _report_notes(plan: strategy.CompressionPlan) -> None:
    for entry in plan.entries:
        if entry.method == "passthrough" and entry.note:
            print(f"note: {entry.name}: {entry.note}", file=sys.stderr)


def _compress_one(rec: LayerRecord, entry: strategy.PlanEntry, reorder: bool):
    """Compress one layer per its plan entry; returns (record, nSSE or None)."""
    if entry.method == "passthrough" or not rec.compressible:
        layer = codec.passthrough_layer(rec.data, rec.name)
    elif entry.method == codec.METHOD_DCT:
        layer = codec.compress_layer(rec.data, entry.g, metric=entry.metric or "euclidean",
                                     t=entry.t, reorder=reorder, name=rec.name)
    else:
        layer = codec.l1_prune_layer(rec.data, entry.g, t=entry.t, name=rec.name)
    record = container.record_from_layer(rec.name, layer)
    # measure error on the record that will be written, so a later
    # decompress-and-recompute reproduces the reported numbers exactly
    if float(np.sum(np.asarray(rec.data, dtype=np.float64) ** 2)) == 0.0:
        return record, None
    restored = codec.decompress_layer(record.to_layer())
    return record, metrics.nsse(rec.data, restored)


def _compress_store(store: WeightStore, plan: strategy.CompressionPlan,
                    jobs: int, reorder: bool):
    tasks = [(rec, plan.entry(rec.name)) for rec in store.layers]
    if jobs <= 1:
        results = [_compress_one(rec, entry, reorder) for rec, entry in tasks]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda pair: _compress_one(*pair, reorder), tasks))
    records = [record for record, _ in results]
    layer_nsse = {record.name: e for record, e in results}
    return records, layer_nsse


def _aggregate_nsse(layer_nsse: dict, store: WeightStore) -> float:
    weighted = 0.0
    total = 0
    for name, e in layer_nsse.items():
        if e is None:
            continue
        p = store.layer(name).param_count
        weighted += p * e
        total += p
    return (weighted / total) if total else 0.0


def _write_report(report: metrics.FootprintReport, path: str, extra: dict) -> None:
    if path.endswith(".csv"):
        metrics.write_report_csv(report, path)
    else:
        doc = dict(extra)
        doc.update(report.to_json_dict())
        metrics.write_report_json(doc, path)


def _print_totals(report: metrics.FootprintReport) -> None:
    tot = report.totals
    print(
        f"params: original {tot['original_params']:,} -> stored {tot['stored_params']:,} "
        f"(trainable {tot['trainable_params']:,}, index {tot['index_params']:,}, "
        f"trainable fraction {tot['trainable_fraction']:.3f})"
    )


def cmd_compress(args) -> int:
    store = read_weight_store(args.store)
    if args.plan_in:
        plan = strategy.plan_from_json_dict(json.loads(Path(args.plan_in).read_text()))
    else:
        specs = strategy.layer_specs(store.layers, _policy(args))
        plan = _plan_from_args(args, specs)
    _report_notes(plan)
    if args.plan_out:
        Path(args.plan_out).write_text(json.dumps(strategy.plan_to_json_dict(plan), indent=2) + "\n")

    records, layer_nsse = _compress_store(store, plan, args.jobs, not args.no_reorder)
    container.write_compressed(records, args.out)
    report = metrics.footprint(records, store, plan, layer_nsse)
    agg = _aggregate_nsse(layer_nsse, store)
    if args.report:
        _write_report(report, args.report, {
            "model": store.model,
            "strategy": plan.strategy,
            "hyperparameters": plan.hyperparameters,
            "reference": plan.reference,
            "aggregate_nsse": agg,
        })
    print(f"compressed {len(plan.compressed_entries)} of {len(store.layers)} layers -> {args.out}")
    _print_totals(report)
    print(f"aggregate nSSE: {agg:.6g}")
    return 0


def _restored_store(records, model: str) -> WeightStore:
    layers = []
    for rec in records:
        data = codec.decompress_layer(rec.to_layer())
        role = ROLE_WEIGHT if len(rec.original_shape) in (2, 4) else ROLE_PASSTHROUGH
        layers.append(LayerRecord(rec.name, rec.original_shape, dtype_name(data.dtype), data, role))
    return WeightStore(model=model, layers=layers)


def cmd_decompress(args) -> int:
    records = container.read_compressed(args.container)
    restored = _restored_store(records, model=Path(args.container).stem)
    write_weight_store(restored, args.out)
    print(f"decompressed {len(records)} layers -> {args.out}")
    if args.store:
        original = read_weight_store(args.store)
        err = metrics.error_report(original, restored)
        print(f"aggregate nSSE vs original: {err.aggregate:.6g}")
        if args.report:
            metrics.write_report_json(
                {"aggregate_nsse": err.aggregate, "layers": err.per_layer}, args.report
            )
    return 0


def cmd_stats(args) -> int:
    model, entries = read_manifest(args.store)
    specs = strategy.layer_specs(entries, _policy(args))
    plan = _plan_from_args(args, specs)
    _report_notes(plan)
    if args.plan_out:
        Path(args.plan_out).write_text(json.dumps(strategy.plan_to_json_dict(plan), indent=2) + "\n")
    report = metrics.plan_footprint(specs, plan)
    print(f"model: {model or '(unnamed)'}  strategy: {plan.strategy}  "
          f"hyperparameters: {plan.hyperparameters}")
    if plan.reference:
        print(f"reference layer: {plan.reference}")
    _print_totals(report)
    if args.report:
        _write_report(report, args.report, {
            "model": model,
            "strategy": plan.strategy,
            "hyperparameters": plan.hyperparameters,
            "reference": plan.reference,
        })
    return 0


_SWEEP_COLUMNS = ["strategy", "g", "r", "method", "metric", "original_params",
                  "stored_params", "trainable_params", "index_params", "nsse", "status"]


def cmd_sweep(args) -> int:
    store = read_weight_store(args.store)
    specs = strategy.layer_specs(store.layers, _policy(args))
    method = _method(args)

    gs = _split_ints(args.g_list, "--g")
    rs = _split_floats(args.r_list, "--r") if args.r_list else []
    rps = _split_floats(args.r_prime_list, "--r-prime") if args.r_prime_list else []

    if args.strategy == strategy.STRATEGY_UNIFORM:
        cells = [(g, r) for g in gs for r in rs]
    elif args.strategy == strategy.STRATEGY_PROGRESSIVE_R:
        cells = [(g, rp) for g in gs for rp in rps]
    else:
        cells = [(None, r) for r in rs]

    rows = []
    for g, value in cells:
        row = {"strategy": args.strategy, "g": "" if g is None else g, "r": value,
               "method": args.method, "metric": args.metric, "status": "ok"}
        try:
            if args.strategy == strategy.STRATEGY_UNIFORM:
                plan = strategy.plan_uniform(specs, value, g, args.metric, method)
            elif args.strategy == strategy.STRATEGY_PROGRESSIVE_R:
                plan = strategy.plan_progressive_r(specs, value, g, args.metric, method)
            else:
                plan = strategy.plan_progressive_g(specs, value, args.metric, method)
            records, layer_nsse = _compress_store(store, plan, args.jobs, not args.no_reorder)
            totals = metrics.footprint(records, store, plan, layer_nsse).totals
            row.update({k: totals[k] for k in
                        ("original_params", "stored_params", "trainable_params", "index_params")})
            row["nsse"] = _aggregate_nsse(layer_nsse, store)
        except SpcwError as exc:
            row["status"] = f"error: {exc}"
        rows.append(row)

    import csv as _csv

    with Path(args.out).open("w", newline="") as fh:
        writer = _csv.DictWriter(fh, fieldnames=_SWEEP_COLUMNS, restval="")
        writer.writeheader()
        writer.writerows(rows)
    print(f"swept {len(rows)} configurations -> {args.out}")
    return 0


def _reencode(rec, data: np.ndarray) -> np.ndarray:
    """Coefficients that compressing ``data`` at the record's recorded
    parameters (g, t, stored ordering) would produce."""
    from .dct import build_basis, forward_truncated
    from .reorder import Ordering, apply_ordering

    gm = codec.reshape_to_groups(data, rec.g, rec.name)
    if rec.method == codec.METHOD_DCT:
        rows = apply_ordering(gm.data, Ordering.from_forward(rec.ordering))
        return forward_truncated(build_basis(rec.row_length).truncated(rec.t), rows)
    return gm.data[:, rec.ordering.astype(np.int64)]


def _verify_record(rec, original: LayerRecord | None) -> tuple[str | None, dict]:
    """Check one record's round-trip invariant at its recorded parameters.

    Without a store: re-encoding the reconstruction with the recorded
    ordering and basis must reproduce the stored coefficients (orthogonal
    projection is idempotent), which catches inconsistent metadata and
    non-finite data.  With a store: the stored coefficients must match
    re-encoding the original layer, and lossless records must reproduce the
    original tensor to dtype tolerance.
    """
    restored = codec.decompress_layer(rec.to_layer())
    info: dict = {}
    f32 = rec.dtype == "f32"
    coeff_tol = (1e-4 if f32 else 1e-9) * (
        1.0 + (float(np.max(np.abs(rec.coefficients))) if rec.coefficients.size else 0.0)
    )

    if rec.method != codec.METHOD_PASSTHROUGH:
        source = restored if original is None else original.data
        again = _reencode(rec, source)
        err = float(np.max(np.abs(again - rec.coefficients))) if rec.coefficients.size else 0.0
        if not np.isfinite(err) or err > coeff_tol:
            what = "projection drift" if original is None else "coefficient mismatch vs original"
            return f"{what}: {err:.3g} exceeds {coeff_tol:.3g}", info

    if original is not None:
        if tuple(original.shape) != rec.original_shape:
            return f"shape {rec.original_shape} does not match store {tuple(original.shape)}", info
        scale = 1.0 + float(np.max(np.abs(original.data)))
        err = float(np.max(np.abs(np.asarray(restored, np.float64) -
                                  np.asarray(original.data, np.float64))))
        info["max_abs_err"] = err
        lossless = rec.method == codec.METHOD_PASSTHROUGH or rec.t == rec.row_length
        if lossless and err > (1e-5 if f32 else 1e-11) * scale:
            return f"lossless layer differs from original by {err:.3g}", info
    return None, info


def cmd_verify(args) -> int:
    records = container.read_compressed(args.container)
    store = read_weight_store(args.store) if args.store else None
    failures = 0
    worst = 0.0
    for rec in records:
        original = store.layer(rec.name) if store is not None else None
        problem, info = _verify_record(rec, original)
        if "max_abs_err" in info:
            worst = max(worst, info["max_abs_err"])
        if problem:
            failures += 1
            print(f"FAIL {rec.name}: {problem}", file=sys.stderr)
    if store is not None:
        print(f"verified {len(records)} layers, max abs reconstruction error {worst:.3g}")
    else:
        print(f"verified {len(records)} layers")
    if failures:
        print(f"error: {failures} layer(s) failed verification", file=sys.stderr)
        return 1
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="spcw", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="compress a weight store into a .spcw container")
    p.add_argument("--store", required=True, help="weight store directory")
    p.add_argument("--out", required=True, help="output .spcw path")
    _add_strategy_flags(p)
    _add_policy_flags(p)
    p.add_argument("--no-reorder", action="store_true",
                   help="skip greedy reordering (ablation baseline)")
    p.add_argument("--plan-in", default=None, help="execute a previously saved plan")
    p.add_argument("--plan-out", default=None, help="save the resolved plan as JSON")
    p.add_argument("--report", default=None, help="write a report (.json or .csv)")
    p.add_argument("--jobs", type=int, default=1, help="layers to compress in parallel")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("decompress", help="reconstruct a weight store from a container")
    p.add_argument("--container", required=True)
    p.add_argument("--out", required=True, help="output store directory")
    p.add_argument("--store", default=None, help="original store, for an error report")
    p.add_argument("--report", default=None, help="write per-layer nSSE report (JSON)")
    p.set_defaults(func=cmd_decompress)

    p = sub.add_parser("stats", help="footprint accounting from the manifest alone")
    p.add_argument("--store", required=True, help="store directory (only manifest.json is read)")
    _add_strategy_flags(p)
    _add_policy_flags(p)
    p.add_argument("--plan-out", default=None)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("sweep", help="grid of configurations -> CSV summary")
    p.add_argument("--store", required=True)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--strategy", choices=[strategy.STRATEGY_UNIFORM,
                                          strategy.STRATEGY_PROGRESSIVE_R,
                                          strategy.STRATEGY_PROGRESSIVE_G],
                   default=strategy.STRATEGY_UNIFORM)
    p.add_argument("--g", dest="g_list", default="", metavar="G,G,...",
                   help="group counts (uniform, progressive-r)")
    p.add_argument("--r", dest="r_list", default="", metavar="R,R,...",
                   help="rates (uniform, progressive-g)")
    p.add_argument("--r-prime", dest="r_prime_list", default="", metavar="R',...",
                   help="rate increases (progressive-r)")
    p.add_argument("--metric", choices=["euclidean", "manhattan", "cosine"], default="euclidean")
    p.add_argument("--method", choices=["dct", "l1"], default="dct")
    _add_policy_flags(p)
    p.add_argument("--no-reorder", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="check container invariants and round-trip quality")
    p.add_argument("--container", required=True)
    p.add_argument("--store", default=None, help="original store for reconstruction checks")
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        return args.func(args)
    except SpcwError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:  # noqa: BLE001 - anything else is an internal error
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
