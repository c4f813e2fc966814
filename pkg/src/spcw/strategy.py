"""Per-layer compression plans: uniform, progressive-r, progressive-g.

The progressive strategies derive per-layer parameters from layer size
relative to the smallest compressed layer (the reference).  With
p = m*n*k^2 and p1 the reference size:

    progressive-r:  r = 1 + r' * sqrt(p) / sqrt(p1)      (fixed g)
    progressive-g:  g = max(2, 2^floor(log2(sqrt(p/p1))))  (fixed r)

so bigger layers are compressed harder (progressive-r) or reshaped into
more, shorter rows (progressive-g).  Layers a strategy cannot handle
(g does not divide the element count, or t would be zero) degrade to
passthrough entries with a note instead of failing the whole plan.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .codec import METHOD_DCT, METHOD_L1, conv_shape
from .errors import PlanError
from .reorder import DistanceMetric
from .store import ROLE_WEIGHT

__all__ = [
    "LayerSpec",
    "InclusionPolicy",
    "PlanEntry",
    "CompressionPlan",
    "layer_specs",
    "select_reference_layer",
    "plan_uniform",
    "plan_progressive_r",
    "plan_progressive_g",
    "plan_to_json_dict",
    "plan_from_json_dict",
]

STRATEGY_UNIFORM = "uniform"
STRATEGY_PROGRESSIVE_R = "progressive-r"
STRATEGY_PROGRESSIVE_G = "progressive-g"


@dataclass(frozen=True)
class LayerSpec:
    """A layer as the planner sees it: name, shape, and inclusion state."""

    name: str
    shape: tuple[int, ...]
    include: bool
    note: str = ""

    @property
    def param_count(self) -> int:
        p = 1
        for d in self.shape:
            p *= int(d)
        return p


@dataclass(frozen=True)
class InclusionPolicy:
    """Which weight layers a plan compresses.

    ``skip_first`` drops the first compressible layer in manifest order
    (the usual treatment of a network's stem convolution); ``exclude``
    drops layers by name and ``min_params`` drops small layers outright.
    """

    exclude: tuple[str, ...] = ()
    min_params: int = 0
    skip_first: bool = True


def layer_specs(entries, policy: InclusionPolicy = InclusionPolicy()) -> list[LayerSpec]:
    """Classify store/manifest entries into included and passthrough specs.

    ``entries`` may be ManifestEntry or LayerRecord objects (anything with
    ``name``, ``shape``, and ``role``).
    """
    unknown = set(policy.exclude) - {e.name for e in entries}
    if unknown:
        raise PlanError(f"exclude list names unknown layers: {sorted(unknown)}")

    specs = []
    first_seen = False
    for e in entries:
        shape = tuple(int(d) for d in e.shape)
        compressible = e.role == ROLE_WEIGHT and conv_shape(shape) is not None
        if not compressible:
            specs.append(LayerSpec(e.name, shape, False, "not a compressible weight tensor"))
            continue
        note = ""
        include = True
        if not first_seen:
            first_seen = True
            if policy.skip_first:
                include, note = False, "first weight layer excluded by policy"
        if include and e.name in policy.exclude:
            include, note = False, "excluded by name"
        if include and LayerSpec(e.name, shape, True).param_count < policy.min_params:
            include, note = False, f"below min-params threshold {policy.min_params}"
        specs.append(LayerSpec(e.name, shape, include, note))
    return specs


def select_reference_layer(specs: list[LayerSpec]) -> LayerSpec:
    """The smallest included layer; ties go to the earliest in manifest order."""
    included = [s for s in specs if s.include]
    if not included:
        raise PlanError("no layers are included for compression")
    return min(included, key=lambda s: s.param_count)


@dataclass(frozen=True)
class PlanEntry:
    name: str
    method: str  # dct | l1_prune | passthrough
    g: int | None
    r: float | None
    t: int | None
    metric: str | None
    note: str = ""


@dataclass
class CompressionPlan:
    strategy: str
    entries: list[PlanEntry] = field(default_factory=list)
    reference: str | None = None
    hyperparameters: dict = field(default_factory=dict)

    def entry(self, name: str) -> PlanEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise PlanError(f"plan has no entry for layer {name!r}")

    @property
    def compressed_entries(self) -> list[PlanEntry]:
        return [e for e in self.entries if e.method != "passthrough"]


def _check_method(method: str) -> str:
    if method not in (METHOD_DCT, METHOD_L1):
        raise PlanError(f"unknown compression method {method!r}")
    return method


def _build_plan(specs, strategy, assign, metric, method, hyper, reference=None):
    metric = DistanceMetric(metric).value
    entries = []
    for s in specs:
        if not s.include:
            entries.append(PlanEntry(s.name, "passthrough", None, None, None, None, s.note))
            continue
        g, r = assign(s)
        p = s.param_count
        if p % g != 0:
            entries.append(
                PlanEntry(s.name, "passthrough", None, None, None, None,
                          f"g={g} does not divide {p} elements")
            )
            continue
        L = p // g
        t = math.floor(L / r)
        if t < 1:
            entries.append(
                PlanEntry(s.name, "passthrough", None, None, None, None,
                          f"r={r:.6g} keeps no coefficients of a length-{L} row")
            )
            continue
        entries.append(PlanEntry(s.name, method, int(g), float(r), int(t), metric))
    return CompressionPlan(strategy=strategy, entries=entries, reference=reference,
                           hyperparameters=dict(hyper))


def plan_uniform(specs, r: float, g: int, metric="euclidean", method=METHOD_DCT) -> CompressionPlan:
    """Same (g, r) everywhere."""
    method = _check_method(method)
    if r < 1:
        raise PlanError(f"uniform strategy needs r >= 1, got {r}")
    if g < 1:
        raise PlanError(f"uniform strategy needs g >= 1, got {g}")
    select_reference_layer(specs)  # errors out when nothing is included
    return _build_plan(specs, STRATEGY_UNIFORM, lambda s: (g, float(r)), metric, method,
                       {"g": g, "r": float(r), "metric": DistanceMetric(metric).value, "method": method})


def plan_progressive_r(specs, r_prime: float, g: int, metric="euclidean", method=METHOD_DCT) -> CompressionPlan:
    """Fixed g; per-layer r grows with the square root of layer size."""
    method = _check_method(method)
    if r_prime <= 0:
        raise PlanError(f"progressive-r needs r' > 0, got {r_prime}")
    if g < 1:
        raise PlanError(f"progressive-r needs g >= 1, got {g}")
    ref = select_reference_layer(specs)
    sqrt_ref = math.sqrt(ref.param_count)

    def assign(s):
        return g, 1.0 + r_prime * math.sqrt(s.param_count) / sqrt_ref

    return _build_plan(specs, STRATEGY_PROGRESSIVE_R, assign, metric, method,
                       {"g": g, "r_prime": float(r_prime),
                        "metric": DistanceMetric(metric).value, "method": method},
                       reference=ref.name)


def _pow2_group(p: int, p_ref: int) -> int:
    # largest e with 2^e <= sqrt(p / p_ref), i.e. 4^e * p_ref <= p; integer
    # arithmetic keeps the power-of-two boundaries exact
    e = 0
    while 4 ** (e + 1) * p_ref <= p:
        e += 1
    return max(2, 2**e)


def plan_progressive_g(specs, r: float, metric="euclidean", method=METHOD_DCT) -> CompressionPlan:
    """Fixed r; per-layer g is the power of two at or below sqrt(p / p_ref)."""
    method = _check_method(method)
    if r < 1:
        raise PlanError(f"progressive-g needs r >= 1, got {r}")
    ref = select_reference_layer(specs)

    def assign(s):
        return _pow2_group(s.param_count, ref.param_count), float(r)

    return _build_plan(specs, STRATEGY_PROGRESSIVE_G, assign, metric, method,
                       {"r": float(r), "metric": DistanceMetric(metric).value, "method": method},
                       reference=ref.name)


def plan_to_json_dict(plan: CompressionPlan) -> dict:
    return {
        "strategy": plan.strategy,
        "reference": plan.reference,
        "hyperparameters": plan.hyperparameters,
        "entries": [
            {"name": e.name, "method": e.method, "g": e.g, "r": e.r, "t": e.t,
             "metric": e.metric, "note": e.note}
            for e in plan.entries
        ],
    }


def plan_from_json_dict(doc: dict) -> CompressionPlan:
    try:
        entries = [
            PlanEntry(d["name"], d["method"], d.get("g"), d.get("r"), d.get("t"),
                      d.get("metric"), d.get("note", ""))
            for d in doc["entries"]
        ]
        plan = CompressionPlan(
            strategy=doc["strategy"],
            entries=entries,
            reference=doc.get("reference"),
            hyperparameters=dict(doc.get("hyperparameters", {})),
        )
    except (KeyError, TypeError) as exc:
        raise PlanError(f"malformed plan document: {exc}") from exc
    for e in plan.entries:
        if e.method == "passthrough":
            continue
        if e.method not in (METHOD_DCT, METHOD_L1) or not e.g or not e.t or e.t < 1:
            raise PlanError(f"plan entry for {e.name!r} is invalid")
    return plan
