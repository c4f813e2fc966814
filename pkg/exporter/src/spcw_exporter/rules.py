"""Name-pattern rules deciding how each checkpoint tensor is exported.

A rule maps a name regex to a classification:

* ``conv_weight`` — exported as-is (must be 4-D with a square kernel)
* ``fc_weight``   — a 2-D matrix, exported reshaped to (m, n, 1, 1)
* ``passthrough`` — carried into the store but never compressed

Rules are tried in order and the first match wins; a tensor no rule
matches is an error.  The shipped presets encode which layers of each
architecture are worth compressing: for ResNet-50 every convolution plus
the output layer, and for MobileNet-V2 only the 1x1 resampling
convolutions from block 8 on plus the output layer, leaving the stem, the
first seven blocks, and all depthwise convolutions untouched (the chosen
block boundary is features.0 through features.7 in torchvision naming).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

CONV_WEIGHT = "conv_weight"
FC_WEIGHT = "fc_weight"
PASSTHROUGH = "passthrough"


class ExportError(Exception):
    pass


@dataclass(frozen=True)
class ExportRule:
    pattern: str
    kind: str  # conv_weight | fc_weight | passthrough

    def matches(self, name: str) -> bool:
        return re.search(self.pattern, name) is not None


RESNET50_RULES = [
    ExportRule(r"^conv1\.weight$", CONV_WEIGHT),
    ExportRule(r"\.conv\d\.weight$", CONV_WEIGHT),
    ExportRule(r"\.downsample\.0\.weight$", CONV_WEIGHT),
    ExportRule(r"^fc\.weight$", FC_WEIGHT),
    ExportRule(r".", PASSTHROUGH),
]

MOBILENET_V2_RULES = [
    # stem and the first seven inverted-residual blocks stay intact
    ExportRule(r"^features\.[0-7]\.", PASSTHROUGH),
    # 1x1 expand / project convolutions of the remaining blocks
    ExportRule(r"^features\.\d+\.conv\.0\.0\.weight$", CONV_WEIGHT),
    ExportRule(r"^features\.\d+\.conv\.2\.weight$", CONV_WEIGHT),
    # final 1x1 convolution and the classifier
    ExportRule(r"^features\.18\.0\.weight$", CONV_WEIGHT),
    ExportRule(r"^classifier\.1\.weight$", FC_WEIGHT),
    ExportRule(r".", PASSTHROUGH),
]

# for arbitrary local checkpoints: classify by shape, compress everything
# weight-shaped
GENERIC_BY_SHAPE = None


def classify(name: str, shape: tuple[int, ...], rules) -> str:
    if rules is GENERIC_BY_SHAPE:
        if len(shape) == 4:
            return CONV_WEIGHT
        if len(shape) == 2:
            return FC_WEIGHT
        return PASSTHROUGH
    for rule in rules:
        if rule.matches(name):
            return rule.kind
    raise ExportError(f"tensor {name!r} matches no export rule")


PRESETS = {
    "resnet50": RESNET50_RULES,
    "mobilenet_v2": MOBILENET_V2_RULES,
}
