"""Spectral (DCT-domain) compression of CNN weight tensors.

Weight tensors are flattened into g rows, the columns are chained by a
greedy nearest-neighbor ordering so similar channels sit side by side,
and each row keeps only its t lowest DCT frequencies.  Decompression is
the exact inverse pipeline; at r = 1 it is lossless up to dtype rounding.
"""

from .codec import (
    CompressedLayer,
    GroupMatrix,
    compress_layer,
    decompress_layer,
    l1_prune_layer,
    passthrough_layer,
    reshape_from_groups,
    reshape_to_groups,
)
from .container import CompressedLayerRecord, read_compressed, record_from_layer, write_compressed
from .dct import DctBasis, TruncatedBasis, build_basis, forward_truncated, inverse_truncated
from .errors import CodecError, ContainerError, PlanError, SpcwError, StoreError
from .metrics import conv2d_reference, error_report, footprint, nsse, plan_footprint
from .reorder import DistanceMetric, Ordering, apply_inverse_ordering, apply_ordering, compute_ordering
from .store import LayerRecord, WeightStore, read_manifest, read_weight_store, write_weight_store
from .strategy import (
    CompressionPlan,
    InclusionPolicy,
    LayerSpec,
    layer_specs,
    plan_progressive_g,
    plan_progressive_r,
    plan_uniform,
    select_reference_layer,
)

__version__ = "0.1.0"
