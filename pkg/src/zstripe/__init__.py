"""Training-free structured sparsification for ViT-style encoders.

A saliency-driven, Z-order-interleaved token permutation turns a static
A-shape block mask into content-adaptive sparse attention, and the same
ordering routes tokens past MLP blocks.  Everything is float32 numpy with
deterministic reductions, plus a toy windowed/global encoder, dense
reference twins, and a benchmarking CLI.
"""

from .attention import (
    AShapeConfig,
    ActiveSet,
    BiasTables,
    achieved_density,
    ashape_attention,
    build_active_set,
    dense_attention_ref,
)
from .encoder import (
    BenchRow,
    BlockCost,
    BlockWeights,
    CostReport,
    EncoderConfig,
    bench,
    bench_csv,
    encoder_forward,
    init_weights,
    parse_config,
)
from .grid import (
    GridShape,
    Permutation,
    apply_permutation,
    invert,
    morton_codes,
    morton_encode,
    morton_order,
    permutation_read,
    permutation_write,
)
from .mlp import (
    MlpWeights,
    RouterConfig,
    kmeans_replace,
    mlp_forward,
    pearson,
    route_mlp,
    token_dissimilarity,
    update_magnitudes,
)
from .saliency import (
    SOBEL_X,
    SOBEL_Y,
    OrderingConfig,
    SaliencyMap,
    group_energy,
    importance_order,
    sobel_magnitude,
    write_pgm,
)
from .stripesort import StripeConfig, block_id_map, block_members, stripe_sort
from .tensor import (
    Rng,
    SptnBadDtype,
    SptnBadMagic,
    SptnBadShape,
    SptnBadVersion,
    SptnError,
    SptnTruncated,
    gelu,
    layernorm,
    mac_count,
    matmul,
    reset_mac_count,
    tensor_read,
    tensor_write,
)

__version__ = "0.1.0"

__all__ = [
    "AShapeConfig",
    "ActiveSet",
    "BenchRow",
    "BiasTables",
    "BlockCost",
    "BlockWeights",
    "CostReport",
    "EncoderConfig",
    "GridShape",
    "MlpWeights",
    "OrderingConfig",
    "Permutation",
    "RouterConfig",
    "Rng",
    "SOBEL_X",
    "SOBEL_Y",
    "SaliencyMap",
    "SptnBadDtype",
    "SptnBadMagic",
    "SptnBadShape",
    "SptnBadVersion",
    "SptnError",
    "SptnTruncated",
    "StripeConfig",
    "achieved_density",
    "apply_permutation",
    "ashape_attention",
    "bench",
    "bench_csv",
    "block_id_map",
    "block_members",
    "build_active_set",
    "dense_attention_ref",
    "encoder_forward",
    "gelu",
    "group_energy",
    "importance_order",
    "init_weights",
    "invert",
    "kmeans_replace",
    "layernorm",
    "mac_count",
    "matmul",
    "mlp_forward",
    "morton_codes",
    "morton_encode",
    "morton_order",
    "parse_config",
    "pearson",
    "permutation_read",
    "permutation_write",
    "reset_mac_count",
    "route_mlp",
    "sobel_magnitude",
    "stripe_sort",
    "tensor_read",
    "tensor_write",
    "token_dissimilarity",
    "update_magnitudes",
    "write_pgm",
]
