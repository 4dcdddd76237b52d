"""H^2-matrix arithmetic: exact products and recompression with error control."""

from .geometry import (
    ADMISSIBLE,
    DENSE,
    SPLIT,
    Block,
    BlockTree,
    BoundingBox,
    Cluster,
    ClusterTree,
    TriangleMesh,
    admissible,
    build_block_tree,
    build_cluster_tree,
    build_sphere_mesh,
    load_mesh,
    save_mesh,
)
from .h2core import (
    BasisProductMap,
    ClusterBasis,
    H2Matrix,
    basis_products,
    block_apply,
    block_apply_adjoint,
    expand_basis,
    h2_matvec,
    h2_matvec_adjoint,
    load_h2matrix,
    save_h2matrix,
    to_dense,
)
from .interpolation import (
    InterpolationScheme,
    SingleLayerLaplace,
    assemble_dense,
    assemble_h2,
    chebyshev_points,
    interpolation_basis,
    transfer_matrix,
)
from .product import (
    Accumulator,
    BranchNode,
    H2View,
    InducedBlockTree,
    InducedNode,
    LeafNode,
    ProductContext,
    ProductDriver,
    ProductNode,
    ProductResult,
    ProductTree,
    StubNode,
    add,
    build_product_tree,
    exact_product,
    finish,
    mul,
    restrict_rows,
    semi_uniform_factors,
    split_node,
    verify_product_admissibility,
    yield_of,
)
from .compression import (
    BlockLowRank,
    LowRankBlock,
    ProductStats,
    RecompressionState,
    TruncationControl,
    adaptive_col_basis,
    adaptive_row_basis,
    agglomerate,
    assemble_recompressed,
    block_norms,
    coarsen,
    coarsen_product,
    lowrank_truncate,
    multiply,
    recompress,
    recompress_with_state,
    spectral_norm_lower_bound,
)

__all__ = [
    "ADMISSIBLE",
    "DENSE",
    "SPLIT",
    "Accumulator",
    "BasisProductMap",
    "Block",
    "BlockLowRank",
    "BlockTree",
    "BoundingBox",
    "BranchNode",
    "Cluster",
    "ClusterBasis",
    "ClusterTree",
    "H2Matrix",
    "H2View",
    "InducedBlockTree",
    "InducedNode",
    "InterpolationScheme",
    "LeafNode",
    "LowRankBlock",
    "ProductContext",
    "ProductDriver",
    "ProductNode",
    "ProductResult",
    "ProductStats",
    "ProductTree",
    "RecompressionState",
    "SingleLayerLaplace",
    "StubNode",
    "TriangleMesh",
    "TruncationControl",
    "adaptive_col_basis",
    "adaptive_row_basis",
    "add",
    "admissible",
    "agglomerate",
    "assemble_dense",
    "assemble_h2",
    "assemble_recompressed",
    "basis_products",
    "block_apply",
    "block_apply_adjoint",
    "block_norms",
    "build_block_tree",
    "build_cluster_tree",
    "build_product_tree",
    "build_sphere_mesh",
    "chebyshev_points",
    "coarsen",
    "coarsen_product",
    "exact_product",
    "expand_basis",
    "finish",
    "h2_matvec",
    "h2_matvec_adjoint",
    "interpolation_basis",
    "load_h2matrix",
    "load_mesh",
    "lowrank_truncate",
    "mul",
    "multiply",
    "recompress",
    "recompress_with_state",
    "restrict_rows",
    "save_h2matrix",
    "save_mesh",
    "semi_uniform_factors",
    "spectral_norm_lower_bound",
    "split_node",
    "to_dense",
    "transfer_matrix",
    "verify_product_admissibility",
    "yield_of",
]

__version__ = "0.1.0"
