"""Exact Katz proximity queries on undirected graphs.

Builds a reusable index (vertex-separator partition, per-part Cholesky
factors, low-rank corrected Schur preconditioner) and answers per-node
Katz queries by preconditioned conjugate gradient, plus link prediction
utilities that rerank Katz candidates by anchor-profile correlation.
"""

from .factor import (
    BlockCholesky,
    DenseCholesky,
    FactorizationError,
    LowRankCorrection,
    SpectrumError,
    apply_approx_schur_inverse,
    apply_correction,
    block_cholesky,
    dense_cholesky,
    lanczos_topk,
)
from .graph import (
    ConvergenceError,
    Graph,
    GraphParseError,
    InadmissibleAlphaError,
    KatzParams,
    from_edges,
    hardest_alpha,
    largest_connected_component,
    load_edge_list,
    spectral_norm,
)
from .index import (
    FORMAT_VERSION,
    IndexChecksumError,
    IndexFormatError,
    IndexMagicError,
    IndexVersionError,
    KatzIndex,
    build_index,
    load_index,
    save_index,
)
from .linkpred import (
    EmptyPositivesError,
    LinkPredDataset,
    RankedPrediction,
    evaluate_recall,
    evaluate_recall_sweep,
    katz_rank,
    pearson,
    sparse_katz,
    temporal_split,
)
from .partition import (
    BlockPartition,
    DisconnectedGraphError,
    PartitionConfig,
    build_blocks,
    check_partition,
    partition_vertex_separator,
)
from .solver import (
    KatzVector,
    SolveReport,
    UnknownNodeError,
    cg,
    lrc_pcg,
    query,
    query_cg_baseline,
    schur_rhs,
)

__version__ = "0.1.0"
