//! Approximate top-k maximum inner product search over learned sparse
//! vectors.
//!
//! The engine pairs a forward index with a statically pruned inverted index
//! whose lists are clustered into blocks, each carrying a summary vector
//! that gates full evaluation. Two query-time extensions are included:
//! ordered block traversal, which visits a list's blocks by descending
//! summary score, and refinement of the result pool through a precomputed
//! k-nearest-neighbor graph.
//!
//! Modules:
//!
//! * [`vector`], [`topk`] — sparse vectors, inner products, bounded top-k.
//! * [`index`] — forward index and inverted index construction.
//! * [`search`] — term-at-a-time query processing with block skipping.
//! * [`graph`] — k-NN graph construction, storage, and result refinement.
//! * [`eval`] — exact oracle, benchmarks, budgeted sweeps, breakdowns.
//! * [`io`] — bit-exact binary file formats.
//! * [`synthetic`] — deterministic synthetic collections.

pub mod eval;
pub mod graph;
pub mod index;
pub mod io;
pub mod search;
pub mod synthetic;
pub mod topk;
pub mod vector;

pub use graph::{build_knn_approx, build_knn_exact, refine_with_knn, KnnGraph};
pub use index::{
    build_forward, build_inverted, cluster_list, index_size_bytes, summarize, BuildParams,
    ForwardIndex, InvertedIndex, PostingBlock, DEFAULT_SEED,
};
pub use search::{
    search, search_with_graph, summary_scores, traversal_order, SearchParams, SearchStats,
    TraversalPolicy,
};
pub use topk::ScoredHeap;
pub use vector::{dot, query_coordinates, CoordId, DocId, SparseVector};
