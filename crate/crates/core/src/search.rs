//! Term-at-a-time approximate top-k query processing.
//!
//! The engine walks the inverted lists of the `cut` highest-weight query
//! coordinates. Within a list, every block summary is scored against the
//! query; a block's documents are fully evaluated through the forward index
//! only when `heap_factor * summary_score` exceeds the heap threshold.

use std::time::Instant;

use thiserror::Error;

use crate::graph::KnnGraph;
use crate::index::{ForwardIndex, InvertedIndex, PostingBlock};
use crate::topk::ScoredHeap;
use crate::vector::{query_coordinates, DenseScratch, DocId, SparseVector};

#[derive(Debug, Error, PartialEq, Clone)]
pub enum SearchError {
    #[error("k must be positive")]
    ZeroK,
    #[error("cut must be positive")]
    ZeroCut,
    #[error("heap_factor must be in (0, 1], got {heap_factor}")]
    HeapFactorOutOfRange { heap_factor: f32 },
    #[error("expand requested but no k-NN graph was supplied")]
    ExpandRequiresGraph,
}

/// The order in which a list's blocks are visited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraversalPolicy {
    /// Stored block order.
    Arbitrary,
    /// Descending summary score within the first processed list only.
    #[default]
    FirstListOrdered,
    /// Descending summary score within every list.
    AllListsOrdered,
}

/// Query-time parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchParams {
    /// Results requested.
    pub k: usize,
    /// Number of query coordinates whose lists are processed.
    pub cut: usize,
    /// Scale applied to summary scores before the threshold comparison, in
    /// (0, 1]. Smaller values skip more blocks.
    pub heap_factor: f32,
    pub obt: TraversalPolicy,
    /// Whether to refine the results with a k-NN graph afterwards.
    pub expand: bool,
}

impl SearchParams {
    pub fn new(
        k: usize,
        cut: usize,
        heap_factor: f32,
        obt: TraversalPolicy,
        expand: bool,
    ) -> Result<Self, SearchError> {
        let p = Self {
            k,
            cut,
            heap_factor,
            obt,
            expand,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.k == 0 {
            return Err(SearchError::ZeroK);
        }
        if self.cut == 0 {
            return Err(SearchError::ZeroCut);
        }
        if !(self.heap_factor > 0.0 && self.heap_factor <= 1.0) {
            return Err(SearchError::HeapFactorOutOfRange {
                heap_factor: self.heap_factor,
            });
        }
        Ok(())
    }
}

/// Work counters for one query. `per_list_nanos` is populated only by the
/// timed entry points so that headline latency runs stay unperturbed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchStats {
    pub lists_visited: u64,
    /// Summary inner products computed.
    pub blocks_scored: u64,
    /// Blocks whose documents were evaluated with the forward index.
    pub blocks_evaluated: u64,
    /// Forward-index inner products computed (including graph refinement).
    pub docs_scored: u64,
    pub per_list_nanos: Vec<u64>,
}

impl SearchStats {
    pub fn merge(&mut self, other: &SearchStats) {
        self.lists_visited += other.lists_visited;
        self.blocks_scored += other.blocks_scored;
        self.blocks_evaluated += other.blocks_evaluated;
        self.docs_scored += other.docs_scored;
    }

    /// Deterministic total work: blocks evaluated plus documents scored.
    pub fn total_work(&self) -> u64 {
        self.blocks_evaluated + self.docs_scored
    }
}

/// Inner product of the query with every block summary, in block order.
pub fn summary_scores(q: &SparseVector, list: &[PostingBlock]) -> Vec<f32> {
    list.iter()
        .map(|b| crate::vector::dot(q, &b.summary))
        .collect()
}

/// Visit order over block indices for one list.
///
/// `list_rank` is the 0-based position of the list in the query's cut
/// sequence. Ordered policies sort by descending score with ties broken by
/// ascending block index.
pub fn traversal_order(
    scores: &[f32],
    policy: TraversalPolicy,
    list_rank: usize,
) -> Vec<usize> {
    let ordered = match policy {
        TraversalPolicy::Arbitrary => false,
        TraversalPolicy::FirstListOrdered => list_rank == 0,
        TraversalPolicy::AllListsOrdered => true,
    };
    let mut order: Vec<usize> = (0..scores.len()).collect();
    if ordered {
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| a.cmp(&b)));
    }
    order
}

fn base_search<const TIMED: bool>(
    q: &SparseVector,
    idx: &InvertedIndex,
    fwd: &ForwardIndex,
    params: &SearchParams,
) -> (ScoredHeap, SearchStats) {
    let mut heap = ScoredHeap::new(params.k);
    let mut stats = SearchStats::default();

    let coords = query_coordinates(q);
    let cut = params.cut.min(coords.len());

    let scratch_dim = fwd
        .dim()
        .max(q.max_id().map_or(0, |m| m as u64 + 1)) as usize;
    let mut scratch = DenseScratch::new(scratch_dim);
    scratch.load(q);

    let mut scores: Vec<f32> = Vec::new();
    for (rank, &coord) in coords[..cut].iter().enumerate() {
        let started = TIMED.then(Instant::now);
        stats.lists_visited += 1;
        if let Some(blocks) = idx.list(coord) {
            scores.clear();
            scores.extend(blocks.iter().map(|b| scratch.dot(&b.summary)));
            stats.blocks_scored += blocks.len() as u64;
            for j in traversal_order(&scores, params.obt, rank) {
                if params.heap_factor * scores[j] > heap.min_score() {
                    stats.blocks_evaluated += 1;
                    for &d in &blocks[j].docs {
                        let score = scratch.dot(fwd.doc(d));
                        stats.docs_scored += 1;
                        heap.insert(score, d);
                    }
                }
            }
        }
        if let Some(t) = started {
            stats.per_list_nanos.push(t.elapsed().as_nanos() as u64);
        }
    }
    (heap, stats)
}

/// Base top-k search over the inverted index. Returns the heap contents
/// sorted by (score desc, id asc) plus the work counters. Query coordinates
/// absent from the index are skipped silently.
pub fn search(
    q: &SparseVector,
    idx: &InvertedIndex,
    fwd: &ForwardIndex,
    params: &SearchParams,
) -> (Vec<(DocId, f32)>, SearchStats) {
    let (heap, stats) = base_search::<false>(q, idx, fwd, params);
    (heap.into_sorted(), stats)
}

/// As [`search`], additionally recording per-list wall-clock durations.
pub fn search_timed(
    q: &SparseVector,
    idx: &InvertedIndex,
    fwd: &ForwardIndex,
    params: &SearchParams,
) -> (Vec<(DocId, f32)>, SearchStats) {
    let (heap, stats) = base_search::<true>(q, idx, fwd, params);
    (heap.into_sorted(), stats)
}

/// Full query pipeline: base search plus, when `params.expand` is set, k-NN
/// graph refinement of the candidate pool.
pub fn search_with_graph(
    q: &SparseVector,
    idx: &InvertedIndex,
    fwd: &ForwardIndex,
    graph: Option<&KnnGraph>,
    params: &SearchParams,
) -> Result<(Vec<(DocId, f32)>, SearchStats), SearchError> {
    let (mut heap, mut stats) = base_search::<false>(q, idx, fwd, params);
    if params.expand {
        let graph = graph.ok_or(SearchError::ExpandRequiresGraph)?;
        heap = crate::graph::refine_with_knn(q, heap, graph, fwd, &mut stats);
    }
    Ok((heap.into_sorted(), stats))
}
