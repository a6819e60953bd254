//! Exact oracle, accuracy/latency measurement, budgeted parameter sweeps,
//! and the traversal-time breakdown report.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::graph::{build_knn_approx, GraphError, KnnGraph, GRAPH_HEADER_BYTES};
use crate::index::{
    attach_summaries, build_blocks, index_size_bytes, BuildError, BuildParams, ForwardIndex,
    IndexSizes, InvertedIndex,
};
use crate::search::{
    search_timed, search_with_graph, SearchError, SearchParams, SearchStats, TraversalPolicy,
};
use crate::topk::ScoredHeap;
use crate::vector::{CoordId, DocId, SparseVector};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("k must be positive")]
    ZeroK,
    #[error("k ({k}) exceeds the collection size ({n})")]
    KTooLarge { k: usize, n: usize },
    #[error("ground truth has {truth} queries but {queries} were supplied")]
    QueryCountMismatch { truth: usize, queries: usize },
    #[error("requested k {requested} does not match the ground truth k {truth}")]
    KMismatch { requested: usize, truth: usize },
    #[error("ground truth entry {position} has {len} results, expected k={k}")]
    NonUniformTruth {
        position: usize,
        len: usize,
        k: usize,
    },
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Exact top-k results for a fixed query set, all entries ordered by
/// (score desc, id asc) with exactly `k` per query.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    k: usize,
    entries: Vec<Vec<(DocId, f32)>>,
}

impl GroundTruth {
    pub fn new(k: usize, entries: Vec<Vec<(DocId, f32)>>) -> Result<Self, EvalError> {
        for (position, e) in entries.iter().enumerate() {
            if e.len() != k {
                return Err(EvalError::NonUniformTruth {
                    position,
                    len: e.len(),
                    k,
                });
            }
        }
        Ok(Self { k, entries })
    }

    /// Constructor for callers that guarantee uniformity (e.g. the file
    /// reader, whose layout makes ragged entries unrepresentable).
    pub(crate) fn from_uniform(k: usize, entries: Vec<Vec<(DocId, f32)>>) -> Self {
        debug_assert!(entries.iter().all(|e| e.len() == k));
        Self { k, entries }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, query: usize) -> &[(DocId, f32)] {
        &self.entries[query]
    }

    pub fn entries(&self) -> &[Vec<(DocId, f32)>] {
        &self.entries
    }
}

/// Batch exact scorer over the unpruned inverted lists of a collection.
/// Per-document scores accumulate in ascending coordinate order, matching
/// [`crate::vector::dot`] exactly.
pub(crate) struct ExactScorer {
    lists: HashMap<CoordId, Vec<(DocId, f32)>>,
    n: usize,
}

impl ExactScorer {
    pub fn new(fwd: &ForwardIndex) -> Self {
        let mut lists: HashMap<CoordId, Vec<(DocId, f32)>> = HashMap::new();
        for (doc, vector) in fwd.docs().iter().enumerate() {
            for (coord, weight) in vector.iter() {
                lists.entry(coord).or_default().push((doc as DocId, weight));
            }
        }
        Self { lists, n: fwd.len() }
    }

    /// Scores `q` against every document into `buf` (resized to the
    /// collection size).
    pub fn score_all(&self, q: &SparseVector, buf: &mut Vec<f32>) {
        buf.clear();
        buf.resize(self.n, 0.0);
        for (coord, weight) in q.iter() {
            if let Some(list) = self.lists.get(&coord) {
                for &(doc, doc_weight) in list {
                    buf[doc as usize] += weight * doc_weight;
                }
            }
        }
    }

    /// Exact top-k under (score desc, id asc), optionally excluding one
    /// document.
    pub fn topk_into(
        &self,
        q: &SparseVector,
        k: usize,
        exclude: Option<DocId>,
        buf: &mut Vec<f32>,
    ) -> Vec<(DocId, f32)> {
        self.score_all(q, buf);
        let mut heap = ScoredHeap::new(k);
        for doc in 0..self.n as DocId {
            if exclude != Some(doc) {
                heap.insert(buf[doc as usize], doc);
            }
        }
        heap.into_sorted()
    }
}

/// Exact top-k by a full scan of the forward index.
pub fn exact_topk(
    q: &SparseVector,
    fwd: &ForwardIndex,
    k: usize,
) -> Result<Vec<(DocId, f32)>, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    if k > fwd.len() {
        return Err(EvalError::KTooLarge { k, n: fwd.len() });
    }
    let mut heap = ScoredHeap::new(k);
    for (doc, vector) in fwd.docs().iter().enumerate() {
        heap.insert(crate::vector::dot(q, vector), doc as DocId);
    }
    Ok(heap.into_sorted())
}

/// Exact top-k for every query, computed with the batch scorer. Agrees
/// bitwise with [`exact_topk`] per query.
pub fn build_ground_truth(
    queries: &[SparseVector],
    fwd: &ForwardIndex,
    k: usize,
) -> Result<GroundTruth, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    if k > fwd.len() {
        return Err(EvalError::KTooLarge { k, n: fwd.len() });
    }
    let scorer = ExactScorer::new(fwd);
    let entries: Vec<Vec<(DocId, f32)>> = queries
        .par_iter()
        .map_init(Vec::new, |buf, q| scorer.topk_into(q, k, None, buf))
        .collect();
    Ok(GroundTruth::from_uniform(k, entries))
}

/// Fraction of the true top-k recalled by `result`.
pub fn accuracy(result: &[DocId], truth: &[(DocId, f32)], k: usize) -> f64 {
    debug_assert!(result.len() <= k);
    let truth_ids: HashSet<DocId> = truth.iter().map(|&(d, _)| d).collect();
    let hits = result.iter().filter(|d| truth_ids.contains(d)).count();
    hits as f64 / k as f64
}

/// Latency distribution over the query set, in microseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencySummary {
    pub mean_us: f64,
    pub median_us: f64,
    pub p95_us: f64,
    pub p99_us: f64,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn summarize_latencies(mut per_query_us: Vec<f64>) -> LatencySummary {
    let mean_us = per_query_us.iter().sum::<f64>() / per_query_us.len() as f64;
    per_query_us.sort_by(f64::total_cmp);
    LatencySummary {
        mean_us,
        median_us: percentile(&per_query_us, 50.0),
        p95_us: percentile(&per_query_us, 95.0),
        p99_us: percentile(&per_query_us, 99.0),
    }
}

/// Outcome of running one configuration over a query set.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub build: BuildParams,
    pub search: SearchParams,
    pub kappa: Option<usize>,
    pub queries: usize,
    pub mean_accuracy: f64,
    /// Present when the run was timed (repetitions > 0).
    pub latency: Option<LatencySummary>,
    pub sizes: IndexSizes,
    /// Serialized k-NN graph size, 0 when no graph is attached.
    pub graph_bytes: u64,
    /// Work counters summed over all queries (one untimed pass).
    pub stats: SearchStats,
}

impl RunReport {
    /// Deterministic total work over the query set.
    pub fn total_work(&self) -> u64 {
        self.stats.total_work()
    }
}

/// Size of the serialized graph file for budget accounting.
pub fn graph_file_bytes(graph: &KnnGraph) -> u64 {
    GRAPH_HEADER_BYTES + KnnGraph::payload_bytes(graph.n(), graph.kappa())
}

/// Runs every query sequentially on the calling thread: one untimed pass
/// collecting results and work counters, then `reps` timed passes. With
/// `reps = 0` the run is work-only and `latency` is `None`. Per-query
/// timing covers search plus graph refinement, not I/O or ingestion.
pub fn run_benchmark(
    queries: &[SparseVector],
    fwd: &ForwardIndex,
    idx: &InvertedIndex,
    graph: Option<&KnnGraph>,
    params: &SearchParams,
    truth: &GroundTruth,
    reps: usize,
) -> Result<RunReport, EvalError> {
    params.validate()?;
    if truth.len() != queries.len() {
        return Err(EvalError::QueryCountMismatch {
            truth: truth.len(),
            queries: queries.len(),
        });
    }
    if params.k != truth.k() {
        return Err(EvalError::KMismatch {
            requested: params.k,
            truth: truth.k(),
        });
    }
    if params.expand && graph.is_none() {
        return Err(SearchError::ExpandRequiresGraph.into());
    }

    // Untimed warm-up pass; its results and counters are the reported ones.
    let mut stats = SearchStats::default();
    let mut accuracy_sum = 0.0f64;
    for (i, q) in queries.iter().enumerate() {
        let (hits, query_stats) = search_with_graph(q, idx, fwd, graph, params)?;
        stats.merge(&query_stats);
        let ids: Vec<DocId> = hits.iter().map(|&(d, _)| d).collect();
        accuracy_sum += accuracy(&ids, truth.entry(i), params.k);
    }
    let mean_accuracy = if queries.is_empty() {
        0.0
    } else {
        accuracy_sum / queries.len() as f64
    };

    let latency = (reps > 0 && !queries.is_empty()).then(|| {
        let mut per_query_nanos = vec![0u128; queries.len()];
        for _ in 0..reps {
            for (i, q) in queries.iter().enumerate() {
                let started = Instant::now();
                let _ = search_with_graph(q, idx, fwd, graph, params);
                per_query_nanos[i] += started.elapsed().as_nanos();
            }
        }
        summarize_latencies(
            per_query_nanos
                .into_iter()
                .map(|ns| ns as f64 / 1000.0 / reps as f64)
                .collect(),
        )
    });

    Ok(RunReport {
        build: *idx.params(),
        search: *params,
        kappa: graph.filter(|_| params.expand).map(|g| g.kappa()),
        queries: queries.len(),
        mean_accuracy,
        latency,
        sizes: index_size_bytes(idx, fwd),
        graph_bytes: graph
            .filter(|_| params.expand)
            .map_or(0, graph_file_bytes),
        stats,
    })
}

/// The swept parameter ranges. The default mirrors the reference grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub lambdas: Vec<usize>,
    /// `beta = lambda / divisor` for each divisor.
    pub beta_divisors: Vec<usize>,
    pub alphas: Vec<f32>,
    pub kappas: Vec<usize>,
    pub cuts: Vec<usize>,
    pub heap_factors: Vec<f32>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            lambdas: vec![2000, 2500, 3000, 4000, 5000, 6000],
            beta_divisors: vec![10, 5],
            alphas: vec![0.4, 0.5, 0.6],
            kappas: vec![10, 20, 30, 40, 50],
            cuts: vec![1, 2, 3, 4, 5, 6, 7, 8, 10, 12, 14],
            heap_factors: vec![0.7, 0.8, 0.9, 1.0],
        }
    }
}

/// Which engine variant a sweep exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    /// Arbitrary traversal, no graph.
    Seismic,
    /// Ordered first-list traversal, no graph.
    Obt,
    /// Arbitrary traversal plus graph refinement.
    Knn,
    /// Ordered first-list traversal plus graph refinement.
    Wave,
}

impl SweepMode {
    pub fn policy(self) -> TraversalPolicy {
        match self {
            SweepMode::Seismic | SweepMode::Knn => TraversalPolicy::Arbitrary,
            SweepMode::Obt | SweepMode::Wave => TraversalPolicy::FirstListOrdered,
        }
    }

    pub fn uses_graph(self) -> bool {
        matches!(self, SweepMode::Knn | SweepMode::Wave)
    }

    pub fn label(self) -> &'static str {
        match self {
            SweepMode::Seismic => "seismic",
            SweepMode::Obt => "obt",
            SweepMode::Knn => "knn",
            SweepMode::Wave => "wave",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    /// Auxiliary-structure budget as a multiple of the forward index size.
    pub budget: f64,
    pub mode: SweepMode,
    /// Timed repetitions per configuration; 0 selects by total work
    /// instead of latency.
    pub reps: usize,
    pub seed: u64,
}

/// Best qualifying configuration per accuracy cutoff (90% through 99%).
#[derive(Debug)]
pub struct SweepOutcome {
    pub cells: Vec<(u32, Option<RunReport>)>,
    pub configs_evaluated: usize,
    pub configs_over_budget: usize,
}

pub const SWEEP_CUTOFFS: std::ops::RangeInclusive<u32> = 90..=99;

/// Grid sweep under a memory budget: configurations whose inverted index
/// (plus graph, in graph modes) exceeds `budget` times the forward index
/// size are discarded; for each accuracy cutoff the fastest qualifying
/// configuration wins (least total work when `reps` is 0). Clustering is
/// shared across `alpha` values, which yields indexes identical to direct
/// builds.
pub fn sweep(
    fwd: &ForwardIndex,
    queries: &[SparseVector],
    truth: &GroundTruth,
    grid: &SweepGrid,
    opts: &SweepOptions,
) -> Result<SweepOutcome, EvalError> {
    let mut graphs: BTreeMap<usize, KnnGraph> = BTreeMap::new();
    if opts.mode.uses_graph() {
        for &kappa in &grid.kappas {
            graphs.insert(kappa, build_knn_approx(fwd, kappa)?);
        }
    }
    let kappa_choices: Vec<Option<usize>> = if opts.mode.uses_graph() {
        grid.kappas.iter().map(|&k| Some(k)).collect()
    } else {
        vec![None]
    };

    let mut best: Vec<Option<RunReport>> = vec![None; SWEEP_CUTOFFS.count()];
    let mut configs_evaluated = 0usize;
    let mut configs_over_budget = 0usize;

    for &lambda in &grid.lambdas {
        for &divisor in &grid.beta_divisors {
            let beta = (lambda / divisor).max(1);
            let blocks = build_blocks(fwd, lambda, beta, opts.seed);
            for &alpha in &grid.alphas {
                let params = BuildParams::new(lambda, beta, alpha, opts.seed)?;
                let idx = attach_summaries(fwd, &blocks, params);
                let sizes = index_size_bytes(&idx, fwd);
                for &kappa in &kappa_choices {
                    let graph = kappa.map(|k| &graphs[&k]);
                    let aux_bytes =
                        sizes.inverted_bytes + graph.map_or(0, |g| graph_file_bytes(g));
                    if aux_bytes as f64 > opts.budget * sizes.forward_bytes as f64 {
                        configs_over_budget += 1;
                        continue;
                    }
                    for &heap_factor in &grid.heap_factors {
                        for &cut in &grid.cuts {
                            let search_params = SearchParams {
                                k: truth.k(),
                                cut,
                                heap_factor,
                                obt: opts.mode.policy(),
                                expand: graph.is_some(),
                            };
                            let report = run_benchmark(
                                queries,
                                fwd,
                                &idx,
                                graph,
                                &search_params,
                                truth,
                                opts.reps,
                            )?;
                            configs_evaluated += 1;
                            fold_best(&mut best, report, opts.reps);
                        }
                    }
                }
            }
        }
    }

    Ok(SweepOutcome {
        cells: SWEEP_CUTOFFS.zip(best).collect(),
        configs_evaluated,
        configs_over_budget,
    })
}

fn metric(report: &RunReport, reps: usize) -> f64 {
    if reps > 0 {
        report
            .latency
            .map(|l| l.mean_us)
            .unwrap_or(f64::INFINITY)
    } else {
        report.total_work() as f64
    }
}

fn fold_best(best: &mut [Option<RunReport>], report: RunReport, reps: usize) {
    for (slot, cutoff) in best.iter_mut().zip(SWEEP_CUTOFFS) {
        if report.mean_accuracy * 100.0 >= cutoff as f64 {
            let better = match slot {
                Some(current) => metric(&report, reps) < metric(current, reps),
                None => true,
            };
            if better {
                *slot = Some(report.clone());
            }
        }
    }
}

/// Mean share of search time spent at each list rank.
#[derive(Debug, Clone, PartialEq)]
pub struct BreakdownReport {
    /// `shares[r]` is the fraction of total per-list time spent on the
    /// rank-`r` list, for the first `min(cut, 10)` ranks.
    pub shares: Vec<f64>,
}

/// Aggregates per-list timings by list rank over the query set. The
/// denominator is the summed per-list time, so with a single list the
/// rank-0 share is exactly 1.
pub fn breakdown_report(
    queries: &[SparseVector],
    fwd: &ForwardIndex,
    idx: &InvertedIndex,
    params: &SearchParams,
) -> Result<BreakdownReport, EvalError> {
    params.validate()?;
    let ranks = params.cut.min(10);
    let mut rank_nanos = vec![0u128; ranks];
    let mut total_nanos: u128 = 0;
    for q in queries {
        let (_, stats) = search_timed(q, idx, fwd, params);
        for (rank, &ns) in stats.per_list_nanos.iter().enumerate() {
            if rank < ranks {
                rank_nanos[rank] += u128::from(ns);
            }
            total_nanos += u128::from(ns);
        }
    }
    let shares = rank_nanos
        .into_iter()
        .map(|ns| {
            if total_nanos == 0 {
                0.0
            } else {
                ns as f64 / total_nanos as f64
            }
        })
        .collect();
    Ok(BreakdownReport { shares })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::build_inverted;

    fn sv(entries: &[(u32, f32)]) -> SparseVector {
        SparseVector::new(
            entries.iter().map(|e| e.0).collect(),
            entries.iter().map(|e| e.1).collect(),
        )
        .unwrap()
    }

    fn random_corpus(seed: u64, n: usize, dims: u32, max_nnz: usize) -> Vec<SparseVector> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let nnz = rng.gen_range(1..=max_nnz);
                let mut ids: Vec<u32> = Vec::new();
                while ids.len() < nnz {
                    let id = rng.gen_range(0..dims);
                    if !ids.contains(&id) {
                        ids.push(id);
                    }
                }
                ids.sort_unstable();
                let weights = ids.iter().map(|_| rng.gen_range(0.05..2.0f32)).collect();
                SparseVector::new(ids, weights).unwrap()
            })
            .collect()
    }

    #[test]
    fn exact_topk_orthogonal_query_breaks_ties_by_id() {
        let fwd = ForwardIndex::new(vec![
            sv(&[(0, 1.0)]),
            sv(&[(1, 1.0)]),
            sv(&[(2, 1.0)]),
            sv(&[(3, 1.0)]),
        ])
        .unwrap();
        let q = sv(&[(9, 1.0)]);
        let hits = exact_topk(&q, &fwd, 2).unwrap();
        assert_eq!(hits, vec![(0, 0.0), (1, 0.0)]);
    }

    #[test]
    fn exact_topk_k_equals_n_returns_full_ranking() {
        let fwd = ForwardIndex::new(vec![sv(&[(0, 1.0)]), sv(&[(0, 3.0)]), sv(&[(0, 2.0)])])
            .unwrap();
        let q = sv(&[(0, 1.0)]);
        let hits = exact_topk(&q, &fwd, 3).unwrap();
        assert_eq!(hits, vec![(1, 3.0), (2, 2.0), (0, 1.0)]);
    }

    #[test]
    fn exact_topk_rejects_oversized_k() {
        let fwd = ForwardIndex::new(vec![sv(&[(0, 1.0)])]).unwrap();
        assert!(matches!(
            exact_topk(&sv(&[(0, 1.0)]), &fwd, 2),
            Err(EvalError::KTooLarge { k: 2, n: 1 })
        ));
    }

    /// The batch scorer and the plain scan must agree bitwise; both are
    /// checked against an independently written scan in the integration
    /// suite.
    #[test]
    fn batch_truth_matches_per_query_scan() {
        let docs = random_corpus(21, 300, 64, 8);
        let fwd = ForwardIndex::new(docs).unwrap();
        let queries = random_corpus(99, 40, 64, 6);
        let truth = build_ground_truth(&queries, &fwd, 7).unwrap();
        for (i, q) in queries.iter().enumerate() {
            assert_eq!(truth.entry(i), exact_topk(q, &fwd, 7).unwrap().as_slice());
        }
    }

    #[test]
    fn accuracy_counts_overlap() {
        let truth: Vec<(DocId, f32)> = (0..10).map(|d| (d, 1.0)).collect();
        let full: Vec<DocId> = (0..10).collect();
        assert_eq!(accuracy(&full, &truth, 10), 1.0);
        let disjoint: Vec<DocId> = (100..110).collect();
        assert_eq!(accuracy(&disjoint, &truth, 10), 0.0);
        let nine: Vec<DocId> = (0..9).chain(std::iter::once(99)).collect();
        assert_eq!(accuracy(&nine, &truth, 10), 0.9);
    }

    #[test]
    fn benchmark_exact_mode_reaches_full_accuracy() {
        let docs = random_corpus(3, 200, 48, 8);
        let fwd = ForwardIndex::new(docs).unwrap();
        let queries = random_corpus(71, 25, 48, 6);
        let truth = build_ground_truth(&queries, &fwd, 5).unwrap();
        let params = BuildParams::new(200, 20, 1.0, 1).unwrap();
        let idx = build_inverted(&fwd, &params).unwrap();
        let search = SearchParams::new(5, 64, 1.0, TraversalPolicy::Arbitrary, false).unwrap();
        let report = run_benchmark(&queries, &fwd, &idx, None, &search, &truth, 0).unwrap();
        assert_eq!(report.mean_accuracy, 1.0);
        assert!(report.latency.is_none());
        let timed = run_benchmark(&queries, &fwd, &idx, None, &search, &truth, 1).unwrap();
        assert!(timed.latency.is_some());
        // Deterministic counters across runs.
        assert_eq!(report.stats, timed.stats);
    }

    #[test]
    fn benchmark_validates_configuration() {
        let fwd = ForwardIndex::new(vec![sv(&[(0, 1.0)]), sv(&[(1, 1.0)])]).unwrap();
        let queries = vec![sv(&[(0, 1.0)])];
        let truth = build_ground_truth(&queries, &fwd, 1).unwrap();
        let params = BuildParams::new(2, 1, 1.0, 0).unwrap();
        let idx = build_inverted(&fwd, &params).unwrap();
        let expand = SearchParams::new(1, 1, 1.0, TraversalPolicy::Arbitrary, true).unwrap();
        assert!(matches!(
            run_benchmark(&queries, &fwd, &idx, None, &expand, &truth, 0),
            Err(EvalError::Search(SearchError::ExpandRequiresGraph))
        ));
        let wrong_k = SearchParams::new(2, 1, 1.0, TraversalPolicy::Arbitrary, false).unwrap();
        assert!(matches!(
            run_benchmark(&queries, &fwd, &idx, None, &wrong_k, &truth, 0),
            Err(EvalError::KMismatch { .. })
        ));
    }

    #[test]
    fn breakdown_single_list_share_is_one() {
        let docs = random_corpus(5, 50, 16, 4);
        let fwd = ForwardIndex::new(docs).unwrap();
        let params = BuildParams::new(50, 5, 1.0, 0).unwrap();
        let idx = build_inverted(&fwd, &params).unwrap();
        let queries = random_corpus(6, 10, 16, 4);
        let search = SearchParams::new(3, 1, 1.0, TraversalPolicy::Arbitrary, false).unwrap();
        let report = breakdown_report(&queries, &fwd, &idx, &search).unwrap();
        assert_eq!(report.shares.len(), 1);
        assert!((report.shares[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn breakdown_shares_sum_to_at_most_one() {
        let docs = random_corpus(7, 80, 24, 6);
        let fwd = ForwardIndex::new(docs).unwrap();
        let params = BuildParams::new(40, 4, 0.6, 0).unwrap();
        let idx = build_inverted(&fwd, &params).unwrap();
        let queries = random_corpus(8, 15, 24, 5);
        let search = SearchParams::new(3, 4, 0.9, TraversalPolicy::Arbitrary, false).unwrap();
        let report = breakdown_report(&queries, &fwd, &idx, &search).unwrap();
        assert!(report.shares.iter().sum::<f64>() <= 1.0 + 1e-12);
    }

    #[test]
    fn sweep_reports_dashes_under_impossible_budget() {
        let docs = random_corpus(9, 120, 32, 6);
        let fwd = ForwardIndex::new(docs).unwrap();
        let queries = random_corpus(10, 10, 32, 4);
        let truth = build_ground_truth(&queries, &fwd, 3).unwrap();
        let grid = SweepGrid {
            lambdas: vec![32],
            beta_divisors: vec![8],
            alphas: vec![0.5],
            kappas: vec![2],
            cuts: vec![2, 4],
            heap_factors: vec![0.9],
        };
        let outcome = sweep(
            &fwd,
            &queries,
            &truth,
            &grid,
            &SweepOptions {
                budget: 0.0,
                mode: SweepMode::Seismic,
                reps: 0,
                seed: 0,
            },
        )
        .unwrap();
        assert!(outcome.cells.iter().all(|(_, best)| best.is_none()));
        assert_eq!(outcome.configs_evaluated, 0);
        assert!(outcome.configs_over_budget > 0);
    }

    #[test]
    fn sweep_selects_cheapest_qualifying_config() {
        let docs = random_corpus(11, 150, 32, 6);
        let fwd = ForwardIndex::new(docs).unwrap();
        let queries = random_corpus(12, 20, 32, 4);
        let truth = build_ground_truth(&queries, &fwd, 3).unwrap();
        let grid = SweepGrid {
            lambdas: vec![150],
            beta_divisors: vec![10],
            alphas: vec![1.0],
            kappas: vec![],
            cuts: vec![16, 32],
            heap_factors: vec![1.0],
        };
        let outcome = sweep(
            &fwd,
            &queries,
            &truth,
            &grid,
            &SweepOptions {
                budget: 100.0,
                mode: SweepMode::Seismic,
                reps: 0,
                seed: 0,
            },
        )
        .unwrap();
        // Exact settings reach every cutoff; the winner must be the
        // cheaper cut since accuracy is already 1.0 at cut=16.
        for (cutoff, best) in &outcome.cells {
            let report = best.as_ref().unwrap_or_else(|| panic!("cutoff {cutoff}"));
            assert_eq!(report.mean_accuracy, 1.0);
            assert_eq!(report.search.cut, 16);
        }
    }
}
