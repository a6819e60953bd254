//! k-NN graph construction, bit-packed storage, and result refinement.
//!
//! Every document points at the `kappa` documents maximizing the inner
//! product with it (self excluded, ties by ascending id). Query results are
//! refined by scoring the neighbors of every retrieved document.

use std::io::{Read, Write};
use std::sync::OnceLock;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;
use thiserror::Error;

use crate::eval::ExactScorer;
use crate::index::{build_inverted, BuildError, BuildParams, ForwardIndex, DEFAULT_SEED};
use crate::io::FormatError;
use crate::search::{SearchParams, SearchStats, TraversalPolicy};
use crate::topk::ScoredHeap;
use crate::vector::{DenseScratch, DocId, SparseVector};

/// Inverted-index parameters used to accelerate graph construction.
/// `lambda` is capped at the collection size for small corpora, and `beta`
/// at the resulting `lambda`.
pub const APPROX_GRAPH_LAMBDA: usize = 10_000;
pub const APPROX_GRAPH_BETA: usize = 2_000;
pub const APPROX_GRAPH_ALPHA: f32 = 0.6;
pub const APPROX_GRAPH_CUT: usize = 15;
pub const APPROX_GRAPH_HEAP_FACTOR: f32 = 0.7;

const MAGIC: &[u8; 4] = b"SWKG";
const VERSION: u32 = 1;
/// Magic+version word, collection size, neighbor count.
pub const GRAPH_HEADER_BYTES: u64 = 24;

#[derive(Debug, Error, PartialEq, Clone)]
pub enum GraphError {
    #[error("kappa must be positive")]
    ZeroKappa,
    #[error("kappa ({kappa}) must be smaller than the collection size ({n})")]
    KappaTooLarge { n: usize, kappa: usize },
    #[error("neighbor table has {got} entries, expected n*kappa = {expected}")]
    WrongShape { got: usize, expected: usize },
    #[error("node {node} lists neighbor {neighbor} outside the collection of {n}")]
    NeighborOutOfRange { node: DocId, neighbor: DocId, n: usize },
    #[error("node {node} lists itself as a neighbor")]
    SelfLoop { node: DocId },
    #[error("node {node} lists neighbor {neighbor} twice")]
    DuplicateNeighbor { node: DocId, neighbor: DocId },
    #[error("index construction failed: {0}")]
    Build(#[from] BuildError),
}

/// For each document, its `kappa` nearest neighbors by inner product,
/// ordered by (score desc, id asc). Stored as one flat row-major table.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph {
    n: usize,
    kappa: usize,
    neighbors: Vec<DocId>,
}

impl KnnGraph {
    pub fn new(n: usize, kappa: usize, neighbors: Vec<DocId>) -> Result<Self, GraphError> {
        if kappa == 0 {
            return Err(GraphError::ZeroKappa);
        }
        if n <= kappa {
            return Err(GraphError::KappaTooLarge { n, kappa });
        }
        let expected = n
            .checked_mul(kappa)
            .ok_or(GraphError::WrongShape { got: neighbors.len(), expected: usize::MAX })?;
        if neighbors.len() != expected {
            return Err(GraphError::WrongShape {
                got: neighbors.len(),
                expected,
            });
        }
        let mut row = Vec::with_capacity(kappa);
        for node in 0..n {
            row.clear();
            for &v in &neighbors[node * kappa..(node + 1) * kappa] {
                if (v as usize) >= n {
                    return Err(GraphError::NeighborOutOfRange {
                        node: node as DocId,
                        neighbor: v,
                        n,
                    });
                }
                if v as usize == node {
                    return Err(GraphError::SelfLoop { node: node as DocId });
                }
                row.push(v);
            }
            row.sort_unstable();
            for w in row.windows(2) {
                if w[0] == w[1] {
                    return Err(GraphError::DuplicateNeighbor {
                        node: node as DocId,
                        neighbor: w[0],
                    });
                }
            }
        }
        Ok(Self { n, kappa, neighbors })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn neighbors(&self, u: DocId) -> &[DocId] {
        let start = u as usize * self.kappa;
        &self.neighbors[start..start + self.kappa]
    }

    /// A graph keeping only the first `kappa` neighbors of every node.
    /// Rows are score-ordered, so the prefix is the tighter neighborhood.
    pub fn truncated(&self, kappa: usize) -> Result<Self, GraphError> {
        if kappa == 0 {
            return Err(GraphError::ZeroKappa);
        }
        if kappa >= self.kappa {
            return Ok(self.clone());
        }
        let mut neighbors = Vec::with_capacity(self.n * kappa);
        for node in 0..self.n {
            neighbors
                .extend_from_slice(&self.neighbors[node * self.kappa..node * self.kappa + kappa]);
        }
        Ok(Self {
            n: self.n,
            kappa,
            neighbors,
        })
    }

    /// Bits needed per stored neighbor id for a collection of `n` documents.
    pub fn neighbor_bits(n: usize) -> u32 {
        debug_assert!(n >= 2);
        64 - (n as u64 - 1).leading_zeros()
    }

    /// Exact byte length of the bit-packed neighbor table.
    pub fn payload_bytes(n: usize, kappa: usize) -> u64 {
        let bits = u64::from(Self::neighbor_bits(n)) * n as u64 * kappa as u64;
        bits.div_ceil(8)
    }
}

/// Exact graph construction by full scoring; quadratic in the collection
/// size, intended for modest corpora and as the oracle for the approximate
/// builder.
pub fn build_knn_exact(fwd: &ForwardIndex, kappa: usize) -> Result<KnnGraph, GraphError> {
    check_kappa(fwd, kappa)?;
    let scorer = ExactScorer::new(fwd);
    let n = fwd.len();
    let rows: Vec<Vec<DocId>> = (0..n)
        .into_par_iter()
        .map_init(Vec::new, |buf, u| {
            let u = u as DocId;
            scorer
                .topk_into(fwd.doc(u), kappa, Some(u), buf)
                .into_iter()
                .map(|(d, _)| d)
                .collect()
        })
        .collect();
    KnnGraph::new(n, kappa, rows.concat())
}

/// Approximate graph construction: searches an inverted index built with
/// the fixed acceleration parameters, using each document as the query with
/// `k = kappa + 1`, then drops the document itself. Nodes left short of
/// `kappa` neighbors (degenerate corpora) are padded from an exact scan.
pub fn build_knn_approx(fwd: &ForwardIndex, kappa: usize) -> Result<KnnGraph, GraphError> {
    let lambda = APPROX_GRAPH_LAMBDA.min(fwd.len());
    let beta = APPROX_GRAPH_BETA.min(lambda);
    let params = BuildParams::new(lambda, beta, APPROX_GRAPH_ALPHA, DEFAULT_SEED)?;
    build_knn_approx_with(
        fwd,
        kappa,
        &params,
        APPROX_GRAPH_CUT,
        APPROX_GRAPH_HEAP_FACTOR,
    )
}

/// [`build_knn_approx`] with explicit index and traversal parameters.
pub fn build_knn_approx_with(
    fwd: &ForwardIndex,
    kappa: usize,
    params: &BuildParams,
    cut: usize,
    heap_factor: f32,
) -> Result<KnnGraph, GraphError> {
    check_kappa(fwd, kappa)?;
    let idx = build_inverted(fwd, params)?;
    let search_params = SearchParams {
        k: kappa + 1,
        cut,
        heap_factor,
        obt: TraversalPolicy::Arbitrary,
        expand: false,
    };
    let scorer: OnceLock<ExactScorer> = OnceLock::new();
    let n = fwd.len();
    let rows: Vec<Vec<DocId>> = (0..n)
        .into_par_iter()
        .map(|u| {
            let u = u as DocId;
            let (hits, _) = crate::search::search(fwd.doc(u), &idx, fwd, &search_params);
            let mut candidates: Vec<(DocId, f32)> =
                hits.into_iter().filter(|&(d, _)| d != u).collect();
            candidates.truncate(kappa);
            if candidates.len() < kappa {
                pad_from_exact_scan(
                    fwd,
                    scorer.get_or_init(|| ExactScorer::new(fwd)),
                    u,
                    kappa,
                    &mut candidates,
                );
            }
            candidates.into_iter().map(|(d, _)| d).collect()
        })
        .collect();
    KnnGraph::new(n, kappa, rows.concat())
}

fn pad_from_exact_scan(
    fwd: &ForwardIndex,
    scorer: &ExactScorer,
    u: DocId,
    kappa: usize,
    candidates: &mut Vec<(DocId, f32)>,
) {
    let mut buf = Vec::new();
    for (d, s) in scorer.topk_into(fwd.doc(u), kappa, Some(u), &mut buf) {
        if !candidates.iter().any(|&(c, _)| c == d) {
            candidates.push((d, s));
        }
    }
    crate::topk::sort_hits(candidates);
    candidates.truncate(kappa);
}

fn check_kappa(fwd: &ForwardIndex, kappa: usize) -> Result<(), GraphError> {
    if kappa == 0 {
        return Err(GraphError::ZeroKappa);
    }
    if fwd.len() <= kappa {
        return Err(GraphError::KappaTooLarge {
            n: fwd.len(),
            kappa,
        });
    }
    Ok(())
}

/// Expands the heap's documents with their graph neighbors, scoring each
/// new candidate against the forward index. Documents already held are not
/// rescored. Forward evaluations are added to `stats.docs_scored`.
pub fn refine_with_knn(
    q: &SparseVector,
    mut heap: ScoredHeap,
    graph: &KnnGraph,
    fwd: &ForwardIndex,
    stats: &mut SearchStats,
) -> ScoredHeap {
    let base = heap.sorted();
    let scratch_dim = fwd
        .dim()
        .max(q.max_id().map_or(0, |m| m as u64 + 1)) as usize;
    let mut scratch = DenseScratch::new(scratch_dim);
    scratch.load(q);
    for (u, _) in base {
        for &v in graph.neighbors(u) {
            if heap.contains(v) {
                continue;
            }
            let score = scratch.dot(fwd.doc(v));
            stats.docs_scored += 1;
            heap.insert(score, v);
        }
    }
    heap
}

/// Writes the graph: a 24-byte header (magic+version word, `n`, `kappa`,
/// all little-endian) followed by the `n * kappa` neighbor ids bit-packed
/// row-major at `floor(log2(n-1)) + 1` bits each, LSB-first, zero-padded to
/// a byte boundary.
pub fn write_graph<W: Write>(graph: &KnnGraph, mut w: W) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u64::<LittleEndian>(graph.n as u64)?;
    w.write_u64::<LittleEndian>(graph.kappa as u64)?;
    let bits = KnnGraph::neighbor_bits(graph.n);
    w.write_all(&pack_bits(&graph.neighbors, bits))?;
    Ok(())
}

/// Reads a graph written by [`write_graph`], validating the header, the
/// payload length, and every neighbor row.
pub fn read_graph<R: Read>(mut r: R) -> Result<KnnGraph, FormatError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| FormatError::truncated("SWKG magic", e))?;
    if &magic != MAGIC {
        return Err(FormatError::BadMagic {
            expected: *MAGIC,
            found: magic,
        });
    }
    let version = r
        .read_u32::<LittleEndian>()
        .map_err(|e| FormatError::truncated("SWKG version", e))?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion { found: version });
    }
    let n = r
        .read_u64::<LittleEndian>()
        .map_err(|e| FormatError::truncated("SWKG collection size", e))?;
    let kappa = r
        .read_u64::<LittleEndian>()
        .map_err(|e| FormatError::truncated("SWKG neighbor count", e))?;
    if n > u32::MAX as u64 {
        return Err(FormatError::FieldOutOfRange {
            field: "SWKG collection size",
            value: n,
        });
    }
    if kappa == 0 || kappa >= n {
        return Err(FormatError::FieldOutOfRange {
            field: "SWKG neighbor count",
            value: kappa,
        });
    }
    let n = n as usize;
    let kappa = kappa as usize;
    let total = (n as u64)
        .checked_mul(kappa as u64)
        .ok_or(FormatError::FieldOutOfRange {
            field: "SWKG table size",
            value: u64::MAX,
        })?;
    let bits = KnnGraph::neighbor_bits(n);
    let payload_len = KnnGraph::payload_bytes(n, kappa);
    let payload = crate::io::read_bytes_bounded(&mut r, payload_len, "SWKG payload")?;
    let neighbors = unpack_bits(&payload, total, bits);
    KnnGraph::new(n, kappa, neighbors).map_err(FormatError::from_graph)
}

fn pack_bits(values: &[DocId], bits: u32) -> Vec<u8> {
    let total_bits = values.len() as u64 * u64::from(bits);
    let mut buf = vec![0u8; total_bits.div_ceil(8) as usize];
    let mut pos: u64 = 0;
    for &v in values {
        for j in 0..bits {
            if (v >> j) & 1 == 1 {
                buf[(pos >> 3) as usize] |= 1 << (pos & 7);
            }
            pos += 1;
        }
    }
    buf
}

fn unpack_bits(buf: &[u8], count: u64, bits: u32) -> Vec<DocId> {
    let mut out = Vec::with_capacity(count as usize);
    let mut pos: u64 = 0;
    for _ in 0..count {
        let mut v: DocId = 0;
        for j in 0..bits {
            if buf[(pos >> 3) as usize] >> (pos & 7) & 1 == 1 {
                v |= 1 << j;
            }
            pos += 1;
        }
        out.push(v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector::dot;

    fn sv(entries: &[(u32, f32)]) -> SparseVector {
        SparseVector::new(
            entries.iter().map(|e| e.0).collect(),
            entries.iter().map(|e| e.1).collect(),
        )
        .unwrap()
    }

    #[test]
    fn exact_orthogonal_docs_tie_break_to_lowest_id() {
        let f = ForwardIndex::new(vec![sv(&[(0, 1.0)]), sv(&[(1, 1.0)]), sv(&[(2, 1.0)])])
            .unwrap();
        let g = build_knn_exact(&f, 1).unwrap();
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0]);
        assert_eq!(g.neighbors(2), &[0]);
    }

    #[test]
    fn exact_scaling_preserves_argmax() {
        // a = 2*b; everything else orthogonal, so neighbors(b) starts with a.
        let f = ForwardIndex::new(vec![
            sv(&[(0, 2.0), (1, 4.0)]), // a
            sv(&[(0, 1.0), (1, 2.0)]), // b
            sv(&[(5, 1.0)]),
            sv(&[(6, 1.0)]),
        ])
        .unwrap();
        let g = build_knn_exact(&f, 2).unwrap();
        assert_eq!(g.neighbors(1)[0], 0);
    }

    #[test]
    fn exact_rejects_small_collections() {
        let f = ForwardIndex::new(vec![sv(&[(0, 1.0)]), sv(&[(1, 1.0)])]).unwrap();
        assert_eq!(
            build_knn_exact(&f, 2),
            Err(GraphError::KappaTooLarge { n: 2, kappa: 2 })
        );
        assert_eq!(build_knn_exact(&f, 0), Err(GraphError::ZeroKappa));
    }

    fn random_corpus(seed: u64, n: usize, dims: u32) -> Vec<SparseVector> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let nnz = rng.gen_range(3..=8);
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

    /// Independent double-loop oracle for the exact builder.
    #[test]
    fn exact_matches_double_loop_oracle() {
        let docs = random_corpus(77, 200, 50);
        let f = ForwardIndex::new(docs.clone()).unwrap();
        let kappa = 10;
        let g = build_knn_exact(&f, kappa).unwrap();
        for u in 0..docs.len() {
            let mut scored: Vec<(DocId, f32)> = (0..docs.len())
                .filter(|&v| v != u)
                .map(|v| (v as DocId, dot(&docs[u], &docs[v])))
                .collect();
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            let expect: Vec<DocId> = scored.into_iter().take(kappa).map(|(d, _)| d).collect();
            assert_eq!(g.neighbors(u as DocId), expect.as_slice(), "node {u}");
        }
    }

    #[test]
    fn approx_with_exact_overrides_equals_exact() {
        let docs = random_corpus(13, 150, 40);
        let f = ForwardIndex::new(docs).unwrap();
        let params = BuildParams::new(150, 15, 1.0, DEFAULT_SEED).unwrap();
        let approx = build_knn_approx_with(&f, 5, &params, 64, 1.0).unwrap();
        let exact = build_knn_exact(&f, 5).unwrap();
        assert_eq!(approx, exact);
    }

    #[test]
    fn refine_fixed_point_keeps_heap() {
        let f = ForwardIndex::new(vec![
            sv(&[(0, 3.0)]),
            sv(&[(0, 2.0)]),
            sv(&[(0, 1.0)]),
        ])
        .unwrap();
        let g = build_knn_exact(&f, 2).unwrap();
        let q = sv(&[(0, 1.0)]);
        let mut heap = ScoredHeap::new(2);
        heap.insert(3.0, 0);
        heap.insert(2.0, 1);
        let before = heap.sorted();
        let mut stats = SearchStats::default();
        let refined = refine_with_knn(&q, heap, &g, &f, &mut stats);
        assert_eq!(refined.sorted(), before);
    }

    #[test]
    fn refine_single_displacement() {
        let f = ForwardIndex::new(vec![sv(&[(0, 5.0)]), sv(&[(0, 9.0)])]).unwrap();
        let g = build_knn_exact(&f, 1).unwrap();
        let q = sv(&[(0, 1.0)]);
        let mut heap = ScoredHeap::new(1);
        heap.insert(5.0, 0);
        let mut stats = SearchStats::default();
        let refined = refine_with_knn(&q, heap, &g, &f, &mut stats);
        assert_eq!(refined.sorted(), vec![(1, 9.0)]);
        assert_eq!(stats.docs_scored, 1);
    }

    #[test]
    fn graph_file_layout_smallest_case() {
        // n=2, kappa=1: one bit per id, two bits of payload, one byte total.
        let g = KnnGraph::new(2, 1, vec![1, 0]).unwrap();
        let mut buf = Vec::new();
        write_graph(&g, &mut buf).unwrap();
        assert_eq!(buf.len(), 25);
        assert_eq!(KnnGraph::payload_bytes(2, 1), 1);
        let back = read_graph(buf.as_slice()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn payload_formula_at_scale() {
        // floor(log2(999_999)) + 1 = 20 bits; 20 * 1e6 * 20 / 8 bytes.
        assert_eq!(KnnGraph::neighbor_bits(1_000_000), 20);
        assert_eq!(KnnGraph::payload_bytes(1_000_000, 20), 50_000_000);
    }

    #[test]
    fn graph_round_trip_random() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (n, kappa) = (37usize, 4usize);
        let mut neighbors = Vec::new();
        for u in 0..n {
            let mut row: Vec<DocId> = Vec::new();
            while row.len() < kappa {
                let v = rng.gen_range(0..n as u32);
                if v as usize != u && !row.contains(&v) {
                    row.push(v);
                }
            }
            neighbors.extend(row);
        }
        let g = KnnGraph::new(n, kappa, neighbors).unwrap();
        let mut buf = Vec::new();
        write_graph(&g, &mut buf).unwrap();
        assert_eq!(
            buf.len() as u64,
            GRAPH_HEADER_BYTES + KnnGraph::payload_bytes(n, kappa)
        );
        assert_eq!(read_graph(buf.as_slice()).unwrap(), g);
    }

    #[test]
    fn read_rejects_corruption() {
        let g = KnnGraph::new(4, 2, vec![1, 2, 0, 2, 3, 0, 1, 0]).unwrap();
        let mut buf = Vec::new();
        write_graph(&g, &mut buf).unwrap();

        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            read_graph(bad_magic.as_slice()),
            Err(FormatError::BadMagic { .. })
        ));

        let truncated = &buf[..buf.len() - 1];
        assert!(matches!(
            read_graph(truncated),
            Err(FormatError::Truncated { .. })
        ));

        // kappa >= n in the header.
        let mut bad_kappa = buf.clone();
        bad_kappa[16..24].copy_from_slice(&9u64.to_le_bytes());
        assert!(matches!(
            read_graph(bad_kappa.as_slice()),
            Err(FormatError::FieldOutOfRange { .. })
        ));
    }

    #[test]
    fn truncated_graph_takes_row_prefixes() {
        let g = KnnGraph::new(4, 3, vec![1, 2, 3, 0, 2, 3, 3, 0, 1, 0, 1, 2]).unwrap();
        let t = g.truncated(1).unwrap();
        assert_eq!(t.kappa(), 1);
        assert_eq!(t.neighbors(0), &[1]);
        assert_eq!(t.neighbors(3), &[0]);
    }
}
