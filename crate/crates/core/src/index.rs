//! Forward index and the pruned, blocked, summarized inverted index.
//!
//! Each inverted list keeps the `lambda` documents with the largest value of
//! its coordinate, partitioned into at most `beta` blocks by a seeded
//! one-pass clustering, with each block carrying an `alpha`-mass-pruned
//! coordinate-wise-max summary vector.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::vector::{CoordId, DenseScratch, DocId, SparseVector, VectorError};

/// Seed used when callers do not supply one, so fresh runs reproduce the
/// same artifacts.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Error, PartialEq, Clone)]
pub enum BuildError {
    #[error("invalid vector at position {position}: {source}")]
    InvalidVector {
        position: usize,
        source: VectorError,
    },
    #[error("vector at position {position} has coordinate {id} outside dimension {dim}")]
    CoordOutOfRange { position: usize, id: CoordId, dim: u64 },
    #[error("collection of {n} documents exceeds the u32 document-id range")]
    TooManyDocuments { n: usize },
    #[error("lambda must be positive")]
    ZeroLambda,
    #[error("beta must be positive")]
    ZeroBeta,
    #[error("beta ({beta}) must not exceed lambda ({lambda})")]
    BetaExceedsLambda { beta: usize, lambda: usize },
    #[error("alpha must be in (0, 1], got {alpha}")]
    AlphaOutOfRange { alpha: f32 },
    #[error("cannot build an inverted index over an empty collection")]
    EmptyCollection,
}

/// Document-id ordered store of the raw vectors; position is the id.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardIndex {
    docs: Vec<SparseVector>,
    dim: u64,
}

impl ForwardIndex {
    /// Wraps a collection, assigning ids by position. The dimension is the
    /// smallest one covering every stored coordinate.
    pub fn new(docs: Vec<SparseVector>) -> Result<Self, BuildError> {
        let dim = docs
            .iter()
            .filter_map(|d| d.max_id())
            .max()
            .map_or(0, |m| m as u64 + 1);
        Self::with_dim(docs, dim)
    }

    /// As [`ForwardIndex::new`] but with an explicit dimension, e.g. the
    /// column count of the source file.
    pub fn with_dim(docs: Vec<SparseVector>, dim: u64) -> Result<Self, BuildError> {
        if docs.len() > u32::MAX as usize {
            return Err(BuildError::TooManyDocuments { n: docs.len() });
        }
        for (position, doc) in docs.iter().enumerate() {
            if let Some(id) = doc.max_id() {
                if id as u64 >= dim {
                    return Err(BuildError::CoordOutOfRange { position, id, dim });
                }
            }
        }
        Ok(Self { docs, dim })
    }

    /// Builds from raw (ids, weights) rows, reporting the position of the
    /// first invalid one.
    pub fn from_rows<I>(rows: I) -> Result<Self, BuildError>
    where
        I: IntoIterator<Item = (Vec<CoordId>, Vec<f32>)>,
    {
        let docs: Vec<SparseVector> = rows
            .into_iter()
            .enumerate()
            .map(|(position, (ids, weights))| {
                SparseVector::new(ids, weights)
                    .map_err(|source| BuildError::InvalidVector { position, source })
            })
            .collect::<Result<_, _>>()?;
        Self::new(docs)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Number of coordinates (columns) spanned by the collection.
    pub fn dim(&self) -> u64 {
        self.dim
    }

    pub fn doc(&self, id: DocId) -> &SparseVector {
        &self.docs[id as usize]
    }

    pub fn docs(&self) -> &[SparseVector] {
        &self.docs
    }

    /// Total number of stored entries across all documents.
    pub fn nnz(&self) -> u64 {
        self.docs.iter().map(|d| d.nnz() as u64).sum()
    }
}

/// Construction parameters of the inverted index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildParams {
    /// Maximum entries kept per inverted list.
    pub lambda: usize,
    /// Maximum blocks per list.
    pub beta: usize,
    /// Fraction of summary weight mass retained, in (0, 1].
    pub alpha: f32,
    /// Clustering seed.
    pub seed: u64,
}

impl BuildParams {
    pub fn new(lambda: usize, beta: usize, alpha: f32, seed: u64) -> Result<Self, BuildError> {
        let p = Self {
            lambda,
            beta,
            alpha,
            seed,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), BuildError> {
        if self.lambda == 0 {
            return Err(BuildError::ZeroLambda);
        }
        if self.beta == 0 {
            return Err(BuildError::ZeroBeta);
        }
        if self.beta > self.lambda {
            return Err(BuildError::BetaExceedsLambda {
                beta: self.beta,
                lambda: self.lambda,
            });
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(BuildError::AlphaOutOfRange { alpha: self.alpha });
        }
        Ok(())
    }
}

/// One block of an inverted list: member ids plus their summary vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PostingBlock {
    pub docs: Vec<DocId>,
    pub summary: SparseVector,
}

/// Per-coordinate blocked posting lists.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    lists: BTreeMap<CoordId, Vec<PostingBlock>>,
    params: BuildParams,
}

impl InvertedIndex {
    pub(crate) fn from_parts(
        lists: BTreeMap<CoordId, Vec<PostingBlock>>,
        params: BuildParams,
    ) -> Self {
        Self { lists, params }
    }

    pub fn params(&self) -> &BuildParams {
        &self.params
    }

    pub fn list(&self, coord: CoordId) -> Option<&[PostingBlock]> {
        self.lists.get(&coord).map(|l| l.as_slice())
    }

    pub fn lists(&self) -> impl Iterator<Item = (CoordId, &[PostingBlock])> {
        self.lists.iter().map(|(&c, l)| (c, l.as_slice()))
    }

    pub fn num_lists(&self) -> usize {
        self.lists.len()
    }
}

/// Builds the forward index from a collection; ids are assigned by position.
pub fn build_forward(collection: Vec<SparseVector>) -> Result<ForwardIndex, BuildError> {
    ForwardIndex::new(collection)
}

/// Entries of all inverted lists after top-`lambda` pruning, before blocking.
/// List order is (coordinate value descending, doc id ascending).
fn pruned_lists(fwd: &ForwardIndex, lambda: usize) -> Vec<(CoordId, Vec<DocId>)> {
    let mut lists: BTreeMap<CoordId, Vec<(f32, DocId)>> = BTreeMap::new();
    for (doc, vector) in fwd.docs().iter().enumerate() {
        for (coord, weight) in vector.iter() {
            lists.entry(coord).or_default().push((weight, doc as DocId));
        }
    }
    lists
        .into_iter()
        .map(|(coord, mut entries)| {
            entries.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
            entries.truncate(lambda);
            (coord, entries.into_iter().map(|(_, d)| d).collect())
        })
        .collect()
}

/// Mixes a coordinate id into the build seed so each list gets its own
/// deterministic RNG stream.
fn list_seed(seed: u64, coord: CoordId) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ (u64::from(coord)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Partitions the entries of one list into at most `beta` non-empty groups.
///
/// If there are at most `beta` entries, each goes into its own group.
/// Otherwise `beta` distinct entries are sampled as centroids with the seeded
/// RNG and every entry is assigned to the centroid maximizing the inner
/// product of their document vectors, ties to the lowest centroid index.
/// Empty groups are dropped.
pub fn cluster_list(
    entries: &[DocId],
    fwd: &ForwardIndex,
    beta: usize,
    seed: u64,
) -> Vec<Vec<DocId>> {
    assert!(beta >= 1, "beta must be positive");
    assert!(!entries.is_empty(), "cannot cluster an empty list");
    if entries.len() <= beta {
        return entries.iter().map(|&d| vec![d]).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Partial Fisher-Yates: the first `beta` slots become the centroids.
    let mut pool: Vec<DocId> = entries.to_vec();
    for i in 0..beta {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    let centroids = &pool[..beta];

    let mut scratch = DenseScratch::new(fwd.dim() as usize);
    let mut groups: Vec<Vec<DocId>> = vec![Vec::new(); beta];
    for &entry in entries {
        let vector = fwd.doc(entry);
        scratch.load(vector);
        let mut best = 0usize;
        let mut best_score = f32::NEG_INFINITY;
        for (idx, &centroid) in centroids.iter().enumerate() {
            let score = scratch.dot(fwd.doc(centroid));
            if score > best_score {
                best_score = score;
                best = idx;
            }
        }
        groups[best].push(entry);
        scratch.unload(vector);
    }
    groups.retain(|g| !g.is_empty());
    groups
}

/// Coordinate-wise maximum over the group's vectors, pruned to the shortest
/// descending-weight prefix holding at least `alpha` of the total weight
/// mass. `alpha = 1` keeps the full maximum.
///
/// Coordinates missing from some group member have an implicit zero among
/// the maximized values, so a coordinate survives with a negative weight
/// only when every member stores it negatively.
pub fn summarize(group: &[DocId], fwd: &ForwardIndex, alpha: f32) -> SparseVector {
    assert!(!group.is_empty(), "cannot summarize an empty group");
    assert!(alpha > 0.0 && alpha <= 1.0, "alpha must be in (0, 1]");
    let mut maxima: BTreeMap<CoordId, (f32, usize)> = BTreeMap::new();
    for &doc in group {
        for (coord, weight) in fwd.doc(doc).iter() {
            maxima
                .entry(coord)
                .and_modify(|(m, count)| {
                    if weight > *m {
                        *m = weight;
                    }
                    *count += 1;
                })
                .or_insert((weight, 1));
        }
    }
    let mut entries: Vec<(CoordId, f32)> = maxima
        .into_iter()
        .filter_map(|(coord, (max_present, count))| {
            let value = if count < group.len() {
                max_present.max(0.0)
            } else {
                max_present
            };
            (value != 0.0).then_some((coord, value))
        })
        .collect();

    if alpha < 1.0 {
        entries.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let total: f32 = entries.iter().map(|e| e.1).sum();
        let target = alpha * total;
        let mut acc = 0.0f32;
        let mut keep = entries.len();
        for (i, e) in entries.iter().enumerate() {
            acc += e.1;
            if acc >= target {
                keep = i + 1;
                break;
            }
        }
        entries.truncate(keep);
        entries.sort_unstable_by_key(|e| e.0);
    }

    let (ids, weights) = entries.into_iter().unzip();
    SparseVector::new(ids, weights).expect("summary entries are sorted, finite, and nonzero")
}

/// Clustered (but not yet summarized) lists; lets a parameter sweep share
/// the blocking across different `alpha` values.
pub(crate) struct ClusteredLists {
    pub lists: Vec<(CoordId, Vec<Vec<DocId>>)>,
}

pub(crate) fn build_blocks(
    fwd: &ForwardIndex,
    lambda: usize,
    beta: usize,
    seed: u64,
) -> ClusteredLists {
    let pruned = pruned_lists(fwd, lambda);
    let lists: Vec<(CoordId, Vec<Vec<DocId>>)> = pruned
        .into_par_iter()
        .map(|(coord, entries)| {
            let groups = cluster_list(&entries, fwd, beta, list_seed(seed, coord));
            (coord, groups)
        })
        .collect();
    ClusteredLists { lists }
}

pub(crate) fn attach_summaries(
    fwd: &ForwardIndex,
    clustered: &ClusteredLists,
    params: BuildParams,
) -> InvertedIndex {
    let lists: Vec<(CoordId, Vec<PostingBlock>)> = clustered
        .lists
        .par_iter()
        .map(|(coord, groups)| {
            let blocks = groups
                .iter()
                .map(|group| PostingBlock {
                    docs: group.clone(),
                    summary: summarize(group, fwd, params.alpha),
                })
                .collect();
            (*coord, blocks)
        })
        .collect();
    InvertedIndex::from_parts(lists.into_iter().collect(), params)
}

/// Builds the inverted index: per-coordinate top-`lambda` selection, seeded
/// clustering into at most `beta` blocks, and per-block summaries.
/// Deterministic given the collection and parameters.
pub fn build_inverted(fwd: &ForwardIndex, params: &BuildParams) -> Result<InvertedIndex, BuildError> {
    params.validate()?;
    if fwd.is_empty() {
        return Err(BuildError::EmptyCollection);
    }
    let clustered = build_blocks(fwd, params.lambda, params.beta, params.seed);
    Ok(attach_summaries(fwd, &clustered, *params))
}

/// Serialized sizes of the two index components, in bytes, as written by the
/// on-disk format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexSizes {
    pub forward_bytes: u64,
    pub inverted_bytes: u64,
    pub total_bytes: u64,
}

/// Sizes of the serialized index, measured against the on-disk encoding.
pub fn index_size_bytes(idx: &InvertedIndex, fwd: &ForwardIndex) -> IndexSizes {
    crate::io::measure_index_sizes(idx, fwd)
}
