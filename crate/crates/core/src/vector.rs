//! Sparse vectors and inner-product kernels.

use thiserror::Error;

/// Identifier of a document: its position in the forward index.
pub type DocId = u32;
/// Identifier of a vector coordinate (term id).
pub type CoordId = u32;

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum VectorError {
    #[error("ids and weights differ in length ({ids} vs {weights})")]
    LengthMismatch { ids: usize, weights: usize },
    #[error("coordinate ids must be strictly increasing (violated at entry {position})")]
    UnsortedIds { position: usize },
    #[error("weight at entry {position} is not finite")]
    NonFiniteWeight { position: usize },
    #[error("weight at entry {position} is zero; zero entries are not stored")]
    ZeroWeight { position: usize },
}

/// A sparse vector: strictly increasing coordinate ids paired with nonzero,
/// finite weights. Immutable once constructed, so it is safe to share across
/// threads.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    ids: Vec<CoordId>,
    weights: Vec<f32>,
}

impl SparseVector {
    /// Validates the invariants and wraps the two parallel arrays.
    pub fn new(ids: Vec<CoordId>, weights: Vec<f32>) -> Result<Self, VectorError> {
        if ids.len() != weights.len() {
            return Err(VectorError::LengthMismatch {
                ids: ids.len(),
                weights: weights.len(),
            });
        }
        for (pos, w) in ids.windows(2).enumerate() {
            if w[0] >= w[1] {
                return Err(VectorError::UnsortedIds { position: pos + 1 });
            }
        }
        for (pos, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(VectorError::NonFiniteWeight { position: pos });
            }
            if w == 0.0 {
                return Err(VectorError::ZeroWeight { position: pos });
            }
        }
        Ok(Self { ids, weights })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Number of stored (nonzero) entries.
    pub fn nnz(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[CoordId] {
        &self.ids
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (CoordId, f32)> + '_ {
        self.ids.iter().copied().zip(self.weights.iter().copied())
    }

    /// Largest stored coordinate id, if any.
    pub fn max_id(&self) -> Option<CoordId> {
        self.ids.last().copied()
    }
}

/// Inner product of two sparse vectors over the intersection of their
/// supports, accumulated in ascending coordinate order. Disjoint supports
/// yield 0.
pub fn dot(u: &SparseVector, v: &SparseVector) -> f32 {
    let (uids, uw) = (u.ids(), u.weights());
    let (vids, vw) = (v.ids(), v.weights());
    let mut acc = 0.0f32;
    let (mut i, mut j) = (0, 0);
    while i < uids.len() && j < vids.len() {
        match uids[i].cmp(&vids[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += uw[i] * vw[j];
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

/// The nonzero coordinates of `q` sorted by descending weight, ties broken by
/// ascending coordinate id. Query processing consumes the first `cut` of
/// these.
pub fn query_coordinates(q: &SparseVector) -> Vec<CoordId> {
    let mut order: Vec<usize> = (0..q.nnz()).collect();
    order.sort_unstable_by(|&a, &b| {
        q.weights()[b]
            .total_cmp(&q.weights()[a])
            .then_with(|| q.ids()[a].cmp(&q.ids()[b]))
    });
    order.into_iter().map(|i| q.ids()[i]).collect()
}

/// Scatter buffer for one side of repeated inner products. Loading a vector
/// writes its weights into a dense array; `dot` then gathers over the other
/// vector's support. The nonzero terms accumulate in the same ascending
/// coordinate order as the merge in [`dot`], so both paths agree on every
/// finite input.
pub(crate) struct DenseScratch {
    values: Vec<f32>,
}

impl DenseScratch {
    pub fn new(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
        }
    }

    pub fn load(&mut self, v: &SparseVector) {
        if let Some(max) = v.max_id() {
            if max as usize >= self.values.len() {
                self.values.resize(max as usize + 1, 0.0);
            }
        }
        for (i, w) in v.iter() {
            self.values[i as usize] = w;
        }
    }

    /// Zeroes exactly the entries written by a previous `load` of `v`.
    pub fn unload(&mut self, v: &SparseVector) {
        for &i in v.ids() {
            self.values[i as usize] = 0.0;
        }
    }

    /// Inner product of the loaded vector with `v`, gathering over `v`'s
    /// support. `v`'s ids must be below the scratch dimension.
    pub fn dot(&self, v: &SparseVector) -> f32 {
        let mut acc = 0.0f32;
        for (i, w) in v.iter() {
            acc += w * self.values[i as usize];
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(entries: &[(u32, f32)]) -> SparseVector {
        SparseVector::new(
            entries.iter().map(|e| e.0).collect(),
            entries.iter().map(|e| e.1).collect(),
        )
        .unwrap()
    }

    #[test]
    fn construction_rejects_invalid_input() {
        assert_eq!(
            SparseVector::new(vec![1], vec![]),
            Err(VectorError::LengthMismatch { ids: 1, weights: 0 })
        );
        assert_eq!(
            SparseVector::new(vec![3, 3], vec![1.0, 2.0]),
            Err(VectorError::UnsortedIds { position: 1 })
        );
        assert_eq!(
            SparseVector::new(vec![5, 2], vec![1.0, 2.0]),
            Err(VectorError::UnsortedIds { position: 1 })
        );
        assert_eq!(
            SparseVector::new(vec![0], vec![f32::NAN]),
            Err(VectorError::NonFiniteWeight { position: 0 })
        );
        assert_eq!(
            SparseVector::new(vec![0, 9], vec![1.0, 0.0]),
            Err(VectorError::ZeroWeight { position: 1 })
        );
    }

    #[test]
    fn dot_shared_coordinate() {
        let u = sv(&[(1, 2.0), (3, 1.0)]);
        let v = sv(&[(3, 4.0)]);
        assert_eq!(dot(&u, &v), 4.0);
    }

    #[test]
    fn dot_disjoint_supports() {
        let u = sv(&[(1, 2.0)]);
        let v = sv(&[(2, 5.0)]);
        assert_eq!(dot(&u, &v), 0.0);
    }

    #[test]
    fn dot_self_hand_expansion() {
        // 1.5^2 + 2.0^2
        let u = sv(&[(0, 1.5), (7, 2.0)]);
        assert_eq!(dot(&u, &u), 6.25);
    }

    #[test]
    fn dot_with_empty_is_zero() {
        let u = sv(&[(0, 1.5), (7, 2.0)]);
        assert_eq!(dot(&u, &SparseVector::empty()), 0.0);
    }

    #[test]
    fn query_coordinates_sorts_by_weight() {
        assert_eq!(query_coordinates(&sv(&[(2, 0.5), (9, 3.0)])), vec![9, 2]);
    }

    #[test]
    fn query_coordinates_ties_break_by_id() {
        assert_eq!(query_coordinates(&sv(&[(1, 1.0), (4, 1.0)])), vec![1, 4]);
    }

    #[test]
    fn query_coordinates_empty() {
        assert!(query_coordinates(&SparseVector::empty()).is_empty());
    }

    #[test]
    fn scratch_dot_matches_merge_dot() {
        let u = sv(&[(0, 0.25), (5, -1.5), (17, 3.0), (40, 0.875)]);
        let v = sv(&[(5, 2.0), (17, -0.5), (33, 9.0)]);
        let mut scratch = DenseScratch::new(8);
        scratch.load(&u);
        assert_eq!(scratch.dot(&v), dot(&u, &v));
        scratch.unload(&u);
        assert_eq!(scratch.dot(&v), 0.0);
    }
}
