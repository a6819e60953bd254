//! Deterministic synthetic sparse collections for benchmarks and tests.
//!
//! Coordinates are drawn from a Zipf-like distribution so a handful of
//! "popular" coordinates dominate posting-list lengths, mimicking the
//! statistics of learned sparse text embeddings.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::vector::SparseVector;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticParams {
    pub n: usize,
    pub dims: u32,
    /// Inclusive range of nonzeros per vector.
    pub nnz_range: (usize, usize),
    /// Zipf exponent for coordinate popularity.
    pub skew: f64,
    pub seed: u64,
}

/// Cumulative distribution over coordinate ranks.
fn zipf_cdf(dims: u32, skew: f64) -> Vec<f64> {
    let mut cdf = Vec::with_capacity(dims as usize);
    let mut total = 0.0f64;
    for rank in 0..dims {
        total += 1.0 / (rank as f64 + 1.0).powf(skew);
        cdf.push(total);
    }
    for v in &mut cdf {
        *v /= total;
    }
    cdf
}

/// Generates `params.n` sparse vectors, reproducibly for a given seed.
pub fn generate(params: &SyntheticParams) -> Vec<SparseVector> {
    let (lo, hi) = params.nnz_range;
    assert!(lo >= 1 && lo <= hi, "invalid nnz range");
    assert!(hi <= params.dims as usize, "nnz range exceeds dimensions");
    let cdf = zipf_cdf(params.dims, params.skew);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    (0..params.n)
        .map(|_| {
            let nnz = rng.gen_range(lo..=hi);
            let mut ids: BTreeSet<u32> = BTreeSet::new();
            while ids.len() < nnz {
                let u: f64 = rng.gen();
                let id = cdf.partition_point(|&c| c < u) as u32;
                ids.insert(id.min(params.dims - 1));
            }
            let ids: Vec<u32> = ids.into_iter().collect();
            let weights: Vec<f32> = ids
                .iter()
                .map(|_| {
                    let u: f32 = rng.gen();
                    0.05 + 2.95 * u * u
                })
                .collect();
            SparseVector::new(ids, weights).expect("generated entries are sorted and nonzero")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let params = SyntheticParams {
            n: 20,
            dims: 100,
            nnz_range: (3, 8),
            skew: 1.0,
            seed: 7,
        };
        assert_eq!(generate(&params), generate(&params));
    }

    #[test]
    fn respects_nnz_range_and_dims() {
        let params = SyntheticParams {
            n: 50,
            dims: 64,
            nnz_range: (4, 9),
            skew: 1.1,
            seed: 3,
        };
        for v in generate(&params) {
            assert!(v.nnz() >= 4 && v.nnz() <= 9);
            assert!(v.max_id().unwrap() < 64);
        }
    }

    #[test]
    fn popularity_is_skewed() {
        let params = SyntheticParams {
            n: 500,
            dims: 1000,
            nnz_range: (10, 20),
            skew: 1.0,
            seed: 11,
        };
        let docs = generate(&params);
        let low_ids = docs
            .iter()
            .flat_map(|d| d.ids())
            .filter(|&&i| i < 10)
            .count();
        let high_ids = docs
            .iter()
            .flat_map(|d| d.ids())
            .filter(|&&i| i >= 500)
            .count();
        // Ten popular ranks versus the five hundred rarest.
        assert!(low_ids > high_ids * 2, "low {low_ids} vs high {high_ids}");
    }
}
