//! Bounded top-k heap with deterministic tie-breaking.
//!
//! Entries are ranked by (score descending, doc id ascending); scores compare
//! via IEEE total order. The heap never holds the same document twice.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use crate::vector::DocId;

#[derive(Debug, Clone, Copy)]
struct HeapEntry {
    score: f32,
    doc: DocId,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    // Max-heap order that surfaces the worst-ranked entry at the top:
    // lower score first, then larger doc id.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then_with(|| self.doc.cmp(&other.doc))
    }
}

/// Size-bounded collection of the best (score, doc) pairs seen so far.
#[derive(Debug, Clone)]
pub struct ScoredHeap {
    capacity: usize,
    entries: BinaryHeap<HeapEntry>,
    members: HashSet<DocId>,
}

impl ScoredHeap {
    /// A heap holding at most `k` entries. `k` must be positive.
    pub fn new(k: usize) -> Self {
        assert!(k > 0, "heap capacity must be positive");
        Self {
            capacity: k,
            entries: BinaryHeap::with_capacity(k + 1),
            members: HashSet::with_capacity(k + 1),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.capacity
    }

    /// The current eviction threshold: the smallest held score, or negative
    /// infinity while the heap is under capacity.
    pub fn min_score(&self) -> f32 {
        if self.is_full() {
            self.entries.peek().expect("full heap is non-empty").score
        } else {
            f32::NEG_INFINITY
        }
    }

    pub fn contains(&self, doc: DocId) -> bool {
        self.members.contains(&doc)
    }

    /// Offers (score, doc). Returns whether the entry was accepted.
    ///
    /// A document already held is rejected outright. At capacity, the entry
    /// is accepted only if it ranks strictly above the current worst under
    /// (score desc, id asc), which then gets evicted.
    pub fn insert(&mut self, score: f32, doc: DocId) -> bool {
        if self.members.contains(&doc) {
            return false;
        }
        if self.entries.len() < self.capacity {
            self.entries.push(HeapEntry { score, doc });
            self.members.insert(doc);
            return true;
        }
        let worst = *self.entries.peek().expect("full heap is non-empty");
        let beats = match score.total_cmp(&worst.score) {
            Ordering::Greater => true,
            Ordering::Equal => doc < worst.doc,
            Ordering::Less => false,
        };
        if !beats {
            return false;
        }
        self.entries.pop();
        self.members.remove(&worst.doc);
        self.entries.push(HeapEntry { score, doc });
        self.members.insert(doc);
        true
    }

    /// Current contents as (doc, score), best first.
    pub fn sorted(&self) -> Vec<(DocId, f32)> {
        let mut out: Vec<(DocId, f32)> =
            self.entries.iter().map(|e| (e.doc, e.score)).collect();
        sort_hits(&mut out);
        out
    }

    /// Consumes the heap, returning (doc, score) pairs, best first.
    pub fn into_sorted(self) -> Vec<(DocId, f32)> {
        let mut out: Vec<(DocId, f32)> = self
            .entries
            .into_iter()
            .map(|e| (e.doc, e.score))
            .collect();
        sort_hits(&mut out);
        out
    }
}

/// Sorts (doc, score) pairs by (score desc, id asc).
pub fn sort_hits(hits: &mut [(DocId, f32)]) {
    hits.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_below_capacity() {
        let mut h = ScoredHeap::new(2);
        assert!(h.insert(5.0, 10));
        assert!(h.insert(3.0, 11));
        assert_eq!(h.sorted(), vec![(10, 5.0), (11, 3.0)]);
    }

    #[test]
    fn evicts_minimum_when_full() {
        let mut h = ScoredHeap::new(2);
        h.insert(5.0, 10);
        h.insert(3.0, 11);
        assert!(h.insert(4.0, 12));
        assert_eq!(h.sorted(), vec![(10, 5.0), (12, 4.0)]);
    }

    #[test]
    fn rejects_duplicate_doc() {
        let mut h = ScoredHeap::new(2);
        h.insert(5.0, 10);
        h.insert(3.0, 11);
        assert!(!h.insert(9.0, 10));
        assert_eq!(h.sorted(), vec![(10, 5.0), (11, 3.0)]);
    }

    #[test]
    fn min_is_negative_infinity_under_capacity() {
        let mut h = ScoredHeap::new(3);
        assert_eq!(h.min_score(), f32::NEG_INFINITY);
        h.insert(1.0, 0);
        assert_eq!(h.min_score(), f32::NEG_INFINITY);
        h.insert(2.0, 1);
        h.insert(3.0, 2);
        assert_eq!(h.min_score(), 1.0);
    }

    #[test]
    fn equal_scores_prefer_lower_doc_id() {
        let mut h = ScoredHeap::new(2);
        h.insert(1.0, 5);
        h.insert(1.0, 9);
        // Same score, lower id than the current worst (9): accepted.
        assert!(h.insert(1.0, 3));
        assert_eq!(h.sorted(), vec![(3, 1.0), (5, 1.0)]);
        // Same score, higher id than the current worst (5): rejected.
        assert!(!h.insert(1.0, 7));
    }

    /// Replays the same inserts into a plain sorted list and compares.
    #[test]
    fn matches_naive_replay() {
        let inserts: Vec<(f32, DocId)> = vec![
            (0.5, 3),
            (2.0, 1),
            (2.0, 7),
            (0.5, 3), // duplicate
            (1.25, 9),
            (2.0, 0),
            (-1.0, 4),
            (0.5, 2),
        ];
        for k in 1..=6 {
            let mut h = ScoredHeap::new(k);
            let mut seen: Vec<(f32, DocId)> = Vec::new();
            for &(s, d) in &inserts {
                h.insert(s, d);
                if !seen.iter().any(|&(_, sd)| sd == d) {
                    seen.push((s, d));
                }
            }
            seen.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
            seen.truncate(k);
            let expect: Vec<(DocId, f32)> = seen.into_iter().map(|(s, d)| (d, s)).collect();
            assert_eq!(h.into_sorted(), expect, "k={k}");
        }
    }
}
