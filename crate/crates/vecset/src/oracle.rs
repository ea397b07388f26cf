//! Exact brute-force set search: the ground truth every other path is
//! measured against, and the latency baseline for the benchmark.

use crate::error::{Error, Result};
use crate::sim::{score_normalized, NormalizedSet};
use crate::types::{SimParams, VectorSet};
use rayon::prelude::*;
use std::cmp::Ordering;

/// One ranked result: a stored set and its similarity to the query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchHit {
    pub set_id: u64,
    pub score: f64,
}

impl SearchHit {
    /// Ranking order: descending score, ties by ascending id. Total, so
    /// result lists are fully deterministic.
    pub(crate) fn ranking_cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then(self.set_id.cmp(&other.set_id))
    }
}

/// Sorts hits into ranking order (best first).
pub(crate) fn sort_hits(hits: &mut [SearchHit]) {
    hits.sort_unstable_by(|a, b| a.ranking_cmp(b));
}

/// A database prepared for repeated exact queries: members are normalized
/// once up front, so per-query work is one dense pass of dot products. This
/// is the measured brute-force baseline and must not carry avoidable
/// per-query overhead.
pub struct BruteForce {
    ids: Vec<u64>,
    sets: Vec<NormalizedSet>,
    params: SimParams,
}

impl BruteForce {
    pub fn new(database: &[VectorSet], p: &SimParams) -> Result<Self> {
        if database.is_empty() {
            return Err(Error::InvalidInput("database is empty".into()));
        }
        let mut ids = Vec::with_capacity(database.len());
        let mut sets = Vec::with_capacity(database.len());
        for s in database {
            s.check_against(p)?;
            ids.push(s.id());
            sets.push(NormalizedSet::from_set(s));
        }
        Ok(Self {
            ids,
            sets,
            params: *p,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// The `u` stored sets most similar to `a`, best first. Returns all of
    /// them when `u` exceeds the database size.
    pub fn top_u(&self, a: &VectorSet, u: usize) -> Result<Vec<SearchHit>> {
        if u == 0 {
            return Err(Error::InvalidInput("u must be at least 1".into()));
        }
        a.check_against(&self.params)?;
        let query = NormalizedSet::from_set(a);
        let mut hits: Vec<SearchHit> = self
            .ids
            .iter()
            .zip(&self.sets)
            .map(|(id, v)| SearchHit {
                set_id: *id,
                score: score_normalized(&query, v, &self.params),
            })
            .collect();
        sort_hits(&mut hits);
        hits.truncate(u);
        Ok(hits)
    }

    /// Runs `top_u` for many queries, distributing whole queries across
    /// worker threads. Output order matches query order.
    pub fn top_u_batch(&self, queries: &[VectorSet], u: usize) -> Result<Vec<Vec<SearchHit>>> {
        queries
            .par_iter()
            .map(|q| self.top_u(q, u))
            .collect::<Result<Vec<_>>>()
    }
}

/// One-shot exact search over a database of sets.
pub fn oracle_top_u(
    a: &VectorSet,
    database: &[VectorSet],
    u: usize,
    p: &SimParams,
) -> Result<Vec<SearchHit>> {
    BruteForce::new(database, p)?.top_u(a, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Vector;

    fn set(id: u64, vs: &[&[f32]]) -> VectorSet {
        VectorSet::new(
            id,
            vs.iter().map(|v| Vector::new(v.to_vec()).unwrap()).collect(),
        )
        .unwrap()
    }

    fn params() -> SimParams {
        SimParams::new(1.0, 1.0, 2, 4).unwrap()
    }

    #[test]
    fn self_similarity_wins() {
        let a = set(42, &[&[1.0, 2.0], &[0.5, -0.5]]);
        let db = vec![set(7, &[&[-2.0, 1.0]]), a.clone()];
        let hits = oracle_top_u(&a, &db, 2, &params()).unwrap();
        assert_eq!(hits[0].set_id, 42);
        // Self-similarity is below 1 for a set with non-parallel members:
        // the diagonal pairs score 1 but the two cross pairs contribute c.
        let c = -0.5 / (5.0f64 * 0.5).sqrt();
        let expected = (1.0 + (1.0 + c) / 2.0) / 2.0;
        assert!((hits[0].score - expected).abs() < 1e-9);
    }

    #[test]
    fn ranks_by_blended_score() {
        let a = set(0, &[&[1.0, 0.0]]);
        let db = vec![set(1, &[&[0.0, 1.0]]), set(2, &[&[1.0, 0.0], &[0.0, 1.0]])];
        let hits = oracle_top_u(&a, &db, 2, &params()).unwrap();
        assert_eq!(hits[0].set_id, 2);
        assert!((hits[0].score - 0.75).abs() < 1e-12);
        assert_eq!(hits[1].set_id, 1);
        assert!(hits[1].score.abs() < 1e-12);
    }

    #[test]
    fn u_larger_than_database_returns_all() {
        let a = set(0, &[&[1.0, 0.0]]);
        let db = vec![set(1, &[&[1.0, 1.0]]), set(2, &[&[0.0, 1.0]])];
        let hits = oracle_top_u(&a, &db, 10, &params()).unwrap();
        assert_eq!(hits.len(), 2);
    }

    #[test]
    fn ties_break_by_ascending_id() {
        let a = set(0, &[&[1.0, 0.0]]);
        let twin = &[&[0.5f32, 0.5] as &[f32]];
        let db = vec![set(9, twin), set(3, twin), set(7, twin)];
        let hits = oracle_top_u(&a, &db, 3, &params()).unwrap();
        let ids: Vec<u64> = hits.iter().map(|h| h.set_id).collect();
        assert_eq!(ids, vec![3, 7, 9]);
    }

    #[test]
    fn rejects_empty_database_and_zero_u() {
        let a = set(0, &[&[1.0, 0.0]]);
        assert!(oracle_top_u(&a, &[], 1, &params()).is_err());
        let db = vec![set(1, &[&[1.0, 1.0]])];
        assert!(oracle_top_u(&a, &db, 0, &params()).is_err());
    }

    #[test]
    fn batch_matches_single() {
        let db = vec![
            set(1, &[&[1.0, 0.2], &[-0.3, 0.8]]),
            set(2, &[&[0.1, 1.0]]),
            set(3, &[&[-1.0, -1.0], &[0.4, 0.6]]),
        ];
        let queries = vec![set(100, &[&[0.9, 0.1]]), set(101, &[&[-0.5, 0.5], &[1.0, 1.0]])];
        let bf = BruteForce::new(&db, &params()).unwrap();
        let batch = bf.top_u_batch(&queries, 2).unwrap();
        for (q, hits) in queries.iter().zip(&batch) {
            assert_eq!(hits, &bf.top_u(q, 2).unwrap());
        }
    }
}
