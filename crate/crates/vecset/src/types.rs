//! Domain types shared across the crate.

use crate::error::{Error, Result};
use crate::vecmath;
use serde::{Deserialize, Serialize};

/// Smallest Euclidean norm accepted for any vector. Anything at or below
/// this is rejected at construction time because cosine is undefined for it
/// and a silently substituted zero would corrupt the max over pairs.
pub const MIN_NORM: f64 = 1e-12;

/// One embedding vector. Payload is f32; all arithmetic on it accumulates
/// in f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    components: Vec<f32>,
}

impl Vector {
    /// Rejects empty, non-finite, and near-zero-norm inputs.
    pub fn new(components: Vec<f32>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidInput("vector has no components".into()));
        }
        if components.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(
                "vector has a non-finite component".into(),
            ));
        }
        let norm = vecmath::norm_f32(&components);
        if norm <= MIN_NORM {
            return Err(Error::DegenerateVector { norm });
        }
        Ok(Self { components })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[f32] {
        &self.components
    }

    pub fn norm(&self) -> f64 {
        vecmath::norm_f32(&self.components)
    }

    /// The vector scaled to unit length, in f64.
    pub(crate) fn normalized_f64(&self) -> Vec<f64> {
        let inv = 1.0 / self.norm();
        self.components.iter().map(|c| *c as f64 * inv).collect()
    }

    /// The vector scaled to unit length, rounded back to f32 payload
    /// precision. Used by the encoder.
    pub(crate) fn normalized_f32(&self) -> Vec<f32> {
        let inv = 1.0 / self.norm();
        self.components
            .iter()
            .map(|c| (*c as f64 * inv) as f32)
            .collect()
    }
}

/// An identified set of vectors; the unit of storage and query.
///
/// Member order is stable and meaningful: encodings address members by
/// position.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSet {
    id: u64,
    members: Vec<Vector>,
}

impl VectorSet {
    /// Requires at least one member and a uniform member dimension.
    /// The upper cardinality bound is enforced where a [`SimParams`] is in
    /// scope (engine ingestion, similarity evaluation).
    pub fn new(id: u64, members: Vec<Vector>) -> Result<Self> {
        let first_dim = match members.first() {
            Some(m) => m.dim(),
            None => return Err(Error::InvalidInput(format!("set {id} has no members"))),
        };
        for m in &members {
            if m.dim() != first_dim {
                return Err(Error::DimensionMismatch {
                    expected: first_dim,
                    actual: m.dim(),
                });
            }
        }
        Ok(Self { id, members })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn members(&self) -> &[Vector] {
        &self.members
    }

    pub fn card(&self) -> usize {
        self.members.len()
    }

    pub fn dim(&self) -> usize {
        self.members[0].dim()
    }

    /// Checks this set against engine-wide bounds.
    pub(crate) fn check_against(&self, p: &SimParams) -> Result<()> {
        if self.dim() != p.dim {
            return Err(Error::DimensionMismatch {
                expected: p.dim,
                actual: self.dim(),
            });
        }
        if self.card() > p.max_card {
            return Err(Error::InvalidInput(format!(
                "set {} has cardinality {}, above the configured maximum {}",
                self.id,
                self.card(),
                p.max_card
            )));
        }
        Ok(())
    }
}

/// Engine-wide similarity parameters: the max/avg blend weights and the
/// structural bounds every set must respect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub w_max: f64,
    pub w_avg: f64,
    /// Vector dimension D, fixed for the lifetime of an engine.
    pub dim: usize,
    /// Upper bound M on set cardinality.
    pub max_card: usize,
}

impl SimParams {
    pub fn new(w_max: f64, w_avg: f64, dim: usize, max_card: usize) -> Result<Self> {
        if !w_max.is_finite() || !w_avg.is_finite() || w_max < 0.0 || w_avg < 0.0 {
            return Err(Error::InvalidInput(
                "weights must be finite and nonnegative".into(),
            ));
        }
        if w_max + w_avg <= 0.0 {
            return Err(Error::InvalidInput(
                "w_max + w_avg must be positive; the similarity divides by it".into(),
            ));
        }
        if dim == 0 {
            return Err(Error::InvalidInput("dim must be positive".into()));
        }
        if max_card == 0 {
            return Err(Error::InvalidInput("max_card must be positive".into()));
        }
        Ok(Self {
            w_max,
            w_avg,
            dim,
            max_card,
        })
    }
}

/// All pairwise cosines between two sets, row-major over (i, j) with i
/// indexing the first set. Values are clamped to [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseSims {
    a_card: usize,
    v_card: usize,
    values: Vec<f64>,
}

impl PairwiseSims {
    pub(crate) fn from_values(a_card: usize, v_card: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), a_card * v_card);
        Self {
            a_card,
            v_card,
            values,
        }
    }

    pub fn a_card(&self) -> usize {
        self.a_card
    }

    pub fn v_card(&self) -> usize {
        self.v_card
    }

    /// Cosine between member `i` of the first set and member `j` of the
    /// second. Indices are zero-based.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.v_card + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Mean over all entries; duplicates count, so the divisor is exactly
    /// `a_card * v_card`.
    pub fn avg(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    /// Zero-based (i, j) pairs whose value is within `tol` of the maximum.
    pub fn argmax_pairs(&self, tol: f64) -> Vec<(usize, usize)> {
        let best = self.max();
        let mut out = Vec::new();
        for i in 0..self.a_card {
            for j in 0..self.v_card {
                if best - self.get(i, j) <= tol {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_vector() {
        assert!(matches!(
            Vector::new(vec![0.0, 0.0]),
            Err(Error::DegenerateVector { .. })
        ));
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(Vector::new(vec![]).is_err());
        assert!(Vector::new(vec![f32::NAN, 1.0]).is_err());
        assert!(Vector::new(vec![f32::INFINITY]).is_err());
    }

    #[test]
    fn accepts_tiny_but_valid() {
        let v = Vector::new(vec![1e-5, 0.0]).unwrap();
        assert_eq!(v.dim(), 2);
    }

    #[test]
    fn set_requires_uniform_dim() {
        let a = Vector::new(vec![1.0, 0.0]).unwrap();
        let b = Vector::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            VectorSet::new(7, vec![a, b]),
            Err(Error::DimensionMismatch {
                expected: 2,
                actual: 3
            })
        ));
    }

    #[test]
    fn set_rejects_empty() {
        assert!(VectorSet::new(1, vec![]).is_err());
    }

    #[test]
    fn params_reject_zero_weight_sum() {
        assert!(SimParams::new(0.0, 0.0, 4, 2).is_err());
        assert!(SimParams::new(-1.0, 2.0, 4, 2).is_err());
        assert!(SimParams::new(1.0, 0.0, 4, 2).is_ok());
    }

    #[test]
    fn pairwise_accessors() {
        let ps = PairwiseSims::from_values(2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        assert_eq!(ps.get(1, 2), 0.6);
        assert_eq!(ps.max(), 0.6);
        assert!((ps.avg() - 0.35).abs() < 1e-12);
        assert!((ps.sum() - 2.1).abs() < 1e-12);
        assert_eq!(ps.argmax_pairs(1e-9), vec![(1, 2)]);
    }
}
