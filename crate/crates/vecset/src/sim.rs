//! The exact set-to-set similarity measure.
//!
//! Every other component of the crate is judged against this module: the
//! oracle scores with it, the engine rescoring path calls straight into it,
//! and the encoder identity tests compare long-vector dot products to it.
//!
//! The score between sets A and V is
//!
//! ```text
//! (w_max * max(ps) + w_avg * avg(ps)) / (w_max + w_avg)
//! ```
//!
//! where `ps` holds the cosines of all |A| * |V| member pairs, duplicates
//! included.

use crate::error::{Error, Result};
use crate::types::{PairwiseSims, SimParams, Vector, VectorSet};
use crate::vecmath;

fn clamp_cosine(x: f64) -> f64 {
    // Rounding can push a cosine a hair past 1; downstream max/avg logic
    // must never see 1 + epsilon.
    x.clamp(-1.0, 1.0)
}

/// Cosine of the angle between two vectors, clamped to [-1, 1].
pub fn cosine(a: &Vector, b: &Vector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(clamp_cosine(vecmath::dot_f64(
        &a.normalized_f64(),
        &b.normalized_f64(),
    )))
}

/// A set's members scaled to unit length in f64, normalized once so a
/// query side can be reused across many scored sets.
#[derive(Debug, Clone)]
pub(crate) struct NormalizedSet {
    members: Vec<Vec<f64>>,
}

impl NormalizedSet {
    pub(crate) fn from_set(s: &VectorSet) -> Self {
        Self {
            members: s.members().iter().map(Vector::normalized_f64).collect(),
        }
    }
}

/// Pairwise cosines between pre-normalized sets. This is the one routine
/// that defines the reference scores; the public entry points below all
/// delegate to it so that independent callers get bit-identical values.
pub(crate) fn pairwise_normalized(a: &NormalizedSet, v: &NormalizedSet) -> PairwiseSims {
    let mut values = Vec::with_capacity(a.members.len() * v.members.len());
    for ai in &a.members {
        for vj in &v.members {
            values.push(clamp_cosine(vecmath::dot_f64(ai, vj)));
        }
    }
    PairwiseSims::from_values(a.members.len(), v.members.len(), values)
}

pub(crate) fn blend(ps: &PairwiseSims, p: &SimParams) -> f64 {
    (p.w_max * ps.max() + p.w_avg * ps.avg()) / (p.w_max + p.w_avg)
}

/// Scores one pre-normalized pair of sets. Shared by the oracle and the
/// engine's rescoring path.
pub(crate) fn score_normalized(a: &NormalizedSet, v: &NormalizedSet, p: &SimParams) -> f64 {
    blend(&pairwise_normalized(a, v), p)
}

/// Cosines of all member pairs, row-major with the first set on rows.
pub fn pairwise_sims(a: &VectorSet, v: &VectorSet) -> Result<PairwiseSims> {
    if a.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: v.dim(),
        });
    }
    Ok(pairwise_normalized(
        &NormalizedSet::from_set(a),
        &NormalizedSet::from_set(v),
    ))
}

/// The exact similarity score between two sets.
pub fn set_similarity(a: &VectorSet, v: &VectorSet, p: &SimParams) -> Result<f64> {
    a.check_against(p)?;
    v.check_against(p)?;
    Ok(blend(&pairwise_sims(a, v)?, p))
}
