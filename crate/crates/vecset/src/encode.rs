//! Long-vector encodings.
//!
//! A stored set V is flattened into a "long candidate vector": n copies of
//! each unit-normalized member, laid out so that one inner product against a
//! per-query "long target vector" evaluates the full max/avg similarity
//! blend under an assumed best pair. Top-u set search then reduces to
//! maximum inner product search over these flat buffers.
//!
//! Layouts, zero-based throughout:
//!
//! * candidate, shape (n, k, D) with k = |V|: copy t of member v_j sits in
//!   block j*n + t
//! * target, shape (n, k, D) with n = |A|: copy c of member a_i sits in
//!   block c*n + i
//!
//! With n = |A| and k = |V| the two layouts align so block p multiplies
//! a_(p mod n) against v_(p div n): every member pair meets exactly once,
//! which is what makes the dot-product identities hold.

use crate::error::{Error, Result};
use crate::types::{SimParams, VectorSet};
use crate::vecmath;
use std::fmt;

/// Shape tag carried by every long vector and checked on every dot.
/// Two long vectors are compatible exactly when their shapes are equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    /// n: the target cardinality the encoding assumes (copies per candidate
    /// member; member count on the target side).
    pub target_card: usize,
    /// k: the candidate cardinality (member count on the candidate side;
    /// copies on the target side).
    pub candidate_card: usize,
    /// D: the underlying vector dimension.
    pub dim: usize,
}

impl Shape {
    pub fn new(target_card: usize, candidate_card: usize, dim: usize) -> Self {
        Self {
            target_card,
            candidate_card,
            dim,
        }
    }

    /// Flat buffer length: n * k * D.
    pub fn len(&self) -> usize {
        self.target_card * self.candidate_card * self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn blocks(&self) -> usize {
        self.target_card * self.candidate_card
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(n={}, k={}, d={})",
            self.target_card, self.candidate_card, self.dim
        )
    }
}

/// Block addressing for one shape. Blocks are consecutive D-sized slices of
/// the flat buffer.
#[derive(Debug, Clone, Copy)]
pub struct BlockLayout {
    shape: Shape,
}

impl BlockLayout {
    pub fn new(shape: Shape) -> Self {
        Self { shape }
    }

    /// Candidate side: block of copy `copy` of member `member`.
    pub fn candidate_block(&self, member: usize, copy: usize) -> usize {
        debug_assert!(member < self.shape.candidate_card);
        debug_assert!(copy < self.shape.target_card);
        member * self.shape.target_card + copy
    }

    /// Target side: block of member `member` inside copy `copy`.
    pub fn target_block(&self, copy: usize, member: usize) -> usize {
        debug_assert!(copy < self.shape.candidate_card);
        debug_assert!(member < self.shape.target_card);
        copy * self.shape.target_card + member
    }

    /// Flat index range of one block.
    pub fn block_range(&self, block: usize) -> std::ops::Range<usize> {
        let start = block * self.shape.dim;
        start..start + self.shape.dim
    }
}

/// What a long vector encodes; informational, not part of dot compatibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LongKind {
    Candidate,
    Target,
    Selector,
}

/// A flat buffer of shape.len() floats plus its shape tag.
#[derive(Debug, Clone, PartialEq)]
pub struct LongVector {
    shape: Shape,
    kind: LongKind,
    data: Vec<f32>,
}

impl LongVector {
    pub(crate) fn from_parts(shape: Shape, kind: LongKind, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), shape.len());
        Self { shape, kind, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn kind(&self) -> LongKind {
        self.kind
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub(crate) fn into_data(self) -> Vec<f32> {
        self.data
    }
}

/// The (target member, candidate member) pair a long target vector presumes
/// achieves the maximum pairwise cosine. Indices are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssumedWinner {
    pub target_member: usize,
    pub candidate_member: usize,
}

fn check_replication(n: usize, p: &SimParams) -> Result<()> {
    if n == 0 || n > p.max_card {
        return Err(Error::InvalidInput(format!(
            "replication count {n} outside [1, {}]",
            p.max_card
        )));
    }
    Ok(())
}

/// Encodes stored set V for queries of assumed cardinality `n`: n copies of
/// each unit-normalized member, members in order, copies adjacent.
pub fn encode_candidate(v: &VectorSet, n: usize, p: &SimParams) -> Result<LongVector> {
    v.check_against(p)?;
    check_replication(n, p)?;
    let shape = Shape::new(n, v.card(), p.dim);
    let layout = BlockLayout::new(shape);
    let mut data = vec![0.0f32; shape.len()];
    for (j, member) in v.members().iter().enumerate() {
        // Copies must be bit-identical; the alignment identity depends on
        // exact duplication.
        let unit = member.normalized_f32();
        for t in 0..n {
            data[layout.block_range(layout.candidate_block(j, t))].copy_from_slice(&unit);
        }
    }
    Ok(LongVector::from_parts(shape, LongKind::Candidate, data))
}

/// Encodes query set A against candidate cardinality `k`: the concatenation
/// of all unit-normalized members, duplicated k times.
pub fn encode_target_base(a: &VectorSet, k: usize, p: &SimParams) -> Result<LongVector> {
    a.check_against(p)?;
    check_replication(k, p)?;
    let shape = Shape::new(a.card(), k, p.dim);
    let layout = BlockLayout::new(shape);
    let mut data = vec![0.0f32; shape.len()];
    for (i, member) in a.members().iter().enumerate() {
        let unit = member.normalized_f32();
        for c in 0..k {
            data[layout.block_range(layout.target_block(c, i))].copy_from_slice(&unit);
        }
    }
    Ok(LongVector::from_parts(shape, LongKind::Target, data))
}

/// All-zeros except an all-ones block at the position that isolates the
/// interaction of target member `i` with candidate member `j`. Indices are
/// zero-based.
pub fn selector(i: usize, j: usize, a_card: usize, k: usize, dim: usize) -> Result<LongVector> {
    if a_card == 0 || k == 0 || dim == 0 {
        return Err(Error::InvalidInput(
            "selector cardinalities and dimension must be positive".into(),
        ));
    }
    if i >= a_card || j >= k {
        return Err(Error::InvalidInput(format!(
            "selector indices ({i}, {j}) out of range for cardinalities ({a_card}, {k})"
        )));
    }
    let shape = Shape::new(a_card, k, dim);
    let layout = BlockLayout::new(shape);
    let mut data = vec![0.0f32; shape.len()];
    data[layout.block_range(layout.target_block(j, i))].fill(1.0);
    Ok(LongVector::from_parts(shape, LongKind::Selector, data))
}

/// Per-search block weights for a query of cardinality `a_card` against
/// candidate cardinality `k`. Search (i, j) weighs every block by the
/// averaging coefficient and adds the max coefficient on the one block
/// pairing target member i with candidate member j, so scaling block b of
/// [`encode_target_base`]'s output by `weights[b]` reproduces the matching
/// [`encode_targets`] entry (up to the f32 rounding of the stored blocks).
/// Pairs come out in the same order as [`encode_targets`]: i major, j minor.
pub fn target_block_weights(
    a_card: usize,
    k: usize,
    p: &SimParams,
) -> Result<Vec<(AssumedWinner, Vec<f64>)>> {
    check_replication(a_card, p)?;
    check_replication(k, p)?;
    let blocks = a_card * k;
    let weight_sum = p.w_max + p.w_avg;
    let max_coeff = p.w_max / weight_sum;
    let avg_coeff = p.w_avg / (blocks as f64 * weight_sum);
    let mut out = Vec::with_capacity(blocks);
    for i in 0..a_card {
        for j in 0..k {
            let mut weights = vec![avg_coeff; blocks];
            // Target layout: member i of copy j sits in block j * a_card + i.
            weights[j * a_card + i] += max_coeff;
            out.push((
                AssumedWinner {
                    target_member: i,
                    candidate_member: j,
                },
                weights,
            ));
        }
    }
    Ok(out)
}

/// Builds all |A| * k long target vectors for query set A against candidate
/// cardinality k. Entry (i, j) satisfies, for every candidate set V with
/// |V| = k,
///
/// ```text
/// dot(tau_ij, encode_candidate(V, |A|))
///     = (w_max * cos(a_i, v_j) + w_avg * avg(ps)) / (w_max + w_avg)
/// ```
///
/// which never exceeds the true similarity and equals it when (i, j) is a
/// maximal pair. Searching with all of them and keeping the best hit is
/// therefore exact for top-1 under an exact inner-product backend.
pub fn encode_targets(
    a: &VectorSet,
    k: usize,
    p: &SimParams,
) -> Result<Vec<(AssumedWinner, LongVector)>> {
    a.check_against(p)?;
    let a_card = a.card();
    let shape = Shape::new(a_card, k, p.dim);
    let layout = BlockLayout::new(shape);
    let units: Vec<Vec<f64>> = a.members().iter().map(|m| m.normalized_f64()).collect();
    let weighted = target_block_weights(a_card, k, p)?;
    let mut out = Vec::with_capacity(weighted.len());
    for (winner, weights) in weighted {
        let mut data = vec![0.0f32; shape.len()];
        for (b, w) in weights.iter().enumerate() {
            // Block b holds member (b mod a_card); see target_block.
            let unit = &units[b % a_card];
            for (slot, x) in data[layout.block_range(b)].iter_mut().zip(unit) {
                *slot = (w * x) as f32;
            }
        }
        out.push((winner, LongVector::from_parts(shape, LongKind::Target, data)));
    }
    Ok(out)
}

/// Inner product of two long vectors with identical shape tags.
pub fn dot(x: &LongVector, y: &LongVector) -> Result<f64> {
    if x.shape != y.shape {
        return Err(Error::ShapeMismatch(x.shape, y.shape));
    }
    Ok(vecmath::dot_f32(&x.data, &y.data))
}
