//! Inner-product kernels shared by every scoring path.
//!
//! All accumulation is in f64 regardless of payload precision, and every
//! kernel uses a fixed association order (eight independent partial sums,
//! merged pairwise) so results are bit-reproducible across runs and thread
//! counts while still leaving instruction-level parallelism on the table.

const LANES: usize = 8;

#[inline]
fn merge(acc: [f64; LANES]) -> f64 {
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))
}

/// Dot product of two f32 slices, accumulated in f64.
pub(crate) fn dot_f32(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; LANES];
    let chunks_a = a.chunks_exact(LANES);
    let chunks_b = b.chunks_exact(LANES);
    let tail_a = chunks_a.remainder();
    let tail_b = chunks_b.remainder();
    for (x, y) in chunks_a.zip(chunks_b) {
        for l in 0..LANES {
            acc[l] += x[l] as f64 * y[l] as f64;
        }
    }
    let mut tail = 0.0f64;
    for (x, y) in tail_a.iter().zip(tail_b) {
        tail += *x as f64 * *y as f64;
    }
    merge(acc) + tail
}

/// Dot product of two f64 slices.
pub(crate) fn dot_f64(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; LANES];
    let chunks_a = a.chunks_exact(LANES);
    let chunks_b = b.chunks_exact(LANES);
    let tail_a = chunks_a.remainder();
    let tail_b = chunks_b.remainder();
    for (x, y) in chunks_a.zip(chunks_b) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0f64;
    for (x, y) in tail_a.iter().zip(tail_b) {
        tail += x * y;
    }
    merge(acc) + tail
}

/// Euclidean norm of an f32 slice, accumulated in f64.
pub(crate) fn norm_f32(a: &[f32]) -> f64 {
    dot_f32(a, a).sqrt()
}

/// Dot products of two equal-length f32 buffers taken block by block:
/// `out[b]` gets the dot of the b-th `dim`-sized slice of each buffer.
pub(crate) fn block_dots_f32(a: &[f32], b: &[f32], dim: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), b.len());
    debug_assert_eq!(out.len() * dim, a.len());
    for ((o, x), y) in out
        .iter_mut()
        .zip(a.chunks_exact(dim))
        .zip(b.chunks_exact(dim))
    {
        *o = dot_f32(x, y);
    }
}
