//! Seeded k-means for the IVF coarse quantizer.
//!
//! Plus-plus initialization followed by a fixed number of Lloyd iterations.
//! Everything is deterministic for a given seed: the RNG is a counter-based
//! stream cipher, assignment ties go to the lowest centroid index, and
//! parallelism never changes summation order (rows are independent in the
//! assign step; centroid updates run serially in row order).

use crate::vecmath;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub(crate) struct Clustering {
    /// leaves * row_len, row-major f32. Computed in f64, stored rounded.
    pub centroids: Vec<f32>,
    /// Row index -> centroid index.
    pub assignments: Vec<u32>,
}

/// Index of the centroid nearest to `row` (Euclidean). Ties resolve to the
/// lowest index via strict comparison.
fn nearest(row: &[f32], centroids: &[f32], centroid_norms_sq: &[f64]) -> u32 {
    let row_len = row.len();
    let mut best = 0u32;
    let mut best_score = f64::INFINITY;
    for (c, norm_sq) in centroid_norms_sq.iter().enumerate() {
        // Squared distance minus the constant row norm term.
        let score = norm_sq - 2.0 * vecmath::dot_f32(row, &centroids[c * row_len..(c + 1) * row_len]);
        if score < best_score {
            best_score = score;
            best = c as u32;
        }
    }
    best
}

fn centroid_norms_sq(centroids: &[f32], row_len: usize) -> Vec<f64> {
    centroids
        .chunks_exact(row_len)
        .map(|c| vecmath::dot_f32(c, c))
        .collect()
}

/// Assigns every row to its nearest centroid. Used at build time and again
/// when an index is loaded from disk, so posting lists reconstruct
/// identically.
pub(crate) fn assign(data: &[f32], row_len: usize, centroids: &[f32]) -> Vec<u32> {
    let norms = centroid_norms_sq(centroids, row_len);
    data.par_chunks_exact(row_len)
        .map(|row| nearest(row, centroids, &norms))
        .collect()
}

fn dist_sq(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let d = *x as f64 - *y as f64;
        acc += d * d;
    }
    acc
}

/// Plus-plus seeding: first center uniform, each next drawn with probability
/// proportional to squared distance from the chosen ones.
fn init_centroids(
    data: &[f32],
    row_len: usize,
    leaves: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f32> {
    let rows = data.len() / row_len;
    let mut centroids = Vec::with_capacity(leaves * row_len);
    let first = rng.random_range(0..rows);
    centroids.extend_from_slice(&data[first * row_len..(first + 1) * row_len]);

    let mut min_dist_sq: Vec<f64> = data
        .par_chunks_exact(row_len)
        .map(|row| dist_sq(row, &centroids[..row_len]))
        .collect();

    for _ in 1..leaves {
        let total: f64 = min_dist_sq.iter().sum();
        let pick = if total > 0.0 {
            let x = rng.random_range(0.0..total);
            let mut acc = 0.0f64;
            let mut chosen = rows - 1;
            for (r, w) in min_dist_sq.iter().enumerate() {
                acc += w;
                if x < acc {
                    chosen = r;
                    break;
                }
            }
            chosen
        } else {
            // Every row coincides with an existing centroid.
            rng.random_range(0..rows)
        };
        let start = centroids.len();
        centroids.extend_from_slice(&data[pick * row_len..(pick + 1) * row_len]);
        let new_centroid = centroids[start..].to_vec();
        min_dist_sq
            .par_iter_mut()
            .zip(data.par_chunks_exact(row_len))
            .for_each(|(m, row)| {
                let d = dist_sq(row, &new_centroid);
                if d < *m {
                    *m = d;
                }
            });
    }
    centroids
}

/// Clusters `rows = data.len() / row_len` rows into `leaves` groups.
/// Caller guarantees 1 <= leaves <= rows and iters >= 1.
pub(crate) fn cluster(
    data: &[f32],
    row_len: usize,
    leaves: usize,
    iters: usize,
    seed: u64,
) -> Clustering {
    let rows = data.len() / row_len;
    debug_assert!(leaves >= 1 && leaves <= rows);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = init_centroids(data, row_len, leaves, &mut rng);

    for _ in 0..iters {
        let assignments = assign(data, row_len, &centroids);
        let mut sums = vec![0.0f64; leaves * row_len];
        let mut counts = vec![0u64; leaves];
        for (row, &a) in data.chunks_exact(row_len).zip(&assignments) {
            counts[a as usize] += 1;
            let base = a as usize * row_len;
            for (slot, x) in sums[base..base + row_len].iter_mut().zip(row) {
                *slot += *x as f64;
            }
        }
        for (c, &count) in counts.iter().enumerate() {
            if count == 0 {
                // Empty cluster: keep the previous centroid.
                continue;
            }
            let inv = 1.0 / count as f64;
            let base = c * row_len;
            for (slot, s) in centroids[base..base + row_len].iter_mut().zip(&sums[base..]) {
                *slot = (s * inv) as f32;
            }
        }
    }

    // Final assignment against the final (f32) centroids; persists and
    // reloads reproduce exactly this.
    let assignments = assign(data, row_len, &centroids);
    Clustering {
        centroids,
        assignments,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_blobs() -> (Vec<f32>, usize) {
        // 50 rows near (10, 10), 50 rows near (-10, -10).
        let mut data = Vec::new();
        for i in 0..50 {
            let eps = (i as f32) * 0.01;
            data.extend_from_slice(&[10.0 + eps, 10.0 - eps]);
        }
        for i in 0..50 {
            let eps = (i as f32) * 0.01;
            data.extend_from_slice(&[-10.0 - eps, -10.0 + eps]);
        }
        (data, 2)
    }

    #[test]
    fn separates_two_blobs() {
        let (data, row_len) = two_blobs();
        let c = cluster(&data, row_len, 2, 10, 42);
        let first = c.assignments[0];
        assert!(c.assignments[..50].iter().all(|&a| a == first));
        let second = c.assignments[50];
        assert_ne!(first, second);
        assert!(c.assignments[50..].iter().all(|&a| a == second));
    }

    #[test]
    fn assignments_match_nearest_centroid() {
        let (data, row_len) = two_blobs();
        let c = cluster(&data, row_len, 2, 10, 7);
        let recomputed = assign(&data, row_len, &c.centroids);
        assert_eq!(recomputed, c.assignments);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let (data, row_len) = two_blobs();
        let a = cluster(&data, row_len, 4, 20, 1234);
        let b = cluster(&data, row_len, 4, 20, 1234);
        assert_eq!(a.centroids, b.centroids);
        assert_eq!(a.assignments, b.assignments);
    }

    #[test]
    fn leaves_equal_rows_gives_singletons() {
        let data: Vec<f32> = (0..12).map(|i| i as f32 * 3.0).collect();
        let c = cluster(&data, 2, 6, 5, 9);
        let mut counts = [0usize; 6];
        for &a in &c.assignments {
            counts[a as usize] += 1;
        }
        assert!(counts.iter().all(|&n| n == 1));
    }

    #[test]
    fn identical_rows_single_leaf() {
        let data = vec![1.0f32; 20];
        let c = cluster(&data, 4, 1, 3, 0);
        assert!(c.assignments.iter().all(|&a| a == 0));
    }
}
