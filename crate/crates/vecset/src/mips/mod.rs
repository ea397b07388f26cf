//! Maximum inner product search over equal-shape long vectors.
//!
//! Two backends behind one type: `Flat` scans every entry and is exact;
//! `Ivf` clusters entries with k-means and scans only the posting lists
//! whose centroids score highest against the query. The `probes` knob
//! trades recall for speed, and probing every leaf reproduces the flat
//! results exactly.

mod io;
mod kmeans;

use crate::encode::{LongVector, Shape};
use crate::error::{Error, Result};
use crate::oracle::SearchHit;
use crate::vecmath;
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::path::Path;

/// Build parameters for the IVF backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IvfParams {
    /// Number of k-means clusters (posting lists).
    pub leaves: usize,
    /// Default number of lists a query scans; at most `leaves`.
    pub probes: usize,
    pub kmeans_iters: usize,
    pub seed: u64,
}

impl IvfParams {
    pub const DEFAULT_KMEANS_ITERS: usize = 20;
    pub const DEFAULT_SEED: u64 = 42;

    /// Conventional sizing for an index of `entries` rows: sqrt(entries)
    /// leaves, exhaustive probing until tuned otherwise.
    pub fn for_entry_count(entries: usize) -> Self {
        let leaves = ((entries as f64).sqrt().round() as usize).max(1);
        Self {
            leaves,
            probes: leaves,
            kmeans_iters: Self::DEFAULT_KMEANS_ITERS,
            seed: Self::DEFAULT_SEED,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.leaves == 0 {
            return Err(Error::InvalidInput("leaves must be at least 1".into()));
        }
        if self.probes == 0 || self.probes > self.leaves {
            return Err(Error::InvalidInput(format!(
                "probes {} outside [1, {}]",
                self.probes, self.leaves
            )));
        }
        if self.kmeans_iters == 0 {
            return Err(Error::InvalidInput(
                "kmeans_iters must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Variant {
    Flat,
    Ivf {
        /// leaves * row_len, row-major.
        centroids: Vec<f32>,
        /// Row indexes per centroid; every row appears in exactly one list.
        lists: Vec<Vec<u32>>,
    },
}

/// Per-search work counters, for query reports and benchmark accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchStats {
    /// Posting lists scanned (1 for a flat scan).
    pub probes_scanned: usize,
    /// Entry rows scored against the query.
    pub rows_scored: usize,
}

/// Results of [`MipsIndex::search_grouped`]: one ranked hit list per weight
/// vector, plus counters summed over all of them.
#[derive(Debug, Clone)]
pub struct GroupedHits {
    pub per_search: Vec<Vec<SearchHit>>,
    pub stats: SearchStats,
}

/// An immutable searchable collection of long candidate vectors that all
/// share one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct MipsIndex {
    shape: Shape,
    ids: Vec<u64>,
    data: Vec<f32>,
    variant: Variant,
}

fn collect_entries(entries: Vec<(u64, LongVector)>) -> Result<(Shape, Vec<u64>, Vec<f32>)> {
    let shape = match entries.first() {
        Some((_, lv)) => lv.shape(),
        None => return Err(Error::InvalidInput("no entries to index".into())),
    };
    let mut seen = HashSet::with_capacity(entries.len());
    let mut ids = Vec::with_capacity(entries.len());
    let mut data = Vec::with_capacity(entries.len() * shape.len());
    for (id, lv) in entries {
        if lv.shape() != shape {
            return Err(Error::ShapeMismatch(shape, lv.shape()));
        }
        if !seen.insert(id) {
            return Err(Error::DuplicateSetId(id));
        }
        ids.push(id);
        data.extend_from_slice(&lv.into_data());
    }
    Ok((shape, ids, data))
}

fn lists_from_assignments(assignments: &[u32], leaves: usize) -> Vec<Vec<u32>> {
    let mut lists = vec![Vec::new(); leaves];
    for (row, &a) in assignments.iter().enumerate() {
        lists[a as usize].push(row as u32);
    }
    lists
}

/// Bounded keeper of the best `r` hits. The heap orders by reversed rank so
/// the current worst sits on top; because (score, id) pairs are totally
/// ordered and ids are unique, the surviving set does not depend on scan
/// order.
struct TopR {
    heap: BinaryHeap<WorstFirst>,
    r: usize,
}

struct WorstFirst(SearchHit);

impl PartialEq for WorstFirst {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for WorstFirst {}
impl PartialOrd for WorstFirst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for WorstFirst {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.ranking_cmp(&other.0)
    }
}

impl TopR {
    fn new(r: usize) -> Self {
        Self {
            heap: BinaryHeap::with_capacity(r + 1),
            r,
        }
    }

    fn offer(&mut self, hit: SearchHit) {
        if self.heap.len() < self.r {
            self.heap.push(WorstFirst(hit));
        } else if let Some(worst) = self.heap.peek() {
            if hit.ranking_cmp(&worst.0) == Ordering::Less {
                self.heap.pop();
                self.heap.push(WorstFirst(hit));
            }
        }
    }

    fn into_ranked(self) -> Vec<SearchHit> {
        self.heap.into_sorted_vec().into_iter().map(|w| w.0).collect()
    }
}

impl MipsIndex {
    /// Exact backend: one flat buffer, every search scans all of it.
    pub fn build_flat(entries: Vec<(u64, LongVector)>) -> Result<Self> {
        let (shape, ids, data) = collect_entries(entries)?;
        Ok(Self {
            shape,
            ids,
            data,
            variant: Variant::Flat,
        })
    }

    /// Approximate backend: k-means partitions the entries into posting
    /// lists; searches scan only the probed lists.
    pub fn build_ivf(entries: Vec<(u64, LongVector)>, params: &IvfParams) -> Result<Self> {
        params.validate()?;
        let (shape, ids, data) = collect_entries(entries)?;
        if params.leaves > ids.len() {
            return Err(Error::InvalidInput(format!(
                "{} leaves for {} entries",
                params.leaves,
                ids.len()
            )));
        }
        let clustering = kmeans::cluster(
            &data,
            shape.len(),
            params.leaves,
            params.kmeans_iters,
            params.seed,
        );
        let lists = lists_from_assignments(&clustering.assignments, params.leaves);
        Ok(Self {
            shape,
            ids,
            data,
            variant: Variant::Ivf {
                centroids: clustering.centroids,
                lists,
            },
        })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of posting lists, or None for the flat backend.
    pub fn leaves(&self) -> Option<usize> {
        match &self.variant {
            Variant::Flat => None,
            Variant::Ivf { lists, .. } => Some(lists.len()),
        }
    }

    /// Posting lists (row indexes per leaf), or None for the flat backend.
    pub fn posting_lists(&self) -> Option<&[Vec<u32>]> {
        match &self.variant {
            Variant::Flat => None,
            Variant::Ivf { lists, .. } => Some(lists),
        }
    }

    pub fn entry_ids(&self) -> &[u64] {
        &self.ids
    }

    fn row(&self, row: usize) -> &[f32] {
        let len = self.shape.len();
        &self.data[row * len..(row + 1) * len]
    }

    /// The `top_r` entries with the largest inner product against `query`,
    /// best first. For the IVF backend only the `probes` most promising
    /// posting lists are scanned (clamped to the leaf count); the flat
    /// backend ignores `probes`.
    pub fn search(&self, query: &LongVector, top_r: usize, probes: usize) -> Result<Vec<SearchHit>> {
        Ok(self.search_with_stats(query, top_r, probes)?.0)
    }

    /// `search` plus work counters.
    pub fn search_with_stats(
        &self,
        query: &LongVector,
        top_r: usize,
        probes: usize,
    ) -> Result<(Vec<SearchHit>, SearchStats)> {
        if query.shape() != self.shape {
            return Err(Error::ShapeMismatch(self.shape, query.shape()));
        }
        if top_r == 0 {
            return Err(Error::InvalidInput("top_r must be at least 1".into()));
        }
        let q = query.data();
        let mut keeper = TopR::new(top_r);
        let stats = match &self.variant {
            Variant::Flat => {
                for (row, id) in self.ids.iter().enumerate() {
                    keeper.offer(SearchHit {
                        set_id: *id,
                        score: vecmath::dot_f32(q, self.row(row)),
                    });
                }
                SearchStats {
                    probes_scanned: 1,
                    rows_scored: self.ids.len(),
                }
            }
            Variant::Ivf { centroids, lists } => {
                if probes == 0 {
                    return Err(Error::InvalidInput("probes must be at least 1".into()));
                }
                let row_len = self.shape.len();
                // Rank leaves by centroid inner product with the query; the
                // long vectors are not unit norm, so this matches the
                // retrieval objective rather than centroid distance.
                let mut ranked: Vec<(f64, usize)> = centroids
                    .chunks_exact(row_len)
                    .map(|c| vecmath::dot_f32(q, c))
                    .enumerate()
                    .map(|(i, s)| (s, i))
                    .collect();
                ranked.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                let effective = probes.min(lists.len());
                let mut rows_scored = 0usize;
                for &(_, leaf) in ranked.iter().take(effective) {
                    for &row in &lists[leaf] {
                        let row = row as usize;
                        keeper.offer(SearchHit {
                            set_id: self.ids[row],
                            score: vecmath::dot_f32(q, self.row(row)),
                        });
                        rows_scored += 1;
                    }
                }
                SearchStats {
                    probes_scanned: effective,
                    rows_scored,
                }
            }
        };
        Ok((keeper.into_ranked(), stats))
    }

    /// Runs many searches that differ only by per-block weights in one pass
    /// over the data.
    ///
    /// Search s scores an entry x as the sum over blocks b of
    /// `weights[s][b] * dot(base block b, x block b)`, the inner product x
    /// would have with the long vector obtained by scaling each base block
    /// by its weight. Results match issuing those scaled queries through
    /// [`MipsIndex::search`] one at a time (up to the f32 rounding a
    /// materialized query would add), but entries are loaded and their block
    /// dots computed once per row instead of once per search, which is what
    /// makes wide query fan-out affordable.
    ///
    /// Leaf selection stays per search: each search ranks the centroids
    /// under its own weights and probes its own `probes` best lists; a list
    /// probed by several searches is scanned once. Counters accumulate over
    /// all searches, so they match the sum of per-search stats.
    pub fn search_grouped(
        &self,
        base: &LongVector,
        weights: &[Vec<f64>],
        top_r: usize,
        probes: usize,
    ) -> Result<GroupedHits> {
        if base.shape() != self.shape {
            return Err(Error::ShapeMismatch(self.shape, base.shape()));
        }
        if top_r == 0 {
            return Err(Error::InvalidInput("top_r must be at least 1".into()));
        }
        if weights.is_empty() {
            return Err(Error::InvalidInput("no weight vectors to search".into()));
        }
        let blocks = self.shape.blocks();
        for w in weights {
            if w.len() != blocks {
                return Err(Error::InvalidInput(format!(
                    "weight vector has {} entries for {blocks} blocks",
                    w.len()
                )));
            }
        }
        let dim = self.shape.dim;
        let q = base.data();
        let mut keepers: Vec<TopR> = weights.iter().map(|_| TopR::new(top_r)).collect();
        let mut g = vec![0.0f64; blocks];
        let stats = match &self.variant {
            Variant::Flat => {
                for (row, id) in self.ids.iter().enumerate() {
                    vecmath::block_dots_f32(q, self.row(row), dim, &mut g);
                    for (keeper, w) in keepers.iter_mut().zip(weights) {
                        keeper.offer(SearchHit {
                            set_id: *id,
                            score: vecmath::dot_f64(w, &g),
                        });
                    }
                }
                SearchStats {
                    probes_scanned: weights.len(),
                    rows_scored: self.ids.len() * weights.len(),
                }
            }
            Variant::Ivf { centroids, lists } => {
                if probes == 0 {
                    return Err(Error::InvalidInput("probes must be at least 1".into()));
                }
                let row_len = self.shape.len();
                let effective = probes.min(lists.len());
                let mut ranked: Vec<Vec<(f64, usize)>> =
                    vec![Vec::with_capacity(lists.len()); weights.len()];
                for (leaf, c) in centroids.chunks_exact(row_len).enumerate() {
                    vecmath::block_dots_f32(q, c, dim, &mut g);
                    for (scores, w) in ranked.iter_mut().zip(weights) {
                        scores.push((vecmath::dot_f64(w, &g), leaf));
                    }
                }
                // Invert "search -> probed leaves" into "leaf -> searches"
                // so each surviving list is walked exactly once.
                let mut probers: Vec<Vec<u32>> = vec![Vec::new(); lists.len()];
                for (s, scores) in ranked.iter_mut().enumerate() {
                    scores.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                    for &(_, leaf) in scores.iter().take(effective) {
                        probers[leaf].push(s as u32);
                    }
                }
                let mut rows_scored = 0usize;
                for (leaf, searches) in probers.iter().enumerate() {
                    if searches.is_empty() {
                        continue;
                    }
                    for &row in &lists[leaf] {
                        let row = row as usize;
                        vecmath::block_dots_f32(q, self.row(row), dim, &mut g);
                        for &s in searches {
                            let s = s as usize;
                            keepers[s].offer(SearchHit {
                                set_id: self.ids[row],
                                score: vecmath::dot_f64(&weights[s], &g),
                            });
                        }
                    }
                    rows_scored += lists[leaf].len() * searches.len();
                }
                SearchStats {
                    probes_scanned: effective * weights.len(),
                    rows_scored,
                }
            }
        };
        Ok(GroupedHits {
            per_search: keepers.into_iter().map(TopR::into_ranked).collect(),
            stats,
        })
    }

    /// Writes the index to one binary file. Bit-exact: saving a loaded
    /// index reproduces the original bytes.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io::save(self, path.as_ref())
    }

    /// Reads an index written by [`MipsIndex::save`]. IVF posting lists are
    /// reassigned from the stored centroids with the same routine the build
    /// uses, so they reconstruct identically.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        io::load(path.as_ref())
    }

    fn from_stored(shape: Shape, ids: Vec<u64>, data: Vec<f32>, centroids: Option<Vec<f32>>) -> Self {
        let variant = match centroids {
            None => Variant::Flat,
            Some(centroids) => {
                let leaves = centroids.len() / shape.len();
                let assignments = kmeans::assign(&data, shape.len(), &centroids);
                let lists = lists_from_assignments(&assignments, leaves);
                Variant::Ivf { centroids, lists }
            }
        };
        Self {
            shape,
            ids,
            data,
            variant,
        }
    }

    fn centroids(&self) -> Option<&[f32]> {
        match &self.variant {
            Variant::Flat => None,
            Variant::Ivf { centroids, .. } => Some(centroids),
        }
    }
}
