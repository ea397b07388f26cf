//! End-to-end set search.
//!
//! The engine keeps one MIPS structure per (target cardinality, candidate
//! cardinality) pair that can actually occur: stored sets are encoded once
//! per materialized target cardinality at seal time, and a query of
//! cardinality |A| fans out into |A| * k searches against each structure
//! holding candidates of cardinality k. Pooled winners are deduplicated,
//! optionally rescored with the exact similarity, and ranked.

use crate::encode::{encode_candidate, encode_target_base, target_block_weights, Shape};
use crate::error::{Error, Result};
use crate::mips::{IvfParams, MipsIndex};
use crate::oracle::{sort_hits, SearchHit};
use crate::sim::{score_normalized, NormalizedSet};
use crate::types::{SimParams, Vector, VectorSet};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::Instant;

/// Which MIPS backend seal() builds for every grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Flat,
    Ivf {
        /// Posting lists per index; None sizes each index to the square
        /// root of its entry count. Always clamped to the entry count.
        leaves: Option<usize>,
        kmeans_iters: usize,
        seed: u64,
    },
}

impl BackendConfig {
    pub fn default_ivf() -> Self {
        BackendConfig::Ivf {
            leaves: None,
            kmeans_iters: IvfParams::DEFAULT_KMEANS_ITERS,
            seed: IvfParams::DEFAULT_SEED,
        }
    }

    fn validate(&self) -> Result<()> {
        if let BackendConfig::Ivf {
            leaves,
            kmeans_iters,
            ..
        } = self
        {
            if *kmeans_iters == 0 {
                return Err(Error::InvalidInput(
                    "kmeans_iters must be at least 1".into(),
                ));
            }
            if leaves == &Some(0) {
                return Err(Error::InvalidInput("leaves must be at least 1".into()));
            }
        }
        Ok(())
    }
}

/// Build-time configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub params: SimParams,
    /// Query cardinalities to materialize encodings for. Leave empty to
    /// materialize exactly the cardinalities present in the stored data.
    pub target_cards: Vec<usize>,
    pub backend: BackendConfig,
}

impl EngineConfig {
    fn validate(&self) -> Result<()> {
        // Re-run the SimParams invariants; the fields are public and may
        // not have come from the checked constructor.
        SimParams::new(
            self.params.w_max,
            self.params.w_avg,
            self.params.dim,
            self.params.max_card,
        )?;
        for &n in &self.target_cards {
            if n == 0 || n > self.params.max_card {
                return Err(Error::InvalidInput(format!(
                    "target cardinality {n} outside [1, {}]",
                    self.params.max_card
                )));
            }
        }
        self.backend.validate()
    }
}

/// Per-query knobs. `None` fields fall back to documented defaults.
#[derive(Debug, Clone, Copy, Default)]
pub struct QueryOptions {
    /// Posting lists to probe per search; None probes every leaf. Ignored
    /// by the flat backend.
    pub probes: Option<usize>,
    /// Hits retrieved per individual target search before pooling; None
    /// uses max(u, 10).
    pub per_target_r: Option<usize>,
    /// Recompute exact similarities for pooled candidates; None enables
    /// this for the IVF backend and disables it for flat.
    pub rescore: Option<bool>,
}

/// What one query did and returned.
#[derive(Debug, Clone)]
pub struct QueryReport {
    /// Final top-u, best first.
    pub hits: Vec<SearchHit>,
    /// Posting lists scanned, summed over all target searches.
    pub probes_used: usize,
    /// Target searches issued: |A| * sum of present candidate cardinalities.
    pub targets_issued: usize,
    /// Entry rows scored across all searches, before deduplication.
    pub candidates_scored: usize,
    /// Wall time for the whole procedure, target encoding included.
    pub latency_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestSummary {
    pub sets_ingested: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSummary {
    pub target_card: usize,
    pub candidate_card: usize,
    pub entries: usize,
    /// None for the flat backend.
    pub leaves: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SealSummary {
    pub indexes: Vec<IndexSummary>,
}

/// The searchable store. Mutable while ingesting; immutable once sealed.
pub struct SetSearchEngine {
    config: EngineConfig,
    catalog: BTreeMap<u64, VectorSet>,
    grid: BTreeMap<(usize, usize), MipsIndex>,
    /// Resolved at seal time (config list, or cardinalities present).
    materialized_target_cards: Vec<usize>,
    sealed: bool,
}

impl SetSearchEngine {
    pub fn new(config: EngineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            catalog: BTreeMap::new(),
            grid: BTreeMap::new(),
            materialized_target_cards: Vec::new(),
            sealed: false,
        })
    }

    pub fn params(&self) -> &SimParams {
        &self.config.params
    }

    pub fn backend(&self) -> &BackendConfig {
        &self.config.backend
    }

    pub fn is_sealed(&self) -> bool {
        self.sealed
    }

    pub fn len(&self) -> usize {
        self.catalog.len()
    }

    pub fn is_empty(&self) -> bool {
        self.catalog.is_empty()
    }

    /// Target cardinalities queries may use. Empty until sealed.
    pub fn target_cards(&self) -> &[usize] {
        &self.materialized_target_cards
    }

    pub fn candidate_cards(&self) -> Vec<usize> {
        self.present_candidate_cards().into_iter().collect()
    }

    pub fn grid_keys(&self) -> Vec<(usize, usize)> {
        self.grid.keys().copied().collect()
    }

    pub fn get_set(&self, id: u64) -> Option<&VectorSet> {
        self.catalog.get(&id)
    }

    /// Largest leaf count across the grid, None for the flat backend.
    pub fn max_leaves(&self) -> Option<usize> {
        self.grid.values().filter_map(MipsIndex::leaves).max()
    }

    fn present_candidate_cards(&self) -> BTreeSet<usize> {
        self.catalog.values().map(VectorSet::card).collect()
    }

    /// Adds sets to the store. Encoding happens at seal time, once the
    /// full cardinality mix is known.
    pub fn ingest(&mut self, sets: impl IntoIterator<Item = VectorSet>) -> Result<IngestSummary> {
        if self.sealed {
            return Err(Error::AlreadySealed);
        }
        let mut count = 0usize;
        for set in sets {
            set.check_against(&self.config.params)?;
            if self.catalog.contains_key(&set.id()) {
                return Err(Error::DuplicateSetId(set.id()));
            }
            self.catalog.insert(set.id(), set);
            count += 1;
        }
        if count == 0 {
            return Err(Error::InvalidInput("no sets to ingest".into()));
        }
        Ok(IngestSummary {
            sets_ingested: count,
        })
    }

    /// Encodes every stored set for every materialized target cardinality,
    /// builds one index per grid cell, and freezes the engine.
    pub fn seal(&mut self) -> Result<SealSummary> {
        if self.sealed {
            return Err(Error::AlreadySealed);
        }
        if self.catalog.is_empty() {
            return Err(Error::InvalidInput("nothing ingested; cannot seal".into()));
        }
        let present = self.present_candidate_cards();
        let mut targets: Vec<usize> = if self.config.target_cards.is_empty() {
            present.iter().copied().collect()
        } else {
            let dedup: BTreeSet<usize> = self.config.target_cards.iter().copied().collect();
            dedup.into_iter().collect()
        };
        targets.sort_unstable();

        let mut summary = Vec::new();
        for &n in &targets {
            for &k in &present {
                let mut entries = Vec::new();
                for set in self.catalog.values().filter(|s| s.card() == k) {
                    entries.push((set.id(), encode_candidate(set, n, &self.config.params)?));
                }
                let count = entries.len();
                let index = match &self.config.backend {
                    BackendConfig::Flat => MipsIndex::build_flat(entries)?,
                    BackendConfig::Ivf {
                        leaves,
                        kmeans_iters,
                        seed,
                    } => {
                        let sized = leaves
                            .unwrap_or_else(|| {
                                ((count as f64).sqrt().round() as usize).max(1)
                            })
                            .min(count)
                            .max(1);
                        let params = IvfParams {
                            leaves: sized,
                            probes: sized,
                            kmeans_iters: *kmeans_iters,
                            seed: *seed,
                        };
                        MipsIndex::build_ivf(entries, &params)?
                    }
                };
                summary.push(IndexSummary {
                    target_card: n,
                    candidate_card: k,
                    entries: count,
                    leaves: index.leaves(),
                });
                self.grid.insert((n, k), index);
            }
        }
        self.materialized_target_cards = targets;
        self.sealed = true;
        Ok(SealSummary { indexes: summary })
    }

    /// The u stored sets most similar to `a`, plus work counters.
    ///
    /// For every present candidate cardinality k, the query issues |A| * k
    /// target searches against the (|A|, k) index; all of them are per-block
    /// reweightings of one base encoding, so the index runs them as a single
    /// grouped scan. The best `per_target_r` entries per search are pooled,
    /// deduplicated keeping each candidate's best retrieval score,
    /// optionally rescored with the exact similarity, and cut to the top u.
    pub fn query_top_u(
        &self,
        a: &VectorSet,
        u: usize,
        opts: &QueryOptions,
    ) -> Result<QueryReport> {
        if !self.sealed {
            return Err(Error::NotSealed);
        }
        if u == 0 {
            return Err(Error::InvalidInput("u must be at least 1".into()));
        }
        a.check_against(&self.config.params)?;
        if !self.materialized_target_cards.contains(&a.card()) {
            return Err(Error::UnsupportedCardinality {
                card: a.card(),
                available: self.materialized_target_cards.clone(),
            });
        }

        let start = Instant::now();
        let per_target_r = opts.per_target_r.unwrap_or_else(|| u.max(10));
        if per_target_r == 0 {
            return Err(Error::InvalidInput(
                "per_target_r must be at least 1".into(),
            ));
        }
        let rescore = opts
            .rescore
            .unwrap_or(matches!(self.config.backend, BackendConfig::Ivf { .. }));

        let mut pooled: HashMap<u64, f64> = HashMap::new();
        let mut targets_issued = 0usize;
        let mut probes_used = 0usize;
        let mut candidates_scored = 0usize;

        for (&(n, k), index) in self.grid.range((a.card(), 0)..=(a.card(), usize::MAX)) {
            debug_assert_eq!(n, a.card());
            let probes = opts
                .probes
                .unwrap_or_else(|| index.leaves().unwrap_or(1))
                .max(1);
            let base = encode_target_base(a, k, &self.config.params)?;
            let weights: Vec<Vec<f64>> = target_block_weights(n, k, &self.config.params)?
                .into_iter()
                .map(|(_, w)| w)
                .collect();
            let grouped = index.search_grouped(&base, &weights, per_target_r, probes)?;
            targets_issued += weights.len();
            probes_used += grouped.stats.probes_scanned;
            candidates_scored += grouped.stats.rows_scored;
            for hit in grouped.per_search.into_iter().flatten() {
                pooled
                    .entry(hit.set_id)
                    .and_modify(|best| {
                        if hit.score > *best {
                            *best = hit.score;
                        }
                    })
                    .or_insert(hit.score);
            }
        }

        let mut hits: Vec<SearchHit> = if rescore {
            let query = NormalizedSet::from_set(a);
            pooled
                .keys()
                .map(|id| SearchHit {
                    set_id: *id,
                    score: score_normalized(
                        &query,
                        &NormalizedSet::from_set(&self.catalog[id]),
                        &self.config.params,
                    ),
                })
                .collect()
        } else {
            pooled
                .iter()
                .map(|(id, score)| SearchHit {
                    set_id: *id,
                    score: *score,
                })
                .collect()
        };
        sort_hits(&mut hits);
        hits.truncate(u);

        Ok(QueryReport {
            hits,
            probes_used,
            targets_issued,
            candidates_scored,
            latency_ms: start.elapsed().as_secs_f64() * 1000.0,
        })
    }

    /// Persists the sealed engine: one index file per grid cell, a binary
    /// set catalog, and a JSON manifest tying them together.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        if !self.sealed {
            return Err(Error::NotSealed);
        }
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut grid_files = Vec::new();
        for (&(n, k), index) in &self.grid {
            let name = format!("idx_{n}_{k}.vslv");
            index.save(dir.join(&name))?;
            grid_files.push(ManifestIndex {
                target_card: n,
                candidate_card: k,
                file: name,
            });
        }
        let catalog_file = "catalog.bin".to_string();
        write_catalog(&dir.join(&catalog_file), &self.catalog, &self.config.params)?;
        let manifest = Manifest {
            format: MANIFEST_FORMAT,
            params: self.config.params,
            target_cards: self.materialized_target_cards.clone(),
            backend: self.config.backend,
            grid: grid_files,
            catalog_file,
        };
        let file = File::create(dir.join("manifest.json"))?;
        serde_json::to_writer_pretty(BufWriter::new(file), &manifest)
            .map_err(|e| Error::Format(format!("manifest encoding failed: {e}")))?;
        Ok(())
    }

    /// Loads an engine persisted by [`SetSearchEngine::save`]. The result
    /// is sealed and ready to query.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest_path = dir.join("manifest.json");
        let manifest: Manifest = serde_json::from_reader(BufReader::new(File::open(
            &manifest_path,
        )?))
        .map_err(|e| Error::Format(format!("bad manifest {}: {e}", manifest_path.display())))?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(Error::Format(format!(
                "manifest format {} unsupported (expected {MANIFEST_FORMAT})",
                manifest.format
            )));
        }
        let config = EngineConfig {
            params: manifest.params,
            target_cards: manifest.target_cards.clone(),
            backend: manifest.backend,
        };
        config.validate()?;

        let catalog = read_catalog(&dir.join(&manifest.catalog_file), &manifest.params)?;
        if catalog.is_empty() {
            return Err(Error::Format("catalog is empty".into()));
        }
        let mut by_card: BTreeMap<usize, usize> = BTreeMap::new();
        for set in catalog.values() {
            *by_card.entry(set.card()).or_insert(0) += 1;
        }

        let mut grid = BTreeMap::new();
        for entry in &manifest.grid {
            let index = MipsIndex::load(dir.join(&entry.file))?;
            let expected = Shape::new(entry.target_card, entry.candidate_card, manifest.params.dim);
            if index.shape() != expected {
                return Err(Error::Format(format!(
                    "index {} has shape {}, manifest says {}",
                    entry.file,
                    index.shape(),
                    expected
                )));
            }
            if by_card.get(&entry.candidate_card) != Some(&index.len()) {
                return Err(Error::Format(format!(
                    "index {} holds {} entries but the catalog has {} sets of cardinality {}",
                    entry.file,
                    index.len(),
                    by_card.get(&entry.candidate_card).unwrap_or(&0),
                    entry.candidate_card
                )));
            }
            grid.insert((entry.target_card, entry.candidate_card), index);
        }

        Ok(Self {
            config,
            catalog,
            grid,
            materialized_target_cards: manifest.target_cards,
            sealed: true,
        })
    }
}

const MANIFEST_FORMAT: u32 = 1;
const CATALOG_MAGIC: &[u8; 5] = b"VSCT1";

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: u32,
    params: SimParams,
    target_cards: Vec<usize>,
    backend: BackendConfig,
    grid: Vec<ManifestIndex>,
    catalog_file: String,
}

#[derive(Serialize, Deserialize)]
struct ManifestIndex {
    target_card: usize,
    candidate_card: usize,
    file: String,
}

fn catalog_truncated(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Format("catalog file truncated".into())
    } else {
        Error::Io(e)
    }
}

fn write_catalog(
    path: &Path,
    catalog: &BTreeMap<u64, VectorSet>,
    params: &SimParams,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CATALOG_MAGIC)?;
    w.write_u32::<LittleEndian>(params.dim as u32)?;
    w.write_u64::<LittleEndian>(catalog.len() as u64)?;
    for set in catalog.values() {
        w.write_u64::<LittleEndian>(set.id())?;
        w.write_u32::<LittleEndian>(set.card() as u32)?;
        for member in set.members() {
            for x in member.components() {
                w.write_f32::<LittleEndian>(*x)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn read_catalog(path: &Path, params: &SimParams) -> Result<BTreeMap<u64, VectorSet>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic).map_err(catalog_truncated)?;
    if &magic != CATALOG_MAGIC {
        return Err(Error::Format("not a catalog file".into()));
    }
    let dim = r.read_u32::<LittleEndian>().map_err(catalog_truncated)? as usize;
    if dim != params.dim {
        return Err(Error::Format(format!(
            "catalog dimension {dim} does not match engine dimension {}",
            params.dim
        )));
    }
    let count = r.read_u64::<LittleEndian>().map_err(catalog_truncated)?;
    let mut catalog = BTreeMap::new();
    for _ in 0..count {
        let id = r.read_u64::<LittleEndian>().map_err(catalog_truncated)?;
        let card = r.read_u32::<LittleEndian>().map_err(catalog_truncated)? as usize;
        if card == 0 || card > params.max_card {
            return Err(Error::Format(format!(
                "set {id} has cardinality {card} outside [1, {}]",
                params.max_card
            )));
        }
        let mut members = Vec::with_capacity(card);
        for _ in 0..card {
            let mut components = vec![0.0f32; dim];
            r.read_f32_into::<LittleEndian>(&mut components)
                .map_err(catalog_truncated)?;
            members.push(Vector::new(components)?);
        }
        if catalog.insert(id, VectorSet::new(id, members)?).is_some() {
            return Err(Error::Format(format!("duplicate set id {id} in catalog")));
        }
    }
    let mut probe = [0u8; 1];
    match r.read(&mut probe) {
        Ok(0) => Ok(catalog),
        Ok(_) => Err(Error::Format("trailing bytes in catalog".into())),
        Err(e) => Err(e.into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::oracle_top_u;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn set(id: u64, vs: &[&[f32]]) -> VectorSet {
        VectorSet::new(
            id,
            vs.iter().map(|v| Vector::new(v.to_vec()).unwrap()).collect(),
        )
        .unwrap()
    }

    fn flat_config(dim: usize, max_card: usize, target_cards: Vec<usize>) -> EngineConfig {
        EngineConfig {
            params: SimParams::new(1.0, 1.0, dim, max_card).unwrap(),
            target_cards,
            backend: BackendConfig::Flat,
        }
    }

    fn random_sets(count: usize, dim: usize, max_card: usize, seed: u64) -> Vec<VectorSet> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|id| {
                let card = rng.random_range(1..=max_card);
                let members = (0..card)
                    .map(|_| {
                        Vector::new((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
                            .unwrap()
                    })
                    .collect();
                VectorSet::new(id as u64, members).unwrap()
            })
            .collect()
    }

    #[test]
    fn grid_covers_target_cards_times_present() {
        let mut engine = SetSearchEngine::new(flat_config(2, 3, vec![1, 2, 3])).unwrap();
        engine
            .ingest(vec![set(1, &[&[1.0, 0.0], &[0.0, 1.0]])])
            .unwrap();
        let summary = engine.seal().unwrap();
        assert_eq!(engine.grid_keys(), vec![(1, 2), (2, 2), (3, 2)]);
        assert_eq!(summary.indexes.len(), 3);

        let mut engine = SetSearchEngine::new(flat_config(2, 4, vec![2])).unwrap();
        engine
            .ingest(vec![
                set(1, &[&[1.0, 0.0]]),
                set(2, &[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]),
            ])
            .unwrap();
        engine.seal().unwrap();
        assert_eq!(engine.grid_keys(), vec![(2, 1), (2, 3)]);
    }

    #[test]
    fn auto_target_cards_follow_data() {
        let mut engine = SetSearchEngine::new(flat_config(2, 4, vec![])).unwrap();
        engine
            .ingest(vec![set(1, &[&[1.0, 0.0]]), set(2, &[&[1.0, 1.0], &[0.0, 1.0]])])
            .unwrap();
        engine.seal().unwrap();
        assert_eq!(engine.target_cards(), &[1, 2]);
        assert_eq!(engine.grid_keys(), vec![(1, 1), (1, 2), (2, 1), (2, 2)]);
    }

    #[test]
    fn lifecycle_errors() {
        let mut engine = SetSearchEngine::new(flat_config(2, 2, vec![])).unwrap();
        assert!(matches!(engine.ingest(vec![]), Err(Error::InvalidInput(_))));
        assert!(matches!(engine.seal(), Err(Error::InvalidInput(_))));

        let a = set(0, &[&[1.0, 0.0]]);
        assert!(matches!(
            engine.query_top_u(&a, 1, &QueryOptions::default()),
            Err(Error::NotSealed)
        ));

        engine.ingest(vec![set(1, &[&[1.0, 0.0]])]).unwrap();
        assert!(matches!(
            engine.ingest(vec![set(1, &[&[0.0, 1.0]])]),
            Err(Error::DuplicateSetId(1))
        ));
        let too_big = set(2, &[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        assert!(engine.ingest(vec![too_big]).is_err());

        engine.seal().unwrap();
        assert!(matches!(engine.seal(), Err(Error::AlreadySealed)));
        assert!(matches!(
            engine.ingest(vec![set(3, &[&[1.0, 0.0]])]),
            Err(Error::AlreadySealed)
        ));
    }

    #[test]
    fn query_matches_worked_example() {
        let mut engine = SetSearchEngine::new(flat_config(2, 2, vec![1])).unwrap();
        engine
            .ingest(vec![
                set(2, &[&[1.0, 0.0], &[0.0, 1.0]]),
                set(1, &[&[0.0, 1.0]]),
            ])
            .unwrap();
        engine.seal().unwrap();
        let report = engine
            .query_top_u(&set(100, &[&[1.0, 0.0]]), 1, &QueryOptions::default())
            .unwrap();
        assert_eq!(report.hits.len(), 1);
        assert_eq!(report.hits[0].set_id, 2);
        assert!((report.hits[0].score - 0.75).abs() < 1e-9);
        // k in {1, 2} with |A| = 1: one search against (1,1), two against (1,2).
        assert_eq!(report.targets_issued, 3);
    }

    #[test]
    fn identical_stored_set_wins() {
        let mut engine = SetSearchEngine::new(flat_config(2, 2, vec![2])).unwrap();
        let stored = set(7, &[&[0.6, 0.8], &[-0.8, 0.6]]);
        engine
            .ingest(vec![stored.clone(), set(8, &[&[1.0, -1.0], &[0.3, 0.1]])])
            .unwrap();
        engine.seal().unwrap();
        let query = set(1000, &[&[0.6, 0.8], &[-0.8, 0.6]]);
        // The stored members are orthogonal, so the pairwise grid is
        // [1, 0; 0, 1]: max 1, average 1/2, blended (1 + 1/2) / 2.
        let report = engine.query_top_u(&query, 1, &QueryOptions::default()).unwrap();
        assert_eq!(report.hits[0].set_id, 7);
        // Unrescored scores come from the f32 block encoding.
        assert!((report.hits[0].score - 0.75).abs() < 1e-6);
        let rescored = QueryOptions {
            rescore: Some(true),
            ..QueryOptions::default()
        };
        let report = engine.query_top_u(&query, 1, &rescored).unwrap();
        assert_eq!(report.hits[0].set_id, 7);
        assert!((report.hits[0].score - 0.75).abs() < 1e-12);
    }

    #[test]
    fn unsupported_cardinality_is_rejected() {
        let mut engine = SetSearchEngine::new(flat_config(2, 4, vec![1, 2])).unwrap();
        engine.ingest(random_sets(20, 2, 4, 5)).unwrap();
        engine.seal().unwrap();
        let query = set(999, &[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        match engine.query_top_u(&query, 1, &QueryOptions::default()) {
            Err(Error::UnsupportedCardinality { card, available }) => {
                assert_eq!(card, 3);
                assert_eq!(available, vec![1, 2]);
            }
            other => panic!("expected UnsupportedCardinality, got {other:?}"),
        }
    }

    #[test]
    fn flat_rescored_ranking_equals_oracle() {
        let max_card = 3;
        let db = random_sets(60, 4, max_card, 11);
        let mut engine = SetSearchEngine::new(EngineConfig {
            params: SimParams::new(1.5, 0.5, 4, max_card).unwrap(),
            target_cards: (1..=max_card).collect(),
            backend: BackendConfig::Flat,
        })
        .unwrap();
        engine.ingest(db.clone()).unwrap();
        engine.seal().unwrap();
        let params = *engine.params();
        let opts = QueryOptions {
            per_target_r: Some(60),
            rescore: Some(true),
            ..Default::default()
        };
        for q in random_sets(10, 4, max_card, 77).iter() {
            let q = VectorSet::new(q.id() + 10_000, q.members().to_vec()).unwrap();
            let report = engine.query_top_u(&q, 60, &opts).unwrap();
            let truth = oracle_top_u(&q, &db, 60, &params).unwrap();
            assert_eq!(report.hits.len(), truth.len());
            for (got, want) in report.hits.iter().zip(&truth) {
                assert_eq!(got.set_id, want.set_id);
                assert_eq!(got.score, want.score);
            }
        }
    }

    #[test]
    fn counter_closed_form() {
        let db = random_sets(30, 3, 4, 2);
        let mut engine = SetSearchEngine::new(flat_config(3, 4, vec![2])).unwrap();
        engine.ingest(db.clone()).unwrap();
        engine.seal().unwrap();
        let present: std::collections::BTreeSet<usize> =
            db.iter().map(VectorSet::card).collect();
        let expected: usize = present.iter().map(|k| 2 * k).sum();
        let query = set(900, &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        let report = engine.query_top_u(&query, 3, &QueryOptions::default()).unwrap();
        assert_eq!(report.targets_issued, expected);
    }

    #[test]
    fn save_load_round_trip_preserves_results() {
        let db = random_sets(50, 3, 3, 21);
        let mut engine = SetSearchEngine::new(EngineConfig {
            params: SimParams::new(1.0, 2.0, 3, 3).unwrap(),
            target_cards: vec![],
            backend: BackendConfig::Ivf {
                leaves: Some(4),
                kmeans_iters: 5,
                seed: 9,
            },
        })
        .unwrap();
        engine.ingest(db).unwrap();
        engine.seal().unwrap();

        let dir = tempfile::tempdir().unwrap();
        engine.save(dir.path()).unwrap();
        let loaded = SetSearchEngine::load(dir.path()).unwrap();
        assert_eq!(loaded.grid_keys(), engine.grid_keys());
        assert_eq!(loaded.len(), engine.len());

        let opts = QueryOptions {
            probes: Some(2),
            ..Default::default()
        };
        for q in random_sets(8, 3, 3, 1000) {
            let q = VectorSet::new(q.id() + 50_000, q.members().to_vec()).unwrap();
            let a = engine.query_top_u(&q, 5, &opts).unwrap();
            let b = loaded.query_top_u(&q, 5, &opts).unwrap();
            assert_eq!(a.hits, b.hits);
        }
    }
}
