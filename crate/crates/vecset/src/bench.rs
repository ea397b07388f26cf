//! Recall/latency benchmarking.
//!
//! The harness reproduces the usual ANN evaluation loop: precompute exact
//! ground truth once, then sweep the probes knob and record recall against
//! per-query wall time. Recall compares id sets, not orderings; ranking
//! agreement is the exact-equivalence tests' job.

use crate::engine::{QueryOptions, SetSearchEngine};
use crate::error::{Error, Result};
use crate::oracle::{BruteForce, SearchHit};
use crate::types::VectorSet;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

/// One benchmark cell: recall and latency statistics for a (k, probes)
/// combination, aggregated over all queries.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub k: usize,
    pub probes: usize,
    pub recall_mean: f64,
    pub recall_std: f64,
    pub latency_ms_mean: f64,
    pub latency_ms_p95: f64,
    pub qps: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
}

const CSV_HEADER: &str = "k,probes,recall_mean,recall_std,latency_ms_mean,latency_ms_p95,qps";

impl BenchResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.k,
                r.probes,
                r.recall_mean,
                r.recall_std,
                r.latency_ms_mean,
                r.latency_ms_p95,
                r.qps
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == CSV_HEADER => {}
            other => {
                return Err(Error::Format(format!(
                    "bad benchmark csv header: {other:?}"
                )))
            }
        }
        let mut rows = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 7 {
                return Err(Error::Format(format!(
                    "csv line {}: expected 7 fields, got {}",
                    lineno + 2,
                    fields.len()
                )));
            }
            let parse_usize = |s: &str| {
                s.trim().parse::<usize>().map_err(|e| {
                    Error::Format(format!("csv line {}: {e}", lineno + 2))
                })
            };
            let parse_f64 = |s: &str| {
                s.trim().parse::<f64>().map_err(|e| {
                    Error::Format(format!("csv line {}: {e}", lineno + 2))
                })
            };
            rows.push(BenchRow {
                k: parse_usize(fields[0])?,
                probes: parse_usize(fields[1])?,
                recall_mean: parse_f64(fields[2])?,
                recall_std: parse_f64(fields[3])?,
                latency_ms_mean: parse_f64(fields[4])?,
                latency_ms_p95: parse_f64(fields[5])?,
                qps: parse_f64(fields[6])?,
            });
        }
        Ok(Self { rows })
    }
}

/// Fraction of the true k nearest ids present in the found top k.
pub fn recall_at_k(found: &[SearchHit], truth: &[SearchHit], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if truth.len() < k {
        return Err(Error::InvalidInput(format!(
            "ground truth holds {} hits, need {k}",
            truth.len()
        )));
    }
    let truth_ids: HashSet<u64> = truth[..k].iter().map(|h| h.set_id).collect();
    let found_k = &found[..k.min(found.len())];
    let matched = found_k
        .iter()
        .filter(|h| truth_ids.contains(&h.set_id))
        .count();
    Ok(matched as f64 / k as f64)
}

/// Exact top-u lists for every query, computed in parallel across queries.
pub fn ground_truth(
    database: &[VectorSet],
    queries: &[VectorSet],
    max_k: usize,
    params: &crate::types::SimParams,
) -> Result<Vec<Vec<SearchHit>>> {
    BruteForce::new(database, params)?.top_u_batch(queries, max_k)
}

/// One ground-truth line: the exact top hits for one query, stored as
/// `[set_id, score]` pairs in rank order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub query: u64,
    pub hits: Vec<(u64, f64)>,
}

impl TruthRecord {
    pub fn from_hits(query: u64, hits: &[SearchHit]) -> Self {
        Self {
            query,
            hits: hits.iter().map(|h| (h.set_id, h.score)).collect(),
        }
    }

    pub fn to_hits(&self) -> Vec<SearchHit> {
        self.hits
            .iter()
            .map(|&(set_id, score)| SearchHit { set_id, score })
            .collect()
    }
}

/// Writes ground truth as newline-delimited JSON, one record per line.
pub fn write_ground_truth(path: impl AsRef<Path>, records: &[TruthRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        let line = serde_json::to_string(r)
            .map_err(|e| Error::Format(format!("ground truth encode: {e}")))?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<Vec<TruthRecord>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| {
            Error::Format(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Sweep configuration for [`run_benchmark`].
#[derive(Debug, Clone)]
pub struct BenchOptions {
    /// Recall depths to report. The engine retrieves max(ks) per query.
    pub ks: Vec<usize>,
    /// Probes values to sweep.
    pub probes_sweep: Vec<usize>,
    pub per_target_r: Option<usize>,
    pub rescore: Option<bool>,
    /// 1 runs queries serially (honest per-query latency); more workers
    /// trade latency fidelity for throughput.
    pub workers: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            ks: vec![1, 10],
            probes_sweep: vec![1],
            per_target_r: None,
            rescore: Some(true),
            workers: 1,
        }
    }
}

fn percentile_95(sorted: &[f64]) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = ((sorted.len() as f64) * 0.95).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs the recall/latency sweep. `truth[i]` must hold at least max(ks)
/// hits for `queries[i]`.
pub fn run_benchmark(
    engine: &SetSearchEngine,
    queries: &[VectorSet],
    truth: &[Vec<SearchHit>],
    opts: &BenchOptions,
) -> Result<BenchResult> {
    if queries.is_empty() {
        return Err(Error::InvalidInput("no queries".into()));
    }
    if queries.len() != truth.len() {
        return Err(Error::InvalidInput(format!(
            "{} queries but {} ground truth lists",
            queries.len(),
            truth.len()
        )));
    }
    if opts.ks.is_empty() || opts.probes_sweep.is_empty() {
        return Err(Error::InvalidInput(
            "ks and probes_sweep must be nonempty".into(),
        ));
    }
    let max_k = *opts.ks.iter().max().unwrap();
    for (i, t) in truth.iter().enumerate() {
        if t.len() < max_k {
            return Err(Error::InvalidInput(format!(
                "ground truth for query {i} holds {} hits, need {max_k}",
                t.len()
            )));
        }
    }
    if opts.workers == 0 {
        return Err(Error::InvalidInput("workers must be at least 1".into()));
    }
    if let Some(leaves) = engine.max_leaves() {
        for &p in &opts.probes_sweep {
            if p > leaves {
                eprintln!("warning: probes {p} exceeds {leaves} leaves; clamping");
            }
        }
    }

    let mut rows = Vec::new();
    for &probes in &opts.probes_sweep {
        let qopts = QueryOptions {
            probes: Some(probes),
            per_target_r: opts.per_target_r,
            rescore: opts.rescore,
        };
        let started = Instant::now();
        let reports: Vec<_> = if opts.workers == 1 {
            queries
                .iter()
                .map(|q| engine.query_top_u(q, max_k, &qopts))
                .collect::<Result<_>>()?
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(opts.workers)
                .build()
                .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))?;
            pool.install(|| {
                queries
                    .par_iter()
                    .map(|q| engine.query_top_u(q, max_k, &qopts))
                    .collect::<Result<_>>()
            })?
        };
        let elapsed = started.elapsed().as_secs_f64();

        let mut latencies: Vec<f64> = reports.iter().map(|r| r.latency_ms).collect();
        latencies.sort_unstable_by(f64::total_cmp);
        let (latency_mean, _) = mean_std(&latencies);
        let latency_p95 = percentile_95(&latencies);
        let qps = queries.len() as f64 / elapsed;

        for &k in &opts.ks {
            let recalls: Vec<f64> = reports
                .iter()
                .zip(truth)
                .map(|(r, t)| recall_at_k(&r.hits, t, k))
                .collect::<Result<_>>()?;
            let (recall_mean, recall_std) = mean_std(&recalls);
            rows.push(BenchRow {
                k,
                probes,
                recall_mean,
                recall_std,
                latency_ms_mean: latency_mean,
                latency_ms_p95: latency_p95,
                qps,
            });
        }
    }
    Ok(BenchResult { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{BackendConfig, EngineConfig};
    use crate::oracle::oracle_top_u;
    use crate::types::{SimParams, Vector};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hit(id: u64, score: f64) -> SearchHit {
        SearchHit { set_id: id, score }
    }

    #[test]
    fn recall_frozen_examples() {
        let truth: Vec<SearchHit> = (0..10).map(|i| hit(i, 1.0 - i as f64 * 0.01)).collect();
        assert_eq!(recall_at_k(&truth.clone(), &truth, 5).unwrap(), 1.0);

        let disjoint: Vec<SearchHit> = (100..110).map(|i| hit(i, 0.5)).collect();
        assert_eq!(recall_at_k(&disjoint, &truth, 10).unwrap(), 0.0);

        let mut one_off = truth.clone();
        one_off[3] = hit(999, 0.97);
        assert_eq!(recall_at_k(&one_off, &truth, 10).unwrap(), 0.9);

        assert!(recall_at_k(&truth, &truth[..4], 5).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let result = BenchResult {
            rows: vec![
                BenchRow {
                    k: 1,
                    probes: 2,
                    recall_mean: 0.9733333333333334,
                    recall_std: 0.0124,
                    latency_ms_mean: 1.25,
                    latency_ms_p95: 2.75,
                    qps: 800.0,
                },
                BenchRow {
                    k: 10,
                    probes: 4,
                    recall_mean: 1.0,
                    recall_std: 0.0,
                    latency_ms_mean: 2.5,
                    latency_ms_p95: 3.5,
                    qps: 400.0,
                },
            ],
        };
        let csv = result.to_csv();
        assert!(csv.starts_with(CSV_HEADER));
        assert_eq!(BenchResult::from_csv(&csv).unwrap(), result);
        assert!(BenchResult::from_csv("nope\n1,2,3").is_err());
    }

    fn random_sets(count: usize, dim: usize, card: usize, seed: u64, id_base: u64) -> Vec<VectorSet> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|i| {
                let members = (0..card)
                    .map(|_| {
                        Vector::new((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
                            .unwrap()
                    })
                    .collect();
                VectorSet::new(id_base + i as u64, members).unwrap()
            })
            .collect()
    }

    #[test]
    fn ground_truth_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.ndjson");
        let records = vec![
            TruthRecord::from_hits(0, &[hit(3, 0.9375), hit(1, 0.5)]),
            TruthRecord::from_hits(1, &[hit(2, 1.0 / 3.0)]),
        ];
        write_ground_truth(&path, &records).unwrap();
        let back = read_ground_truth(&path).unwrap();
        assert_eq!(back, records);
        assert_eq!(back[0].to_hits(), vec![hit(3, 0.9375), hit(1, 0.5)]);

        std::fs::write(&path, "{\"query\": 0}\n").unwrap();
        assert!(matches!(
            read_ground_truth(&path),
            Err(crate::Error::Format(_))
        ));
    }

    #[test]
    fn ground_truth_matches_standalone_oracle() {
        let params = SimParams::new(1.0, 1.0, 4, 2).unwrap();
        let db = random_sets(40, 4, 2, 3, 0);
        let queries = random_sets(5, 4, 2, 4, 1000);
        let truth = ground_truth(&db, &queries, 7, &params).unwrap();
        for (q, t) in queries.iter().zip(&truth) {
            assert_eq!(t, &oracle_top_u(q, &db, 7, &params).unwrap());
        }
    }

    #[test]
    fn flat_backend_benchmarks_at_full_recall() {
        let params = SimParams::new(1.0, 1.0, 3, 2).unwrap();
        let db = random_sets(60, 3, 2, 8, 0);
        let queries = random_sets(10, 3, 2, 9, 5000);
        let truth = ground_truth(&db, &queries, 10, &params).unwrap();

        let mut engine = SetSearchEngine::new(EngineConfig {
            params,
            target_cards: vec![2],
            backend: BackendConfig::Flat,
        })
        .unwrap();
        engine.ingest(db).unwrap();
        engine.seal().unwrap();

        let result = run_benchmark(
            &engine,
            &queries,
            &truth,
            &BenchOptions {
                ks: vec![1, 10],
                probes_sweep: vec![1],
                per_target_r: Some(10),
                rescore: Some(true),
                workers: 1,
            },
        )
        .unwrap();
        assert_eq!(result.rows.len(), 2);
        for row in &result.rows {
            assert_eq!(row.recall_mean, 1.0);
            assert_eq!(row.recall_std, 0.0);
            assert!(row.latency_ms_mean > 0.0);
            assert!(row.qps > 0.0);
        }
    }
}
