use crate::verify;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;
use vecset::bench::{read_ground_truth, run_benchmark, write_ground_truth, BenchOptions, TruthRecord};
use vecset::dataset::{
    group_sets, load_fvecs, load_sets_manifest, sets_from_manifest, synthetic_vectors,
    write_fvecs, SyntheticSpec, SYNTHETIC_CLUSTERS, SYNTHETIC_COHERENCE, SYNTHETIC_SPREAD,
};
use vecset::engine::{BackendConfig, EngineConfig, QueryOptions, SetSearchEngine};
use vecset::oracle::BruteForce;
use vecset::{Error, Result, SimParams, VectorSet};

/// Flag parser for counts that must be at least 1, so values like
/// `--leaves 0` die as usage errors before any I/O.
fn positive_usize() -> clap::builder::RangedU64ValueParser<usize> {
    clap::builder::RangedU64ValueParser::new().range(1..)
}

#[derive(Parser)]
#[command(name = "vecset", version, about = "Similarity search over sets of vectors")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a searchable engine from an fvecs file and persist it
    Build(BuildArgs),
    /// Run top-u queries against a persisted engine
    Query(QueryArgs),
    /// Exact brute-force search; also generates benchmark ground truth
    Oracle(OracleArgs),
    /// Sweep probes and report recall/latency as CSV
    Bench(BenchArgs),
    /// Check the encoding identities and engine/oracle agreement on
    /// seeded random instances
    Verify(VerifyArgs),
    /// Generate a seeded synthetic fvecs dataset (Gaussian mixture)
    Synth(SynthArgs),
}

/// A set dataset on disk: raw vectors plus either a manifest or a fixed
/// consecutive grouping size.
#[derive(Args)]
struct SetInput {
    /// fvecs file holding the raw vectors
    #[arg(long)]
    vectors: PathBuf,
    /// Sets manifest (NDJSON {"id", "rows"}); overrides --set-size
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Vectors per set under consecutive grouping
    #[arg(long, default_value_t = 3, value_parser = positive_usize())]
    set_size: usize,
}

/// Same as SetInput but for the query side, with distinct flag names so
/// commands can take both.
#[derive(Args)]
struct QueryInput {
    /// fvecs file holding the query vectors
    #[arg(long)]
    queries: PathBuf,
    /// Query sets manifest (NDJSON {"id", "rows"}); overrides --query-set-size
    #[arg(long)]
    queries_manifest: Option<PathBuf>,
    /// Vectors per query set under consecutive grouping
    #[arg(long, default_value_t = 3, value_parser = positive_usize())]
    query_set_size: usize,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Backend {
    Flat,
    Ivf,
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    input: SetInput,
    /// Directory to persist the engine into
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    w_max: f64,
    #[arg(long, default_value_t = 1.0)]
    w_avg: f64,
    /// Largest supported set cardinality; defaults to the largest ingested
    #[arg(long, value_parser = positive_usize())]
    max_card: Option<usize>,
    /// Query cardinalities to materialize, comma separated; defaults to
    /// the cardinalities present in the data
    #[arg(long, value_delimiter = ',', value_parser = positive_usize())]
    target_cards: Vec<usize>,
    #[arg(long, value_enum, default_value_t = Backend::Flat)]
    backend: Backend,
    /// Posting lists per index (ivf only); defaults to the square root of
    /// the entry count
    #[arg(long, value_parser = positive_usize())]
    leaves: Option<usize>,
    #[arg(long, default_value_t = 20, value_parser = positive_usize())]
    kmeans_iters: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct QueryArgs {
    /// Directory holding a persisted engine
    #[arg(long)]
    engine: PathBuf,
    #[command(flatten)]
    input: QueryInput,
    /// Results per query
    #[arg(short = 'u', long = "k", default_value_t = 10, value_parser = positive_usize())]
    top_u: usize,
    /// Posting lists to probe per search (ivf); defaults to all
    #[arg(long, value_parser = positive_usize())]
    probes: Option<usize>,
    /// Hits per individual target search before pooling; defaults to
    /// max(u, 10)
    #[arg(long, value_parser = positive_usize())]
    per_target_r: Option<usize>,
    /// Recompute exact similarities for pooled candidates (true/false);
    /// defaults to true for ivf, false for flat
    #[arg(long)]
    rescore: Option<bool>,
    #[arg(long, default_value_t = 1, value_parser = positive_usize())]
    workers: usize,
    /// Write results here instead of standard output
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    input: SetInput,
    #[command(flatten)]
    query_input: QueryInput,
    /// Results per query
    #[arg(short = 'u', long = "k", default_value_t = 10, value_parser = positive_usize())]
    top_u: usize,
    #[arg(long, default_value_t = 1.0)]
    w_max: f64,
    #[arg(long, default_value_t = 1.0)]
    w_avg: f64,
    /// Largest supported set cardinality; defaults to the largest observed
    #[arg(long, value_parser = positive_usize())]
    max_card: Option<usize>,
    /// Worker threads; 0 uses every core, 1 runs serially and reports
    /// timing on standard error
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Write ground truth here instead of standard output
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Directory holding a persisted engine
    #[arg(long)]
    engine: PathBuf,
    #[command(flatten)]
    input: QueryInput,
    /// Ground truth NDJSON produced by the oracle command
    #[arg(long)]
    truth: PathBuf,
    /// Recall depths, comma separated
    #[arg(long, value_delimiter = ',', default_value = "1,10", value_parser = positive_usize())]
    ks: Vec<usize>,
    /// Probes sweep, comma separated; defaults to probing every leaf
    #[arg(long, value_delimiter = ',', value_parser = positive_usize())]
    probes: Vec<usize>,
    #[arg(long, value_parser = positive_usize())]
    per_target_r: Option<usize>,
    /// Recompute exact similarities for pooled candidates (true/false)
    #[arg(long)]
    rescore: Option<bool>,
    /// 1 gives honest per-query latency; more workers measure throughput
    #[arg(long, default_value_t = 1, value_parser = positive_usize())]
    workers: usize,
    /// Write the CSV here instead of standard output
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Random instances per property
    #[arg(long, default_value_t = 1000, value_parser = positive_usize())]
    trials: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Fault injection: perturb the query before encoding targets so the
    /// equality check must fail
    #[arg(long, hide = true)]
    corrupt_encoder: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Output fvecs file
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_parser = positive_usize())]
    count: usize,
    #[arg(long, default_value_t = 100, value_parser = positive_usize())]
    dim: usize,
    #[arg(long, default_value_t = SYNTHETIC_CLUSTERS, value_parser = positive_usize())]
    clusters: usize,
    #[arg(long, default_value_t = SYNTHETIC_SPREAD)]
    spread: f64,
    /// Consecutive vectors sharing one mixture component; match the set
    /// size so grouped sets hold related vectors
    #[arg(long, default_value_t = SYNTHETIC_COHERENCE, value_parser = positive_usize())]
    coherence: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Also emit query vectors drawn from the same mixture
    #[arg(long, requires = "query_count")]
    query_out: Option<PathBuf>,
    #[arg(long, requires = "query_out", value_parser = positive_usize())]
    query_count: Option<usize>,
}

pub fn run(cli: Cli) -> i32 {
    let outcome = match cli.command {
        Command::Build(args) => cmd_build(args),
        Command::Query(args) => cmd_query(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Verify(args) => Ok(verify::run(&args.into_config())),
        Command::Synth(args) => cmd_synth(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io(_) | Error::Format(_) => 3,
                _ => 1,
            }
        }
    }
}

impl VerifyArgs {
    fn into_config(self) -> verify::VerifyConfig {
        verify::VerifyConfig {
            trials: self.trials,
            seed: self.seed,
            corrupt_encoder: self.corrupt_encoder,
        }
    }
}

/// Resolves a dataset path against VECSET_DATA_DIR when the path is
/// relative and does not exist as given.
fn resolve_data_path(path: &Path) -> PathBuf {
    if path.is_absolute() || path.exists() {
        return path.to_path_buf();
    }
    match std::env::var_os("VECSET_DATA_DIR") {
        Some(root) => {
            let joined = PathBuf::from(root).join(path);
            if joined.exists() {
                joined
            } else {
                path.to_path_buf()
            }
        }
        None => path.to_path_buf(),
    }
}

fn load_sets(vectors: &Path, manifest: Option<&Path>, set_size: usize) -> Result<Vec<VectorSet>> {
    let vectors = load_fvecs(resolve_data_path(vectors))?;
    match manifest {
        Some(m) => {
            let entries = load_sets_manifest(resolve_data_path(m))?;
            sets_from_manifest(&vectors, &entries)
        }
        None => group_sets(vectors, set_size),
    }
}

impl SetInput {
    fn load(&self) -> Result<Vec<VectorSet>> {
        load_sets(&self.vectors, self.manifest.as_deref(), self.set_size)
    }
}

impl QueryInput {
    fn load(&self) -> Result<Vec<VectorSet>> {
        load_sets(
            &self.queries,
            self.queries_manifest.as_deref(),
            self.query_set_size,
        )
    }
}

/// Line-buffered sink that is either a file or standard output.
fn open_sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn observed_params(
    sets: &[VectorSet],
    w_max: f64,
    w_avg: f64,
    max_card: Option<usize>,
) -> Result<SimParams> {
    let dim = sets
        .first()
        .map(|s| s.dim())
        .ok_or_else(|| Error::InvalidInput("dataset holds no sets".into()))?;
    let observed = sets.iter().map(VectorSet::card).max().unwrap();
    SimParams::new(w_max, w_avg, dim, max_card.unwrap_or(observed))
}

fn cmd_build(args: BuildArgs) -> Result<i32> {
    if args.backend == Backend::Flat && args.leaves.is_some() {
        eprintln!("error: --leaves requires --backend ivf");
        return Ok(2);
    }
    let sets = args.input.load()?;
    let params = observed_params(&sets, args.w_max, args.w_avg, args.max_card)?;
    let backend = match args.backend {
        Backend::Flat => BackendConfig::Flat,
        Backend::Ivf => BackendConfig::Ivf {
            leaves: args.leaves,
            kmeans_iters: args.kmeans_iters,
            seed: args.seed,
        },
    };
    let mut engine = SetSearchEngine::new(EngineConfig {
        params,
        target_cards: args.target_cards,
        backend,
    })?;
    let ingested = engine.ingest(sets)?;
    println!(
        "ingested {} sets (dim {}, max cardinality {})",
        ingested.sets_ingested, params.dim, params.max_card
    );
    let sealed = engine.seal()?;
    for idx in &sealed.indexes {
        match idx.leaves {
            Some(l) => println!(
                "grid (n={}, k={}): {} entries, {} leaves",
                idx.target_card, idx.candidate_card, idx.entries, l
            ),
            None => println!(
                "grid (n={}, k={}): {} entries, flat",
                idx.target_card, idx.candidate_card, idx.entries
            ),
        }
    }
    engine.save(&args.out)?;
    println!("saved engine to {}", args.out.display());
    Ok(0)
}

fn hits_json(hits: &[vecset::SearchHit]) -> serde_json::Value {
    serde_json::Value::Array(
        hits.iter()
            .map(|h| serde_json::json!([h.set_id, h.score]))
            .collect(),
    )
}

fn cmd_query(args: QueryArgs) -> Result<i32> {
    let engine = SetSearchEngine::load(&args.engine)?;
    let queries = args.input.load()?;
    if queries.is_empty() {
        return Err(Error::InvalidInput("no query sets".into()));
    }
    let opts = QueryOptions {
        probes: args.probes,
        per_target_r: args.per_target_r,
        rescore: args.rescore,
    };
    let run_one = |q: &VectorSet| (q.id(), engine.query_top_u(q, args.top_u, &opts));
    let results: Vec<_> = if args.workers == 1 {
        queries.iter().map(run_one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(args.workers)
            .build()
            .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))?;
        pool.install(|| queries.par_iter().map(run_one).collect())
    };

    let mut sink = open_sink(args.out.as_deref())?;
    let mut failed = false;
    for (id, outcome) in results {
        let line = match outcome {
            Ok(report) => serde_json::json!({
                "query": id,
                "hits": hits_json(&report.hits),
                "latency_ms": report.latency_ms,
                "probes_used": report.probes_used,
            }),
            Err(e) => {
                failed = true;
                serde_json::json!({ "query": id, "error": e.to_string() })
            }
        };
        writeln!(sink, "{line}")?;
    }
    sink.flush()?;
    Ok(if failed { 1 } else { 0 })
}

fn cmd_oracle(args: OracleArgs) -> Result<i32> {
    let database = args.input.load()?;
    let queries = args.query_input.load()?;
    if queries.is_empty() {
        return Err(Error::InvalidInput("no query sets".into()));
    }
    let params = observed_params(&database, args.w_max, args.w_avg, args.max_card)?;
    let oracle = BruteForce::new(&database, &params)?;

    let results: Vec<(u64, Vec<vecset::SearchHit>)> = if args.workers == 1 {
        // Serial scan, timed: this is the latency baseline approximate
        // backends are judged against.
        let started = Instant::now();
        let mut out = Vec::with_capacity(queries.len());
        for q in &queries {
            out.push((q.id(), oracle.top_u(q, args.top_u)?));
        }
        let secs = started.elapsed().as_secs_f64();
        eprintln!(
            "oracle: {} queries in {:.3} s ({:.3} ms/query)",
            queries.len(),
            secs,
            1e3 * secs / queries.len() as f64
        );
        out
    } else {
        let hits = if args.workers == 0 {
            oracle.top_u_batch(&queries, args.top_u)?
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(args.workers)
                .build()
                .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))?;
            pool.install(|| oracle.top_u_batch(&queries, args.top_u))?
        };
        queries.iter().map(VectorSet::id).zip(hits).collect()
    };

    let records: Vec<TruthRecord> = results
        .iter()
        .map(|(id, hits)| TruthRecord::from_hits(*id, hits))
        .collect();
    match &args.out {
        Some(path) => write_ground_truth(path, &records)?,
        None => {
            let mut sink = open_sink(None)?;
            for r in &records {
                let line = serde_json::to_string(r)
                    .map_err(|e| Error::Format(format!("ground truth encode: {e}")))?;
                writeln!(sink, "{line}")?;
            }
            sink.flush()?;
        }
    }
    Ok(0)
}

fn cmd_bench(args: BenchArgs) -> Result<i32> {
    let engine = SetSearchEngine::load(&args.engine)?;
    let queries = args.input.load()?;
    let records = read_ground_truth(resolve_data_path(&args.truth))?;
    let by_query: std::collections::HashMap<u64, Vec<vecset::SearchHit>> = records
        .iter()
        .map(|r| (r.query, r.to_hits()))
        .collect();
    let truth: Vec<Vec<vecset::SearchHit>> = queries
        .iter()
        .map(|q| {
            by_query.get(&q.id()).cloned().ok_or_else(|| {
                Error::InvalidInput(format!("no ground truth for query {}", q.id()))
            })
        })
        .collect::<Result<_>>()?;

    let probes_sweep = if args.probes.is_empty() {
        vec![engine.max_leaves().unwrap_or(1)]
    } else {
        args.probes
    };
    let result = run_benchmark(
        &engine,
        &queries,
        &truth,
        &BenchOptions {
            ks: args.ks,
            probes_sweep,
            per_target_r: args.per_target_r,
            rescore: args.rescore,
            workers: args.workers,
        },
    )?;
    match &args.csv {
        Some(path) => std::fs::write(path, result.to_csv())?,
        None => print!("{}", result.to_csv()),
    }
    Ok(0)
}

fn cmd_synth(args: SynthArgs) -> Result<i32> {
    let query_count = args.query_count.unwrap_or(0);
    let spec = SyntheticSpec {
        count: args.count + query_count,
        dim: args.dim,
        clusters: args.clusters,
        spread: args.spread,
        coherence: args.coherence,
        seed: args.seed,
    };
    let mut vectors = synthetic_vectors(&spec)?;
    let query_vectors = vectors.split_off(args.count);
    write_fvecs(&args.out, &vectors)?;
    println!(
        "wrote {} vectors (dim {}) to {}",
        vectors.len(),
        args.dim,
        args.out.display()
    );
    if let Some(query_out) = &args.query_out {
        write_fvecs(query_out, &query_vectors)?;
        println!(
            "wrote {} vectors (dim {}) to {}",
            query_vectors.len(),
            args.dim,
            query_out.display()
        );
    }
    Ok(0)
}
