//! Self-contained checks of the encoding identities on seeded random
//! instances, plus an engine/oracle agreement check. Everything here is
//! deterministic given the base seed; a failing trial reports its own seed
//! so it can be replayed in isolation.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vecset::encode::{dot, encode_candidate, encode_target_base, encode_targets};
use vecset::engine::{BackendConfig, EngineConfig, QueryOptions, SetSearchEngine};
use vecset::oracle::BruteForce;
use vecset::sim::{pairwise_sims, set_similarity};
use vecset::{SimParams, Vector, VectorSet};

pub struct VerifyConfig {
    pub trials: usize,
    pub seed: u64,
    /// Fault injection: encode targets from a slightly perturbed query
    /// while scoring the original, so the equality check must trip.
    pub corrupt_encoder: bool,
}

const DIMS: [usize; 3] = [2, 8, 32];
const MAX_CARD: usize = 4;
const TOL: f64 = 1e-5;

struct Instance {
    a: VectorSet,
    v: VectorSet,
    params: SimParams,
}

fn random_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vector {
    loop {
        let components: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        // Degenerate draws (all components near zero) are vanishingly rare
        // but would abort a long run; redraw instead.
        if let Ok(v) = Vector::new(components) {
            return v;
        }
    }
}

fn random_set(rng: &mut ChaCha8Rng, id: u64, card: usize, dim: usize) -> VectorSet {
    let members = (0..card).map(|_| random_vector(rng, dim)).collect();
    VectorSet::new(id, members).unwrap()
}

fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = DIMS[rng.random_range(0..DIMS.len())];
    let a_card = rng.random_range(1..=MAX_CARD);
    let v_card = rng.random_range(1..=MAX_CARD);
    let w_max = rng.random_range(0.1..4.0);
    let w_avg = rng.random_range(0.1..4.0);
    let params = SimParams::new(w_max, w_avg, dim, MAX_CARD).unwrap();
    let a = random_set(&mut rng, 1, a_card, dim);
    let v = random_set(&mut rng, 2, v_card, dim);
    Instance { a, v, params }
}

type Check = std::result::Result<(), String>;

fn err_str<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn check_target_identity(seed: u64) -> Check {
    let inst = instance(seed);
    let ps = pairwise_sims(&inst.a, &inst.v).map_err(err_str)?;
    let candidate = encode_candidate(&inst.v, inst.a.card(), &inst.params).map_err(err_str)?;
    let denom = inst.params.w_max + inst.params.w_avg;
    for (winner, tau) in encode_targets(&inst.a, inst.v.card(), &inst.params).map_err(err_str)? {
        let got = dot(&tau, &candidate).map_err(err_str)?;
        let want = (inst.params.w_max * ps.get(winner.target_member, winner.candidate_member)
            + inst.params.w_avg * ps.avg())
            / denom;
        if (got - want).abs() > TOL {
            return Err(format!(
                "pair ({}, {}): encoded dot {got} vs direct score {want}",
                winner.target_member, winner.candidate_member
            ));
        }
    }
    Ok(())
}

fn check_lower_bound(seed: u64) -> Check {
    let inst = instance(seed);
    let sim = set_similarity(&inst.a, &inst.v, &inst.params).map_err(err_str)?;
    let candidate = encode_candidate(&inst.v, inst.a.card(), &inst.params).map_err(err_str)?;
    for (winner, tau) in encode_targets(&inst.a, inst.v.card(), &inst.params).map_err(err_str)? {
        let got = dot(&tau, &candidate).map_err(err_str)?;
        if got > sim + TOL {
            return Err(format!(
                "pair ({}, {}): encoded dot {got} exceeds similarity {sim}",
                winner.target_member, winner.candidate_member
            ));
        }
    }
    Ok(())
}

/// Adds a fixed offset to every member's first component.
fn perturbed(a: &VectorSet) -> VectorSet {
    let members = a
        .members()
        .iter()
        .map(|m| {
            let mut c = m.components().to_vec();
            c[0] += 1e-3;
            Vector::new(c).unwrap()
        })
        .collect();
    VectorSet::new(a.id(), members).unwrap()
}

fn check_argmax_equality(seed: u64, corrupt: bool) -> Check {
    let inst = instance(seed);
    let sim = set_similarity(&inst.a, &inst.v, &inst.params).map_err(err_str)?;
    let ps = pairwise_sims(&inst.a, &inst.v).map_err(err_str)?;
    let argmax = ps.argmax_pairs(1e-12);
    let encode_side = if corrupt { perturbed(&inst.a) } else { inst.a.clone() };
    let candidate = encode_candidate(&inst.v, inst.a.card(), &inst.params).map_err(err_str)?;
    for (winner, tau) in
        encode_targets(&encode_side, inst.v.card(), &inst.params).map_err(err_str)?
    {
        if !argmax.contains(&(winner.target_member, winner.candidate_member)) {
            continue;
        }
        let got = dot(&tau, &candidate).map_err(err_str)?;
        if (got - sim).abs() > TOL {
            return Err(format!(
                "maximal pair ({}, {}): encoded dot {got} vs similarity {sim}",
                winner.target_member, winner.candidate_member
            ));
        }
    }
    Ok(())
}

fn check_sum_identity(seed: u64) -> Check {
    let inst = instance(seed);
    let ps = pairwise_sims(&inst.a, &inst.v).map_err(err_str)?;
    let base = encode_target_base(&inst.a, inst.v.card(), &inst.params).map_err(err_str)?;
    let candidate = encode_candidate(&inst.v, inst.a.card(), &inst.params).map_err(err_str)?;
    let got = dot(&base, &candidate).map_err(err_str)?;
    let want = ps.sum();
    if (got - want).abs() > 1e-4 * want.abs().max(1.0) {
        return Err(format!("encoded dot {got} vs pairwise sum {want}"));
    }
    Ok(())
}

fn run_suite(
    name: &str,
    trials: usize,
    base_seed: u64,
    check: impl Fn(u64) -> Check,
) -> bool {
    let mut violations = 0usize;
    let mut first: Option<(u64, String)> = None;
    for t in 0..trials {
        let seed = base_seed.wrapping_add(t as u64);
        if let Err(msg) = check(seed) {
            violations += 1;
            if first.is_none() {
                first = Some((seed, msg));
            }
        }
    }
    match first {
        None => {
            println!("PASS {name} ({trials} trials)");
            true
        }
        Some((seed, msg)) => {
            println!("FAIL {name} ({violations}/{trials} trials; first at seed {seed}: {msg})");
            false
        }
    }
}

const AGREEMENT_SETS: usize = 300;
const AGREEMENT_QUERIES: usize = 20;
const AGREEMENT_TOP_U: usize = 7;

/// Flat-backend engine against the brute-force scan: identical ids and
/// order, scores within tolerance.
fn run_oracle_agreement(base_seed: u64) -> bool {
    let name = "oracle_agreement";
    match oracle_agreement(base_seed) {
        Ok(()) => {
            println!("PASS {name} ({AGREEMENT_SETS} sets, {AGREEMENT_QUERIES} queries)");
            true
        }
        Err(msg) => {
            println!("FAIL {name} (seed {base_seed}: {msg})");
            false
        }
    }
}

fn oracle_agreement(base_seed: u64) -> Check {
    // Offset the stream so the instances differ from the trial suites.
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(0x5eed));
    let dim = 8;
    let max_card = 3;
    let params = SimParams::new(1.0, 1.0, dim, max_card).map_err(err_str)?;
    let mut database = Vec::with_capacity(AGREEMENT_SETS);
    for i in 0..AGREEMENT_SETS {
        let card = rng.random_range(1..=max_card);
        database.push(random_set(&mut rng, i as u64, card, dim));
    }
    let mut queries = Vec::with_capacity(AGREEMENT_QUERIES);
    for i in 0..AGREEMENT_QUERIES {
        let card = rng.random_range(1..=max_card);
        queries.push(random_set(&mut rng, 10_000 + i as u64, card, dim));
    }

    let oracle = BruteForce::new(&database, &params).map_err(err_str)?;
    let mut engine = SetSearchEngine::new(EngineConfig {
        params,
        target_cards: (1..=max_card).collect(),
        backend: BackendConfig::Flat,
    })
    .map_err(err_str)?;
    engine.ingest(database).map_err(err_str)?;
    engine.seal().map_err(err_str)?;

    let opts = QueryOptions {
        probes: None,
        per_target_r: Some(10),
        rescore: Some(true),
    };
    for q in &queries {
        let want = oracle.top_u(q, AGREEMENT_TOP_U).map_err(err_str)?;
        let got = engine
            .query_top_u(q, AGREEMENT_TOP_U, &opts)
            .map_err(err_str)?
            .hits;
        if got.len() != want.len() {
            return Err(format!(
                "query {}: {} hits vs {}",
                q.id(),
                got.len(),
                want.len()
            ));
        }
        for (rank, (g, w)) in got.iter().zip(&want).enumerate() {
            if g.set_id != w.set_id {
                return Err(format!(
                    "query {} rank {rank}: id {} vs {}",
                    q.id(),
                    g.set_id,
                    w.set_id
                ));
            }
            if (g.score - w.score).abs() > TOL {
                return Err(format!(
                    "query {} rank {rank}: score {} vs {}",
                    q.id(),
                    g.score,
                    w.score
                ));
            }
        }
    }
    Ok(())
}

pub fn run(cfg: &VerifyConfig) -> i32 {
    let mut ok = true;
    ok &= run_suite("target_identity", cfg.trials, cfg.seed, check_target_identity);
    ok &= run_suite("score_lower_bound", cfg.trials, cfg.seed, check_lower_bound);
    ok &= run_suite("argmax_equality", cfg.trials, cfg.seed, |s| {
        check_argmax_equality(s, cfg.corrupt_encoder)
    });
    ok &= run_suite("sum_identity", cfg.trials, cfg.seed, check_sum_identity);
    ok &= run_oracle_agreement(cfg.seed);
    if ok {
        0
    } else {
        1
    }
}
