//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any failure.
//!
//! Run with `cargo test -p comprag-cli --test acceptance`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use comprag_core::chunker::ChunkObject;
use comprag_core::evaluator::{
    assign_hash, cited_hashes, correlate_chunks, evaluate, EvaluatedHit, EvaluatorPolicy, FiltrationList,
    MissingPolicy,
};
use comprag_core::exec::Execution;
use comprag_core::index::{CorpusIndex, HashingEmbedder, SemanticHit};
use comprag_core::pipeline::{Pipeline, QueryRequest};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const VOCAB: &[&str] = &[
    "pasta", "pizza", "sushi", "ramen", "taco", "curry", "naan", "pho", "burger", "salad", "vegan", "spicy", "fresh",
    "cheap", "fast", "quiet", "family", "late", "night", "patio", "delivery", "lunch", "dinner", "wine", "italian",
    "thai", "greek", "kebab", "noodle", "bakery", "coffee", "tea", "grill", "bbq", "seafood", "steak", "dumpling",
    "brunch", "dessert", "nearby",
];

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("retrieval oracle equivalence", retrieval_oracle_equivalence),
        ("evaluator algebra", evaluator_algebra),
        ("hash determinism and collision scan", hash_scan),
        ("correlation one-to-one contract", correlation_contract),
        ("food-delivery golden scenario", food_golden),
        ("grounding invariant", grounding_invariant),
        ("index persistence round-trip", persistence_round_trip),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion/criteria failed");
        ExitCode::FAILURE
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// independent reference implementations

fn oracle_fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Feature-hashed term frequencies, unit length.
fn oracle_embed(text: &str, dim: usize) -> Vec<f64> {
    let lower = text.to_lowercase();
    let mut v = vec![0.0; dim];
    for term in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        v[(oracle_fnv1a64(term.as_bytes()) % dim as u64) as usize] += 1.0;
    }
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in &mut v {
            *x /= n;
        }
    }
    v
}

fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let c = (dot / (na * nb)).clamp(-1.0, 1.0);
    if c == 0.0 {
        0.0
    } else {
        c
    }
}

fn random_body(rng: &mut impl Rng) -> String {
    let n = rng.gen_range(1..=10);
    (0..n).map(|_| *VOCAB.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// Unique (key, body) chunks; about a tenth reuse an earlier body under a new key
/// so exact similarity ties are common.
fn random_corpus(rng: &mut impl Rng, n: usize) -> Vec<ChunkObject> {
    let mut seen = HashSet::new();
    let mut out: Vec<ChunkObject> = Vec::with_capacity(n);
    while out.len() < n {
        let body = if !out.is_empty() && rng.gen_bool(0.1) {
            out[rng.gen_range(0..out.len())].body.clone()
        } else {
            random_body(rng)
        };
        let key = format!("obj{}", rng.gen_range(0..n * 2));
        if seen.insert((key.clone(), body.clone())) {
            out.push(ChunkObject::new(key, body, BTreeMap::new(), "acceptance"));
        }
    }
    out
}

// ---------------------------------------------------------------------------

fn retrieval_oracle_equivalence() -> Outcome {
    const CORPORA: usize = 200;
    const DIM: usize = 256;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0001);
    let embedder = HashingEmbedder::new(DIM, true);
    let mut queries = 0;
    let mut ties = 0;
    for c in 0..CORPORA {
        let n = rng.gen_range(1..=1000);
        let chunks = random_corpus(&mut rng, n);
        let exec = if c % 2 == 0 { Execution::Parallel } else { Execution::Sequential };
        let index = CorpusIndex::build_with(chunks.clone(), &embedder, exec).map_err(|e| e.to_string())?;
        let vectors: Vec<Vec<f64>> = chunks.iter().map(|ch| oracle_embed(&ch.body, DIM)).collect();

        for q in 0..3 {
            let query = if q == 0 {
                chunks[rng.gen_range(0..n)].body.clone()
            } else {
                random_body(&mut rng)
            };
            let k = rng.gen_range(1..=(n + 5).min(120));
            let got = index
                .retrieve_with(&embedder, &query, k, exec)
                .map_err(|e| e.to_string())?;

            let qv = oracle_embed(&query, DIM);
            let mut all: Vec<(f64, &str)> = chunks
                .iter()
                .zip(&vectors)
                .map(|(ch, v)| (oracle_cosine(&qv, v), ch.hash.as_str()))
                .collect();
            all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(b.1)));
            all.truncate(k);
            ties += all.windows(2).filter(|w| w[0].0 == w[1].0).count();

            ensure(got.len() == all.len(), || {
                format!("corpus {c} query {query:?}: {} hits, oracle {}", got.len(), all.len())
            })?;
            for (i, (h, (sim, hash))) in got.iter().zip(&all).enumerate() {
                ensure(h.chunk_hash == *hash && h.similarity == *sim, || {
                    format!(
                        "corpus {c} query {query:?} position {i}: got ({}, {}), oracle ({hash}, {sim})",
                        h.chunk_hash, h.similarity
                    )
                })?;
            }
            queries += 1;
        }
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:.1?}, limit 60s"))?;
    Ok(format!(
        "{CORPORA} corpora, {queries} queries, {ties} tied neighbours, exact match in {elapsed:.1?}"
    ))
}

// ---------------------------------------------------------------------------

struct Instance {
    chunks: Vec<ChunkObject>,
    hits: Vec<SemanticHit>,
    scores: Vec<(String, f64)>,
    alpha: f64,
    missing: MissingPolicy,
    m: usize,
}

fn random_instance(rng: &mut impl Rng) -> Instance {
    let objects = rng.gen_range(1..=10);
    let n = rng.gen_range(1..=20);
    let mut chunks = Vec::with_capacity(n);
    let mut hits = Vec::with_capacity(n);
    for i in 0..n {
        let c = ChunkObject::new(format!("obj{}", rng.gen_range(0..objects)), format!("chunk {i}"), BTreeMap::new(), "d");
        // similarity on a coarse grid so fused ties happen
        let sim = f64::from(rng.gen_range(-8i32..=8)) / 8.0;
        hits.push(SemanticHit {
            chunk_hash: c.hash.clone(),
            object_key: c.object_key.clone(),
            similarity: sim,
        });
        chunks.push(c);
    }
    hits.sort_by(|a, b| b.similarity.partial_cmp(&a.similarity).unwrap().then_with(|| a.chunk_hash.cmp(&b.chunk_hash)));
    let scores: Vec<(String, f64)> = (0..objects + 2)
        .filter(|_| rng.gen_bool(0.7))
        .collect::<Vec<_>>()
        .into_iter()
        .map(|o| (format!("obj{o}"), f64::from(rng.gen_range(0..6))))
        .collect();
    let alpha = match rng.gen_range(0..4) {
        0 => 0.0,
        1 => 1.0,
        2 => 0.5,
        _ => rng.gen_range(0.0..=1.0),
    };
    let missing = *[MissingPolicy::Drop, MissingPolicy::KeepZero, MissingPolicy::KeepSemantic]
        .choose(rng)
        .unwrap();
    Instance {
        chunks,
        hits,
        scores,
        alpha,
        missing,
        m: rng.gen_range(1..=12),
    }
}

fn run_policy(inst: &Instance, scores: &[(String, f64)], policy: &EvaluatorPolicy) -> Result<Vec<EvaluatedHit>, String> {
    let flist = FiltrationList::from_scores(scores.iter().cloned()).map_err(|e| e.to_string())?;
    let cmap = correlate_chunks(&inst.chunks, &flist);
    evaluate(&inst.hits, &cmap, &flist, policy).map_err(|e| e.to_string())
}

/// Minimal rank-independent description of an output for comparisons.
fn order(out: &[EvaluatedHit]) -> Vec<&str> {
    out.iter().map(|h| h.chunk_hash.as_str()).collect()
}

fn check_instance(inst: &Instance) -> Result<(), String> {
    let input: HashSet<&str> = inst.hits.iter().map(|h| h.chunk_hash.as_str()).collect();
    let score_of: HashMap<&str, f64> = inst.scores.iter().map(|(k, s)| (k.as_str(), *s)).collect();
    let (lo, hi) = inst
        .scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, s)| (lo.min(*s), hi.max(*s)));
    let det_of = |key: &str| score_of.get(key).map(|s| if hi > lo { (s - lo) / (hi - lo) } else { 1.0 });

    // subset and consecutive ranks under every mode
    for policy in [
        EvaluatorPolicy {
            missing_policy: inst.missing,
            ..EvaluatorPolicy::pass_through()
        },
        EvaluatorPolicy::filter(inst.m, inst.missing),
        EvaluatorPolicy::fuse(inst.alpha, inst.missing),
    ] {
        let out = run_policy(inst, &inst.scores, &policy)?;
        ensure(out.iter().all(|h| input.contains(h.chunk_hash.as_str())), || {
            format!("{policy:?}: output hash not in input")
        })?;
        ensure(out.iter().enumerate().all(|(i, h)| h.final_rank == i + 1), || {
            format!("{policy:?}: final ranks not 1..n")
        })?;
        let unique: HashSet<&str> = order(&out).into_iter().collect();
        ensure(unique.len() == out.len(), || format!("{policy:?}: repeated hash"))?;
    }

    // alpha = 1: kept hits in semantic order
    let out = run_policy(inst, &inst.scores, &EvaluatorPolicy::fuse(1.0, inst.missing))?;
    let kept: Vec<&str> = inst
        .hits
        .iter()
        .filter(|h| inst.missing != MissingPolicy::Drop || det_of(&h.object_key).is_some())
        .map(|h| h.chunk_hash.as_str())
        .collect();
    ensure(order(&out) == kept, || "alpha=1 is not the semantic order".into())?;

    // alpha = 0: order by the deterministic term alone
    let out = run_policy(inst, &inst.scores, &EvaluatorPolicy::fuse(0.0, inst.missing))?;
    let mut want: Vec<(f64, &str)> = inst
        .hits
        .iter()
        .filter_map(|h| {
            let det = match (det_of(&h.object_key), inst.missing) {
                (Some(d), _) => d,
                (None, MissingPolicy::Drop) => return None,
                (None, MissingPolicy::KeepZero) => 0.0,
                (None, MissingPolicy::KeepSemantic) => (h.similarity + 1.0) / 2.0,
            };
            Some((det, h.chunk_hash.as_str()))
        })
        .collect();
    want.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(b.1)));
    let want: Vec<&str> = want.into_iter().map(|(_, h)| h).collect();
    ensure(order(&out) == want, || "alpha=0 is not the deterministic order".into())?;

    // raising one object's score never worsens its chunks
    if !inst.scores.is_empty() {
        let policy = EvaluatorPolicy::fuse(inst.alpha, inst.missing);
        let before = run_policy(inst, &inst.scores, &policy)?;
        for target in 0..inst.scores.len() {
            let mut raised = inst.scores.clone();
            raised[target].1 += 1.0 + f64::from(target as u32 % 3);
            let after = run_policy(inst, &raised, &policy)?;
            for h in before.iter().filter(|h| h.object_key == raised[target].0) {
                let a = after.iter().find(|x| x.chunk_hash == h.chunk_hash).ok_or("chunk vanished after raise")?;
                ensure(a.final_rank <= h.final_rank, || {
                    format!("raising {} moved {} from {} to {}", raised[target].0, h.chunk_hash, h.final_rank, a.final_rank)
                })?;
            }
        }
    }

    // a larger cutoff admits a superset
    let mut prev: HashSet<String> = HashSet::new();
    for m in 1..=inst.m + 2 {
        let out = run_policy(inst, &inst.scores, &EvaluatorPolicy::filter(m, inst.missing))?;
        for h in &out {
            if let Some(r) = h.filtration_rank {
                ensure(r <= m, || format!("cutoff {m} admitted filtration rank {r}"))?;
            }
        }
        let cur: HashSet<String> = out.into_iter().map(|h| h.chunk_hash).collect();
        ensure(prev.is_subset(&cur), || format!("cutoff {m} dropped a hit admitted at {}", m - 1))?;
        prev = cur;
    }
    Ok(())
}

fn evaluator_algebra() -> Outcome {
    const INSTANCES: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0002);
    let mut violations = Vec::new();
    for i in 0..INSTANCES {
        let inst = random_instance(&mut rng);
        if let Err(e) = check_instance(&inst) {
            violations.push(format!("instance {i}: {e}"));
        }
    }
    ensure(violations.is_empty(), || {
        format!("{} violation(s); first: {}", violations.len(), violations[0])
    })?;
    Ok(format!("{INSTANCES} instances, 0 violations"))
}

// ---------------------------------------------------------------------------

fn hash_scan() -> Outcome {
    const PAIRS: usize = 100_000;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0003);
    let mut inputs = HashSet::with_capacity(PAIRS);
    let mut hashes = HashSet::with_capacity(PAIRS);
    while inputs.len() < PAIRS {
        let key: String = (0..rng.gen_range(0..12)).map(|_| rng.gen_range('a'..='z')).collect();
        let body: String = (0..rng.gen_range(0..40)).map(|_| rng.gen_range(' '..='~')).collect();
        if !inputs.insert((key.clone(), body.clone())) {
            continue;
        }
        let h = assign_hash(&key, &body);
        ensure(h == assign_hash(&key, &body), || format!("re-hash differs for {key:?}"))?;
        ensure(h.len() == 32 && h.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase()), || {
            format!("malformed hash {h}")
        })?;
        ensure(hashes.insert(h), || format!("collision at {key:?} / {body:?}"))?;
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:.1?}, limit 10s"))?;
    Ok(format!("{PAIRS} pairs, 0 collisions in {elapsed:.1?}"))
}

// ---------------------------------------------------------------------------

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn comprag(dir: &Path, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_comprag"))
        .args(args)
        .current_dir(dir)
        .env_remove("COMPRAG_EMBED_URL")
        .env_remove("COMPRAG_GEN_URL")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("comprag {args:?} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr))
    })?;
    Ok(out.stdout)
}

/// Fixture variants: the full food set, a partial metrics file, and a generated corpus.
fn correlation_fixtures(root: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>, String> {
    let food = fixture("food");
    let mut out = vec![(
        "food".to_string(),
        food.join("restaurants.jsonl"),
        food.join("metrics.csv"),
    )];

    let csv = fs::read_to_string(food.join("metrics.csv")).map_err(|e| e.to_string())?;
    let mut lines: Vec<&str> = csv.lines().collect();
    lines.retain(|l| !l.starts_with("Gio's") && !l.starts_with("Pho Saigon") && !l.starts_with("Taj Spice"));
    lines.push("Shuttered Diner,10,30,3,2");
    lines.push("Pop-up Stall,40,15,4,1");
    let partial = root.join("partial.csv");
    fs::write(&partial, lines.join("\n") + "\n").map_err(|e| e.to_string())?;
    out.push(("food, partial metrics".into(), food.join("restaurants.jsonl"), partial));

    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0004);
    let mut records = String::new();
    let mut metrics = String::from("object_key,nps,response_time_min,review_score,proximity_km\n");
    for i in 0..60 {
        let text: Vec<String> = (0..rng.gen_range(1..30)).map(|_| random_body(&mut rng)).collect();
        let rec = serde_json::json!({
            "object_key": format!("Place {i}"),
            "properties": { "cuisine": VOCAB[i % VOCAB.len()] },
            "text": text.join("\n"),
        });
        records.push_str(&rec.to_string());
        records.push('\n');
        if i % 5 != 0 {
            metrics.push_str(&format!(
                "place {i},{},{},{},{}\n",
                rng.gen_range(-100..=100),
                rng.gen_range(10..=60),
                rng.gen_range(0..=5),
                rng.gen_range(0..=10)
            ));
        }
    }
    metrics.push_str("Place 999,0,20,3,1\n");
    let (r, m) = (root.join("generated.jsonl"), root.join("generated.csv"));
    fs::write(&r, records).map_err(|e| e.to_string())?;
    fs::write(&m, metrics).map_err(|e| e.to_string())?;
    out.push(("generated".into(), r, m));
    Ok(out)
}

fn correlation_contract() -> Outcome {
    let schema: Value = serde_json::from_str(&fs::read_to_string(fixture("correlation.schema.json")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let validator = jsonschema::validator_for(&schema).map_err(|e| e.to_string())?;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut summary = Vec::new();

    for (name, records, metrics) in correlation_fixtures(tmp.path())? {
        let dir = tempfile::tempdir_in(tmp.path()).map_err(|e| e.to_string())?;
        comprag(dir.path(), &["ingest", records.to_str().unwrap()])?;
        comprag(dir.path(), &["score", metrics.to_str().unwrap()])?;
        let dump: Value = serde_json::from_slice(&comprag(dir.path(), &["inspect"])?).map_err(|e| e.to_string())?;

        let errors: Vec<String> = validator.iter_errors(&dump).map(|e| e.to_string()).collect();
        ensure(errors.is_empty(), || format!("{name}: schema: {}", errors.join("; ")))?;

        let index = CorpusIndex::read_file(dir.path().join("comprag.idx")).map_err(|e| e.to_string())?;
        let flist = FiltrationList::from_json(&fs::read_to_string(dir.path().join("filtration.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let rank_of: HashMap<String, usize> = flist
            .entries()
            .iter()
            .map(|e| (e.object_key.to_lowercase(), e.rank))
            .collect();

        let bindings = dump["bindings"].as_object().unwrap();
        let unmatched: BTreeSet<&str> = dump["unmatched_hashes"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
        let mut bound_keys = HashSet::new();
        for chunk in index.chunks() {
            let b = bindings.get(&chunk.hash);
            let u = unmatched.contains(chunk.hash.as_str());
            ensure(b.is_some() != u, || format!("{name}: {} bound {} times", chunk.hash, usize::from(b.is_some()) + usize::from(u)))?;
            let want = rank_of.get(&chunk.object_key.to_lowercase());
            match (b, want) {
                (Some(b), Some(&rank)) => {
                    ensure(b["rank"] == rank, || format!("{name}: {} bound to rank {} not {rank}", chunk.hash, b["rank"]))?;
                    bound_keys.insert(chunk.object_key.to_lowercase());
                }
                (None, None) => {}
                _ => return Err(format!("{name}: {} binding disagrees with the filtration list", chunk.hash)),
            }
        }
        ensure(bindings.len() + unmatched.len() == index.len(), || format!("{name}: dump lists unknown hashes"))?;
        let unmatched_keys: BTreeSet<String> = dump["unmatched_keys"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_str().unwrap().to_lowercase())
            .collect();
        let want_keys: BTreeSet<String> = rank_of.keys().filter(|k| !bound_keys.contains(*k)).cloned().collect();
        ensure(unmatched_keys == want_keys, || format!("{name}: unmatched keys {unmatched_keys:?} != {want_keys:?}"))?;
        summary.push(format!("{name} {}/{}/{}", bindings.len(), unmatched.len(), unmatched_keys.len()));
    }
    Ok(format!("bound/unmatched hashes/unmatched keys: {}; schema valid", summary.join(", ")))
}

// ---------------------------------------------------------------------------

fn food_golden() -> Outcome {
    let food = fixture("food");
    let expected: Value = serde_json::from_str(&fs::read_to_string(food.join("expected.json")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    comprag(dir.path(), &["ingest", food.join("restaurants.jsonl").to_str().unwrap()])?;
    comprag(dir.path(), &["score", food.join("metrics.csv").to_str().unwrap()])?;

    let query = expected["query"].as_str().unwrap();
    let k = expected["k"].to_string();
    let alpha = expected["alpha"].to_string();
    let cutoff = expected["filter_cutoff"].to_string();

    let fused: Value = serde_json::from_slice(&comprag(
        dir.path(),
        &["query", query, "--json", "--k", &k, "--mode", "fuse", "--alpha", &alpha],
    )?)
    .map_err(|e| e.to_string())?;
    let top = &fused["evidence"][0];
    let want = &expected["fuse_top"];
    ensure(top["chunk_hash"] == want["hash"] && top["object_key"] == want["object_key"], || {
        format!("fuse top {} ({}), oracle {} ({})", top["object_key"], top["chunk_hash"], want["object_key"], want["hash"])
    })?;
    let close = |a: &Value, b: &Value| (a.as_f64().unwrap() - b.as_f64().unwrap()).abs() <= 1e-12;
    ensure(close(&top["semantic"], &want["similarity"]) && close(&top["fused"], &want["fused"]), || {
        format!("fuse top scores {} / {} differ from oracle", top["semantic"], top["fused"])
    })?;
    let fuse_order: Vec<&Value> = fused["evidence"].as_array().unwrap().iter().map(|h| &h["chunk_hash"]).collect();
    let want_order: Vec<&Value> = expected["fuse_order"].as_array().unwrap().iter().collect();
    ensure(fuse_order == want_order, || "fuse order differs from oracle".into())?;

    let filtered: Value = serde_json::from_slice(&comprag(
        dir.path(),
        &["query", query, "--json", "--k", &k, "--mode", "filter", "--cutoff", &cutoff, "--missing", "drop"],
    )?)
    .map_err(|e| e.to_string())?;
    let evidence = filtered["evidence"].as_array().unwrap();
    let limit = expected["filter_cutoff"].as_u64().unwrap();
    for h in evidence {
        let r = h["filtration_rank"].as_u64();
        ensure(r.is_some_and(|r| r <= limit), || format!("{} has filtration rank {:?}", h["object_key"], r))?;
    }
    let filter_order: Vec<&Value> = evidence.iter().map(|h| &h["chunk_hash"]).collect();
    let want_filter: Vec<&Value> = expected["filter_order"].as_array().unwrap().iter().collect();
    ensure(filter_order == want_filter, || "filter order differs from oracle".into())?;

    Ok(format!(
        "fuse top {} matches oracle; {} filter survivors all within rank {limit}",
        top["object_key"],
        evidence.len()
    ))
}

// ---------------------------------------------------------------------------

fn grounding_invariant() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0005);
    let embedder = Arc::new(HashingEmbedder::default());
    let pipeline = Pipeline::new(embedder.clone());
    let mut answers = 0;
    let mut citations = 0;
    for _ in 0..100 {
        let n = rng.gen_range(1..=200);
        let chunks = random_corpus(&mut rng, n);
        let scores: Vec<(String, f64)> = (0..n * 2)
            .filter(|_| rng.gen_bool(0.4))
            .collect::<Vec<_>>()
            .into_iter()
            .map(|o| (format!("obj{o}"), rng.gen_range(0.0..1.0)))
            .collect();
        let index = CorpusIndex::build(chunks, embedder.as_ref()).map_err(|e| e.to_string())?;
        let flist = FiltrationList::from_scores(scores).map_err(|e| e.to_string())?;
        for _ in 0..5 {
            let missing = *[MissingPolicy::Drop, MissingPolicy::KeepZero, MissingPolicy::KeepSemantic]
                .choose(&mut rng)
                .unwrap();
            let policy = match rng.gen_range(0..3) {
                0 => EvaluatorPolicy::pass_through(),
                1 => EvaluatorPolicy::filter(rng.gen_range(1..=10), missing),
                _ => EvaluatorPolicy::fuse(rng.gen_range(0.0..=1.0), missing),
            };
            let req = QueryRequest::new(random_body(&mut rng), rng.gen_range(1..=20), policy);
            let bundle = pipeline.answer(&index, &flist, &req).map_err(|e| e.to_string())?;
            let evidence: HashSet<&str> = bundle.evidence.iter().map(|h| h.chunk_hash.as_str()).collect();
            for cited in cited_hashes(&bundle.answer_text) {
                citations += 1;
                ensure(evidence.contains(cited.as_str()), || format!("answer cites {cited} outside its evidence"))?;
            }
            answers += 1;
        }
    }
    Ok(format!("{answers} answers, {citations} citations, none outside evidence"))
}

// ---------------------------------------------------------------------------

fn persistence_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0006);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for round in 0..100 {
        let dim = *[16usize, 64, 256].choose(&mut rng).unwrap();
        let embedder = HashingEmbedder::new(dim, rng.gen_bool(0.8));
        let n = rng.gen_range(1..=300);
        let mut chunks = random_corpus(&mut rng, n);
        let index = CorpusIndex::build(chunks.clone(), &embedder).map_err(|e| e.to_string())?;
        let (a, b) = (dir.path().join("a.idx"), dir.path().join("b.idx"));
        index.save(&a).map_err(|e| e.to_string())?;
        let loaded = CorpusIndex::load(&a, &embedder).map_err(|e| e.to_string())?;
        loaded.save(&b).map_err(|e| e.to_string())?;
        let (bytes_a, bytes_b) = (fs::read(&a).map_err(|e| e.to_string())?, fs::read(&b).map_err(|e| e.to_string())?);
        ensure(bytes_a == bytes_b, || format!("round {round}: re-saved file differs"))?;

        chunks.shuffle(&mut rng);
        let rebuilt = CorpusIndex::build(chunks, &embedder).map_err(|e| e.to_string())?;
        ensure(rebuilt.to_bytes() == bytes_a, || format!("round {round}: rebuild differs"))?;

        for _ in 0..3 {
            let q = random_body(&mut rng);
            let k = rng.gen_range(1..=50);
            let x = index.retrieve(&embedder, &q, k).map_err(|e| e.to_string())?;
            let y = loaded.retrieve(&embedder, &q, k).map_err(|e| e.to_string())?;
            ensure(x == y, || format!("round {round}: query {q:?} differs after reload"))?;
        }
    }
    Ok("100 round-trips byte-identical, query results identical".into())
}
