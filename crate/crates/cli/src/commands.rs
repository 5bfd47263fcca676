use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, Context};

use comprag_core::chunker::{validate_relevance, Chunker, Document};
use comprag_core::evaluator::{correlate, FiltrationList};
use comprag_core::index::{CorpusIndex, EmbedError, IndexError};
use comprag_core::pipeline::{AnswerBundle, Pipeline, QueryRequest};
use comprag_core::recommender::{build_filtration, read_metrics_csv};

use crate::config::PipelineConfig;
use crate::{Cli, Command, QueryArgs};

pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    fn violations(error: anyhow::Error) -> Self {
        Self { code: 1, error }
    }

    fn input(error: anyhow::Error) -> Self {
        Self { code: 2, error }
    }

    fn remote(error: anyhow::Error) -> Self {
        Self { code: 3, error }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Self::input(error)
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn index_failure(e: IndexError) -> Failure {
    match e {
        IndexError::Embed(EmbedError::EmbedderUnavailable(_) | EmbedError::DimensionMismatch { .. }) => {
            Failure::remote(e.into())
        }
        other => Failure::input(other.into()),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref())?;
    if let Some(p) = cli.index {
        cfg.paths.index = p;
    }
    if let Some(p) = cli.filtration {
        cfg.paths.filtration = p;
    }
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Ingest {
            records,
            allow_violations,
        } => ingest(&cfg, &records, allow_violations, &mut out),
        Command::Score { metrics } => score(&cfg, &metrics, &mut out),
        Command::Query(args) => query(&cfg, args, &mut out),
        Command::Inspect => inspect(&cfg, &mut out),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::input)
}

fn ingest(cfg: &PipelineConfig, records: &Path, allow_violations: bool, out: &mut impl Write) -> Result<()> {
    let text = read(records)?;
    let doc_id = records
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "records".into());
    let chunks = Chunker::new(cfg.chunking)
        .chunk(&Document::new(doc_id, text))
        .with_context(|| format!("chunking {}", records.display()))?;
    let violations = validate_relevance(&chunks);

    writeln!(out, "chunks: {}", chunks.len()).map_err(|e| Failure::input(e.into()))?;
    writeln!(out, "violations: {}", violations.len()).map_err(|e| Failure::input(e.into()))?;
    for v in &violations {
        writeln!(out, "  {v}").map_err(|e| Failure::input(e.into()))?;
    }
    if !violations.is_empty() && !allow_violations {
        return Err(Failure::violations(anyhow!(
            "{} chunk relevance violation(s); index not written (use --allow-violations to skip them)",
            violations.len()
        )));
    }

    let mut seen = HashSet::new();
    let clean: Vec<_> = chunks
        .into_iter()
        .filter(|c| !c.object_key.trim().is_empty() && seen.insert((c.object_key.clone(), c.body.clone())))
        .collect();
    let embedder = cfg.embedder()?;
    let index = CorpusIndex::build(clean, embedder.as_ref()).map_err(index_failure)?;
    index
        .save(&cfg.paths.index)
        .with_context(|| format!("writing {}", cfg.paths.index.display()))?;
    writeln!(out, "indexed: {}", index.len()).map_err(|e| Failure::input(e.into()))?;
    writeln!(out, "index: {}", cfg.paths.index.display()).map_err(|e| Failure::input(e.into()))?;
    Ok(())
}

fn score(cfg: &PipelineConfig, metrics: &Path, out: &mut impl Write) -> Result<()> {
    let file = fs::File::open(metrics).with_context(|| format!("opening {}", metrics.display()))?;
    let records = read_metrics_csv(file).with_context(|| format!("reading {}", metrics.display()))?;
    let flist = build_filtration(&records, &cfg.recommender.weights, &cfg.recommender.bounds)
        .with_context(|| format!("scoring {}", metrics.display()))?;
    fs::write(&cfg.paths.filtration, flist.to_json())
        .with_context(|| format!("writing {}", cfg.paths.filtration.display()))?;
    writeln!(out, "entries: {}", flist.len()).map_err(|e| Failure::input(e.into()))?;
    writeln!(out, "filtration: {}", cfg.paths.filtration.display()).map_err(|e| Failure::input(e.into()))?;
    Ok(())
}

fn load_filtration(cfg: &PipelineConfig) -> Result<FiltrationList> {
    let raw = read(&cfg.paths.filtration)?;
    FiltrationList::from_json(&raw)
        .with_context(|| format!("in {}", cfg.paths.filtration.display()))
        .map_err(Failure::input)
}

fn query(cfg: &PipelineConfig, args: QueryArgs, out: &mut impl Write) -> Result<()> {
    let mut policy = cfg.evaluator;
    if let Some(mode) = args.mode {
        policy.mode = mode;
    }
    if let Some(alpha) = args.alpha {
        policy.alpha = alpha;
    }
    if let Some(cutoff) = args.cutoff {
        policy.cutoff_m = Some(cutoff);
    }
    if let Some(missing) = args.missing {
        policy.missing_policy = missing;
    }
    let req = QueryRequest::new(args.text, args.k.unwrap_or(cfg.retrieval.k), policy);

    let embedder = cfg.embedder()?;
    let index = CorpusIndex::load(&cfg.paths.index, embedder.as_ref())
        .with_context(|| format!("loading {}", cfg.paths.index.display()))?;
    let flist = load_filtration(cfg)?;
    let pipeline = Pipeline::new(embedder).with_generator(cfg.generator()?);
    let bundle = pipeline.answer(&index, &flist, &req).map_err(|e| {
        if e.is_remote_failure() {
            Failure::remote(e.into())
        } else {
            Failure::input(e.into())
        }
    })?;

    if args.json {
        let json = serde_json::to_string_pretty(&bundle).map_err(|e| Failure::input(e.into()))?;
        writeln!(out, "{json}").map_err(|e| Failure::input(e.into()))?;
    } else {
        print_bundle(&bundle, out).map_err(|e| Failure::input(e.into()))?;
    }
    Ok(())
}

fn print_bundle(bundle: &AnswerBundle, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{}", bundle.answer_text.trim_end())?;
    writeln!(out)?;
    writeln!(
        out,
        "{:>4}  {:<24} {:<32} {:>9} {:>9} {:>9} {:>6}",
        "rank", "object", "hash", "semantic", "determ.", "fused", "f.rank"
    )?;
    for h in &bundle.evidence {
        let f_rank = h.filtration_rank.map_or_else(|| "-".to_string(), |r| r.to_string());
        writeln!(
            out,
            "{:>4}  {:<24} {:<32} {:>9.4} {:>9.4} {:>9.4} {:>6}",
            h.final_rank, h.object_key, h.chunk_hash, h.semantic, h.deterministic, h.fused, f_rank
        )?;
    }
    let r = &bundle.unmatched_report;
    writeln!(
        out,
        "unmatched: {} chunk(s) without ranking, {} ranked object(s) without chunks",
        r.unmatched_hashes,
        r.unmatched_keys.len()
    )
}

fn inspect(cfg: &PipelineConfig, out: &mut impl Write) -> Result<()> {
    let index = CorpusIndex::read_file(&cfg.paths.index)
        .with_context(|| format!("reading {}", cfg.paths.index.display()))?;
    let flist = load_filtration(cfg)?;
    write!(out, "{}", correlate(&index, &flist).to_json()).map_err(|e| Failure::input(e.into()))?;
    Ok(())
}
