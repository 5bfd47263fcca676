//! `comprag.toml` loading.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use serde::Deserialize;

use comprag_core::chunker::ChunkingConfig;
use comprag_core::evaluator::EvaluatorPolicy;
use comprag_core::index::{Embedder, HashingEmbedder, RemoteEmbedder, DEFAULT_DIM, EMBED_URL_ENV};
use comprag_core::pipeline::{Generator, RemoteGenerator, TemplateGenerator, GEN_URL_ENV};
use comprag_core::recommender::{MetricBounds, MetricWeights};

pub const DEFAULT_CONFIG_FILE: &str = "comprag.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderMode {
    #[default]
    Hashing,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    pub mode: EmbedderMode,
    pub dim: usize,
    pub unit_norm: bool,
    pub endpoint: Option<String>,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            mode: EmbedderMode::Hashing,
            dim: DEFAULT_DIM,
            unit_norm: true,
            endpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub k: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self { k: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecommenderConfig {
    pub weights: MetricWeights,
    pub bounds: MetricBounds,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub index: PathBuf,
    pub filtration: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            index: "comprag.idx".into(),
            filtration: "filtration.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub endpoint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub embedder: EmbedderConfig,
    pub chunking: ChunkingConfig,
    pub retrieval: RetrievalConfig,
    pub evaluator: EvaluatorPolicy,
    pub recommender: RecommenderConfig,
    pub paths: PathsConfig,
    pub generator: GeneratorConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, or `./comprag.toml` when present, or falls back to defaults.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let path = match path {
            Some(p) => p.to_path_buf(),
            None if Path::new(DEFAULT_CONFIG_FILE).exists() => PathBuf::from(DEFAULT_CONFIG_FILE),
            None => return Ok(Self::default()),
        };
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.embedder.dim == 0 {
            bail!("embedder.dim must be positive");
        }
        if self.retrieval.k == 0 {
            bail!("retrieval.k must be at least 1");
        }
        self.chunking.validate()?;
        self.evaluator.validate()?;
        self.recommender.weights.validate()?;
        self.recommender.bounds.validate()?;
        Ok(())
    }

    pub fn embedder(&self) -> anyhow::Result<Arc<dyn Embedder>> {
        let e = &self.embedder;
        Ok(match e.mode {
            EmbedderMode::Hashing => Arc::new(HashingEmbedder::new(e.dim, e.unit_norm)),
            EmbedderMode::Remote => {
                let url = e
                    .endpoint
                    .clone()
                    .or_else(|| std::env::var(EMBED_URL_ENV).ok())
                    .with_context(|| format!("embedder.mode = \"remote\" needs embedder.endpoint or {EMBED_URL_ENV}"))?;
                Arc::new(RemoteEmbedder::new(url, e.dim)?)
            }
        })
    }

    /// Remote generator when an endpoint is configured or `COMPRAG_GEN_URL` is set.
    pub fn generator(&self) -> anyhow::Result<Arc<dyn Generator>> {
        match self.generator.endpoint.clone().or_else(|| std::env::var(GEN_URL_ENV).ok()) {
            Some(url) => Ok(Arc::new(RemoteGenerator::new(url)?)),
            None => Ok(Arc::new(TemplateGenerator)),
        }
    }
}
