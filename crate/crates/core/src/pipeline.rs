//! The train, fit and mine steps chained over one corpus. The CLI runs them
//! one at a time through files; [`build`] runs them in memory.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::corpus::{Corpus, LabeledMessage};
use crate::embedding::{self, EmbeddingError, EmbeddingModel, TrainingConfig};
use crate::eval::stratified_split;
use crate::intent::{fit_centroids, IntentCentroidModel, IntentError, NearestCentroid};
use crate::replies::{build_catalog, mine_pair_stats, CatalogError, GuardConfig, ReplyCatalog};

/// Fraction of each intent's labeled messages used to fit centroids.
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

/// Response intents kept per incoming intent when mining the catalog.
pub const DEFAULT_TOP_RESPONSES: usize = 3;

pub const DEFAULT_FALLBACK: [&str; 4] = ["Ok", "Got it", "Thanks!", "One moment please"];

pub fn default_fallback() -> Vec<String> {
    DEFAULT_FALLBACK.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("embedding: {0}")]
    Embedding(#[from] EmbeddingError),
    #[error("intents: {0}")]
    Intent(#[from] IntentError),
    #[error("catalog: {0}")]
    Catalog(#[from] CatalogError),
}

/// The embedding sees every message, labeled or not.
pub fn train_embedding(corpus: &Corpus, config: &TrainingConfig) -> Result<EmbeddingModel, EmbeddingError> {
    let docs = embedding::documents(corpus.records.iter().map(|r| &r.message));
    embedding::train(&docs, config)
}

pub struct Split {
    pub train: Vec<LabeledMessage>,
    pub test: Vec<LabeledMessage>,
}

pub fn split(corpus: &Corpus, train_fraction: f64) -> Split {
    let (train, test) = stratified_split(&corpus.labeled(), train_fraction);
    Split { train, test }
}

pub fn fit_intents(embedding: &EmbeddingModel, split: &Split) -> Result<IntentCentroidModel, IntentError> {
    fit_centroids(embedding, &split.train)
}

pub struct MineOptions<'a> {
    pub reply_templates: &'a BTreeMap<String, Vec<String>>,
    pub guard: &'a GuardConfig,
    pub top_responses: usize,
    pub fallback: Vec<String>,
    pub version: &'a str,
}

/// Classifies every corpus message with the fitted model and turns the
/// observed (incoming, response) intent pairs into a catalog.
pub fn mine_catalog(
    corpus: &Corpus,
    embedding: &EmbeddingModel,
    centroids: &IntentCentroidModel,
    options: MineOptions<'_>,
) -> Result<ReplyCatalog, PipelineError> {
    let predictor = NearestCentroid::new(centroids, embedding)?;
    let stats = mine_pair_stats(&corpus.messages(), &predictor, options.guard);
    Ok(build_catalog(&stats, options.reply_templates, options.top_responses, options.fallback, options.version)?)
}

pub struct Artifacts {
    pub embedding: EmbeddingModel,
    pub centroids: IntentCentroidModel,
    pub catalog: ReplyCatalog,
    pub split: Split,
}

/// All steps with default split, guard and fallback.
pub fn build(
    corpus: &Corpus,
    reply_templates: &BTreeMap<String, Vec<String>>,
    config: &TrainingConfig,
    version: &str,
) -> Result<Artifacts, PipelineError> {
    let embedding = train_embedding(corpus, config)?;
    let split = split(corpus, DEFAULT_TRAIN_FRACTION);
    let centroids = fit_intents(&embedding, &split)?;
    let guard = GuardConfig::default();
    let catalog = mine_catalog(
        corpus,
        &embedding,
        &centroids,
        MineOptions {
            reply_templates,
            guard: &guard,
            top_responses: DEFAULT_TOP_RESPONSES,
            fallback: default_fallback(),
            version,
        },
    )?;
    Ok(Artifacts { embedding, centroids, catalog, split })
}
