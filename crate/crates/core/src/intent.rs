//! Intent detection: a nearest-centroid classifier over paragraph vectors
//! and a context-agnostic frequency baseline.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::container::{self, ContainerError};
use crate::corpus::LabeledMessage;
use crate::embedding::{infer_doc_vector, EmbeddingError, EmbeddingModel};
use crate::textprep::tokenize;

pub const CENTROID_FORMAT_VERSION: u32 = 1;
const CENTROID_KIND: &str = "smartreply-centroids";

#[derive(Debug, Error)]
pub enum IntentError {
    #[error("no labeled examples given")]
    NoExamples,
    #[error("intent {0:?} has no example with an in-vocabulary token")]
    NoUsableExamples(String),
    #[error("vector has dimension {found}, expected {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("cosine is undefined for a zero-norm vector")]
    ZeroNorm,
    #[error("centroid model was fitted on embedding {expected}, but embedding {found} was supplied")]
    EmbeddingMismatch { expected: String, found: String },
    #[error(transparent)]
    File(#[from] ContainerError),
    #[error("centroid file is inconsistent: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// Why a predictor produced no ranking for an input.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PredictError {
    #[error("k must be at least 1")]
    InvalidK,
    #[error("no token of the message is in the vocabulary")]
    OutOfVocabulary,
    #[error("the message vector has zero norm")]
    DegenerateQuery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredIntent {
    pub intent_id: String,
    pub score: f64,
}

/// Intents ranked by descending score, ties by ascending id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IntentPrediction {
    pub ranked: Vec<ScoredIntent>,
}

impl IntentPrediction {
    pub fn top(&self) -> Option<&ScoredIntent> {
        self.ranked.first()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.ranked.iter().map(|s| s.intent_id.as_str())
    }

    fn from_scores(mut scored: Vec<ScoredIntent>, k: usize) -> Self {
        scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.intent_id.cmp(&b.intent_id)));
        scored.truncate(k);
        Self { ranked: scored }
    }
}

/// Anything that ranks intents for a message text.
pub trait IntentPredictor {
    fn predict_intents(&self, text: &str, k: usize) -> Result<IntentPrediction, PredictError>;

    fn class_count(&self) -> usize;
}

pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64, IntentError> {
    if a.len() != b.len() {
        return Err(IntentError::Dimension { expected: a.len(), found: b.len() });
    }
    let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(IntentError::ZeroNorm);
    }
    Ok((ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentClass {
    pub intent_id: String,
    pub centroid: Vec<f32>,
    pub support: usize,
}

/// Per-intent centroids bound to the embedding model they were fitted with.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentCentroidModel {
    classes: Vec<IntentClass>,
    embedding_ref: String,
}

#[derive(Serialize, Deserialize)]
struct CentroidHeader {
    embedding_checksum: String,
    n_classes: usize,
    dim: usize,
}

#[derive(Serialize, Deserialize)]
struct StoredClass {
    intent_id: String,
    support: usize,
    centroid: String,
}

#[derive(Serialize, Deserialize)]
struct CentroidPayload {
    embedding_ref: String,
    dim: usize,
    classes: Vec<StoredClass>,
}

impl IntentCentroidModel {
    /// Averages labeled vectors per intent. Sums run in `f64`.
    pub fn from_vectors<'a, I>(embedding_ref: &str, labeled: I) -> Result<Self, IntentError>
    where
        I: IntoIterator<Item = (&'a str, &'a [f32])>,
    {
        let mut sums: BTreeMap<&str, (Vec<f64>, usize)> = BTreeMap::new();
        let mut dim = None;
        for (intent, vector) in labeled {
            let expected = *dim.get_or_insert(vector.len());
            if vector.len() != expected {
                return Err(IntentError::Dimension { expected, found: vector.len() });
            }
            let (sum, n) = sums.entry(intent).or_insert_with(|| (vec![0.0; expected], 0));
            for (s, &x) in sum.iter_mut().zip(vector) {
                *s += x as f64;
            }
            *n += 1;
        }
        if sums.is_empty() {
            return Err(IntentError::NoExamples);
        }
        let classes = sums
            .into_iter()
            .map(|(intent, (sum, n))| IntentClass {
                intent_id: intent.to_string(),
                centroid: sum.iter().map(|s| (s / n as f64) as f32).collect(),
                support: n,
            })
            .collect();
        Ok(Self { classes, embedding_ref: embedding_ref.to_string() })
    }

    pub fn classes(&self) -> &[IntentClass] {
        &self.classes
    }

    pub fn embedding_ref(&self) -> &str {
        &self.embedding_ref
    }

    pub fn intent_ids(&self) -> impl Iterator<Item = &str> {
        self.classes.iter().map(|c| c.intent_id.as_str())
    }

    pub fn dim(&self) -> usize {
        self.classes.first().map_or(0, |c| c.centroid.len())
    }

    pub fn check_embedding(&self, embedding: &EmbeddingModel) -> Result<(), IntentError> {
        if embedding.checksum() != self.embedding_ref {
            return Err(IntentError::EmbeddingMismatch {
                expected: self.embedding_ref.clone(),
                found: embedding.checksum().to_string(),
            });
        }
        Ok(())
    }

    /// Ranks all classes by cosine to `query` and keeps the first `k`.
    pub fn rank_vector(&self, query: &[f32], k: usize) -> Result<IntentPrediction, PredictError> {
        if k == 0 {
            return Err(PredictError::InvalidK);
        }
        if query.iter().all(|&x| x == 0.0) {
            return Err(PredictError::DegenerateQuery);
        }
        let scored = self
            .classes
            .iter()
            .map(|c| ScoredIntent {
                intent_id: c.intent_id.clone(),
                // A zero centroid carries no direction; rank it as orthogonal.
                score: cosine(query, &c.centroid).unwrap_or(0.0),
            })
            .collect();
        Ok(IntentPrediction::from_scores(scored, k))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = CentroidHeader {
            embedding_checksum: self.embedding_ref.clone(),
            n_classes: self.classes.len(),
            dim: self.dim(),
        };
        let payload = CentroidPayload {
            embedding_ref: self.embedding_ref.clone(),
            dim: self.dim(),
            classes: self
                .classes
                .iter()
                .map(|c| StoredClass {
                    intent_id: c.intent_id.clone(),
                    support: c.support,
                    centroid: container::encode_f32s(&c.centroid),
                })
                .collect(),
        };
        container::encode(CENTROID_KIND, CENTROID_FORMAT_VERSION, header, &payload)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IntentError> {
        let (_, payload): (container::Header<CentroidHeader>, CentroidPayload) =
            container::decode(bytes, CENTROID_KIND, CENTROID_FORMAT_VERSION)?;
        let mut classes = Vec::with_capacity(payload.classes.len());
        for c in payload.classes {
            if c.support == 0 {
                return Err(IntentError::Inconsistent(format!("intent {:?} has zero support", c.intent_id)));
            }
            classes.push(IntentClass {
                centroid: container::decode_f32s(&c.centroid, payload.dim)?,
                intent_id: c.intent_id,
                support: c.support,
            });
        }
        if classes.is_empty() {
            return Err(IntentError::Inconsistent("no classes".into()));
        }
        if classes.windows(2).any(|w| w[0].intent_id >= w[1].intent_id) {
            return Err(IntentError::Inconsistent("intent ids must be unique and sorted".into()));
        }
        Ok(Self { classes, embedding_ref: payload.embedding_ref })
    }
}

/// Fits one centroid per intent from re-inferred message vectors.
///
/// Messages without any in-vocabulary token are skipped; an intent left
/// with no usable message is an error.
pub fn fit_centroids(
    embedding: &EmbeddingModel,
    labeled: &[LabeledMessage],
) -> Result<IntentCentroidModel, IntentError> {
    if labeled.is_empty() {
        return Err(IntentError::NoExamples);
    }
    let mut vectors: Vec<(&str, Vec<f32>)> = Vec::with_capacity(labeled.len());
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for m in labeled {
        let usable = seen.entry(m.intent_id.as_str()).or_insert(0);
        match infer_doc_vector(embedding, &tokenize(&m.message.text)) {
            Ok(v) => {
                *usable += 1;
                vectors.push((m.intent_id.as_str(), v));
            }
            Err(EmbeddingError::OutOfVocabulary) => {}
            Err(e) => return Err(e.into()),
        }
    }
    if let Some((intent, _)) = seen.iter().find(|(_, &n)| n == 0) {
        return Err(IntentError::NoUsableExamples(intent.to_string()));
    }
    IntentCentroidModel::from_vectors(
        embedding.checksum(),
        vectors.iter().map(|(i, v)| (*i, v.as_slice())),
    )
}

pub fn save_centroids(model: &IntentCentroidModel, path: &Path) -> Result<(), IntentError> {
    Ok(container::write_file(path, &model.to_bytes())?)
}

pub fn load_centroids(path: &Path) -> Result<IntentCentroidModel, IntentError> {
    IntentCentroidModel::from_bytes(&container::read_file(path)?)
}

/// Tokenizes, infers and ranks. All-OOV input yields
/// [`PredictError::OutOfVocabulary`].
pub fn predict(
    model: &IntentCentroidModel,
    embedding: &EmbeddingModel,
    text: &str,
    k: usize,
) -> Result<IntentPrediction, PredictError> {
    if k == 0 {
        return Err(PredictError::InvalidK);
    }
    let vector = match infer_doc_vector(embedding, &tokenize(text)) {
        Ok(v) => v,
        Err(_) => return Err(PredictError::OutOfVocabulary),
    };
    model.rank_vector(&vector, k)
}

/// A centroid model paired with the embedding it was fitted on.
#[derive(Debug, Clone, Copy)]
pub struct NearestCentroid<'a> {
    centroids: &'a IntentCentroidModel,
    embedding: &'a EmbeddingModel,
}

impl<'a> NearestCentroid<'a> {
    pub fn new(centroids: &'a IntentCentroidModel, embedding: &'a EmbeddingModel) -> Result<Self, IntentError> {
        centroids.check_embedding(embedding)?;
        Ok(Self { centroids, embedding })
    }

    pub fn centroids(&self) -> &IntentCentroidModel {
        self.centroids
    }

    pub fn embedding(&self) -> &EmbeddingModel {
        self.embedding
    }
}

impl IntentPredictor for NearestCentroid<'_> {
    fn predict_intents(&self, text: &str, k: usize) -> Result<IntentPrediction, PredictError> {
        predict(self.centroids, self.embedding, text, k)
    }

    fn class_count(&self) -> usize {
        self.centroids.classes.len()
    }
}

/// Ranks intents by training frequency, ignoring the message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyModel {
    /// `(intent_id, count)`, descending count then ascending id.
    pub ranked_intents: Vec<(String, usize)>,
    pub total: usize,
}

impl FrequencyModel {
    pub fn fit<'a, I>(labels: I) -> Result<Self, IntentError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for l in labels {
            *counts.entry(l).or_default() += 1;
        }
        if counts.is_empty() {
            return Err(IntentError::NoExamples);
        }
        let total = counts.values().sum();
        let mut ranked_intents: Vec<(String, usize)> =
            counts.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        ranked_intents.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(Self { ranked_intents, total })
    }
}

pub fn predict_frequency(model: &FrequencyModel, k: usize) -> Result<IntentPrediction, PredictError> {
    if k == 0 {
        return Err(PredictError::InvalidK);
    }
    Ok(IntentPrediction {
        ranked: model
            .ranked_intents
            .iter()
            .take(k)
            .map(|(id, n)| ScoredIntent { intent_id: id.clone(), score: *n as f64 / model.total as f64 })
            .collect(),
    })
}

impl IntentPredictor for FrequencyModel {
    fn predict_intents(&self, _text: &str, k: usize) -> Result<IntentPrediction, PredictError> {
        predict_frequency(self, k)
    }

    fn class_count(&self) -> usize {
        self.ranked_intents.len()
    }
}
