use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use smartreply_core::container::sha256_hex;
use smartreply_core::embedding::{load_model, MODEL_FORMAT_VERSION};
use smartreply_core::intent::{load_centroids, NearestCentroid, PredictError, CENTROID_FORMAT_VERSION};
use smartreply_core::replies::{load_catalog, suggest, ReplySource};
use smartreply_core::{EmbeddingModel, GuardConfig, IntentCentroidModel, IntentPredictor, ReplyCatalog};

use crate::config::ModelPaths;
use crate::ServiceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub text: String,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireIntent {
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictMeta {
    /// Gradient passes spent inferring the message vector; dominates latency.
    pub infer_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub intents: Vec<WireIntent>,
    pub oov: bool,
    pub meta: PredictMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestResponse {
    pub replies: Vec<String>,
    pub source: ReplySource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub model_versions: BTreeMap<String, String>,
}

/// Rejections that map to a 4xx response.
#[derive(Debug, Clone, PartialEq)]
pub enum RequestError {
    BadK { k: usize, classes: usize },
    Unscorable(String),
}

impl std::fmt::Display for RequestError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RequestError::BadK { k, classes } => write!(f, "k must be between 1 and {classes}, got {k}"),
            RequestError::Unscorable(reason) => write!(f, "{reason}"),
        }
    }
}

/// Loaded, immutable model state shared by all request handlers.
#[derive(Debug)]
pub struct Engine {
    embedding: EmbeddingModel,
    centroids: IntentCentroidModel,
    catalog: ReplyCatalog,
    guard: GuardConfig,
    intents_k: usize,
}

impl Engine {
    /// Fails if the centroid model was fitted on a different embedding.
    pub fn new(
        embedding: EmbeddingModel,
        centroids: IntentCentroidModel,
        catalog: ReplyCatalog,
        guard: GuardConfig,
        intents_k: usize,
    ) -> Result<Self, ServiceError> {
        centroids.check_embedding(&embedding).map_err(|e| ServiceError::Mismatch(e.to_string()))?;
        catalog.validate()?;
        guard.validate().map_err(ServiceError::Config)?;
        Ok(Self { embedding, centroids, catalog, guard, intents_k: intents_k.max(1) })
    }

    pub fn load(paths: &ModelPaths, guard: GuardConfig, intents_k: usize) -> Result<Self, ServiceError> {
        let embedding = load_model(&paths.embedding)
            .map_err(|e| ServiceError::Load(format!("{}: {e}", paths.embedding.display())))?;
        let centroids = load_centroids(&paths.centroids)
            .map_err(|e| ServiceError::Load(format!("{}: {e}", paths.centroids.display())))?;
        let catalog = load_catalog(&paths.catalog)?;
        Self::new(embedding, centroids, catalog, guard, intents_k)
    }

    fn predictor(&self) -> NearestCentroid<'_> {
        NearestCentroid::new(&self.centroids, &self.embedding).expect("checked at construction")
    }

    pub fn class_count(&self) -> usize {
        self.centroids.classes().len()
    }

    pub fn predict(&self, request: &PredictRequest) -> Result<PredictResponse, RequestError> {
        let classes = self.class_count();
        if request.k == 0 || request.k > classes {
            return Err(RequestError::BadK { k: request.k, classes });
        }
        let meta = PredictMeta { infer_steps: self.embedding.config().infer_steps };
        match self.predictor().predict_intents(&request.text, request.k) {
            Ok(p) => Ok(PredictResponse {
                intents: p.ranked.into_iter().map(|s| WireIntent { id: s.intent_id, score: s.score }).collect(),
                oov: false,
                meta,
            }),
            Err(PredictError::OutOfVocabulary) => Ok(PredictResponse { intents: vec![], oov: true, meta }),
            Err(e) => Err(RequestError::Unscorable(e.to_string())),
        }
    }

    pub fn suggest(&self, request: &SuggestRequest) -> SuggestResponse {
        let s = suggest(&request.text, &self.predictor(), &self.catalog, &self.guard, self.intents_k);
        SuggestResponse { replies: s.replies, source: s.source }
    }

    pub fn model_versions(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("embedding".to_string(), self.embedding.checksum().to_string()),
            ("embedding_format".to_string(), MODEL_FORMAT_VERSION.to_string()),
            ("centroids".to_string(), sha256_hex(&self.centroids.to_bytes())),
            ("centroids_format".to_string(), CENTROID_FORMAT_VERSION.to_string()),
            ("catalog".to_string(), self.catalog.version.clone()),
        ])
    }
}
