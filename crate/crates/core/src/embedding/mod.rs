//! Paragraph-vector message embeddings.
//!
//! A model holds word vectors, output ("softmax") weights and one paragraph
//! vector per training document. Training optimizes all three; inference
//! fits a fresh paragraph vector for an unseen message while the word and
//! output weights stay frozen.

mod infer;
mod kernels;
mod train;

use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::container::{self, ContainerError};
use crate::corpus::Message;
use crate::textprep::{tokenize, TextError, TokenizedMessage, Vocabulary};

pub use infer::infer_doc_vector;
pub use train::{loss_and_gradients, train, train_with_stats, Gradients, TrainingStats};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MODEL_KIND: &str = "smartreply-embedding";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Distributed bag of words: the paragraph vector predicts each word.
    Dbow,
    /// Distributed memory: paragraph and context vectors predict the target word.
    Dm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Objective {
    NegativeSampling { k_neg: usize },
    ExactSoftmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub mode: Mode,
    pub dim: usize,
    pub window_k: usize,
    pub alpha: f64,
    pub alpha_min: f64,
    pub sample: f64,
    pub epochs: usize,
    pub objective: Objective,
    pub min_count: u64,
    pub seed: u64,
    pub infer_steps: usize,
    /// DBOW only: interleave skip-gram updates so word vectors are trained too.
    pub train_words: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Dbow,
            dim: 100,
            window_k: 5,
            alpha: 0.02,
            alpha_min: 0.0001,
            // Any sample above the most frequent word's frequency disables down-sampling.
            sample: 1.0,
            epochs: 20,
            objective: Objective::NegativeSampling { k_neg: 5 },
            min_count: 2,
            seed: 1,
            infer_steps: 40,
            train_words: true,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        let bad = |m: &str| Err(EmbeddingError::Config(m.to_string()));
        if self.dim < 2 {
            return bad("dim must be at least 2");
        }
        if self.window_k < 1 {
            return bad("window_k must be at least 1");
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad("alpha must be positive");
        }
        if !(self.alpha_min.is_finite() && self.alpha_min >= 0.0 && self.alpha_min <= self.alpha) {
            return bad("alpha_min must lie in [0, alpha]");
        }
        if !(self.sample.is_finite() && self.sample > 0.0) {
            return bad("sample must be positive");
        }
        if self.epochs < 1 {
            return bad("epochs must be at least 1");
        }
        if self.infer_steps < 1 {
            return bad("infer_steps must be at least 1");
        }
        if self.min_count < 1 {
            return bad("min_count must be at least 1");
        }
        if let Objective::NegativeSampling { k_neg } = self.objective {
            if k_neg < 1 {
                return bad("k_neg must be at least 1");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Vocabulary(#[from] TextError),
    #[error("training diverged: non-finite loss at epoch {epoch}, document {doc}, position {position}")]
    Diverged { epoch: usize, doc: usize, position: usize },
    #[error("no token of the message is in the vocabulary")]
    OutOfVocabulary,
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error(transparent)]
    File(#[from] ContainerError),
    #[error("model file is inconsistent: {0}")]
    Inconsistent(String),
}

/// Row-major `f32` matrix.
#[derive(Debug, Clone)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data does not match its shape");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Little-endian bytes of every entry, for byte-level comparisons.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl PartialEq for Matrix {
    /// Bitwise comparison: `-0.0 != 0.0` here.
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.data.iter().zip(&other.data).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// One training document: an opaque id and its tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub tokens: TokenizedMessage,
}

impl Document {
    pub fn from_message(message: &Message) -> Self {
        Self { id: message.id(), tokens: tokenize(&message.text) }
    }
}

/// Training documents for `messages`, in order.
pub fn documents<'a, I>(messages: I) -> Vec<Document>
where
    I: IntoIterator<Item = &'a Message>,
{
    messages.into_iter().map(Document::from_message).collect()
}

#[derive(Debug)]
pub struct EmbeddingModel {
    config: TrainingConfig,
    vocabulary: Vocabulary,
    word_vectors: Matrix,
    output_weights: Matrix,
    doc_vectors: Matrix,
    doc_ids: Vec<String>,
    checksum: OnceLock<String>,
}

impl Clone for EmbeddingModel {
    fn clone(&self) -> Self {
        Self {
            config: self.config.clone(),
            vocabulary: self.vocabulary.clone(),
            word_vectors: self.word_vectors.clone(),
            output_weights: self.output_weights.clone(),
            doc_vectors: self.doc_vectors.clone(),
            doc_ids: self.doc_ids.clone(),
            checksum: self.checksum.clone(),
        }
    }
}

impl PartialEq for EmbeddingModel {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.vocabulary == other.vocabulary
            && self.word_vectors == other.word_vectors
            && self.output_weights == other.output_weights
            && self.doc_vectors == other.doc_vectors
            && self.doc_ids == other.doc_ids
    }
}

#[derive(Serialize, Deserialize)]
struct HeaderEcho {
    mode: Mode,
    dim: usize,
    vocab_size: usize,
    n_docs: usize,
    config: TrainingConfig,
}

#[derive(Serialize, Deserialize)]
struct Payload {
    config: TrainingConfig,
    min_count: u64,
    vocabulary: Vec<(String, u64)>,
    doc_ids: Vec<String>,
    word_vectors: String,
    output_weights: String,
    doc_vectors: String,
}

impl EmbeddingModel {
    /// Assembles a model from its parts, checking shapes and finiteness.
    pub fn from_parts(
        config: TrainingConfig,
        vocabulary: Vocabulary,
        word_vectors: Matrix,
        output_weights: Matrix,
        doc_vectors: Matrix,
        doc_ids: Vec<String>,
    ) -> Result<Self, EmbeddingError> {
        config.validate()?;
        let v = vocabulary.len();
        let dim = config.dim;
        let shape_ok = |m: &Matrix, rows: usize| m.rows() == rows && m.cols() == dim;
        if !shape_ok(&word_vectors, v) || !shape_ok(&output_weights, v) {
            return Err(EmbeddingError::Inconsistent(format!(
                "word/output matrices must be {v}x{dim}"
            )));
        }
        if !shape_ok(&doc_vectors, doc_ids.len()) {
            return Err(EmbeddingError::Inconsistent(format!(
                "doc matrix must be {}x{dim}",
                doc_ids.len()
            )));
        }
        if !(word_vectors.all_finite() && output_weights.all_finite() && doc_vectors.all_finite()) {
            return Err(EmbeddingError::Inconsistent("matrices contain non-finite entries".into()));
        }
        Ok(Self {
            config,
            vocabulary,
            word_vectors,
            output_weights,
            doc_vectors,
            doc_ids,
            checksum: OnceLock::new(),
        })
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.config
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn word_vectors(&self) -> &Matrix {
        &self.word_vectors
    }

    pub fn output_weights(&self) -> &Matrix {
        &self.output_weights
    }

    pub fn doc_vectors(&self) -> &Matrix {
        &self.doc_vectors
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    /// Word vector of `word`, if it is in the vocabulary.
    pub fn word_vector(&self, word: &str) -> Option<&[f32]> {
        self.vocabulary.index(word).map(|i| self.word_vectors.row(i))
    }

    pub fn word_vectors_mut(&mut self) -> &mut Matrix {
        self.checksum = OnceLock::new();
        &mut self.word_vectors
    }

    pub fn output_weights_mut(&mut self) -> &mut Matrix {
        self.checksum = OnceLock::new();
        &mut self.output_weights
    }

    pub fn doc_vectors_mut(&mut self) -> &mut Matrix {
        self.checksum = OnceLock::new();
        &mut self.doc_vectors
    }

    fn payload(&self) -> Payload {
        Payload {
            config: self.config.clone(),
            min_count: self.vocabulary.min_count(),
            vocabulary: self
                .vocabulary
                .words()
                .iter()
                .zip(self.vocabulary.counts())
                .map(|(w, &c)| (w.clone(), c))
                .collect(),
            doc_ids: self.doc_ids.clone(),
            word_vectors: container::encode_f32s(self.word_vectors.as_slice()),
            output_weights: container::encode_f32s(self.output_weights.as_slice()),
            doc_vectors: container::encode_f32s(self.doc_vectors.as_slice()),
        }
    }

    /// SHA-256 of the serialized payload; the same digest the model file
    /// header carries.
    pub fn checksum(&self) -> &str {
        self.checksum
            .get_or_init(|| container::sha256_hex(&container::payload_bytes(&self.payload())))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let echo = HeaderEcho {
            mode: self.config.mode,
            dim: self.config.dim,
            vocab_size: self.vocabulary.len(),
            n_docs: self.doc_ids.len(),
            config: self.config.clone(),
        };
        container::encode(MODEL_KIND, MODEL_FORMAT_VERSION, echo, &self.payload())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EmbeddingError> {
        let (header, payload): (container::Header<HeaderEcho>, Payload) =
            container::decode(bytes, MODEL_KIND, MODEL_FORMAT_VERSION)?;
        let vocabulary = Vocabulary::from_ordered(payload.vocabulary, payload.min_count)
            .map_err(|e| EmbeddingError::Inconsistent(e.to_string()))?;
        let dim = payload.config.dim;
        let v = vocabulary.len();
        let n = payload.doc_ids.len();
        if header.extra.vocab_size != v || header.extra.n_docs != n || header.extra.dim != dim {
            return Err(EmbeddingError::Inconsistent("header dimensions disagree with payload".into()));
        }
        let word_vectors = Matrix::from_vec(v, dim, container::decode_f32s(&payload.word_vectors, v * dim)?);
        let output_weights =
            Matrix::from_vec(v, dim, container::decode_f32s(&payload.output_weights, v * dim)?);
        let doc_vectors = Matrix::from_vec(n, dim, container::decode_f32s(&payload.doc_vectors, n * dim)?);
        let model = Self::from_parts(
            payload.config,
            vocabulary,
            word_vectors,
            output_weights,
            doc_vectors,
            payload.doc_ids,
        )?;
        let _ = model.checksum.set(header.checksum);
        Ok(model)
    }
}

pub fn save_model(model: &EmbeddingModel, path: &Path) -> Result<(), EmbeddingError> {
    Ok(container::write_file(path, &model.to_bytes())?)
}

pub fn load_model(path: &Path) -> Result<EmbeddingModel, EmbeddingError> {
    EmbeddingModel::from_bytes(&container::read_file(path)?)
}
