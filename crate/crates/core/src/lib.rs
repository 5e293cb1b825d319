//! Smart-reply engine for short, noisy chat messages.
//!
//! The pipeline embeds messages with paragraph vectors ([`embedding`]),
//! classifies intent by cosine similarity to per-intent centroids
//! ([`intent`]), and turns the top predicted intents into an ordered,
//! de-duplicated reply list ([`replies`]). [`corpus`] provides synthetic
//! training data and the corpus file format, [`eval`] the evaluation suite.

pub mod container;
pub mod corpus;
pub mod embedding;
pub mod eval;
pub mod intent;
pub mod pipeline;
pub mod replies;
pub mod textprep;

pub use corpus::{CorpusSpec, LabeledMessage, Message, Sender};
pub use embedding::{EmbeddingModel, TrainingConfig};
pub use intent::{IntentCentroidModel, IntentPrediction, IntentPredictor};
pub use replies::{GuardConfig, ReplyCatalog, Suggestion};
