//! Reply catalog mining and the serving-time retrieval policy.
//!
//! The catalog maps each incoming intent to an ordered reply list. At
//! serving time the reply lists of the top predicted intents are
//! concatenated in rank order, de-duplicated keeping first occurrences,
//! and capped. Degenerate inputs are routed to the fallback list.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Message;
use crate::intent::{IntentPrediction, IntentPredictor};
use crate::textprep::tokenize;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed catalog: {0}")]
    Parse(String),
    #[error("invalid catalog: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplyCatalog {
    pub version: String,
    pub fallback: Vec<String>,
    pub intents: BTreeMap<String, Vec<String>>,
}

impl ReplyCatalog {
    pub fn new(
        version: impl Into<String>,
        fallback: Vec<String>,
        intents: BTreeMap<String, Vec<String>>,
    ) -> Result<Self, CatalogError> {
        let catalog = Self { version: version.into(), fallback, intents };
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn validate(&self) -> Result<(), CatalogError> {
        let check = |name: &str, list: &[String]| {
            if list.is_empty() {
                return Err(CatalogError::Invalid(format!("{name} has no replies")));
            }
            let mut seen = HashSet::new();
            for reply in list {
                if reply.trim().is_empty() {
                    return Err(CatalogError::Invalid(format!("{name} has a blank reply")));
                }
                if !seen.insert(reply) {
                    return Err(CatalogError::Invalid(format!("{name} lists {reply:?} twice")));
                }
            }
            Ok(())
        };
        check("fallback", &self.fallback)?;
        for (intent, replies) in &self.intents {
            check(&format!("intent {intent:?}"), replies)?;
        }
        Ok(())
    }

    pub fn replies_for(&self, intent: &str) -> Option<&[String]> {
        self.intents.get(intent).map(Vec::as_slice)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("catalog serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, CatalogError> {
        let catalog: Self = serde_json::from_str(text).map_err(|e| CatalogError::Parse(e.to_string()))?;
        catalog.validate()?;
        Ok(catalog)
    }
}

pub fn save_catalog(catalog: &ReplyCatalog, path: &Path) -> Result<(), CatalogError> {
    fs::write(path, catalog.to_json())
        .map_err(|source| CatalogError::Io { path: path.display().to_string(), source })
}

/// Loads and validates a (possibly hand-edited) catalog file.
pub fn load_catalog(path: &Path) -> Result<ReplyCatalog, CatalogError> {
    let text = fs::read_to_string(path)
        .map_err(|source| CatalogError::Io { path: path.display().to_string(), source })?;
    ReplyCatalog::from_json(&text)
}

/// Counts of (incoming intent, response intent) over adjacent turns.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairStats {
    pub counts: BTreeMap<(String, String), u64>,
}

impl PairStats {
    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn get(&self, incoming: &str, response: &str) -> u64 {
        self.counts.get(&(incoming.to_string(), response.to_string())).copied().unwrap_or(0)
    }

    /// Response intents for `incoming`, descending count then ascending id.
    pub fn ranked_responses(&self, incoming: &str) -> Vec<(&str, u64)> {
        let mut row: Vec<(&str, u64)> = self
            .counts
            .iter()
            .filter(|((i, _), _)| i == incoming)
            .map(|((_, r), &n)| (r.as_str(), n))
            .collect();
        row.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        row
    }

    pub fn incoming_intents(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.counts.keys().map(|(i, _)| i.as_str()).collect();
        v.dedup();
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuardConfig {
    pub min_tokens: usize,
    pub min_top_score: f64,
    pub max_replies: usize,
}

impl Default for GuardConfig {
    fn default() -> Self {
        Self { min_tokens: 2, min_top_score: 0.5, max_replies: 4 }
    }
}

impl GuardConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_replies < 1 {
            return Err("max_replies must be at least 1".into());
        }
        if self.min_top_score.is_nan() {
            return Err("min_top_score must be a number".into());
        }
        Ok(())
    }
}

fn classify(text: &str, predictor: &dyn IntentPredictor, guard: &GuardConfig) -> Option<String> {
    if tokenize(text).len() < guard.min_tokens {
        return None;
    }
    let prediction = predictor.predict_intents(text, 1).ok()?;
    let top = prediction.top()?;
    (top.score >= guard.min_top_score).then(|| top.intent_id.clone())
}

/// Classifies every message and counts intent pairs over adjacent turns with
/// alternating senders. Messages the guard rules reject are skipped.
pub fn mine_pair_stats(
    messages: &[Message],
    predictor: &dyn IntentPredictor,
    guard: &GuardConfig,
) -> PairStats {
    let mut conversations: BTreeMap<&str, Vec<&Message>> = BTreeMap::new();
    for m in messages {
        conversations.entry(m.conversation_id.as_str()).or_default().push(m);
    }
    let mut stats = PairStats::default();
    for turns in conversations.values_mut() {
        turns.sort_by_key(|m| m.turn_index);
        let intents: Vec<Option<String>> = turns.iter().map(|m| classify(&m.text, predictor, guard)).collect();
        for i in 1..turns.len() {
            if turns[i - 1].sender == turns[i].sender {
                continue;
            }
            if let (Some(a), Some(b)) = (&intents[i - 1], &intents[i]) {
                *stats.counts.entry((a.clone(), b.clone())).or_insert(0) += 1;
            }
        }
    }
    stats
}

/// Builds a catalog from mined pairs: for each incoming intent, the `top_n`
/// most frequent response intents, each expanded to its canonical replies.
///
/// Incoming intents with no usable response are left out, so retrieval
/// falls through to the fallback list for them.
pub fn build_catalog(
    stats: &PairStats,
    labeled_replies: &BTreeMap<String, Vec<String>>,
    top_n: usize,
    fallback: Vec<String>,
    version: &str,
) -> Result<ReplyCatalog, CatalogError> {
    if top_n < 1 {
        return Err(CatalogError::Invalid("top_n must be at least 1".into()));
    }
    let mut intents = BTreeMap::new();
    for incoming in stats.incoming_intents() {
        let mut replies: Vec<String> = Vec::new();
        let responses = stats
            .ranked_responses(incoming)
            .into_iter()
            .filter(|(r, _)| labeled_replies.get(*r).is_some_and(|v| !v.is_empty()))
            .take(top_n);
        for (response, _) in responses {
            for reply in &labeled_replies[response] {
                if !replies.contains(reply) {
                    replies.push(reply.clone());
                }
            }
        }
        if !replies.is_empty() {
            intents.insert(incoming.to_string(), replies);
        }
    }
    ReplyCatalog::new(version, fallback, intents)
}

/// Concatenates the reply lists of the first `intents_k` predicted intents,
/// keeps the first occurrence of each reply and truncates to `max_replies`.
/// With nothing to offer, returns the fallback list instead.
pub fn retrieve(
    catalog: &ReplyCatalog,
    prediction: &IntentPrediction,
    intents_k: usize,
    max_replies: usize,
) -> Vec<String> {
    let mut seen: HashSet<&str> = HashSet::new();
    let mut out: Vec<String> = Vec::with_capacity(max_replies);
    let lists = prediction.ids().take(intents_k).filter_map(|id| catalog.replies_for(id));
    'lists: for list in lists {
        for reply in list {
            if out.len() == max_replies {
                break 'lists;
            }
            if seen.insert(reply) {
                out.push(reply.clone());
            }
        }
    }
    if out.is_empty() {
        out = catalog.fallback.iter().take(max_replies).cloned().collect();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplySource {
    Model,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub replies: Vec<String>,
    pub source: ReplySource,
    pub prediction: Option<IntentPrediction>,
}

/// Guarded end-to-end suggestion for one incoming message. Never fails:
/// too-short, out-of-vocabulary and low-confidence inputs get the fallback
/// list.
pub fn suggest(
    text: &str,
    predictor: &dyn IntentPredictor,
    catalog: &ReplyCatalog,
    guard: &GuardConfig,
    intents_k: usize,
) -> Suggestion {
    let max_replies = guard.max_replies.max(1);
    let fallback = |prediction| Suggestion {
        replies: catalog.fallback.iter().take(max_replies).cloned().collect(),
        source: ReplySource::Fallback,
        prediction,
    };
    if tokenize(text).len() < guard.min_tokens {
        return fallback(None);
    }
    let k = intents_k.max(1).min(predictor.class_count().max(1));
    let prediction = match predictor.predict_intents(text, k) {
        Ok(p) if !p.ranked.is_empty() => p,
        _ => return fallback(None),
    };
    if prediction.ranked[0].score < guard.min_top_score {
        return fallback(Some(prediction));
    }
    let in_catalog = prediction.ids().take(intents_k).any(|id| catalog.replies_for(id).is_some());
    if !in_catalog {
        return fallback(Some(prediction));
    }
    Suggestion {
        replies: retrieve(catalog, &prediction, intents_k, max_replies),
        source: ReplySource::Model,
        prediction: Some(prediction),
    }
}
