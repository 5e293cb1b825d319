//! Normalization, tokenization, vocabulary construction and frequent-word
//! subsampling. Training and inference share this path so the same text
//! always maps to the same token sequence.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Emoticons kept whole instead of being stripped as punctuation.
pub const EMOTICONS: &[&str] = &[
    ":)", ":(", ":-)", ":-(", ":d", ":p", ":-p", ";)", ";-)", ":/", ":o", "<3", ":'(", "xd",
];

#[derive(Debug, Error, PartialEq)]
pub enum TextError {
    #[error("min_count must be at least 1")]
    InvalidMinCount,
    #[error("vocabulary is empty after applying min_count {0}")]
    EmptyVocabulary(u64),
    #[error("keep_probability needs positive inputs (frequency {frequency}, sample {sample})")]
    NonPositive { frequency: f64, sample: f64 },
}

/// Lowercased, punctuation-trimmed tokens of one message.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenizedMessage {
    pub tokens: Vec<String>,
}

impl TokenizedMessage {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn joined(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Splits `text` into lowercase tokens.
///
/// Leading and trailing punctuation is stripped from each whitespace-separated
/// piece, except for the emoticons in [`EMOTICONS`]. Typos are left alone.
pub fn tokenize(text: &str) -> TokenizedMessage {
    let tokens = text
        .split_whitespace()
        .filter_map(|raw| {
            let lower = raw.to_lowercase();
            if EMOTICONS.contains(&lower.as_str()) {
                return Some(lower);
            }
            let trimmed = lower.trim_matches(|c: char| !c.is_alphanumeric());
            (!trimmed.is_empty()).then(|| trimmed.to_string())
        })
        .collect();
    TokenizedMessage { tokens }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub index: usize,
    pub count: u64,
}

/// Word inventory with dense indices ordered by descending count, then
/// lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    lookup: HashMap<String, usize>,
    total_count: u64,
    min_count: u64,
}

impl Vocabulary {
    /// Rebuilds a vocabulary from `(word, count)` pairs already in index order.
    pub fn from_ordered(
        entries: Vec<(String, u64)>,
        min_count: u64,
    ) -> Result<Self, VocabularyError> {
        if entries.is_empty() {
            return Err(VocabularyError::Empty);
        }
        let mut words = Vec::with_capacity(entries.len());
        let mut counts = Vec::with_capacity(entries.len());
        let mut lookup = HashMap::with_capacity(entries.len());
        for (index, (word, count)) in entries.into_iter().enumerate() {
            if word.is_empty() {
                return Err(VocabularyError::EmptyWord(index));
            }
            if count < min_count.max(1) {
                return Err(VocabularyError::CountBelowMinimum { word, count, min_count });
            }
            if lookup.insert(word.clone(), index).is_some() {
                return Err(VocabularyError::Duplicate(word));
            }
            words.push(word);
            counts.push(count);
        }
        let total_count = counts.iter().sum();
        Ok(Self { words, counts, lookup, total_count, min_count })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn index(&self, word: &str) -> Option<usize> {
        self.lookup.get(word).copied()
    }

    pub fn entry(&self, word: &str) -> Option<VocabEntry> {
        self.index(word).map(|index| VocabEntry { index, count: self.counts[index] })
    }

    pub fn word(&self, index: usize) -> Option<&str> {
        self.words.get(index).map(String::as_str)
    }

    pub fn count(&self, index: usize) -> u64 {
        self.counts[index]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn total_count(&self) -> u64 {
        self.total_count
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    /// Fraction of all retained-token occurrences taken by `index`.
    pub fn frequency(&self, index: usize) -> f64 {
        self.counts[index] as f64 / self.total_count as f64
    }

    /// In-vocabulary indices of `tokens`, in order; unknown tokens are dropped.
    pub fn indices(&self, tokens: &TokenizedMessage) -> Vec<usize> {
        tokens.tokens.iter().filter_map(|t| self.index(t)).collect()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum VocabularyError {
    #[error("vocabulary has no entries")]
    Empty,
    #[error("vocabulary entry {0} is an empty string")]
    EmptyWord(usize),
    #[error("word {0:?} appears twice")]
    Duplicate(String),
    #[error("word {word:?} has count {count} below min_count {min_count}")]
    CountBelowMinimum { word: String, count: u64, min_count: u64 },
}

pub fn build_vocabulary<'a, I>(corpus: I, min_count: u64) -> Result<Vocabulary, TextError>
where
    I: IntoIterator<Item = &'a TokenizedMessage>,
{
    if min_count < 1 {
        return Err(TextError::InvalidMinCount);
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for message in corpus {
        for token in &message.tokens {
            *counts.entry(token.as_str()).or_default() += 1;
        }
    }
    let mut retained: Vec<(String, u64)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count)
        .map(|(w, c)| (w.to_string(), c))
        .collect();
    retained.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Vocabulary::from_ordered(retained, min_count).map_err(|_| TextError::EmptyVocabulary(min_count))
}

/// Probability of keeping one occurrence of a word with corpus frequency
/// `frequency` under down-sampling threshold `sample`.
pub fn keep_probability(frequency: f64, sample: f64) -> Result<f64, TextError> {
    if !(frequency > 0.0 && sample > 0.0) {
        return Err(TextError::NonPositive { frequency, sample });
    }
    let p = ((frequency / sample).sqrt() + 1.0) * sample / frequency;
    Ok(p.min(1.0))
}
