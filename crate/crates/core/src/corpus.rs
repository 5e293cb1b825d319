//! Synthetic chat corpora and the line-delimited corpus file format.
//!
//! Generated conversations alternate rider and driver turns. Each turn's
//! intent follows from the previous turn's intent through a weighted
//! response table, and its text is a noised template of that intent, so
//! every record carries its ground-truth label.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textprep::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sender {
    Rider,
    Driver,
}

impl Sender {
    pub fn other(self) -> Self {
        match self {
            Sender::Rider => Sender::Driver,
            Sender::Driver => Sender::Rider,
        }
    }
}

impl fmt::Display for Sender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sender::Rider => "rider",
            Sender::Driver => "driver",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub conversation_id: String,
    #[serde(rename = "turn")]
    pub turn_index: u32,
    pub sender: Sender,
    pub text: String,
}

impl Message {
    /// Stable identifier used for hashing splits and naming documents.
    pub fn id(&self) -> String {
        format!("{}#{}", self.conversation_id, self.turn_index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledMessage {
    pub message: Message,
    pub intent_id: String,
}

/// One line of a corpus file. Labeled and unlabeled records may coexist.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    #[serde(flatten)]
    pub message: Message,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub records: Vec<CorpusRecord>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn messages(&self) -> Vec<Message> {
        self.records.iter().map(|r| r.message.clone()).collect()
    }

    pub fn labeled(&self) -> Vec<LabeledMessage> {
        self.records
            .iter()
            .filter_map(|r| {
                r.intent.as_ref().map(|intent| LabeledMessage {
                    message: r.message.clone(),
                    intent_id: intent.clone(),
                })
            })
            .collect()
    }

    /// Checks every label against `taxonomy`.
    pub fn validate_labels<'a>(
        &self,
        taxonomy: impl IntoIterator<Item = &'a str>,
    ) -> Result<(), CorpusError> {
        let known: Vec<&str> = taxonomy.into_iter().collect();
        for (i, record) in self.records.iter().enumerate() {
            if let Some(intent) = &record.intent {
                if !known.contains(&intent.as_str()) {
                    return Err(CorpusError::Invalid {
                        line: i + 1,
                        reason: format!("intent {intent:?} is not in the taxonomy"),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid corpus spec: {0}")]
    Spec(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: {reason}")]
    Invalid { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Per-message probability of one character-level typo.
    pub typo_rate: f64,
    /// Per-phrase probability of replacing a dictionary phrase by its abbreviation.
    pub abbreviation_rate: f64,
    /// Per-message probability of flipping the case of one letter.
    pub case_flip_rate: f64,
    #[serde(default = "default_abbreviations")]
    pub abbreviations: BTreeMap<String, String>,
}

impl NoiseConfig {
    pub fn none() -> Self {
        Self { typo_rate: 0.0, abbreviation_rate: 0.0, case_flip_rate: 0.0, ..Self::default() }
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            typo_rate: 0.15,
            abbreviation_rate: 0.2,
            case_flip_rate: 0.1,
            abbreviations: default_abbreviations(),
        }
    }
}

fn default_abbreviations() -> BTreeMap<String, String> {
    [
        ("you", "u"),
        ("are", "r"),
        ("your", "ur"),
        ("please", "pls"),
        ("okay", "ok"),
        ("minutes", "mins"),
        ("on my way", "omw"),
        ("right now", "rn"),
        ("be right there", "brt"),
        ("thanks", "thx"),
        ("see you", "cu"),
        ("i am", "im"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnRange {
    pub min: u32,
    pub max: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedIntent {
    pub intent: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub intent_templates: BTreeMap<String, Vec<String>>,
    /// Canonical reply strings, keyed by the intent each reply expresses.
    pub reply_templates: BTreeMap<String, Vec<String>>,
    pub noise: NoiseConfig,
    pub conversations: usize,
    pub turns_per_conversation: TurnRange,
    pub seed: u64,
    /// Distribution of the rider's opening intent. Empty means uniform.
    #[serde(default)]
    pub opening_weights: BTreeMap<String, f64>,
    /// Weighted intents that answer each intent. Missing entries answer uniformly.
    #[serde(default)]
    pub responses: BTreeMap<String, Vec<WeightedIntent>>,
    /// Fillers for `<name>` placeholders in templates.
    #[serde(default)]
    pub lexicon: BTreeMap<String, Vec<String>>,
}

impl CorpusSpec {
    pub fn intents(&self) -> impl Iterator<Item = &str> {
        self.intent_templates.keys().map(String::as_str)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let err = |m: String| Err(CorpusError::Spec(m));
        if self.intent_templates.is_empty() {
            return err("no intents".into());
        }
        for (intent, templates) in &self.intent_templates {
            if templates.is_empty() {
                return err(format!("intent {intent:?} has no templates"));
            }
            for t in templates {
                if t.trim().is_empty() {
                    return err(format!("intent {intent:?} has a blank template"));
                }
                for name in placeholders(t) {
                    if self.lexicon.get(name).is_none_or(|v| v.is_empty()) {
                        return err(format!("placeholder <{name}> in {t:?} has no lexicon entries"));
                    }
                }
            }
        }
        let n = &self.noise;
        for (name, rate) in [
            ("typo_rate", n.typo_rate),
            ("abbreviation_rate", n.abbreviation_rate),
            ("case_flip_rate", n.case_flip_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return err(format!("{name} {rate} is outside [0, 1]"));
            }
        }
        let turns = self.turns_per_conversation;
        if turns.min == 0 || turns.min > turns.max {
            return err(format!("turns_per_conversation {}..={} is empty", turns.min, turns.max));
        }
        for (intent, w) in &self.opening_weights {
            self.check_intent(intent)?;
            if !(w.is_finite() && *w >= 0.0) {
                return err(format!("opening weight for {intent:?} is invalid"));
            }
        }
        if !self.opening_weights.is_empty() && self.opening_weights.values().sum::<f64>() <= 0.0 {
            return err("opening weights sum to zero".into());
        }
        for (intent, answers) in &self.responses {
            self.check_intent(intent)?;
            if answers.is_empty() || answers.iter().map(|a| a.weight).sum::<f64>() <= 0.0 {
                return err(format!("responses for {intent:?} carry no weight"));
            }
            for a in answers {
                self.check_intent(&a.intent)?;
                if !(a.weight.is_finite() && a.weight >= 0.0) {
                    return err(format!("response weight {} is invalid", a.weight));
                }
            }
        }
        Ok(())
    }

    fn check_intent(&self, intent: &str) -> Result<(), CorpusError> {
        if self.intent_templates.contains_key(intent) {
            Ok(())
        } else {
            Err(CorpusError::Spec(format!("unknown intent {intent:?}")))
        }
    }
}

fn placeholders(template: &str) -> impl Iterator<Item = &str> {
    template.split('<').skip(1).filter_map(|s| s.split_once('>').map(|(name, _)| name))
}

fn strs(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl Default for CorpusSpec {
    /// Ten pick-up intents with paraphrase templates, canonical replies and a
    /// rider/driver response table.
    fn default() -> Self {
        let intent_templates: BTreeMap<String, Vec<String>> = [
            ("where_are_you", strs(&[
                "where are you", "where are you right now", "where are you at now",
                "are you close by", "how far away are you", "are you almost here yet",
                "how long until you get here", "where are you exactly",
            ])),
            ("i_am_here", strs(&[
                "i am here", "i am here now", "i am outside now", "i am at the pickup spot",
                "i am standing outside waiting", "already here waiting for you",
                "i am here at the door",
            ])),
            ("going_to_loc", strs(&[
                "i am going to <loc>", "i am heading to <loc>", "take me to <loc> please",
                "my destination is <loc>", "we are going to <loc>", "i need to go to <loc>",
            ])),
            ("picking_up_person", strs(&[
                "you are picking up <person>", "you will pick up <person>",
                "this ride is for <person>", "the ride is for <person> not me",
                "please pick up <person> for me", "<person> will be your rider",
            ])),
            ("come_to_loc", strs(&[
                "come to <loc>", "please come to <loc>", "can you come to <loc>",
                "pull up to <loc> please", "drive up to <loc> please", "come around to <loc>",
            ])),
            ("wrong_side", strs(&[
                "you are on the wrong side", "wrong side of the street", "you are on the other side",
                "i am on the opposite side", "please turn around wrong side",
                "other side of the road",
            ])),
            ("car_color", strs(&[
                "what color is your car", "what car are you driving", "what is your car color",
                "which car is yours", "what kind of car is it", "what is your license plate",
            ])),
            ("call_me", strs(&[
                "call me please", "can you call me", "please give me a call",
                "call me when you arrive", "just call my phone please", "give me a ring please",
            ])),
            ("meet_at_loc", strs(&[
                "can we meet at <loc>", "let us meet at <loc>", "meet me at <loc>",
                "could we meet at <loc> instead", "is it ok to meet at <loc>",
                "meet at <loc> please",
            ])),
            ("on_my_way", strs(&[
                "on my way", "i am on my way", "coming now", "be there in two minutes",
                "almost there now", "on the way now", "heading to you now",
            ])),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();

        let reply_templates: BTreeMap<String, Vec<String>> = [
            ("on_my_way", strs(&["Yes, I am omw", "Sorry, in traffic"])),
            ("i_am_here", strs(&["I am at pick-up address"])),
            ("call_me", strs(&["Call me please"])),
            ("where_are_you", strs(&["Where are you?"])),
            ("come_to_loc", strs(&["Please come to the pick-up spot"])),
            ("meet_at_loc", strs(&["Can we meet at the corner?"])),
            ("wrong_side", strs(&["I think you are on the other side"])),
            ("car_color", strs(&["What color is your car?"])),
            ("going_to_loc", strs(&["Where are you headed?"])),
            ("picking_up_person", strs(&["I am picking up someone else"])),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();

        let w = |pairs: &[(&str, f64)]| -> Vec<WeightedIntent> {
            pairs
                .iter()
                .map(|&(intent, weight)| WeightedIntent { intent: intent.into(), weight })
                .collect()
        };
        let responses: BTreeMap<String, Vec<WeightedIntent>> = [
            ("where_are_you", w(&[("on_my_way", 0.6), ("i_am_here", 0.25), ("call_me", 0.15)])),
            ("i_am_here", w(&[("on_my_way", 0.35), ("car_color", 0.35), ("wrong_side", 0.3)])),
            ("going_to_loc", w(&[("on_my_way", 0.3), ("meet_at_loc", 0.4), ("come_to_loc", 0.3)])),
            ("picking_up_person", w(&[("where_are_you", 0.5), ("i_am_here", 0.5)])),
            ("come_to_loc", w(&[("on_my_way", 0.4), ("meet_at_loc", 0.3), ("call_me", 0.3)])),
            ("wrong_side", w(&[("come_to_loc", 0.5), ("call_me", 0.2), ("going_to_loc", 0.3)])),
            ("car_color", w(&[("i_am_here", 0.4), ("picking_up_person", 0.3), ("wrong_side", 0.3)])),
            ("call_me", w(&[("on_my_way", 0.4), ("where_are_you", 0.3), ("car_color", 0.3)])),
            ("meet_at_loc", w(&[("on_my_way", 0.3), ("come_to_loc", 0.4), ("going_to_loc", 0.3)])),
            ("on_my_way", w(&[("where_are_you", 0.3), ("picking_up_person", 0.4), ("going_to_loc", 0.3)])),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();

        let lexicon: BTreeMap<String, Vec<String>> = [
            ("loc", strs(&[
                "the main entrance", "terminal two", "the corner", "starbucks", "gate b",
                "the lobby", "the parking lot", "the airport", "union station", "the back door",
            ])),
            ("person", strs(&[
                "my daughter", "my son", "my mom", "sarah", "my friend", "john",
                "my grandfather", "two kids",
            ])),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();

        Self {
            intent_templates,
            reply_templates,
            noise: NoiseConfig::default(),
            conversations: 700,
            turns_per_conversation: TurnRange { min: 2, max: 5 },
            seed: 7,
            opening_weights: BTreeMap::new(),
            responses,
            lexicon,
        }
    }
}

fn pick_weighted<'a, R: Rng>(rng: &mut R, items: &'a [WeightedIntent]) -> &'a str {
    let total: f64 = items.iter().map(|i| i.weight).sum();
    let mut x = rng.random::<f64>() * total;
    for item in items {
        if x < item.weight {
            return &item.intent;
        }
        x -= item.weight;
    }
    // Rounding can leave x just above the last bucket.
    &items.iter().rev().find(|i| i.weight > 0.0).unwrap_or(&items[items.len() - 1]).intent
}

fn fill_template<R: Rng>(rng: &mut R, template: &str, lexicon: &BTreeMap<String, Vec<String>>) -> String {
    let mut out = String::with_capacity(template.len() + 16);
    let mut rest = template;
    while let Some(start) = rest.find('<') {
        out.push_str(&rest[..start]);
        match rest[start..].find('>') {
            Some(end) => {
                let name = &rest[start + 1..start + end];
                match lexicon.get(name).and_then(|fills| fills.choose(rng)) {
                    Some(fill) => out.push_str(fill),
                    None => out.push_str(&rest[start..=start + end]),
                }
                rest = &rest[start + end + 1..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

/// Generates a corpus from `spec`; all records are labeled.
///
/// Structure (intents, templates, fills) and noise draw from separate RNG
/// streams, so a noisy corpus lines up record by record with the noise-free
/// corpus generated from the same seed.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Corpus, CorpusError> {
    spec.validate()?;
    let mut structure = ChaCha8Rng::seed_from_u64(spec.seed);
    structure.set_stream(0);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    noise_rng.set_stream(1);

    let intents: Vec<&str> = spec.intents().collect();
    let opening: Vec<WeightedIntent> = if spec.opening_weights.is_empty() {
        intents.iter().map(|i| WeightedIntent { intent: i.to_string(), weight: 1.0 }).collect()
    } else {
        spec.opening_weights
            .iter()
            .map(|(i, &w)| WeightedIntent { intent: i.clone(), weight: w })
            .collect()
    };
    let uniform: Vec<WeightedIntent> =
        intents.iter().map(|i| WeightedIntent { intent: i.to_string(), weight: 1.0 }).collect();

    let width = spec.conversations.max(1).to_string().len();
    let mut records = Vec::new();
    for c in 0..spec.conversations {
        let conversation_id = format!("conv-{c:0width$}");
        let turns = structure
            .random_range(spec.turns_per_conversation.min..=spec.turns_per_conversation.max);
        let mut intent = pick_weighted(&mut structure, &opening).to_string();
        let mut sender = Sender::Rider;
        for turn in 0..turns {
            if turn > 0 {
                let answers = spec.responses.get(&intent).unwrap_or(&uniform);
                intent = pick_weighted(&mut structure, answers).to_string();
                sender = sender.other();
            }
            let template = spec.intent_templates[&intent]
                .choose(&mut structure)
                .expect("validated non-empty");
            let clean = fill_template(&mut structure, template, &spec.lexicon);
            let text = apply_noise(&clean, &spec.noise, &mut noise_rng);
            records.push(CorpusRecord {
                message: Message { conversation_id: conversation_id.clone(), turn_index: turn, sender, text },
                intent: Some(intent.clone()),
            });
        }
    }
    Ok(Corpus { records })
}

/// Applies typo, abbreviation and case noise to `text`.
///
/// A typo always changes the text; the result is never empty for non-empty
/// input.
pub fn apply_noise<R: Rng>(text: &str, noise: &NoiseConfig, rng: &mut R) -> String {
    let mut words: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    if words.is_empty() {
        return text.to_string();
    }

    if noise.abbreviation_rate > 0.0 && !noise.abbreviations.is_empty() {
        words = abbreviate(&words, noise, rng);
    }

    if noise.typo_rate > 0.0 && rng.random_bool(noise.typo_rate) {
        let w = rng.random_range(0..words.len());
        words[w] = typo(&words[w], rng);
    }

    if noise.case_flip_rate > 0.0 && rng.random_bool(noise.case_flip_rate) {
        let letters: Vec<(usize, usize)> = words
            .iter()
            .enumerate()
            .flat_map(|(wi, w)| {
                w.chars().enumerate().filter(|(_, c)| c.is_alphabetic()).map(move |(ci, _)| (wi, ci))
            })
            .collect();
        if let Some(&(wi, ci)) = letters.choose(rng) {
            words[wi] = words[wi]
                .chars()
                .enumerate()
                .map(|(i, c)| {
                    if i != ci {
                        c.to_string()
                    } else if c.is_lowercase() {
                        c.to_uppercase().collect()
                    } else {
                        c.to_lowercase().collect()
                    }
                })
                .collect();
        }
    }
    words.join(" ")
}

fn abbreviate<R: Rng>(words: &[String], noise: &NoiseConfig, rng: &mut R) -> Vec<String> {
    // Longest phrase first so "on my way" wins over any single-word entry.
    let mut phrases: Vec<(Vec<&str>, &str)> = noise
        .abbreviations
        .iter()
        .map(|(k, v)| (k.split_whitespace().collect::<Vec<_>>(), v.as_str()))
        .filter(|(k, _)| !k.is_empty())
        .collect();
    phrases.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));

    let mut out = Vec::with_capacity(words.len());
    let mut i = 0;
    'outer: while i < words.len() {
        for (phrase, short) in &phrases {
            let end = i + phrase.len();
            if end <= words.len()
                && words[i..end].iter().zip(phrase).all(|(w, p)| w.eq_ignore_ascii_case(p))
                && rng.random_bool(noise.abbreviation_rate)
            {
                out.push(short.to_string());
                i = end;
                continue 'outer;
            }
        }
        out.push(words[i].clone());
        i += 1;
    }
    out
}

fn typo<R: Rng>(word: &str, rng: &mut R) -> String {
    let mut chars: Vec<char> = word.chars().collect();
    let swappable: Vec<usize> = (0..chars.len().saturating_sub(1))
        .filter(|&i| chars[i] != chars[i + 1])
        .collect();
    if chars.len() >= 2 && !swappable.is_empty() && rng.random_bool(0.5) {
        let i = *swappable.choose(rng).expect("non-empty");
        chars.swap(i, i + 1);
    } else if chars.len() >= 2 {
        chars.remove(rng.random_range(0..chars.len()));
    } else {
        // Single character: doubling it is the only edit that keeps it non-empty.
        let c = chars[0];
        chars.push(c);
    }
    chars.into_iter().collect()
}

pub fn write_corpus(path: &Path, corpus: &Corpus) -> Result<(), CorpusError> {
    let io = |source| CorpusError::Io { path: path.display().to_string(), source };
    let mut out = BufWriter::new(fs::File::create(path).map_err(io)?);
    write_records(&mut out, &corpus.records).map_err(io)?;
    out.flush().map_err(io)
}

pub fn write_records<W: Write>(out: &mut W, records: &[CorpusRecord]) -> std::io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut *out, record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let file = fs::File::open(path)
        .map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
    read_corpus(BufReader::new(file))
}

pub fn read_corpus<R: BufRead>(reader: R) -> Result<Corpus, CorpusError> {
    let mut records = Vec::new();
    let mut last_turn: HashMap<String, u32> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| CorpusError::Parse { line: line_no, reason: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord = serde_json::from_str(&line)
            .map_err(|e| CorpusError::Parse { line: line_no, reason: e.to_string() })?;
        let invalid = |reason: String| CorpusError::Invalid { line: line_no, reason };
        if record.message.text.trim().is_empty() {
            return Err(invalid(format!("record {} has blank text", record.message.id())));
        }
        if record.intent.as_deref().is_some_and(|s| s.trim().is_empty()) {
            return Err(invalid(format!("record {} has a blank intent", record.message.id())));
        }
        let turn = record.message.turn_index;
        if let Some(prev) = last_turn.insert(record.message.conversation_id.clone(), turn) {
            if turn <= prev {
                return Err(invalid(format!(
                    "record {}: turn {turn} does not follow turn {prev}",
                    record.message.id()
                )));
            }
        }
        records.push(record);
    }
    Ok(Corpus { records })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthHistogram {
    pub counts: BTreeMap<usize, usize>,
    pub mean: f64,
}

/// Token-count histogram over `texts` using the shared tokenizer.
pub fn corpus_length_histogram<'a, I>(texts: I) -> LengthHistogram
where
    I: IntoIterator<Item = &'a str>,
{
    let mut counts = BTreeMap::new();
    let (mut n, mut sum) = (0usize, 0usize);
    for text in texts {
        let len = tokenize(text).len();
        *counts.entry(len).or_insert(0) += 1;
        n += 1;
        sum += len;
    }
    let mean = if n == 0 { 0.0 } else { sum as f64 / n as f64 };
    LengthHistogram { counts, mean }
}
