//! Evaluation: top-K accuracy, per-class precision/recall, confusion,
//! predictor complementarity, hyperparameter sweeps and embedding export.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::container::sha256_hex;
use crate::corpus::LabeledMessage;
use crate::embedding::{self, infer_doc_vector, Document, EmbeddingError, EmbeddingModel, TrainingConfig};
use crate::intent::{fit_centroids, IntentError, IntentPredictor, NearestCentroid};
use crate::textprep::tokenize;

/// Confusion-matrix column for samples the predictor could not rank.
pub const NO_PREDICTION: &str = "<none>";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("max_k must be at least 1")]
    InvalidMaxK,
    #[error("prediction lists have lengths {a} and {b}, labels {labels}")]
    LengthMismatch { a: usize, b: usize, labels: usize },
    #[error("sweep needs at least 2 repeats, got {0}")]
    TooFewRepeats(usize),
    #[error("unknown sweep parameter {0:?}")]
    UnknownParameter(String),
    #[error("sweep point {parameter}={value}, seed {seed}: {source}")]
    SweepPoint {
        parameter: String,
        value: f64,
        seed: u64,
        #[source]
        source: Box<EvalError>,
    },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Intent(#[from] IntentError),
    #[error("no labeled messages to export")]
    NothingToExport,
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {reason}")]
    Parse { path: String, line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCell {
    pub true_intent: String,
    pub predicted: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Misclassification {
    pub id: String,
    pub text: String,
    pub label: String,
    pub predictions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub unpredicted: usize,
    pub top1_accuracy: f64,
    pub topk_accuracy: BTreeMap<usize, f64>,
    pub per_class: BTreeMap<String, ClassMetrics>,
    pub confusion: Vec<ConfusionCell>,
    pub misclassified: Vec<Misclassification>,
}

impl EvalReport {
    pub fn render_text(&self, title: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{title}: {} samples, {} unpredicted", self.samples, self.unpredicted);
        for (k, acc) in &self.topk_accuracy {
            let _ = writeln!(out, "  top-{k:<2} accuracy {acc:.4}");
        }
        let width = self.per_class.keys().map(String::len).max().unwrap_or(6).max(6);
        let _ = writeln!(out, "  {:<width$}  {:>9}  {:>6}  {:>7}", "intent", "precision", "recall", "support");
        for (intent, m) in &self.per_class {
            let _ = writeln!(
                out,
                "  {intent:<width$}  {:>9.4}  {:>6.4}  {:>7}",
                m.precision, m.recall, m.support
            );
        }
        out
    }
}

/// Scores `predictor` on `test`, plus each sample's top-1 prediction.
pub fn evaluate_detailed(
    predictor: &dyn IntentPredictor,
    test: &[LabeledMessage],
    max_k: usize,
) -> Result<(EvalReport, Vec<Option<String>>), EvalError> {
    if test.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    if max_k == 0 {
        return Err(EvalError::InvalidMaxK);
    }
    let mut hits = vec![0usize; max_k];
    let mut confusion: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut top1 = Vec::with_capacity(test.len());
    let mut misclassified = Vec::new();
    let mut unpredicted = 0;

    for sample in test {
        let ranked: Vec<String> = match predictor.predict_intents(&sample.message.text, max_k) {
            Ok(p) => p.ids().map(String::from).collect(),
            Err(_) => Vec::new(),
        };
        if ranked.is_empty() {
            unpredicted += 1;
        }
        if let Some(rank) = ranked.iter().position(|id| *id == sample.intent_id) {
            for h in &mut hits[rank..] {
                *h += 1;
            }
        }
        let predicted = ranked.first().cloned();
        if predicted.as_deref() != Some(sample.intent_id.as_str()) {
            misclassified.push(Misclassification {
                id: sample.message.id(),
                text: sample.message.text.clone(),
                label: sample.intent_id.clone(),
                predictions: ranked.iter().take(2).cloned().collect(),
            });
        }
        let column = predicted.clone().unwrap_or_else(|| NO_PREDICTION.to_string());
        *confusion.entry((sample.intent_id.clone(), column)).or_insert(0) += 1;
        top1.push(predicted);
    }

    let n = test.len() as f64;
    let topk_accuracy: BTreeMap<usize, f64> =
        hits.iter().enumerate().map(|(k, &h)| (k + 1, h as f64 / n)).collect();

    let mut classes: BTreeSet<&str> = test.iter().map(|s| s.intent_id.as_str()).collect();
    classes.extend(confusion.keys().map(|(_, p)| p.as_str()).filter(|p| *p != NO_PREDICTION));
    let per_class = classes
        .into_iter()
        .map(|c| {
            let support: usize = confusion.iter().filter(|((t, _), _)| t == c).map(|(_, n)| n).sum();
            let predicted: usize = confusion.iter().filter(|((_, p), _)| p == c).map(|(_, n)| n).sum();
            let correct = confusion.get(&(c.to_string(), c.to_string())).copied().unwrap_or(0);
            let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
            (
                c.to_string(),
                ClassMetrics { precision: ratio(correct, predicted), recall: ratio(correct, support), support },
            )
        })
        .collect();

    let report = EvalReport {
        samples: test.len(),
        unpredicted,
        top1_accuracy: topk_accuracy[&1],
        topk_accuracy,
        per_class,
        confusion: confusion
            .into_iter()
            .map(|((true_intent, predicted), count)| ConfusionCell { true_intent, predicted, count })
            .collect(),
        misclassified,
    };
    Ok((report, top1))
}

pub fn evaluate(
    predictor: &dyn IntentPredictor,
    test: &[LabeledMessage],
    max_k: usize,
) -> Result<EvalReport, EvalError> {
    evaluate_detailed(predictor, test, max_k).map(|(r, _)| r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplementarityBuckets {
    pub both_right: f64,
    pub same_wrong: f64,
    pub a_right_b_wrong: f64,
    pub b_right_a_wrong: f64,
    pub different_wrong: f64,
}

/// Buckets samples by whether two predictors' top-1 answers are right and
/// whether they agree. A missing prediction is wrong; two missing
/// predictions agree.
pub fn compare(
    preds_a: &[Option<String>],
    preds_b: &[Option<String>],
    labels: &[String],
) -> Result<ComplementarityBuckets, EvalError> {
    if preds_a.len() != labels.len() || preds_b.len() != labels.len() {
        return Err(EvalError::LengthMismatch { a: preds_a.len(), b: preds_b.len(), labels: labels.len() });
    }
    if labels.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let mut counts = [0usize; 5];
    for ((a, b), label) in preds_a.iter().zip(preds_b).zip(labels) {
        let a_right = a.as_deref() == Some(label.as_str());
        let b_right = b.as_deref() == Some(label.as_str());
        let bucket = match (a_right, b_right) {
            (true, true) => 0,
            (true, false) => 2,
            (false, true) => 3,
            (false, false) if a == b => 1,
            (false, false) => 4,
        };
        counts[bucket] += 1;
    }
    let n = labels.len() as f64;
    let f = |i: usize| counts[i] as f64 / n;
    Ok(ComplementarityBuckets {
        both_right: f(0),
        same_wrong: f(1),
        a_right_b_wrong: f(2),
        b_right_a_wrong: f(3),
        different_wrong: f(4),
    })
}

/// Deterministic stratified split: within each intent, messages are ordered
/// by a hash of their id and the first `train_fraction` go to training.
/// Both halves keep the input order.
pub fn stratified_split(
    labeled: &[LabeledMessage],
    train_fraction: f64,
) -> (Vec<LabeledMessage>, Vec<LabeledMessage>) {
    let mut by_intent: BTreeMap<&str, Vec<(String, usize)>> = BTreeMap::new();
    for (i, m) in labeled.iter().enumerate() {
        by_intent.entry(&m.intent_id).or_default().push((sha256_hex(m.message.id().as_bytes()), i));
    }
    let mut train_idx = HashSet::new();
    for members in by_intent.values_mut() {
        members.sort();
        let n = members.len();
        let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n);
        train_idx.extend(members[..n_train].iter().map(|(_, i)| *i));
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, m) in labeled.iter().enumerate() {
        if train_idx.contains(&i) {
            train.push(m.clone());
        } else {
            test.push(m.clone());
        }
    }
    (train, test)
}

/// Trains an embedding on `docs`, fits centroids on `train` and returns the
/// top-1 accuracy on `test`.
pub fn train_and_score(
    docs: &[Document],
    train: &[LabeledMessage],
    test: &[LabeledMessage],
    config: &TrainingConfig,
) -> Result<f64, EvalError> {
    let model = embedding::train(docs, config)?;
    let centroids = fit_centroids(&model, train)?;
    let predictor = NearestCentroid::new(&centroids, &model)?;
    Ok(evaluate(&predictor, test, 1)?.top1_accuracy)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    pub repeats: usize,
    pub accuracies: Vec<f64>,
    /// Runs whose training diverged; each contributes accuracy 0.
    pub diverged: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn row(&self, parameter: &str, value: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.parameter == parameter && r.value == value)
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12} {:>12} {:>7} {:>9} {:>9} {:>8}",
            "parameter", "value", "repeats", "mean", "std", "diverged"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<12} {:>12} {:>7} {:>9.4} {:>9.4} {:>8}",
                r.parameter, r.value, r.repeats, r.mean_accuracy, r.std_accuracy, r.diverged
            );
        }
        out
    }
}

/// Returns `base` with one parameter replaced.
pub fn with_parameter(base: &TrainingConfig, name: &str, value: f64) -> Result<TrainingConfig, EvalError> {
    let mut c = base.clone();
    let as_count = |v: f64| v.max(0.0).round() as usize;
    match name {
        "alpha" => {
            c.alpha = value;
            c.alpha_min = c.alpha_min.min(value);
        }
        "alpha_min" => c.alpha_min = value,
        "sample" => c.sample = value,
        "dim" => c.dim = as_count(value),
        "window_k" | "window" => c.window_k = as_count(value),
        "epochs" => c.epochs = as_count(value),
        "min_count" => c.min_count = as_count(value) as u64,
        "infer_steps" => c.infer_steps = as_count(value),
        "k_neg" | "negative" => {
            c.objective = embedding::Objective::NegativeSampling { k_neg: as_count(value) }
        }
        other => return Err(EvalError::UnknownParameter(other.to_string())),
    }
    Ok(c)
}

/// Varies one parameter at a time around `base`; every grid point is
/// trained and scored once per seed. Points run in parallel, and rows come
/// back sorted by (parameter, value). A run whose training diverges counts
/// as accuracy 0 and is tallied in [`SweepRow::diverged`]; any other
/// failure aborts the sweep with the grid point attached.
pub fn sweep(
    grid: &BTreeMap<String, Vec<f64>>,
    base: &TrainingConfig,
    docs: &[Document],
    train: &[LabeledMessage],
    test: &[LabeledMessage],
    seeds: &[u64],
) -> Result<SweepResult, EvalError> {
    if seeds.len() < 2 {
        return Err(EvalError::TooFewRepeats(seeds.len()));
    }
    let mut jobs = Vec::new();
    for (parameter, values) in grid {
        for &value in values {
            let config = with_parameter(base, parameter, value)?;
            for &seed in seeds {
                jobs.push((parameter.clone(), value, seed, TrainingConfig { seed, ..config.clone() }));
            }
        }
    }
    // A diverged run leaves no model, so it predicts nothing and scores 0.
    let scores: Vec<Result<Option<f64>, EvalError>> = jobs
        .par_iter()
        .map(|(parameter, value, seed, config)| match train_and_score(docs, train, test, config) {
            Ok(acc) => Ok(Some(acc)),
            Err(EvalError::Embedding(EmbeddingError::Diverged { .. })) => Ok(None),
            Err(e) => Err(EvalError::SweepPoint {
                parameter: parameter.clone(),
                value: *value,
                seed: *seed,
                source: Box::new(e),
            }),
        })
        .collect();

    let mut grouped: BTreeMap<(String, u64), (f64, Vec<f64>, usize)> = BTreeMap::new();
    for ((parameter, value, _, _), score) in jobs.into_iter().zip(scores) {
        let entry = grouped.entry((parameter, value.to_bits())).or_insert_with(|| (value, Vec::new(), 0));
        match score? {
            Some(acc) => entry.1.push(acc),
            None => {
                entry.1.push(0.0);
                entry.2 += 1;
            }
        }
    }
    let mut rows: Vec<SweepRow> = grouped
        .into_iter()
        .map(|((parameter, _), (value, accuracies, diverged))| {
            let n = accuracies.len() as f64;
            let mean = accuracies.iter().sum::<f64>() / n;
            let var = accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
            SweepRow {
                parameter,
                value,
                repeats: accuracies.len(),
                accuracies,
                diverged,
                mean_accuracy: mean,
                std_accuracy: var.sqrt(),
            }
        })
        .collect();
    rows.sort_by(|a, b| a.parameter.cmp(&b.parameter).then(a.value.total_cmp(&b.value)));
    Ok(SweepResult { rows })
}

/// Writes one tab-separated row per message: intent id, then the inferred
/// vector. Messages with no in-vocabulary token are skipped. Returns the
/// number of rows written.
pub fn export_embeddings(
    model: &EmbeddingModel,
    labeled: &[LabeledMessage],
    path: &Path,
) -> Result<usize, EvalError> {
    if labeled.is_empty() {
        return Err(EvalError::NothingToExport);
    }
    let io = |source| EvalError::Io { path: path.display().to_string(), source };
    let mut out = BufWriter::new(fs::File::create(path).map_err(io)?);
    let mut rows = 0;
    for m in labeled {
        let vector = match infer_doc_vector(model, &tokenize(&m.message.text)) {
            Ok(v) => v,
            Err(EmbeddingError::OutOfVocabulary) => continue,
            Err(e) => return Err(e.into()),
        };
        let mut line = m.intent_id.clone();
        for x in vector {
            let _ = write!(line, "\t{x}");
        }
        line.push('\n');
        out.write_all(line.as_bytes()).map_err(io)?;
        rows += 1;
    }
    out.flush().map_err(io)?;
    Ok(rows)
}

pub fn read_exported_embeddings(path: &Path) -> Result<Vec<(String, Vec<f32>)>, EvalError> {
    let p = path.display().to_string();
    let file = fs::File::open(path).map_err(|source| EvalError::Io { path: p.clone(), source })?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| EvalError::Io { path: p.clone(), source })?;
        let mut fields = line.split('\t');
        let label = fields.next().unwrap_or_default().to_string();
        let vector = fields
            .map(|f| f.parse::<f32>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| EvalError::Parse { path: p.clone(), line: i + 1, reason: e.to_string() })?;
        rows.push((label, vector));
    }
    Ok(rows)
}
