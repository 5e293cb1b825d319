use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kernels::{self, axpy, NoiseTable, OutputRows};
use super::{Document, EmbeddingError, EmbeddingModel, Matrix, Mode, Objective, TrainingConfig};
use crate::textprep::{build_vocabulary, keep_probability, TokenizedMessage};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingStats {
    /// Mean per-step loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
}

pub fn train(docs: &[Document], config: &TrainingConfig) -> Result<EmbeddingModel, EmbeddingError> {
    train_with_stats(docs, config).map(|(model, _)| model)
}

/// Trains word vectors, output weights and one paragraph vector per document.
///
/// Single-threaded and fully determined by `config.seed`.
pub fn train_with_stats(
    docs: &[Document],
    config: &TrainingConfig,
) -> Result<(EmbeddingModel, TrainingStats), EmbeddingError> {
    config.validate()?;
    if docs.is_empty() {
        return Err(EmbeddingError::EmptyCorpus);
    }
    let vocabulary = build_vocabulary(docs.iter().map(|d| &d.tokens), config.min_count)?;
    let dim = config.dim;
    let v = vocabulary.len();
    let encoded: Vec<Vec<usize>> = docs.iter().map(|d| vocabulary.indices(&d.tokens)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bound = 0.5 / dim as f32;
    let uniform = |rows: usize, rng: &mut ChaCha8Rng| {
        Matrix::from_vec(rows, dim, (0..rows * dim).map(|_| rng.random_range(-bound..bound)).collect())
    };
    let mut word_vectors = uniform(v, &mut rng);
    let mut doc_vectors = uniform(docs.len(), &mut rng);
    let mut output = Matrix::zeros(v, dim);

    let keep: Vec<f64> = (0..v)
        .map(|i| keep_probability(vocabulary.frequency(i), config.sample))
        .collect::<Result<_, _>>()?;
    let noise = NoiseTable::new(vocabulary.counts());

    let words_per_epoch: usize = encoded.iter().map(Vec::len).sum();
    let total_words = (words_per_epoch * config.epochs).max(1) as f64;
    let mut processed = 0usize;
    let mut order: Vec<usize> = (0..docs.len()).collect();
    let mut stats = TrainingStats { epoch_losses: Vec::with_capacity(config.epochs), steps: 0 };

    let mut grad = vec![0.0f32; dim];
    let mut hidden = vec![0.0f32; dim];
    let mut kept: Vec<usize> = Vec::new();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut epoch_loss, mut epoch_steps) = (0.0f64, 0u64);
        for &d in &order {
            let words = &encoded[d];
            kept.clear();
            kept.extend(words.iter().copied().filter(|&w| keep[w] >= 1.0 || rng.random::<f64>() < keep[w]));
            let lr_at = |p: usize| {
                (config.alpha - (config.alpha - config.alpha_min) * (p as f64 / total_words)) as f32
            };
            for t in 0..kept.len() {
                let lr = lr_at(processed + t * words.len() / kept.len().max(1));
                let target = kept[t];
                let reduced = config.window_k - rng.random_range(0..config.window_k);
                let lo = t.saturating_sub(reduced);
                let hi = (t + reduced + 1).min(kept.len());
                let step = |hidden: &[f32], target: usize, grad: &mut [f32], rng: &mut ChaCha8Rng, out: &mut Matrix| {
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    match config.objective {
                        Objective::NegativeSampling { k_neg } => kernels::negative_sampling_step(
                            hidden,
                            target,
                            k_neg,
                            &noise,
                            OutputRows::Mutable(out),
                            lr,
                            grad,
                            rng,
                        ),
                        Objective::ExactSoftmax => {
                            kernels::softmax_step(hidden, target, OutputRows::Mutable(out), lr, grad)
                        }
                    }
                };
                let mut losses = Vec::with_capacity(1 + 2 * reduced);
                match config.mode {
                    Mode::Dbow => {
                        hidden.copy_from_slice(doc_vectors.row(d));
                        losses.push(step(&hidden, target, &mut grad, &mut rng, &mut output));
                        axpy(-lr, &grad, doc_vectors.row_mut(d));
                        if config.train_words {
                            for c in (lo..hi).filter(|&c| c != t) {
                                hidden.copy_from_slice(word_vectors.row(target));
                                losses.push(step(&hidden, kept[c], &mut grad, &mut rng, &mut output));
                                axpy(-lr, &grad, word_vectors.row_mut(target));
                            }
                        }
                    }
                    Mode::Dm => {
                        hidden.copy_from_slice(doc_vectors.row(d));
                        let context: Vec<usize> = (lo..hi).filter(|&c| c != t).map(|c| kept[c]).collect();
                        for &w in &context {
                            axpy(1.0, word_vectors.row(w), &mut hidden);
                        }
                        let scale = 1.0 / (1 + context.len()) as f32;
                        hidden.iter_mut().for_each(|h| *h *= scale);
                        losses.push(step(&hidden, target, &mut grad, &mut rng, &mut output));
                        axpy(-lr * scale, &grad, doc_vectors.row_mut(d));
                        for &w in &context {
                            axpy(-lr * scale, &grad, word_vectors.row_mut(w));
                        }
                    }
                }
                for loss in losses {
                    if !loss.is_finite() {
                        return Err(EmbeddingError::Diverged { epoch, doc: d, position: t });
                    }
                    epoch_loss += loss;
                    epoch_steps += 1;
                }
            }
            processed += words.len();
        }
        stats.steps += epoch_steps;
        stats.epoch_losses.push(if epoch_steps == 0 { 0.0 } else { epoch_loss / epoch_steps as f64 });
    }

    let doc_ids = docs.iter().map(|d| d.id.clone()).collect();
    let model = EmbeddingModel::from_parts(config.clone(), vocabulary, word_vectors, output, doc_vectors, doc_ids)
        .map_err(|e| match e {
            EmbeddingError::Inconsistent(_) => EmbeddingError::Diverged {
                epoch: config.epochs.saturating_sub(1),
                doc: 0,
                position: 0,
            },
            other => other,
        })?;
    Ok((model, stats))
}

/// Analytic gradients of the exact-softmax negative log-likelihood at one
/// (document, position).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub loss: f64,
    /// Gradient for the document's paragraph-vector row.
    pub doc: Vec<f64>,
    /// Gradients for context word-vector rows, ascending by word index.
    pub words: Vec<(usize, Vec<f64>)>,
    /// Dense gradient for the output weights, row-major `V x dim`.
    pub output: Vec<f64>,
}

/// Loss and gradients of predicting the word at `position` of `tokens`
/// (counted over in-vocabulary tokens) for document `doc_index`.
///
/// Always uses the exact softmax and the full context window; DBOW predicts
/// from the paragraph vector alone, DM from the mean of paragraph and
/// context vectors.
pub fn loss_and_gradients(
    model: &EmbeddingModel,
    tokens: &TokenizedMessage,
    doc_index: usize,
    position: usize,
) -> Result<Gradients, EmbeddingError> {
    let n_docs = model.doc_vectors().rows();
    if doc_index >= n_docs {
        return Err(EmbeddingError::IndexOutOfRange(format!("document {doc_index} of {n_docs}")));
    }
    let words = model.vocabulary().indices(tokens);
    if position >= words.len() {
        return Err(EmbeddingError::IndexOutOfRange(format!("position {position} of {}", words.len())));
    }
    let dim = model.dim();
    let target = words[position];
    let context: Vec<usize> = match model.config().mode {
        Mode::Dbow => Vec::new(),
        Mode::Dm => {
            let k = model.config().window_k;
            let lo = position.saturating_sub(k);
            let hi = (position + k + 1).min(words.len());
            (lo..hi).filter(|&c| c != position).map(|c| words[c]).collect()
        }
    };
    let scale = 1.0 / (1 + context.len()) as f64;
    let mut hidden: Vec<f64> = model.doc_vectors().row(doc_index).iter().map(|&x| x as f64).collect();
    for &w in &context {
        for (h, &x) in hidden.iter_mut().zip(model.word_vectors().row(w)) {
            *h += x as f64;
        }
    }
    hidden.iter_mut().for_each(|h| *h *= scale);

    let out = model.output_weights();
    let logits: Vec<f64> = (0..out.rows())
        .map(|j| out.row(j).iter().zip(&hidden).map(|(&u, h)| u as f64 * h).sum())
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    let loss = log_z - logits[target];

    let mut grad_hidden = vec![0.0f64; dim];
    let mut output = vec![0.0f64; out.rows() * dim];
    for (j, z) in logits.iter().enumerate() {
        let g = (z - log_z).exp() - if j == target { 1.0 } else { 0.0 };
        for (k, &u) in out.row(j).iter().enumerate() {
            grad_hidden[k] += g * u as f64;
            output[j * dim + k] = g * hidden[k];
        }
    }
    let doc: Vec<f64> = grad_hidden.iter().map(|g| g * scale).collect();
    let mut word_grads: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut sorted = context.clone();
    sorted.sort_unstable();
    for w in sorted {
        match word_grads.last_mut() {
            Some((last, g)) if *last == w => g.iter_mut().zip(&doc).for_each(|(a, b)| *a += b),
            _ => word_grads.push((w, doc.clone())),
        }
    }
    Ok(Gradients { loss, doc, words: word_grads, output })
}
