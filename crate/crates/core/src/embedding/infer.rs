use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::kernels::{self, axpy, NoiseTable, OutputRows};
use super::{EmbeddingError, EmbeddingModel, Mode, Objective};
use crate::textprep::TokenizedMessage;

fn seed_for(model_seed: u64, tokens: &[usize]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(model_seed.to_le_bytes());
    for t in tokens {
        hasher.update((*t as u64).to_le_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Fits a paragraph vector for `tokens` by gradient descent on that vector
/// alone; the model is only borrowed immutably.
///
/// The starting vector and the noise draws are seeded from a hash of the
/// in-vocabulary token sequence, so the result is a pure function of
/// (model, tokens).
pub fn infer_doc_vector(model: &EmbeddingModel, tokens: &TokenizedMessage) -> Result<Vec<f32>, EmbeddingError> {
    let words = model.vocabulary().indices(tokens);
    if words.is_empty() {
        return Err(EmbeddingError::OutOfVocabulary);
    }
    let config = model.config();
    let dim = config.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed_for(config.seed, &words));
    let bound = 0.5 / dim as f32;
    let mut doc: Vec<f32> = (0..dim).map(|_| rng.random_range(-bound..bound)).collect();

    let noise = match config.objective {
        Objective::NegativeSampling { .. } => Some(NoiseTable::new(model.vocabulary().counts())),
        Objective::ExactSoftmax => None,
    };
    let output = model.output_weights();
    let word_vectors = model.word_vectors();
    let mut grad = vec![0.0f32; dim];
    let mut hidden = vec![0.0f32; dim];

    for step in 0..config.infer_steps {
        let progress = step as f64 / config.infer_steps as f64;
        let lr = (config.alpha - (config.alpha - config.alpha_min) * progress) as f32;
        for t in 0..words.len() {
            let scale = match config.mode {
                Mode::Dbow => {
                    hidden.copy_from_slice(&doc);
                    1.0
                }
                Mode::Dm => {
                    hidden.copy_from_slice(&doc);
                    let lo = t.saturating_sub(config.window_k);
                    let hi = (t + config.window_k + 1).min(words.len());
                    let mut n = 1;
                    for c in (lo..hi).filter(|&c| c != t) {
                        axpy(1.0, word_vectors.row(words[c]), &mut hidden);
                        n += 1;
                    }
                    let s = 1.0 / n as f32;
                    hidden.iter_mut().for_each(|h| *h *= s);
                    s
                }
            };
            grad.iter_mut().for_each(|g| *g = 0.0);
            match (config.objective, &noise) {
                (Objective::NegativeSampling { k_neg }, Some(noise)) => {
                    kernels::negative_sampling_step(
                        &hidden,
                        words[t],
                        k_neg,
                        noise,
                        OutputRows::Frozen(output),
                        lr,
                        &mut grad,
                        &mut rng,
                    );
                }
                _ => {
                    kernels::softmax_step(&hidden, words[t], OutputRows::Frozen(output), lr, &mut grad);
                }
            }
            axpy(-lr * scale, &grad, &mut doc);
        }
    }
    Ok(doc)
}
