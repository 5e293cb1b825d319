//! Per-position objective kernels shared by training and inference.

use rand::Rng;

use super::Matrix;

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn axpy(alpha: f32, x: &[f32], y: &mut [f32]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// `-ln sigmoid(x)`, computed without overflow.
fn neg_log_sigmoid(x: f64) -> f64 {
    (-x).max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Cumulative unigram^0.75 table for drawing noise words.
#[derive(Debug, Clone)]
pub(crate) struct NoiseTable {
    cumulative: Vec<f64>,
}

impl NoiseTable {
    pub(crate) fn new(counts: &[u64]) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        Self { cumulative }
    }

    pub(crate) fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty vocabulary");
        let x = rng.random::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= x).min(self.cumulative.len() - 1)
    }
}

/// One negative-sampling step predicting `target` from hidden vector `hidden`.
///
/// Adds the loss gradient with respect to `hidden` into `grad_hidden` and,
/// when `output` is mutable, applies the output-row updates at rate `lr`.
/// Returns the step loss.
#[allow(clippy::too_many_arguments)]
pub(crate) fn negative_sampling_step<R: Rng>(
    hidden: &[f32],
    target: usize,
    k_neg: usize,
    noise: &NoiseTable,
    output: OutputRows<'_>,
    lr: f32,
    grad_hidden: &mut [f32],
    rng: &mut R,
) -> f64 {
    let mut loss = 0.0;
    let mut output = output;
    for i in 0..=k_neg {
        let (word, label) = if i == 0 {
            (target, 1.0f32)
        } else {
            let w = noise.sample(rng);
            if w == target {
                continue;
            }
            (w, 0.0)
        };
        let score = dot(hidden, output.row(word));
        loss += if label > 0.5 { neg_log_sigmoid(score as f64) } else { neg_log_sigmoid(-score as f64) };
        let g = sigmoid(score) - label;
        axpy(g, output.row(word), grad_hidden);
        if let OutputRows::Mutable(m) = &mut output {
            axpy(-lr * g, hidden, m.row_mut(word));
        }
    }
    loss
}

/// Exact softmax over the whole vocabulary, in `f64`.
///
/// Returns the loss `-ln p(target)` and the probability vector.
pub(crate) fn softmax_forward(hidden: &[f32], output: &Matrix, target: usize) -> (f64, Vec<f64>) {
    let logits: Vec<f64> = (0..output.rows())
        .map(|j| output.row(j).iter().zip(hidden).map(|(&u, &h)| u as f64 * h as f64).sum())
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    let log_z = max + sum.ln();
    let probs = logits.iter().map(|z| (z - log_z).exp()).collect();
    (log_z - logits[target], probs)
}

/// One exact-softmax step; same contract as [`negative_sampling_step`].
pub(crate) fn softmax_step(
    hidden: &[f32],
    target: usize,
    output: OutputRows<'_>,
    lr: f32,
    grad_hidden: &mut [f32],
) -> f64 {
    let (loss, probs) = softmax_forward(hidden, output.matrix(), target);
    let mut output = output;
    for (j, p) in probs.iter().enumerate() {
        let g = (*p - if j == target { 1.0 } else { 0.0 }) as f32;
        axpy(g, output.row(j), grad_hidden);
        if let OutputRows::Mutable(m) = &mut output {
            axpy(-lr * g, hidden, m.row_mut(j));
        }
    }
    loss
}

/// Output weights, either updated in place (training) or frozen (inference).
pub(crate) enum OutputRows<'a> {
    Mutable(&'a mut Matrix),
    Frozen(&'a Matrix),
}

impl OutputRows<'_> {
    fn row(&self, r: usize) -> &[f32] {
        match self {
            OutputRows::Mutable(m) => m.row(r),
            OutputRows::Frozen(m) => m.row(r),
        }
    }

    fn matrix(&self) -> &Matrix {
        match self {
            OutputRows::Mutable(m) => m,
            OutputRows::Frozen(m) => m,
        }
    }
}
