use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smartreply_core::embedding::{
    infer_doc_vector, loss_and_gradients, train, Document, EmbeddingModel, Mode, Objective, TrainingConfig,
};
use smartreply_core::intent::cosine;
use smartreply_core::textprep::TokenizedMessage;

fn doc(id: usize, words: &[&str]) -> Document {
    Document { id: format!("d{id}"), tokens: TokenizedMessage { tokens: words.iter().map(|w| w.to_string()).collect() } }
}

/// Independent negative log-likelihood of the word at `position`, computed
/// from f64 copies of the parameters.
struct Params {
    doc: Vec<f64>,
    words: Vec<Vec<f64>>,
    out: Vec<Vec<f64>>,
}

impl Params {
    fn of(model: &EmbeddingModel, doc_index: usize) -> Self {
        let rows = |m: &smartreply_core::embedding::Matrix| {
            (0..m.rows()).map(|r| m.row(r).iter().map(|&x| x as f64).collect()).collect()
        };
        Params {
            doc: model.doc_vectors().row(doc_index).iter().map(|&x| x as f64).collect(),
            words: rows(model.word_vectors()),
            out: rows(model.output_weights()),
        }
    }

    fn loss(&self, mode: Mode, window: usize, ids: &[usize], position: usize) -> f64 {
        let mut hidden = self.doc.clone();
        let mut n = 1.0;
        if mode == Mode::Dm {
            let lo = position.saturating_sub(window);
            let hi = (position + window + 1).min(ids.len());
            for c in (lo..hi).filter(|&c| c != position) {
                for (h, x) in hidden.iter_mut().zip(&self.words[ids[c]]) {
                    *h += x;
                }
                n += 1.0;
            }
            hidden.iter_mut().for_each(|h| *h /= n);
        }
        let logits: Vec<f64> = self.out.iter().map(|u| u.iter().zip(&hidden).map(|(a, b)| a * b).sum()).collect();
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        z.ln() - logits[ids[position]]
    }
}

fn small_model(mode: Mode) -> (EmbeddingModel, Vec<Document>) {
    let words: Vec<String> = (0..24).map(|i| format!("w{i}")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let docs: Vec<Document> = (0..30)
        .map(|i| {
            let len = rng.random_range(4..9);
            let picked: Vec<&str> = (0..len).map(|_| words[rng.random_range(0..words.len())].as_str()).collect();
            doc(i, &picked)
        })
        .collect();
    let config = TrainingConfig {
        mode,
        dim: 8,
        window_k: 2,
        epochs: 3,
        alpha: 0.05,
        min_count: 1,
        sample: 1.0,
        objective: Objective::ExactSoftmax,
        ..TrainingConfig::default()
    };
    let mut model = train(&docs, &config).unwrap();
    // Push the output layer away from its near-zero start so every block has
    // sizeable gradients.
    for x in model.output_weights_mut().as_mut_slice() {
        *x += rng.random_range(-0.5..0.5);
    }
    (model, docs)
}

/// Component-wise |a - n| / max(|a|, |n|, floor). The floor keeps
/// components that are zero up to rounding from dominating.
fn max_rel_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

fn check_gradients(mode: Mode) -> f64 {
    let (model, docs) = small_model(mode);
    assert!(model.vocabulary().len() <= 30);
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for (doc_index, d) in docs.iter().enumerate().step_by(7) {
        let ids = model.vocabulary().indices(&d.tokens);
        for position in [0, ids.len() / 2, ids.len() - 1] {
            let g = loss_and_gradients(&model, &d.tokens, doc_index, position).unwrap();
            let base = Params::of(&model, doc_index);
            let window = model.config().window_k;
            let f = |p: &Params| p.loss(mode, window, &ids, position);
            assert!((g.loss - f(&base)).abs() < 1e-9);

            let mut numeric = Vec::new();
            for i in 0..base.doc.len() {
                let (mut plus, mut minus) = (Params::of(&model, doc_index), Params::of(&model, doc_index));
                plus.doc[i] += h;
                minus.doc[i] -= h;
                numeric.push((f(&plus) - f(&minus)) / (2.0 * h));
            }
            worst = worst.max(max_rel_error(&g.doc, &numeric, 1e-6));

            for (w, grad) in &g.words {
                let mut numeric = Vec::new();
                for i in 0..grad.len() {
                    let (mut plus, mut minus) = (Params::of(&model, doc_index), Params::of(&model, doc_index));
                    plus.words[*w][i] += h;
                    minus.words[*w][i] -= h;
                    numeric.push((f(&plus) - f(&minus)) / (2.0 * h));
                }
                worst = worst.max(max_rel_error(grad, &numeric, 1e-6));
            }
            if mode == Mode::Dbow {
                assert!(g.words.is_empty());
            }

            let dim = model.dim();
            let mut numeric = Vec::new();
            for j in 0..base.out.len() {
                for i in 0..dim {
                    let (mut plus, mut minus) = (Params::of(&model, doc_index), Params::of(&model, doc_index));
                    plus.out[j][i] += h;
                    minus.out[j][i] -= h;
                    numeric.push((f(&plus) - f(&minus)) / (2.0 * h));
                }
            }
            worst = worst.max(max_rel_error(&g.output, &numeric, 1e-6));
        }
    }
    worst
}

#[test]
fn dbow_gradients_match_finite_differences() {
    let worst = check_gradients(Mode::Dbow);
    eprintln!("dbow max relative error {worst:e}");
    assert!(worst < 1e-4, "max relative error {worst:e}");
}

#[test]
fn dm_gradients_match_finite_differences() {
    let worst = check_gradients(Mode::Dm);
    eprintln!("dm max relative error {worst:e}");
    assert!(worst < 1e-4, "max relative error {worst:e}");
}

fn two_topic_corpus() -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let topic = |prefix: &str| -> Vec<String> { (0..12).map(|i| format!("{prefix}{i}")).collect() };
    let (a, b) = (topic("alpha"), topic("beta"));
    (0..400)
        .map(|i| {
            let words = if i % 2 == 0 { &a } else { &b };
            let len = rng.random_range(4..8);
            let picked: Vec<&str> = (0..len).map(|_| words[rng.random_range(0..words.len())].as_str()).collect();
            doc(i, &picked)
        })
        .collect()
}

fn two_topic_model() -> (EmbeddingModel, Vec<Document>) {
    let docs = two_topic_corpus();
    let config = TrainingConfig { dim: 24, epochs: 20, min_count: 1, ..TrainingConfig::default() };
    (train(&docs, &config).unwrap(), docs)
}

#[test]
fn two_topics_separate() {
    let (model, docs) = two_topic_model();
    let (mut within, mut across) = ((0.0, 0usize), (0.0, 0usize));
    for i in 0..docs.len() {
        for j in (i + 1)..docs.len() {
            let c = cosine(model.doc_vectors().row(i), model.doc_vectors().row(j)).unwrap();
            let bucket = if i % 2 == j % 2 { &mut within } else { &mut across };
            bucket.0 += c;
            bucket.1 += 1;
        }
    }
    let within = within.0 / within.1 as f64;
    let across = across.0 / across.1 as f64;
    eprintln!("within {within:.3} across {across:.3}");
    assert!(within - across >= 0.2, "within {within:.3} across {across:.3}");
}

#[test]
fn inferred_vector_is_closest_to_its_own_topic() {
    let (model, docs) = two_topic_model();
    let mut own_wins = 0;
    let probes = 40;
    for i in 0..probes {
        let inferred = infer_doc_vector(&model, &docs[i].tokens).unwrap();
        let own = cosine(&inferred, model.doc_vectors().row(i)).unwrap();
        // Odd offset lands on the other topic.
        let other = cosine(&inferred, model.doc_vectors().row((i + 101) % docs.len())).unwrap();
        if own > other {
            own_wins += 1;
        }
    }
    assert_eq!(own_wins, probes);
}
