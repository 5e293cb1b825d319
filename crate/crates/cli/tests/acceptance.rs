//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails. Runs as a plain binary so the lines are never captured.

use std::collections::{BTreeMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smartreply_core::container::ContainerError;
use smartreply_core::corpus::{generate_corpus, Corpus};
use smartreply_core::embedding::{
    self, infer_doc_vector, load_model, loss_and_gradients, save_model, train, Document, EmbeddingError,
    EmbeddingModel, Mode, Objective,
};
use smartreply_core::eval::{evaluate, stratified_split, sweep};
use smartreply_core::intent::{
    fit_centroids, load_centroids, save_centroids, FrequencyModel, IntentError, NearestCentroid, ScoredIntent,
};
use smartreply_core::pipeline::{self, Artifacts};
use smartreply_core::replies::{load_catalog, retrieve, save_catalog, suggest, ReplySource};
use smartreply_core::textprep::{tokenize, TokenizedMessage};
use smartreply_core::{
    CorpusSpec, GuardConfig, IntentCentroidModel, IntentPrediction, LabeledMessage, ReplyCatalog, TrainingConfig,
};
use smartreply_service::{ModelPaths, ServiceConfig};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct Shared {
    corpus: Corpus,
    artifacts: Artifacts,
}

fn shared() -> &'static Shared {
    static SHARED: OnceLock<Shared> = OnceLock::new();
    SHARED.get_or_init(|| {
        let spec = CorpusSpec::default();
        let corpus = generate_corpus(&spec).expect("default corpus");
        let artifacts =
            pipeline::build(&corpus, &spec.reply_templates, &TrainingConfig::default(), "acceptance").expect("build");
        Shared { corpus, artifacts }
    })
}

// Gradient fidelity.

struct Params {
    doc: Vec<f64>,
    words: Vec<Vec<f64>>,
    out: Vec<Vec<f64>>,
}

impl Params {
    fn of(model: &EmbeddingModel, doc_index: usize) -> Self {
        let rows = |m: &embedding::Matrix| -> Vec<Vec<f64>> {
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
        if mode == Mode::Dm {
            let lo = position.saturating_sub(window);
            let hi = (position + window + 1).min(ids.len());
            let mut n = 1.0;
            for c in (lo..hi).filter(|&c| c != position) {
                hidden.iter_mut().zip(&self.words[ids[c]]).for_each(|(h, x)| *h += x);
                n += 1.0;
            }
            hidden.iter_mut().for_each(|h| *h /= n);
        }
        let logits: Vec<f64> = self.out.iter().map(|u| u.iter().zip(&hidden).map(|(a, b)| a * b).sum()).collect();
        logits.iter().map(|l| l.exp()).sum::<f64>().ln() - logits[ids[position]]
    }
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    let mut vocab = 0;
    for mode in [Mode::Dbow, Mode::Dm] {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let words: Vec<String> = (0..26).map(|i| format!("w{i}")).collect();
        let docs: Vec<Document> = (0..30)
            .map(|i| Document {
                id: format!("d{i}"),
                tokens: TokenizedMessage {
                    tokens: (0..rng.random_range(4..9)).map(|_| words.choose(&mut rng).unwrap().clone()).collect(),
                },
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
        let mut model = train(&docs, &config).map_err(|e| e.to_string())?;
        for x in model.output_weights_mut().as_mut_slice() {
            *x += rng.random_range(-0.5..0.5);
        }
        vocab = vocab.max(model.vocabulary().len());
        for (d, doc) in docs.iter().enumerate() {
            let ids = model.vocabulary().indices(&doc.tokens);
            for position in 0..ids.len() {
                let g = loss_and_gradients(&model, &doc.tokens, d, position).map_err(|e| e.to_string())?;
                let f = |p: &Params| p.loss(mode, 2, &ids, position);
                let numeric = |perturb: &dyn Fn(&mut Params, f64)| {
                    let (mut plus, mut minus) = (Params::of(&model, d), Params::of(&model, d));
                    perturb(&mut plus, h);
                    perturb(&mut minus, -h);
                    (f(&plus) - f(&minus)) / (2.0 * h)
                };
                let mut rel = |a: f64, n: f64| {
                    worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-6));
                };
                for (i, &a) in g.doc.iter().enumerate() {
                    rel(a, numeric(&|p, e| p.doc[i] += e));
                }
                for (w, grad) in &g.words {
                    for (i, &a) in grad.iter().enumerate() {
                        rel(a, numeric(&|p, e| p.words[*w][i] += e));
                    }
                }
                for j in 0..model.vocabulary().len() {
                    for i in 0..8 {
                        rel(g.output[j * 8 + i], numeric(&|p, e| p.out[j][i] += e));
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst < 1e-4 && secs < 10.0 && vocab <= 30,
        format!("DBOW+DM, V={vocab}, dim 8: max relative error {worst:.2e} (< 1e-4), {secs:.2}s (< 10s)"),
    )
}

fn frozen_inference() -> Outcome {
    let s = shared();
    let model = &s.artifacts.embedding;
    let before = (model.word_vectors().to_le_bytes(), model.output_weights().to_le_bytes());
    let checksum = model.checksum().to_string();
    let mut calls = 0;
    for record in s.corpus.records.iter().cycle().take(1000) {
        let _ = infer_doc_vector(model, &tokenize(&record.message.text));
        calls += 1;
    }
    let after = (model.word_vectors().to_le_bytes(), model.output_weights().to_le_bytes());
    let same = before == after;
    check(
        same && checksum == model.checksum(),
        format!("{calls} inference calls, word vectors and output weights byte-identical: {same}"),
    )
}

fn centroid_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let intents = ["a", "b", "c", "d", "e", "f", "g"];
    let data: Vec<(&str, Vec<f32>)> = (0..1000)
        .map(|_| (*intents.choose(&mut rng).unwrap(), (0..32).map(|_| rng.random_range(-3.0f32..3.0)).collect()))
        .collect();
    let model = IntentCentroidModel::from_vectors("ref", data.iter().map(|(i, v)| (*i, v.as_slice())))
        .map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for class in model.classes() {
        let members: Vec<&Vec<f32>> = data.iter().filter(|(i, _)| *i == class.intent_id).map(|(_, v)| v).collect();
        for d in 0..32 {
            let mean = members.iter().map(|v| v[d] as f64).sum::<f64>() / members.len() as f64;
            worst = worst.max((class.centroid[d] as f64 - mean).abs());
        }
    }

    // Through fit_centroids: means of the inferred message vectors.
    let s = shared();
    let labeled: Vec<LabeledMessage> = s.corpus.labeled().into_iter().take(1000).collect();
    let fitted = fit_centroids(&s.artifacts.embedding, &labeled).map_err(|e| e.to_string())?;
    let mut sums: BTreeMap<&str, (Vec<f64>, usize)> = BTreeMap::new();
    for m in &labeled {
        if let Ok(v) = infer_doc_vector(&s.artifacts.embedding, &tokenize(&m.message.text)) {
            let e = sums.entry(&m.intent_id).or_insert_with(|| (vec![0.0; v.len()], 0));
            e.0.iter_mut().zip(&v).for_each(|(a, &x)| *a += x as f64);
            e.1 += 1;
        }
    }
    for class in fitted.classes() {
        let (sum, n) = &sums[class.intent_id.as_str()];
        for (c, s) in class.centroid.iter().zip(sum) {
            worst = worst.max((*c as f64 - s / *n as f64).abs());
        }
    }
    check(
        worst < 1e-6,
        format!("1000 random vectors and 1000 labeled messages: max deviation from brute-force means {worst:.2e}"),
    )
}

fn table_one() -> Outcome {
    let start = Instant::now();
    let spec = CorpusSpec::default();
    let corpus = generate_corpus(&spec).map_err(|e| e.to_string())?;
    let labeled = corpus.labeled();
    let intents: HashSet<&str> = labeled.iter().map(|m| m.intent_id.as_str()).collect();
    let model = pipeline::train_embedding(&corpus, &TrainingConfig::default()).map_err(|e| e.to_string())?;
    let (train, test) = stratified_split(&labeled, 0.8);
    let centroids = fit_centroids(&model, &train).map_err(|e| e.to_string())?;
    let nnc = NearestCentroid::new(&centroids, &model).map_err(|e| e.to_string())?;
    let nnc_report = evaluate(&nnc, &test, 4).map_err(|e| e.to_string())?;
    let freq = FrequencyModel::fit(train.iter().map(|m| m.intent_id.as_str())).map_err(|e| e.to_string())?;
    let freq_report = evaluate(&freq, &test, 4).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let (top1, top4, base) = (nnc_report.top1_accuracy, nnc_report.topk_accuracy[&4], freq_report.top1_accuracy);
    check(
        intents.len() == 10 && labeled.len() >= 2000 && top1 - base >= 0.30 && top4 >= 0.90 && secs < 300.0,
        format!(
            "{} intents, {} labeled, test {}: top-1 {top1:.4} vs frequency {base:.4} (+{:.1} pts), top-4 {top4:.4}, {secs:.1}s",
            intents.len(),
            labeled.len(),
            test.len(),
            (top1 - base) * 100.0
        ),
    )
}

fn sweep_direction() -> Outcome {
    let s = shared();
    let docs = embedding::documents(s.corpus.records.iter().map(|r| &r.message));
    let split = &s.artifacts.split;
    let grid: BTreeMap<String, Vec<f64>> =
        [("alpha".to_string(), vec![0.02, 0.5]), ("sample".to_string(), vec![1e-5, 0.5])].into();
    let seeds = [1, 2, 3];
    let result = sweep(&grid, &TrainingConfig::default(), &docs, &split.train, &split.test, &seeds)
        .map_err(|e| e.to_string())?;
    let row = |p: &str, v: f64| result.row(p, v).expect("row");
    let (a_lo, a_hi) = (row("alpha", 0.02), row("alpha", 0.5));
    let (s_lo, s_hi) = (row("sample", 1e-5), row("sample", 0.5));
    let alpha_ok = a_lo.mean_accuracy >= a_hi.mean_accuracy;
    let sample_ok = s_lo.mean_accuracy >= s_hi.mean_accuracy;
    let verdict = |ok: bool| if ok { "holds" } else { "violated" };
    check(
        alpha_ok && sample_ok,
        format!(
            "{} seeds; alpha 0.02 {:.4} vs 0.5 {:.4} ({} diverged) {}; sample 1e-5 {:.4} vs 0.5 {:.4} {}",
            seeds.len(),
            a_lo.mean_accuracy,
            a_hi.mean_accuracy,
            a_hi.diverged,
            verdict(alpha_ok),
            s_lo.mean_accuracy,
            s_hi.mean_accuracy,
            verdict(sample_ok)
        ),
    )
}

fn prediction(ids: &[String]) -> IntentPrediction {
    IntentPrediction {
        ranked: ids
            .iter()
            .enumerate()
            .map(|(i, id)| ScoredIntent { intent_id: id.clone(), score: 1.0 - i as f64 * 0.01 })
            .collect(),
    }
}

fn merge_oracle() -> Outcome {
    let strings = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let worked = ReplyCatalog::new(
        "w",
        strings(&["F"]),
        [("I1".to_string(), strings(&["R1", "R2"])), ("I2".to_string(), strings(&["R1", "R3", "R4"]))].into(),
    )
    .map_err(|e| e.to_string())?;
    let got = retrieve(&worked, &prediction(&strings(&["I1", "I2"])), 2, 4);
    if got != strings(&["R1", "R2", "R3", "R4"]) {
        return Err(format!("worked example gave {got:?}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let pool: Vec<String> = (0..12).map(|i| format!("R{i}")).collect();
    let intent_ids: Vec<String> = (0..8).map(|i| format!("I{i}")).collect();
    for case in 0..10_000 {
        let mut intents = BTreeMap::new();
        for id in &intent_ids {
            if rng.random_bool(0.8) {
                let n = rng.random_range(1..6);
                intents.insert(id.clone(), pool.choose_multiple(&mut rng, n).cloned().collect());
            }
        }
        let fallback: Vec<String> = (0..rng.random_range(1..6)).map(|i| format!("F{i}")).collect();
        let catalog = ReplyCatalog::new("r", fallback.clone(), intents).map_err(|e| e.to_string())?;
        let n = rng.random_range(0..=8);
        let ranked: Vec<String> = intent_ids.choose_multiple(&mut rng, n).cloned().collect();
        let (k, cap) = (rng.random_range(1..5), rng.random_range(1..7));
        let got = retrieve(&catalog, &prediction(&ranked), k, cap);

        let concat: Vec<&String> =
            ranked.iter().take(k).filter_map(|id| catalog.intents.get(id)).flatten().collect();
        let mut expected: Vec<String> = Vec::new();
        for (i, r) in concat.iter().enumerate() {
            if !concat[..i].contains(r) {
                expected.push((*r).clone());
            }
        }
        expected.truncate(cap);
        if expected.is_empty() {
            expected = fallback.iter().take(cap).cloned().collect();
        }
        let unique: HashSet<&String> = got.iter().collect();
        if got != expected || unique.len() != got.len() || got.len() > cap {
            return Err(format!("instance {case}: got {got:?}, oracle {expected:?}"));
        }
    }
    Ok("worked example [R1, R2, R3, R4]; 10000 random instances match the dedup oracle".into())
}

fn fuzz_text(rng: &mut ChaCha8Rng, vocab: &[String]) -> String {
    const ODD: [&str; 12] = ["😀", "ñ", "\u{200b}", "\t", "\n", "!!", ":)", "é", "中文", "\u{feff}", "ß", "-"];
    let parts = rng.random_range(0..8);
    let mut out = String::new();
    for _ in 0..parts {
        match rng.random_range(0..4) {
            0 => out.push_str(vocab.choose(rng).unwrap()),
            1 => out.push_str(ODD.choose(rng).unwrap()),
            2 => out.extend((0..rng.random_range(1..6)).map(|_| char::from_u32(rng.random_range(0x20..0x3000)).unwrap_or('?'))),
            _ => out.push(' '),
        }
        if rng.random_bool(0.6) {
            out.push(' ');
        }
    }
    out
}

fn suggest_totality() -> Outcome {
    let s = shared();
    let a = &s.artifacts;
    let predictor = NearestCentroid::new(&a.centroids, &a.embedding).map_err(|e| e.to_string())?;
    let guard = GuardConfig::default();
    let vocab: Vec<String> = a.embedding.vocabulary().words().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut model, mut one_word) = (0, 0);
    for i in 0..10_000 {
        let text = if i % 5 == 0 { vocab.choose(&mut rng).unwrap().clone() } else { fuzz_text(&mut rng, &vocab) };
        let out = suggest(&text, &predictor, &a.catalog, &guard, 2);
        if !(1..=4).contains(&out.replies.len()) {
            return Err(format!("{text:?} gave {} replies", out.replies.len()));
        }
        if tokenize(&text).len() <= 1 {
            one_word += 1;
            if out.source != ReplySource::Fallback {
                return Err(format!("one-word input {text:?} was answered by the model"));
            }
        }
        if out.source == ReplySource::Model {
            model += 1;
        }
    }
    Ok(format!("10000 fuzzed inputs all got 1-4 replies ({model} model, {one_word} one-word all fallback)"))
}

fn run_cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_smartreply")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn pipeline_determinism() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for run in ["a", "b"] {
        let dir = root.path().join(run);
        std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
        let (corpus, models, report) = (p("corpus.jsonl"), p("models"), p("report.json"));
        run_cli(&["gen-corpus", "--out", &corpus, "--seed", "7"])?;
        run_cli(&["train-embed", "--corpus", &corpus, "--models", &models, "--seed", "1"])?;
        run_cli(&["fit-intents", "--corpus", &corpus, "--models", &models])?;
        run_cli(&["mine-replies", "--corpus", &corpus, "--models", &models])?;
        let stdout = run_cli(&["eval", "--models", &models, "--test", &corpus, "--out", &report])?;
        // The closing "wrote <path>" line names this run's directory.
        let text: Vec<u8> = String::from_utf8_lossy(&stdout)
            .lines()
            .filter(|l| !l.starts_with("wrote "))
            .flat_map(|l| format!("{l}\n").into_bytes())
            .collect();
        let read = |path: &Path| std::fs::read(path).map_err(|e| e.to_string());
        let models = Path::new(&models);
        runs.push(vec![
            read(Path::new(&corpus))?,
            read(&models.join("embedding.model"))?,
            read(&models.join("centroids.model"))?,
            read(&models.join("catalog.json"))?,
            read(Path::new(&report))?,
            text,
        ]);
    }
    let names = ["corpus", "embedding", "centroids", "catalog", "report", "report text"];
    let differing: Vec<&str> = names.iter().zip(runs[0].iter().zip(&runs[1])).filter(|(_, (a, b))| a != b).map(|(n, _)| *n).collect();
    check(
        differing.is_empty(),
        if differing.is_empty() {
            "two CLI runs gave bit-identical corpus, embedding, centroids, catalog and report".into()
        } else {
            format!("outputs differ: {differing:?}")
        },
    )
}

fn rewrite_header(bytes: &[u8], f: impl Fn(&mut serde_json::Value)) -> Vec<u8> {
    let split = bytes.iter().position(|&b| b == b'\n').unwrap();
    let mut header: serde_json::Value = serde_json::from_slice(&bytes[..split]).unwrap();
    f(&mut header);
    let mut out = serde_json::to_vec(&header).unwrap();
    out.extend_from_slice(&bytes[split..]);
    out
}

fn serialization() -> Outcome {
    let s = shared();
    let a = &s.artifacts;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let paths = ModelPaths::in_dir(dir.path());
    save_model(&a.embedding, &paths.embedding).map_err(|e| e.to_string())?;
    save_centroids(&a.centroids, &paths.centroids).map_err(|e| e.to_string())?;
    save_catalog(&a.catalog, &paths.catalog).map_err(|e| e.to_string())?;
    let e = load_model(&paths.embedding).map_err(|e| e.to_string())?;
    let c = load_centroids(&paths.centroids).map_err(|e| e.to_string())?;
    let k = load_catalog(&paths.catalog).map_err(|e| e.to_string())?;
    let bits = |m: &embedding::Matrix| m.to_le_bytes();
    let embedding_equal = e.word_vectors().to_le_bytes() == bits(a.embedding.word_vectors())
        && bits(e.output_weights()) == bits(a.embedding.output_weights())
        && bits(e.doc_vectors()) == bits(a.embedding.doc_vectors())
        && e.doc_ids() == a.embedding.doc_ids()
        && e.config() == a.embedding.config()
        && e.vocabulary().words() == a.embedding.vocabulary().words()
        && e.checksum() == a.embedding.checksum();
    let centroid_bits = |m: &IntentCentroidModel| -> Vec<u32> {
        m.classes().iter().flat_map(|c| c.centroid.iter().map(|x| x.to_bits())).collect()
    };
    let centroids_equal = c == a.centroids && centroid_bits(&c) == centroid_bits(&a.centroids);
    let catalog_equal = k == a.catalog;

    let mut rejections = Vec::new();
    for path in [&paths.embedding, &paths.centroids] {
        let original = std::fs::read(path).map_err(|e| e.to_string())?;
        let mut corrupt = original.clone();
        let last = corrupt.len() - 2;
        corrupt[last] ^= 0x01;
        std::fs::write(path, &corrupt).map_err(|e| e.to_string())?;
        rejections.push(load_error(path));
        let future = rewrite_header(&original, |h| h["format_version"] = 99.into());
        std::fs::write(path, &future).map_err(|e| e.to_string())?;
        rejections.push(load_error(path));
        std::fs::write(path, &original).map_err(|e| e.to_string())?;
    }
    let expected = ["checksum", "version", "checksum", "version"];
    let rejected_ok = rejections.iter().zip(expected).all(|(r, want)| {
        matches!(
            (r, want),
            (Some(ContainerError::Checksum { .. }), "checksum")
                | (Some(ContainerError::Version { found: 99, supported: 1 }), "version")
        )
    });
    let version_message = rejections[1].as_ref().map(|e| e.to_string()).unwrap_or_default();
    check(
        embedding_equal && centroids_equal && catalog_equal && rejected_ok && version_message.contains("99"),
        format!(
            "round trips: embedding {embedding_equal}, centroids {centroids_equal}, catalog {catalog_equal}; corrupted/future files rejected: {rejected_ok} ({version_message})"
        ),
    )
}

fn load_error(path: &Path) -> Option<ContainerError> {
    let name = path.file_name().unwrap().to_string_lossy();
    if name.starts_with("embedding") {
        match load_model(path) {
            Err(EmbeddingError::File(e)) => Some(e),
            _ => None,
        }
    } else {
        match load_centroids(path) {
            Err(IntentError::File(e)) => Some(e),
            _ => None,
        }
    }
}

fn service_contract() -> Outcome {
    let s = shared();
    let a = &s.artifacts;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let paths = ModelPaths::in_dir(dir.path());
    save_model(&a.embedding, &paths.embedding).map_err(|e| e.to_string())?;
    save_centroids(&a.centroids, &paths.centroids).map_err(|e| e.to_string())?;
    save_catalog(&a.catalog, &paths.catalog).map_err(|e| e.to_string())?;
    let config =
        ServiceConfig { listen_address: "127.0.0.1:0".into(), model_paths: paths, ..ServiceConfig::default() };
    let texts: Vec<String> = s.artifacts.split.test.iter().take(200).map(|m| m.message.text.clone()).collect();

    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(async move {
        let server = smartreply_service::start(config).await.map_err(|e| e.to_string())?;
        let base = format!("http://{}", server.local_addr());
        let client = reqwest::Client::new();
        let mut tasks = Vec::new();
        for _ in 0..100 {
            let (client, url) = (client.clone(), format!("{base}/v1/suggest"));
            tasks.push(tokio::spawn(async move {
                let resp = client
                    .post(url)
                    .header("content-type", "application/json")
                    .body(r#"{"text":"where are you"}"#)
                    .send()
                    .await?;
                resp.bytes().await
            }));
        }
        let mut bodies = Vec::new();
        for t in tasks {
            bodies.push(t.await.map_err(|e| e.to_string())?.map_err(|e| e.to_string())?);
        }
        let identical = bodies.iter().all(|b| b == &bodies[0]);

        let mut bad = 0;
        let mut scored = 0;
        for text in &texts {
            let resp: serde_json::Value = client
                .post(format!("{base}/v1/predict"))
                .json(&serde_json::json!({ "text": text, "k": 10 }))
                .send()
                .await
                .map_err(|e| e.to_string())?
                .json()
                .await
                .map_err(|e| e.to_string())?;
            let scores: Vec<f64> =
                resp["intents"].as_array().into_iter().flatten().filter_map(|i| i["score"].as_f64()).collect();
            scored += usize::from(!scores.is_empty());
            let ordered = scores.windows(2).all(|w| w[0] >= w[1]);
            let bounded = scores.iter().all(|s| (-1.0..=1.0).contains(s));
            bad += usize::from(!(ordered && bounded));
        }
        server.shutdown().await.map_err(|e| e.to_string())?;
        check(
            identical && bad == 0 && scored > 0,
            format!(
                "100 parallel /v1/suggest bodies identical: {identical}; /v1/predict on {} messages: {bad} with unordered or out-of-range scores",
                texts.len()
            ),
        )
    })
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("gradient fidelity", gradient_fidelity),
        ("frozen inference", frozen_inference),
        ("centroid oracle", centroid_oracle),
        ("top-1 lift and top-4 accuracy", table_one),
        ("sweep direction", sweep_direction),
        ("merge policy oracle", merge_oracle),
        ("suggest totality", suggest_totality),
        ("pipeline determinism", pipeline_determinism),
        ("serialization", serialization),
        ("service contract", service_contract),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
