use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;
use smartreply_core::corpus::{corpus_length_histogram, generate_corpus, load_corpus, write_corpus, Corpus};
use smartreply_core::embedding::{self, load_model, save_model, Mode, Objective};
use smartreply_core::eval::{self, compare, evaluate_detailed, ComplementarityBuckets, EvalReport};
use smartreply_core::intent::{load_centroids, save_centroids, FrequencyModel, NearestCentroid};
use smartreply_core::pipeline::{self, MineOptions};
use smartreply_core::replies::save_catalog;
use smartreply_core::{CorpusSpec, GuardConfig, TrainingConfig};
use smartreply_service::{Engine, ModelPaths, ServiceConfig, SuggestRequest};

use crate::{
    EvalArgs, ExportArgs, FitIntentsArgs, GenCorpusArgs, MineRepliesArgs, ModeArg, ServeArgs, ServiceArgs,
    SuggestArgs, SweepArgs, TrainEmbedArgs, TrainingArgs,
};

fn read_spec(path: Option<&Path>) -> Result<CorpusSpec> {
    match path {
        None => Ok(CorpusSpec::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading spec {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing spec {}", p.display()))
        }
    }
}

fn read_corpus(path: &Path) -> Result<Corpus> {
    load_corpus(path).with_context(|| format!("loading corpus {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn models_dir(dir: &Path) -> Result<ModelPaths> {
    fs::create_dir_all(dir).with_context(|| format!("creating models directory {}", dir.display()))?;
    Ok(ModelPaths::in_dir(dir))
}

impl TrainingArgs {
    fn resolve(&self) -> Result<TrainingConfig> {
        let mut c = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing training config {}", p.display()))?
            }
            None => TrainingConfig::default(),
        };
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(m) = self.mode {
            c.mode = match m {
                ModeArg::Dbow => Mode::Dbow,
                ModeArg::Dm => Mode::Dm,
            };
        }
        if let Some(v) = self.dim {
            c.dim = v;
        }
        if let Some(v) = self.window {
            c.window_k = v;
        }
        if let Some(v) = self.alpha {
            c.alpha = v;
        }
        if let Some(v) = self.alpha_min {
            c.alpha_min = v;
        }
        if let Some(v) = self.sample {
            c.sample = v;
        }
        if let Some(v) = self.epochs {
            c.epochs = v;
        }
        if let Some(v) = self.min_count {
            c.min_count = v;
        }
        if let Some(v) = self.infer_steps {
            c.infer_steps = v;
        }
        if let Some(k) = self.negative {
            c.objective = Objective::NegativeSampling { k_neg: k };
        }
        if self.exact_softmax {
            c.objective = Objective::ExactSoftmax;
        }
        c.validate().context("invalid training config")?;
        Ok(c)
    }
}

impl ServiceArgs {
    fn resolve(&self) -> Result<ServiceConfig> {
        let mut c = match &self.config {
            Some(p) => ServiceConfig::load(p)?,
            None => ServiceConfig::default(),
        };
        if let Some(dir) = &self.models {
            c.model_paths = ModelPaths::in_dir(dir);
        }
        if let Some(v) = self.intents_k {
            c.intents_k = v;
        }
        if let Some(v) = self.min_tokens {
            c.guard.min_tokens = v;
        }
        if let Some(v) = self.min_top_score {
            c.guard.min_top_score = v;
        }
        if let Some(v) = self.max_replies {
            c.guard.max_replies = v;
        }
        Ok(c)
    }
}

pub fn gen_corpus(args: GenCorpusArgs) -> Result<()> {
    let mut spec = read_spec(args.spec.as_deref())?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(n) = args.conversations {
        spec.conversations = n;
    }
    let corpus = generate_corpus(&spec).context("generating corpus")?;
    write_corpus(&args.out, &corpus).with_context(|| format!("writing {}", args.out.display()))?;
    if let Some(path) = &args.write_spec {
        write_json(path, &spec)?;
        println!("wrote {}", path.display());
    }
    let labeled = corpus.labeled().len();
    let hist = corpus_length_histogram(corpus.records.iter().map(|r| r.message.text.as_str()));
    println!(
        "{} messages ({labeled} labeled) in {} conversations, mean length {:.2} tokens",
        corpus.len(),
        spec.conversations,
        hist.mean
    );
    for (len, count) in &hist.counts {
        println!("  {len:>3} tokens  {count}");
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

pub fn train_embed(args: TrainEmbedArgs) -> Result<()> {
    let config = args.training.resolve()?;
    let corpus = read_corpus(&args.corpus)?;
    let docs = embedding::documents(corpus.records.iter().map(|r| &r.message));
    let (model, stats) = embedding::train_with_stats(&docs, &config).context("training embedding")?;
    let paths = models_dir(&args.models)?;
    save_model(&model, &paths.embedding).context("saving embedding")?;
    let first = stats.epoch_losses.first().copied().unwrap_or(f64::NAN);
    let last = stats.epoch_losses.last().copied().unwrap_or(f64::NAN);
    println!(
        "trained on {} documents, vocabulary {}, {} steps, loss {first:.4} -> {last:.4}",
        docs.len(),
        model.vocabulary().len(),
        stats.steps
    );
    println!("embedding {}", model.checksum());
    println!("wrote {}", paths.embedding.display());
    Ok(())
}

pub fn fit_intents(args: FitIntentsArgs) -> Result<()> {
    ensure!(args.train_fraction > 0.0 && args.train_fraction <= 1.0, "--train-fraction must be in (0, 1]");
    let paths = models_dir(&args.models)?;
    let embedding = load_model(&paths.embedding).context("loading embedding")?;
    let corpus = read_corpus(&args.corpus)?;
    let split = pipeline::split(&corpus, args.train_fraction);
    let centroids = pipeline::fit_intents(&embedding, &split).context("fitting centroids")?;
    save_centroids(&centroids, &paths.centroids).context("saving centroids")?;
    println!("fitted {} intents on {} messages", centroids.classes().len(), split.train.len());
    for class in centroids.classes() {
        println!("  {:<24} {}", class.intent_id, class.support);
    }
    println!("wrote {}", paths.centroids.display());
    Ok(())
}

pub fn mine_replies(args: MineRepliesArgs) -> Result<()> {
    let spec = read_spec(args.spec.as_deref())?;
    let paths = models_dir(&args.models)?;
    let embedding = load_model(&paths.embedding).context("loading embedding")?;
    let centroids = load_centroids(&paths.centroids).context("loading centroids")?;
    let corpus = read_corpus(&args.corpus)?;
    let mut guard = GuardConfig::default();
    if let Some(v) = args.min_tokens {
        guard.min_tokens = v;
    }
    if let Some(v) = args.min_top_score {
        guard.min_top_score = v;
    }
    let fallback = if args.fallback.is_empty() { pipeline::default_fallback() } else { args.fallback };
    let catalog = pipeline::mine_catalog(
        &corpus,
        &embedding,
        &centroids,
        MineOptions {
            reply_templates: &spec.reply_templates,
            guard: &guard,
            top_responses: args.top_responses,
            fallback,
            version: &args.catalog_version,
        },
    )
    .context("mining replies")?;
    save_catalog(&catalog, &paths.catalog).context("saving catalog")?;
    println!("catalog {} covers {} intents", catalog.version, catalog.intents.len());
    for (intent, replies) in &catalog.intents {
        println!("  {intent:<24} {}", replies.join(" | "));
    }
    println!("wrote {}", paths.catalog.display());
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput {
    samples: usize,
    nnc: EvalReport,
    frequency: EvalReport,
    /// NNC is predictor a, the frequency baseline predictor b.
    complementarity: ComplementarityBuckets,
    top1_lift: f64,
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let paths = ModelPaths::in_dir(&args.models);
    let embedding = load_model(&paths.embedding).context("loading embedding")?;
    let centroids = load_centroids(&paths.centroids).context("loading centroids")?;
    let predictor = NearestCentroid::new(&centroids, &embedding)?;
    let corpus = read_corpus(&args.test)?;
    let split = pipeline::split(&corpus, args.train_fraction);
    let (train, test) = if args.all {
        let all = corpus.labeled();
        (all.clone(), all)
    } else {
        (split.train, split.test)
    };
    ensure!(!test.is_empty(), "no labeled messages to evaluate");

    let frequency = FrequencyModel::fit(train.iter().map(|m| m.intent_id.as_str()))?;
    let (nnc, nnc_top1) = evaluate_detailed(&predictor, &test, args.max_k)?;
    let (freq, freq_top1) = evaluate_detailed(&frequency, &test, args.max_k)?;
    let labels: Vec<String> = test.iter().map(|m| m.intent_id.clone()).collect();
    let buckets = compare(&nnc_top1, &freq_top1, &labels)?;

    print!("{}", nnc.render_text("nearest centroid"));
    print!("{}", freq.render_text("frequency baseline"));
    println!("complementarity (nearest centroid vs frequency)");
    println!("  both right       {:.4}", buckets.both_right);
    println!("  same wrong       {:.4}", buckets.same_wrong);
    println!("  only centroid    {:.4}", buckets.a_right_b_wrong);
    println!("  only frequency   {:.4}", buckets.b_right_a_wrong);
    println!("  different wrong  {:.4}", buckets.different_wrong);
    let output = EvalOutput {
        samples: test.len(),
        top1_lift: nnc.top1_accuracy - freq.top1_accuracy,
        nnc,
        frequency: freq,
        complementarity: buckets,
    };
    println!("top-1 lift over baseline {:+.4}", output.top1_lift);
    if let Some(path) = &args.out {
        write_json(path, &output)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn parse_grid(entries: &[String]) -> Result<BTreeMap<String, Vec<f64>>> {
    if entries.is_empty() {
        return Ok([("alpha".to_string(), vec![0.02, 0.5]), ("sample".to_string(), vec![1e-5, 0.5])].into());
    }
    let mut grid = BTreeMap::new();
    for entry in entries {
        let Some((name, values)) = entry.split_once('=') else {
            bail!("grid entry {entry:?} is not name=v1,v2");
        };
        let values = values
            .split(',')
            .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad value {v:?} in {entry:?}")))
            .collect::<Result<Vec<_>>>()?;
        grid.insert(name.trim().to_string(), values);
    }
    Ok(grid)
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    ensure!(args.repeats >= 2, "--repeats must be at least 2");
    let base = args.training.resolve()?;
    let grid = parse_grid(&args.grid)?;
    let corpus = read_corpus(&args.corpus)?;
    let docs = embedding::documents(corpus.records.iter().map(|r| &r.message));
    let split = pipeline::split(&corpus, args.train_fraction);
    let seeds: Vec<u64> = (0..args.repeats as u64).map(|i| base.seed.wrapping_add(i)).collect();
    let result = eval::sweep(&grid, &base, &docs, &split.train, &split.test, &seeds)?;
    print!("{}", result.render_text());
    if let Some(path) = &args.out {
        write_json(path, &result)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

pub fn serve(args: ServeArgs) -> Result<()> {
    let mut config = args.service.resolve()?;
    if let Some(listen) = args.listen {
        config.listen_address = listen;
    }
    if let Some(ms) = args.request_timeout_ms {
        config.request_timeout_ms = ms;
    }
    config.apply_env();
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let server = smartreply_service::start(config).await?;
        println!("listening on {}", server.local_addr());
        std::io::stdout().flush()?;
        server
            .serve_until(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

pub fn suggest(args: SuggestArgs) -> Result<()> {
    let config = args.service.resolve()?;
    config.guard.validate().map_err(anyhow::Error::msg)?;
    let engine = Engine::load(&config.model_paths, config.guard.clone(), config.intents_k)?;
    let response = engine.suggest(&SuggestRequest { text: args.text });
    if args.json {
        println!("{}", serde_json::to_string(&response)?);
    } else {
        println!("source: {}", serde_json::to_value(response.source)?.as_str().unwrap_or("?"));
        for reply in &response.replies {
            println!("{reply}");
        }
    }
    Ok(())
}

pub fn export_embeddings(args: ExportArgs) -> Result<()> {
    let paths: ModelPaths = ModelPaths::in_dir(&args.models);
    let embedding = load_model(&paths.embedding).context("loading embedding")?;
    let corpus = read_corpus(&args.corpus)?;
    let rows = eval::export_embeddings(&embedding, &corpus.labeled(), &args.out)?;
    println!("exported {rows} vectors of dimension {}", embedding.dim());
    println!("wrote {}", PathBuf::from(&args.out).display());
    Ok(())
}
