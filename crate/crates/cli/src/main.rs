use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser)]
#[command(name = "smartreply", version, about = "Train, evaluate and serve a smart-reply engine")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug). RUST_LOG also works.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled conversation corpus (JSON lines).
    GenCorpus(GenCorpusArgs),
    /// Train the paragraph-vector embedding on every corpus message.
    TrainEmbed(TrainEmbedArgs),
    /// Fit per-intent centroids on the training split of a corpus.
    FitIntents(FitIntentsArgs),
    /// Mine intent-to-reply pairs from conversations into a reply catalog.
    MineReplies(MineRepliesArgs),
    /// Score the centroid classifier and the frequency baseline on held-out messages.
    Eval(EvalArgs),
    /// Train and score over a hyperparameter grid, one parameter at a time.
    Sweep(SweepArgs),
    /// Serve /v1/predict, /v1/suggest and /health over HTTP.
    Serve(ServeArgs),
    /// Print suggested replies for one message.
    Suggest(SuggestArgs),
    /// Write one row per labeled message: intent id, then its inferred vector.
    ExportEmbeddings(ExportArgs),
}

#[derive(Args)]
pub struct GenCorpusArgs {
    /// Corpus spec (JSON). Defaults to the built-in ten-intent taxonomy.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Output corpus file.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the spec's conversation count.
    #[arg(long)]
    pub conversations: Option<usize>,
    /// Also write the effective spec (JSON) to this path.
    #[arg(long)]
    pub write_spec: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Dbow,
    Dm,
}

/// Training hyperparameters. Precedence: defaults < --config file < flags.
#[derive(Args, Clone)]
pub struct TrainingArgs {
    /// Training config file (TOML, any subset of fields).
    #[arg(long = "config")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Context half-width.
    #[arg(long)]
    pub window: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Final learning rate.
    #[arg(long)]
    pub alpha_min: Option<f64>,
    /// Down-sampling threshold for frequent words; 1 or more disables it.
    #[arg(long)]
    pub sample: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub min_count: Option<u64>,
    /// Gradient passes when inferring a vector for a new message.
    #[arg(long)]
    pub infer_steps: Option<usize>,
    /// Negative samples per step.
    #[arg(long, conflicts_with = "exact_softmax")]
    pub negative: Option<usize>,
    /// Use the full softmax instead of negative sampling (slow).
    #[arg(long)]
    pub exact_softmax: bool,
}

#[derive(Args)]
pub struct TrainEmbedArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Models directory; embedding.model is written here.
    #[arg(long)]
    pub models: PathBuf,
    #[command(flatten)]
    pub training: TrainingArgs,
}

#[derive(Args)]
pub struct FitIntentsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Models directory holding embedding.model; centroids.model is written here.
    #[arg(long)]
    pub models: PathBuf,
    /// Fraction of each intent's labeled messages used for fitting.
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
}

#[derive(Args)]
pub struct MineRepliesArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Models directory; catalog.json is written here.
    #[arg(long)]
    pub models: PathBuf,
    /// Corpus spec (JSON) whose reply templates name each response intent's replies.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Response intents kept per incoming intent.
    #[arg(long, default_value_t = 3)]
    pub top_responses: usize,
    /// Version string stored in the catalog.
    #[arg(long, default_value = "1")]
    pub catalog_version: String,
    /// Fallback reply; repeat for several. Defaults to a built-in list.
    #[arg(long = "fallback")]
    pub fallback: Vec<String>,
    #[arg(long)]
    pub min_tokens: Option<usize>,
    #[arg(long)]
    pub min_top_score: Option<f64>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub models: PathBuf,
    /// Labeled corpus file to evaluate on.
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub max_k: usize,
    /// Split used by fit-intents; evaluation uses the held-out part.
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    /// Evaluate on every labeled message instead of the held-out part.
    #[arg(long)]
    pub all: bool,
    /// Write the full report (JSON) here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Grid entry `name=v1,v2,...`; repeat per parameter. Defaults to alpha and sample.
    #[arg(long = "grid")]
    pub grid: Vec<String>,
    /// Seeds used are repeats consecutive values starting at the base seed.
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    /// Write the result (JSON) here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub training: TrainingArgs,
}

/// Service settings. Precedence: defaults < --config file < flags < SMARTREPLY_LISTEN.
#[derive(Args)]
pub struct ServiceArgs {
    /// Service config file (TOML).
    #[arg(long = "config")]
    pub config: Option<PathBuf>,
    /// Models directory; overrides the config's model_paths.
    #[arg(long)]
    pub models: Option<PathBuf>,
    #[arg(long)]
    pub intents_k: Option<usize>,
    #[arg(long)]
    pub min_tokens: Option<usize>,
    #[arg(long)]
    pub min_top_score: Option<f64>,
    #[arg(long)]
    pub max_replies: Option<usize>,
}

#[derive(Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub service: ServiceArgs,
    /// host:port to listen on.
    #[arg(long)]
    pub listen: Option<String>,
    #[arg(long)]
    pub request_timeout_ms: Option<u64>,
}

#[derive(Args)]
pub struct SuggestArgs {
    #[arg(long)]
    pub text: String,
    #[command(flatten)]
    pub service: ServiceArgs,
    /// Print the response as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub models: PathBuf,
    /// Output file (tab-separated).
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::GenCorpus(a) => commands::gen_corpus(a),
        Command::TrainEmbed(a) => commands::train_embed(a),
        Command::FitIntents(a) => commands::fit_intents(a),
        Command::MineReplies(a) => commands::mine_replies(a),
        Command::Eval(a) => commands::eval(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Serve(a) => commands::serve(a),
        Command::Suggest(a) => commands::suggest(a),
        Command::ExportEmbeddings(a) => commands::export_embeddings(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
