//! `mdhan` command-line interface.
//!
//! Errors are reported on stderr as a single JSON line
//! `{"error": "...", "kind": "...", "code": N}` with exit codes:
//! 2 usage, 3 missing file, 4 malformed input, 5 failed gradient check,
//! 1 anything else.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mdhan::exec::ExecMode;

#[derive(Debug, Parser)]
#[command(name = "mdhan", version, about = "Multi-modal hierarchical attention network for depression detection")]
pub struct Cli {
    /// TOML run configuration; command-line flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Directory with lexicon assets (stopwords.txt, symptoms.txt, ...).
    /// Missing files fall back to the bundled copies.
    #[arg(long, global = true, env = "MDHAN_ASSETS", value_name = "DIR")]
    pub assets: Option<PathBuf>,
    /// Run per-user work on all cores or on one thread. Results are identical.
    #[arg(long, global = true, value_enum, default_value_t = ExecArg::Parallel)]
    pub exec: ExecArg,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExecArg {
    Sequential,
    Parallel,
}

impl From<ExecArg> for ExecMode {
    fn from(e: ExecArg) -> Self {
        match e {
            ExecArg::Sequential => ExecMode::Sequential,
            ExecArg::Parallel => ExecMode::Parallel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Default dimensions (d = 100, hidden = 100, MLP 100, 200 tweets).
    Full,
    /// Small dimensions for synthetic corpora on one machine.
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    All,
}

/// Model and training overrides.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Seed for initialization, shuffling and dropout.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub mlp_hidden: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Maximum tweets per user (most recent kept).
    #[arg(long)]
    pub l_max: Option<usize>,
    /// Maximum tokens per tweet.
    #[arg(long)]
    pub n_max: Option<usize>,
    /// Window of the optional word-level max pooling.
    #[arg(long)]
    pub max_pool_words: Option<usize>,
    /// Enabled modalities as letters from S, E, T, D (e.g. "SE"); "-" for none.
    #[arg(long)]
    pub modalities: Option<String>,
    /// Leave the hierarchical text encoder out of the fusion.
    #[arg(long)]
    pub no_text: bool,
}

/// Corpus filtering, split and feature-extraction overrides.
#[derive(Debug, Clone, Default, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub min_posts: Option<usize>,
    #[arg(long)]
    pub max_followers: Option<u64>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long)]
    pub lda_iterations: Option<usize>,
    #[arg(long)]
    pub lda_seed: Option<u64>,
    /// Nearest neighbours added per symptom seed word.
    #[arg(long)]
    pub expansion_k: Option<usize>,
    /// Minimum cosine similarity for symptom expansion.
    #[arg(long)]
    pub expansion_tau: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Corpus in JSON Lines, one user per line.
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    /// Word vectors in whitespace-separated text format.
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labelled corpus (and optionally matching embeddings).
    Synth {
        #[arg(long, default_value_t = 64)]
        users: usize,
        /// Strength of every planted channel, in [0, 1].
        #[arg(long, default_value_t = 1.0)]
        signal: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        text_signal: Option<f64>,
        #[arg(long)]
        social_signal: Option<f64>,
        #[arg(long)]
        emotion_signal: Option<f64>,
        /// Plant text signal in half the depressed users and modality signal in the rest.
        #[arg(long)]
        split_channels: bool,
        #[arg(long, value_name = "FILE", default_value = "corpus.jsonl")]
        out: PathBuf,
        #[arg(long, value_name = "FILE")]
        embeddings_out: Option<PathBuf>,
        #[arg(long, default_value_t = 16)]
        dim: usize,
    },
    /// Validate and filter a corpus; print class counts.
    Ingest {
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Write the filtered corpus here.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Write raw and normalized 76-d feature tables for the split corpus.
    Features {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
    },
    /// Fit the topic model on the training users.
    LdaFit {
        #[arg(long, value_name = "FILE")]
        corpus: Option<PathBuf>,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long, default_value_t = 10)]
        top_words: usize,
        #[arg(long, value_name = "FILE", default_value = "lda.json")]
        out: PathBuf,
    },
    /// Train a model; writes model.ckpt, history.json, metrics.json.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
    },
    /// Evaluate a checkpoint on the split recorded in it.
    Eval {
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Train and evaluate every ablation variant on one shared split.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Comma-separated variant names (MDHAN, HAN-only, MM-only, MDHAN-X, X+HAN).
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<String>>,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
    },
    /// Accuracy as a function of the number of tweets per user.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Comma-separated tweet counts.
        #[arg(long = "l", value_delimiter = ',')]
        l_values: Option<Vec<usize>>,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
    },
    /// Export attention reports (HTML + JSON) and symptom word clouds.
    Explain {
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        /// Only these user ids (comma-separated).
        #[arg(long, value_delimiter = ',')]
        users: Option<Vec<String>>,
        #[arg(long, default_value_t = 20)]
        top_n: usize,
        #[arg(long, default_value_t = 5)]
        top_categories: usize,
        #[arg(long, value_enum, default_value_t = RankArg::Mentions)]
        rank: RankArg,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
    },
    /// Check full-model gradients against central differences on synthetic users.
    Gradcheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        users: usize,
        #[arg(long, default_value_t = 16)]
        coords: usize,
        #[arg(long, default_value_t = 1e-5)]
        h: f64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Multinomial Naive Bayes baseline on the same split.
    BaselineNb {
        #[arg(long, value_name = "FILE")]
        corpus: Option<PathBuf>,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RankArg {
    Mentions,
    Tweets,
}

fn emit_error(kind: &str, code: u8, message: &str) -> ExitCode {
    let line = serde_json::json!({ "error": message, "kind": kind, "code": code });
    eprintln!("{line}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let text: Vec<&str> = msg
                .lines()
                .map(str::trim)
                .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more information"))
                .filter(|l| !l.is_empty())
                .collect();
            let text = text.join(" ");
            return emit_error("usage", 2, text.trim_start_matches("error: "));
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind) = commands::classify(&e);
            emit_error(kind, code, &chain_message(&e))
        }
    }
}

/// Error chain joined with ": ", skipping causes already quoted by their parent.
fn chain_message(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if msg.contains(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg
}
