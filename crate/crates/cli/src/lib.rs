//! Command-line front end: synthesize → featurize → train → enhance →
//! evaluate → render, with file handoffs between stages.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] fsegan_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(_) => 2,
        }
    }
}

pub fn version_line() -> String {
    format!("fsegan {}", env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, Parser)]
#[command(name = "fsegan", version, about = "Speech enhancement with spectral and waveform GANs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a multi-condition corpus of (noisy stereo, clean mono) WAV pairs.
    Synth(SynthArgs),
    /// Compute normalized log-Mel features for a corpus manifest.
    Featurize(FeaturizeArgs),
    /// Train a generator (and discriminator) on features or waveforms.
    Train(TrainArgs),
    /// Enhance one feature file (spectral model) or WAV (waveform model).
    Enhance(EnhanceArgs),
    /// Score a corpus, with a checkpoint or unprocessed ("none").
    Eval(EvalArgs),
    /// Render one channel of a feature file as a PGM image.
    Render(RenderArgs),
    /// Stack enhanced and noisy features into a 3-channel file.
    ExportHybrid(HybridArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub count: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Corpus manifest, or the directory holding it.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Normalization statistics from the training split (required for test data).
    #[arg(long)]
    pub stats: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Feature directory (spectral model) or corpus manifest (waveform model).
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub depth: Option<String>,
    #[arg(long)]
    pub batch: Option<String>,
    #[arg(long)]
    pub steps: Option<String>,
}

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Needed when the input features are not normalized.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Generator checkpoint, or "none" to score the unprocessed input.
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Corpus manifest, or the directory holding it.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub stats: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct HybridArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Normalized noisy features.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Runs one invocation and returns its exit code: 0 on success, 1 on a usage
/// error, 2 when the command itself fails.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Featurize(a) => commands::featurize(&a),
        Command::Train(a) => commands::train(&a),
        Command::Enhance(a) => commands::enhance(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Render(a) => commands::render(&a),
        Command::ExportHybrid(a) => commands::export_hybrid(&a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
