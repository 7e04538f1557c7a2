//! `asacd`: the study workflow as subcommands.
//!
//! Every artifact starts with a `#` provenance header (tool version,
//! resolved config hash, seed, resolved config) and is written only under
//! the directory given by `--out`.

pub mod artifacts;
pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_INTERNAL: i32 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Internal,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub code: String,
    pub message: String,
}

impl CliError {
    pub fn validation(code: &str, message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Validation,
            code: code.into(),
            message: message.into(),
        }
    }

    pub fn internal(code: &str, message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Internal,
            code: code.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Validation => EXIT_VALIDATION,
            ErrorKind::Internal => EXIT_INTERNAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "error[{}]: {}", self.code, self.message)
    }
}

impl From<asacd_core::Error> for CliError {
    fn from(e: asacd_core::Error) -> Self {
        let kind = if e.is_validation() {
            ErrorKind::Validation
        } else {
            ErrorKind::Internal
        };
        CliError {
            kind,
            code: e.code().into(),
            message: e.to_string(),
        }
    }
}

impl From<asacd_service::ServiceError> for CliError {
    fn from(e: asacd_service::ServiceError) -> Self {
        use asacd_service::ServiceError as S;
        let kind = match e {
            S::Storage(_) => ErrorKind::Internal,
            _ => ErrorKind::Validation,
        };
        CliError {
            kind,
            code: e.code().into(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "asacd",
    version,
    about = "Discourse diagnostics and facilitation toolkit"
)]
pub struct Cli {
    /// Study config file (TOML); overrides ASACD_CONFIG.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Master seed; overrides ASACD_SEED and the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a delimited or record file into a validated corpus.
    Ingest(InputArgs),
    /// Biomarker profiles and the stratified prevalence table.
    Analyze(AnalyzeArgs),
    /// PMI associations and cross-validated predictive validation.
    Mine(MineArgs),
    /// Percentile thresholds and frequency distributions per marker.
    Calibrate(CalibrateArgs),
    /// Generate the synthetic dialogue corpus.
    Synth(SynthArgs),
    /// Train the bigram model and cultural reference.
    TrainScorer(TrainScorerArgs),
    /// Alignment loss of every text in a file.
    Score(ScoreArgs),
    /// Draft reframing suggestions for every text in a file.
    Reframe(ScoreArgs),
    /// Simulated cluster-randomised trials.
    Simulate(SimulateArgs),
    /// Run the facilitation server.
    Serve(ServeArgs),
    /// Bundle artifacts of earlier runs with an index and summary.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// `.csv` (header row) or `.jsonl` record file.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub text_column: Option<String>,
    #[arg(long)]
    pub sentiment_column: Option<String>,
    #[arg(long)]
    pub id_column: Option<String>,
    /// Directory with replacement lexicon files.
    #[arg(long, value_name = "DIR")]
    pub lexicons: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub input: InputArgs,
}

#[derive(Debug, Args)]
pub struct MineArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Add-k smoothing of the PMI tables.
    #[arg(long)]
    pub smoothing_k: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub percentile: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub dialogues: Option<usize>,
    /// Style shares `inclusive,neutral,generalising,exclusive`.
    #[arg(long)]
    pub dist: Option<String>,
    /// `blocked` or `independent`.
    #[arg(long)]
    pub sampling: Option<String>,
    /// Phrase bank directory (one subdirectory per topic).
    #[arg(long, value_name = "DIR")]
    pub banks: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainScorerArgs {
    /// Training corpus; the shipped synthetic training set when absent.
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// `.csv`, `.jsonl`, or plain text with one utterance per line.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Weights `linguistic,development,cultural`.
    #[arg(long)]
    pub weights: Option<String>,
    /// Directory from `train-scorer`.
    #[arg(long, value_name = "DIR")]
    pub assets: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub lexicons: Option<PathBuf>,
    #[arg(long)]
    pub text_column: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub preset: Option<String>,
    /// Trial config file, used instead of a preset.
    #[arg(long, value_name = "FILE")]
    pub trial_config: Option<PathBuf>,
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Comma-separated doses for a dose-response run, e.g. `0,1,2,4`.
    #[arg(long)]
    pub doses: Option<String>,
    #[arg(long)]
    pub dose_seeds: Option<usize>,
    /// Grid-search delta and p_accept against the scenario targets.
    #[arg(long)]
    pub calibrate: bool,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub addr: Option<String>,
    #[arg(long, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
    /// fsync every appended event.
    #[arg(long)]
    pub fsync: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Output directory of an earlier run; repeatable.
    #[arg(long = "from", value_name = "DIR", required = true)]
    pub from: Vec<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

/// Parses `argv` and runs it, returning the process exit code. Messages go
/// to the given writers.
pub fn run<I, T>(argv: I, env: config::Env, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as K;
            let text = e.render().to_string();
            return match e.kind() {
                K::DisplayHelp
                | K::DisplayVersion
                | K::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = write!(stdout, "{text}");
                    if e.kind() == K::DisplayHelpOnMissingArgumentOrSubcommand {
                        EXIT_VALIDATION
                    } else {
                        EXIT_OK
                    }
                }
                _ => {
                    let _ = write!(
                        stderr,
                        "error[usage]: {}",
                        text.trim_start_matches("error: ")
                    );
                    EXIT_VALIDATION
                }
            };
        }
    };
    match commands::dispatch(cli, env, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "{e}");
            e.exit_code()
        }
    }
}
