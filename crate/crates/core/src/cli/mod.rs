//! The `leadwise` command surface: `synth | train | eval | explain | prune |
//! stats`.
//!
//! Settings resolve in the order preset, `--config` file, named flags,
//! then `--set key=value` overrides. Progress goes to standard error
//! through `log`; artifacts go to files. Exit codes: 0 success, 2 usage or
//! configuration error, 1 runtime failure.

pub mod commands;
pub mod config;
pub mod rundir;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::compress::PruneScope;
use crate::error::Error;
use crate::explain::CamScore;
use crate::model::Task;

pub use config::{Preset, RunConfig};
pub use rundir::RunDir;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "leadwise", version, about = "Three-lead ECG classification with lead-wise attention")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with evidence masks.
    Synth(SynthArgs),
    /// Train with stratified k-fold cross-validation.
    Train(TrainArgs),
    /// Score a trained checkpoint.
    Eval(EvalArgs),
    /// Explain predictions with lead-wise Grad-CAM.
    Explain(ExplainArgs),
    /// Magnitude-prune a checkpoint and write it sparse.
    Prune(PruneArgs),
    /// Print parameter, FLOP and checkpoint-size statistics.
    Stats(StatsArgs),
}

/// Options shared by every command that builds a run configuration.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Starting configuration before the file and overrides apply.
    #[arg(long, value_enum, default_value_t = Preset::Full)]
    pub preset: Preset,
    /// Override any configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Number of classes, taken in order from normal, no_p, st_up,
    /// wide_qrs, tall_t.
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 200)]
    pub per_class: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = Task::MultiClass)]
    pub task: Task,
    /// White-noise standard deviation in millivolts.
    #[arg(long, default_value_t = 0.03)]
    pub noise_mv: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Dataset manifest (`data.manifest`).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Run name (`run.name`).
    #[arg(long)]
    pub name: Option<String>,
    /// Parent directory of run directories (`run.dir`).
    #[arg(long)]
    pub runs_dir: Option<PathBuf>,
    /// Number of cross-validation rounds to run (`train.rounds`).
    #[arg(long)]
    pub folds: Option<usize>,
    /// Total epochs (`train.epochs_total`).
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Seed for folds, initialization and augmentation (`train.seed`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Lead selection such as `I,II,V1` (`data.leads`).
    #[arg(long)]
    pub leads: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run directory written by `train`; scores the held-out fold of
    /// `--round`.
    #[arg(long, conflicts_with = "checkpoint")]
    pub run: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub round: usize,
    /// Checkpoint to score on every record of `--manifest`.
    #[arg(long, requires = "manifest")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Metrics file (default: `eval_round<N>` in the run directory, or the
    /// checkpoint path with an `.eval` extension).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Record to explain; writes an SVG figure.
    #[arg(long, required_unless_present = "manifest", conflicts_with = "manifest")]
    pub record: Option<PathBuf>,
    /// Class to explain (default: the predicted class).
    #[arg(long)]
    pub class: Option<usize>,
    /// Differentiated score: `logit` (standard Grad-CAM) or `log_prob`.
    #[arg(long, default_value_t = CamScore::Logit)]
    pub score: CamScore,
    /// Figure path (default: next to the record, `.svg`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Batch mode: localization and classifier-randomization reports over
    /// the records of this manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Batch mode output directory.
    #[arg(long, requires = "manifest")]
    pub out_dir: Option<PathBuf>,
    /// Batch mode: number of records, taken in manifest order.
    #[arg(long, default_value_t = 100)]
    pub limit: usize,
    /// Batch mode: seed of the classifier re-initialization.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output checkpoint (written sparse).
    #[arg(long)]
    pub out: PathBuf,
    /// Fraction of weights to zero (`prune.sparsity`).
    #[arg(long)]
    pub sparsity: Option<f64>,
    /// `global` or `per_layer` (`prune.scope`).
    #[arg(long)]
    pub scope: Option<PruneScope>,
    /// Fine-tune the surviving weights on `--manifest` after pruning.
    #[arg(long, requires = "manifest")]
    pub finetune: bool,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Report this checkpoint's configuration and serialized sizes.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Also write the stats block to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Exit code for an error: configuration mistakes are usage errors.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code. Errors are reported on standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match commands::execute(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
