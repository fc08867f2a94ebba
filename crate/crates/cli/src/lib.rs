//! The `idtrack` command line: simulate, train, infer, eval, swap-test,
//! shuffle-test and serve.
//!
//! Every command reads an optional TOML run configuration, applies flag
//! overrides, validates the result before doing any work and writes the
//! resolved configuration into its output directory. Exit codes: 0 on
//! success, 1 on invalid configuration or runtime failure, 2 on usage
//! errors, 3 when an evaluation threshold from the configuration is missed.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

mod commands;
pub mod config;
pub mod serve;

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] idtrack::Error),
    #[error("threshold not met: {0}")]
    Threshold(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Threshold(_) => 3,
            CliError::Invalid(_) | CliError::Io(_) | CliError::Core(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "idtrack", version, about = "Identify and track visually identical robots")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (paths.out).
    #[arg(long, global = true, env = config::OUT_ENV)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate labelled sequences and a manifest.
    Simulate(SimulateArgs),
    /// Train the association network on a manifest.
    Train(TrainArgs),
    /// Run a checkpoint over sequences and write per-frame predictions.
    Infer(InferArgs),
    /// Compare methods on held-out sequences.
    Eval(EvalArgs),
    /// Measure recovery after two robots' broadcasts are exchanged.
    SwapTest(SwapArgs),
    /// Compare success on ordered and frame-shuffled sequences.
    ShuffleTest(ShuffleArgs),
    /// Serve a labelling session over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// sim.n_robots
    #[arg(long, visible_alias = "n")]
    pub n_robots: Option<usize>,
    /// sim.max_detections
    #[arg(long, visible_alias = "m")]
    pub max_detections: Option<usize>,
    /// simulate.frames per sequence
    #[arg(long)]
    pub frames: Option<usize>,
    /// simulate.sequences
    #[arg(long)]
    pub sequences: Option<usize>,
    /// sim.seed (master seed)
    #[arg(long)]
    pub seed: Option<u64>,
    /// sim.p_fn
    #[arg(long)]
    pub p_fn: Option<f64>,
    /// sim.p_fp
    #[arg(long)]
    pub p_fp: Option<f64>,
    /// sim.sigma_x (metres)
    #[arg(long)]
    pub sigma_x: Option<f64>,
    /// sim.sigma_y (metres)
    #[arg(long)]
    pub sigma_y: Option<f64>,
    /// sim.sigma_phi (radians)
    #[arg(long)]
    pub sigma_phi: Option<f64>,
    /// sim.occlusion_rate
    #[arg(long)]
    pub occlusion_rate: Option<f64>,
    /// sim.broadcast_dropout
    #[arg(long)]
    pub broadcast_dropout: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// paths.manifest
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// paths.fine_tune: checkpoint to continue from
    #[arg(long)]
    pub fine_tune: Option<PathBuf>,
    /// train.epochs
    #[arg(long)]
    pub epochs: Option<usize>,
    /// train.learning_rate
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// train.lr_decay
    #[arg(long)]
    pub lr_decay: Option<f64>,
    /// train.l2
    #[arg(long)]
    pub l2: Option<f64>,
    /// train.bptt_window
    #[arg(long)]
    pub bptt_window: Option<usize>,
    /// train.chunk_len
    #[arg(long)]
    pub chunk_len: Option<usize>,
    /// train.batch_sequences
    #[arg(long)]
    pub batch_sequences: Option<usize>,
    /// train.hidden_size
    #[arg(long)]
    pub hidden_size: Option<usize>,
    /// train.lstm_layers
    #[arg(long)]
    pub lstm_layers: Option<usize>,
    /// train.seed
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub common: Common,
    /// paths.manifest
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// paths.checkpoint
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// paths.manifest
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// eval.methods, comma separated (kalman-ha, kalman-ha2, jpda, net)
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// paths.checkpoint
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// eval.min_net_success
    #[arg(long)]
    pub min_net_success: Option<f64>,
    /// eval.min_margin_over_kalman_ha
    #[arg(long)]
    pub min_margin_over_kalman_ha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SwapArgs {
    #[command(flatten)]
    pub common: Common,
    /// paths.manifest
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// paths.checkpoint
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// swap.trials
    #[arg(long)]
    pub trials: Option<usize>,
    /// swap.swap_len (frames)
    #[arg(long)]
    pub swap_len: Option<usize>,
    /// swap.horizon (frames)
    #[arg(long)]
    pub horizon: Option<usize>,
    /// swap.stable_frames
    #[arg(long)]
    pub stable_frames: Option<usize>,
    /// swap.warmup (frames)
    #[arg(long)]
    pub warmup: Option<usize>,
    /// swap.seed
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ShuffleArgs {
    #[command(flatten)]
    pub common: Common,
    /// paths.manifest
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// paths.checkpoint
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// shuffle.seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// shuffle.min_gap
    #[arg(long)]
    pub min_gap: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub common: Common,
    /// paths.manifest: sequences shown in the session
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// serve.host
    #[arg(long)]
    pub host: Option<String>,
    /// serve.port
    #[arg(long)]
    pub port: Option<u16>,
    /// serve.static_dir
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            e.exit_code()
        }
    }
}
