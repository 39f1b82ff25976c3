use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use modalbank::Topology;

#[derive(Debug, Parser)]
#[command(name = "modalbank", version, about = "Modal sound synthesis with FEM oracles and IIR resonator banks")]
pub struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print a machine-readable JSON result on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate random convex shapes and their meshes as JSON files.
    GenShapes(GenShapesArgs),
    /// Build a dataset container (shapes, modes, gains, mel targets).
    GenDataset(GenDatasetArgs),
    /// Fit a filter bank directly to a WAV impulse response.
    Fit(FitArgs),
    /// Train the predictor on a dataset.
    Train(TrainArgs),
    /// Render audio from fitted parameters, a checkpoint or the modal oracle.
    Render(RenderArgs),
    /// Log-spectrogram MAE/MSE of predictions against oracle renders.
    Eval(EvalArgs),
    /// Time the FEM path against the predictor path.
    Bench(BenchArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenShapesArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Boundary vertex count; drawn from the configured range when absent.
    #[arg(long)]
    pub n_boundary: Option<usize>,
    #[arg(long)]
    pub triangles: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenDatasetArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub shapes: Option<usize>,
    #[arg(long)]
    pub materials: Option<usize>,
    #[arg(long)]
    pub positions: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub topology: Option<Topology>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Raw parameters (JSON).
    #[arg(long, default_value = "params.json")]
    pub out: PathBuf,
    /// Loss history (CSV `step,loss,lr`).
    #[arg(long, default_value = "loss.csv")]
    pub history: PathBuf,
    /// Exported second-order sections (JSON).
    #[arg(long)]
    pub sos: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub topology: Option<Topology>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub max_seconds: Option<f64>,
    #[arg(long, default_value = "model.ckpt")]
    pub out: PathBuf,
    /// Training log (CSV `step,train_loss,val_loss,lr`).
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Raw parameters written by `fit`.
    #[arg(long, conflicts_with_all = ["sos", "checkpoint"])]
    pub params: Option<PathBuf>,
    /// Second-order sections JSON.
    #[arg(long, conflicts_with = "checkpoint")]
    pub sos: Option<PathBuf>,
    /// Predictor checkpoint; requires --dataset and --sample.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Dataset; without --checkpoint renders the modal oracle.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub sample: Option<usize>,
    /// WAV excitation (default: unit impulse of the configured length).
    #[arg(long)]
    pub excitation: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitChoice {
    Val,
    Train,
    All,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Checkpoints to evaluate (repeatable).
    #[arg(long)]
    pub checkpoint: Vec<PathBuf>,
    /// Topologies to evaluate by direct per-sample fitting (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub fit: Vec<Topology>,
    #[arg(long, value_enum, default_value = "val")]
    pub split: SplitChoice,
    /// Evaluate only the first N samples of the split.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',')]
    pub vertices: Option<Vec<usize>>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long)]
    pub positions: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub addr: Option<String>,
}
