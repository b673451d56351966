//! Command-line pipeline for lidar terrain extension.
//!
//! Subcommands cover the full workflow: `gen-data` and `synth` produce
//! training samples, `train` fits the predictor, `predict` writes extended
//! clouds, `eval` scores predictions, and `gradcheck` verifies the
//! gradients. Settings come from an optional TOML config file; flags given
//! on the command line win over file values.
//!
//! Every command is deterministic given its seeds: running it twice
//! produces byte-identical artifacts. Exit codes: 0 success, 1 usage or
//! configuration error, 2 data or format error, 3 numeric failure.

mod config;
mod data_cmd;
mod eval_cmd;
mod model_cmd;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use terrain_core::dataset::SceneKind;
use terrain_core::Error;

#[derive(Debug, Parser)]
#[command(
    name = "terrain",
    version,
    about = "Predicts occluded traversable terrain around lidar scans",
    disable_help_subcommand = true
)]
struct Cli {
    /// TOML config file with [dataset], [model], [loss], [train] sections.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build training samples from scans paired with ground truth.
    GenData(GenDataArgs),
    /// Generate synthetic scenes and write them as training samples.
    Synth(SynthArgs),
    /// Train the predictor on a directory of samples.
    Train(TrainArgs),
    /// Predict terrain for an input cloud and export the extended cloud.
    Predict(PredictArgs),
    /// Score predictions against sample ground truth.
    Eval(EvalArgs),
    /// Compare analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct GenDataArgs {
    /// Input directory: either velodyne/ + labels/ + voxels/ subdirectories
    /// of raw scans, or native `<id>.scan.tepc` / `<id>.gt.tepc` pairs.
    /// A `masks/<id>.json` file (or `<id>.masks.json` next to a pair)
    /// supplies precomputed masks for that scan.
    #[arg(long, value_name = "DIR")]
    input: PathBuf,
    /// Directory receiving one sample subdirectory per accepted scan.
    #[arg(long, value_name = "DIR")]
    output: PathBuf,
    /// Buffer distance in meters; overrides the config file.
    #[arg(long, value_name = "METERS")]
    d_y: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SceneKindArg {
    LCorner,
    TIntersection,
    Straight,
}

impl From<SceneKindArg> for SceneKind {
    fn from(kind: SceneKindArg) -> SceneKind {
        match kind {
            SceneKindArg::LCorner => SceneKind::LCorner,
            SceneKindArg::TIntersection => SceneKind::TIntersection,
            SceneKindArg::Straight => SceneKind::Straight,
        }
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Scene layout to generate.
    #[arg(long, value_enum)]
    kind: SceneKindArg,
    /// Number of samples to write.
    #[arg(long, default_value_t = 1)]
    count: u64,
    /// Base seed; sample i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving one sample subdirectory per scene.
    #[arg(long, value_name = "DIR")]
    output: PathBuf,
    /// Buffer distance in meters; overrides the config file.
    #[arg(long, value_name = "METERS")]
    d_y: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// A sample directory, or a directory of sample subdirectories.
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// Checkpoint output path.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Continue from an existing checkpoint instead of initializing.
    #[arg(long, value_name = "FILE")]
    resume: Option<PathBuf>,
    /// Loss-trace output path; defaults to the checkpoint path with a
    /// `.trace.json` extension.
    #[arg(long, value_name = "FILE")]
    trace: Option<PathBuf>,
    /// Number of optimization steps; overrides the config file.
    #[arg(long)]
    steps: Option<u64>,
    /// Learning rate; overrides the config file.
    #[arg(long)]
    lr: Option<f64>,
    /// Run seed for initialization and sample selection; overrides the
    /// config file. Ignored when resuming.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Trained checkpoint to load.
    #[arg(long, value_name = "FILE")]
    checkpoint: PathBuf,
    /// Input cloud: a `.tepc` file, or a sample directory (its input cloud
    /// is used and its target becomes the ground-truth overlay).
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Output directory for predictions.tepc, extended.tepc and the PLY
    /// renderings.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Downsampling seed; defaults to the sample's stored seed, or 0 for a
    /// bare cloud.
    #[arg(long)]
    seed: Option<u64>,
    /// Ground-truth cloud drawn in teal in the extended PLY; overrides a
    /// sample directory's target.
    #[arg(long, value_name = "FILE")]
    gt: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MembershipArg {
    /// Inside the sample's masks.
    Mask,
    /// Within --rho meters of a target point.
    Proximity,
    /// Either of the two.
    Either,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Directory of sample subdirectories holding the ground truth.
    #[arg(long, value_name = "DIR")]
    samples: PathBuf,
    /// Directory of predictions: `<id>.tepc` files or `<id>/predictions.tepc`
    /// subdirectories as written by predict.
    #[arg(long, value_name = "DIR")]
    predictions: PathBuf,
    /// Report path prefix; writes `<prefix>.json` and `<prefix>.txt`.
    #[arg(long, value_name = "PREFIX")]
    report: PathBuf,
    /// Rule for counting a prediction as correct.
    #[arg(long, value_enum, default_value_t = MembershipArg::Either)]
    membership: MembershipArg,
    /// Proximity radius in meters for the accuracy rule.
    #[arg(long, default_value_t = terrain_core::objective::DEFAULT_PROXIMITY_RHO)]
    rho: f64,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Base seed for the random fixtures.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of independent fixture draws.
    #[arg(long, default_value_t = 20)]
    draws: usize,
    /// Deliberately corrupt the named tensor's gradient to verify the check
    /// fails loudly.
    #[arg(long, hide = true, value_name = "TENSOR")]
    corrupt: Option<String>,
}

/// Exit code for an error: configuration problems are usage errors, numeric
/// failures get their own code, and everything else is a data/format error.
fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 1,
        Error::Numeric(_) => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> terrain_core::Result<i32> {
    let file_cfg = config::load(cli.config.as_deref())?;
    match cli.command {
        Command::GenData(args) => data_cmd::gen_data(&args, &file_cfg),
        Command::Synth(args) => data_cmd::synth(&args, &file_cfg),
        Command::Train(args) => model_cmd::train(&args, &file_cfg),
        Command::Predict(args) => model_cmd::predict(&args, &file_cfg),
        Command::Eval(args) => eval_cmd::eval(&args, &file_cfg),
        Command::Gradcheck(args) => eval_cmd::gradcheck(&args, &file_cfg),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            // Help and version requests are not errors.
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            eprint!("{e}");
            std::process::exit(1);
        }
    };
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
    }
}
