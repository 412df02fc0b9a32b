//! Command-line front end. [`run`] parses arguments, applies an optional
//! `key=value` config file, and maps errors to exit codes: 0 on success, 2 for
//! usage or validation errors, 1 for runtime failures.

mod commands;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "adavox", version, about = "Adaptive voxel pyramids for point clouds")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Worker threads; 1 gives the reproducible single-thread mode.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    /// Seed for every random choice a command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// `key=value` file whose entries act as flags; explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Voxelize a point cloud, classify cells and build the merged pyramid.
    Voxelize(VoxelizeArgs),
    /// Compare a prediction against ground truth.
    Eval(EvalArgs),
    /// Time the adaptive pipeline against the fixed-resolution baseline.
    Bench(BenchArgs),
    /// Run, train or gradient-check the attention pooling variants.
    Pool(PoolArgs),
    /// Write the synthetic fixture clouds.
    GenFixtures(GenFixturesArgs),
}

const SUBCOMMANDS: [&str; 5] = ["voxelize", "eval", "bench", "pool", "gen-fixtures"];

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct GridArgs {
    /// Cells per axis of the base grid (power of two).
    #[arg(long, default_value_t = crate::voxel_grid::DEFAULT_RESOLUTION)]
    pub resolution: u32,

    /// Percentile used for the per-metric complexity thresholds.
    #[arg(long, default_value_t = crate::voxel_grid::DEFAULT_PERCENTILE)]
    pub percentile: f64,

    /// Fixed threshold for one metric, e.g. `sigma_s=0.01`; repeatable.
    #[arg(long = "fixed-threshold", value_name = "METRIC=VALUE")]
    pub fixed_thresholds: Vec<String>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct VoxelizeArgs {
    #[arg(long)]
    pub input: PathBuf,

    /// Pyramid output file.
    #[arg(long)]
    pub out: PathBuf,

    /// Per-cell metrics CSV [default: <out stem>.metrics.csv].
    #[arg(long)]
    pub metrics_out: Option<PathBuf>,

    /// Leaf-center PLY [default: <out stem>.leaves.ply].
    #[arg(long)]
    pub ply_out: Option<PathBuf>,

    /// Neighbors used when the input has no normals.
    #[arg(long, default_value_t = crate::pointcloud::DEFAULT_NORMAL_NEIGHBORS)]
    pub normal_k: usize,

    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Text,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct EvalArgs {
    /// Predicted point cloud (.ply/.xyz), pyramid file or grid file.
    #[arg(long)]
    pub pred: PathBuf,

    /// Ground-truth point cloud, pyramid file or grid file.
    #[arg(long)]
    pub gt: PathBuf,

    /// Occupancy resolution; must agree with any grid inputs.
    #[arg(long)]
    pub resolution: Option<u32>,

    /// F-score distance [default: one cell edge].
    #[arg(long)]
    pub radius: Option<f64>,

    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchMode {
    Both,
    FrvOnly,
    DrmsvOnly,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct BenchArgs {
    /// Directory of .ply/.xyz shapes.
    #[arg(long)]
    pub fixtures: PathBuf,

    #[arg(long, value_enum, default_value_t = BenchMode::Both)]
    pub mode: BenchMode,

    #[arg(long, default_value_t = 4)]
    pub batch_size: usize,

    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,

    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["tokens", "synthetic"]))]
pub struct PoolArgs {
    /// Token matrix CSV, one token per row.
    #[arg(long)]
    pub tokens: Option<PathBuf>,

    /// Use seeded synthetic tokens instead of a file.
    #[arg(long)]
    pub synthetic: bool,

    /// Variant name, or `all`.
    #[arg(long, default_value = "tap_res_learnt")]
    pub variant: String,

    /// Parameters in the text format written by `--params-out`.
    #[arg(long)]
    pub params: Option<PathBuf>,

    #[arg(long, default_value_t = 8)]
    pub seq_len: usize,

    #[arg(long, default_value_t = 4)]
    pub width: usize,

    /// Train on the synthetic attention task.
    #[arg(long)]
    pub train: bool,

    #[arg(long, default_value_t = 200)]
    pub epochs: usize,

    #[arg(long, default_value_t = crate::tap_lme::DEFAULT_STEP_SIZE)]
    pub step_size: f64,

    /// Training samples in the synthetic task.
    #[arg(long, default_value_t = crate::tap_lme::DEFAULT_TASK_SAMPLES)]
    pub samples: usize,

    #[arg(long)]
    pub loss_out: Option<PathBuf>,

    #[arg(long)]
    pub params_out: Option<PathBuf>,

    /// Check analytic gradients against central differences.
    #[arg(long)]
    pub grad_check: bool,

    /// Random configurations for `--grad-check`.
    #[arg(long, default_value_t = 50)]
    pub configs: usize,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct GenFixturesArgs {
    #[arg(long)]
    pub out: PathBuf,

    /// Points per fixture.
    #[arg(long, default_value_t = crate::fixtures::DEFAULT_FIXTURE_POINTS)]
    pub points: usize,
}

/// Failure of a command, tagged with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_validation() { EXIT_USAGE } else { EXIT_RUNTIME },
            message: e.to_string(),
        }
    }
}

/// Expands `--config FILE` into flags placed right after the subcommand name,
/// so that flags given explicitly on the command line override them.
fn splice_config(mut args: Vec<OsString>) -> Result<Vec<OsString>, Failure> {
    let mut path = None;
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_string_lossy().into_owned();
        if a == "--config" {
            if i + 1 >= args.len() {
                return Err(Failure::usage("--config needs a file argument"));
            }
            path = Some(PathBuf::from(args.remove(i + 1)));
            args.remove(i);
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
            args.remove(i);
        } else {
            i += 1;
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut extra: Vec<OsString> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Failure::usage(format!("{}:{}: expected key=value", path.display(), n + 1))
        })?;
        let flag = format!("--{}", key.trim().replace('_', "-"));
        match value.trim() {
            "true" => extra.push(flag.into()),
            "false" => {}
            v => {
                extra.push(flag.into());
                extra.push(v.into());
            }
        }
    }
    let at = args
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
        .map_or(args.len(), |p| p + 1);
    args.splice(at..at, extra);
    Ok(args)
}

/// Runs the tool with `args` (including the program name), writing results
/// to `out` and diagnostics to standard error. Returns the exit code.
pub fn run(args: Vec<OsString>, out: &mut dyn Write) -> i32 {
    let args = match splice_config(args) {
        Ok(a) => a,
        Err(f) => {
            eprintln!("error: {}", f.message);
            return f.code;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    if cli.threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return EXIT_USAGE;
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return EXIT_RUNTIME;
        }
    };
    match pool.install(|| commands::dispatch(&cli)) {
        Ok(text) => match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                eprintln!("error: cannot write output: {e}");
                EXIT_RUNTIME
            }
        },
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
