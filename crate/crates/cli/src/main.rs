//! `frgm`: graph matching and point-set registration from the command line.

mod commands;
mod output;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use frgm::FrgmError;

use settings::{DeformSettings, EuclidSettings, GeneralSettings, OutlierSettings, SolverSettings};

#[derive(Debug, Parser)]
#[command(name = "frgm", version, about = "Graph matching and point-set registration")]
struct Cli {
    /// TOML (or .json) file with [solver], [euclid], [general], [deform] and
    /// [outlier] sections; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the effective settings before running.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Match two graphs given as edge-attribute matrices.
    MatchG(MatchGArgs),
    /// Match two point sets.
    MatchE(MatchEArgs),
    /// Match two point sets while fitting a deformation.
    MatchD(MatchDArgs),
    /// Drop set-2 points that have no counterpart in set 1, then match.
    RemoveOutliers(RemoveOutliersArgs),
    /// Run an experiment grid and write a results table.
    Bench(BenchArgs),
    /// Solve a linear assignment problem exactly.
    Lap(LapArgs),
    /// Generate synthetic instances.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Debug, Args)]
struct MatchOutput {
    /// Correspondence JSON.
    #[arg(long, short)]
    out: PathBuf,
    /// Also write the final soft assignment (CSV, or JSON by extension).
    #[arg(long)]
    soft: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MatchGArgs {
    /// Edge attributes of graph 1 (m x m).
    #[arg(long)]
    e1: PathBuf,
    /// Edge attributes of graph 2 (n x n, n >= m).
    #[arg(long)]
    e2: PathBuf,
    /// Pairwise weights of graph 1; complete graph when absent.
    #[arg(long)]
    adj1: Option<PathBuf>,
    /// Node dissimilarities (m x n); zero when absent.
    #[arg(long)]
    unary: Option<PathBuf>,
    #[command(flatten)]
    output: MatchOutput,
    #[command(flatten)]
    general: GeneralSettings,
    #[command(flatten)]
    solver: SolverSettings,
}

#[derive(Debug, Args)]
struct PointInputs {
    /// Points of set 1, one per row.
    #[arg(long)]
    v1: PathBuf,
    /// Points of set 2, at least as many as set 1.
    #[arg(long)]
    v2: PathBuf,
}

#[derive(Debug, Args)]
struct MatchEArgs {
    #[command(flatten)]
    inputs: PointInputs,
    /// Node dissimilarities (m x n); shape context in the plane when absent.
    #[arg(long)]
    unary: Option<PathBuf>,
    #[command(flatten)]
    output: MatchOutput,
    #[command(flatten)]
    euclid: EuclidSettings,
    #[command(flatten)]
    solver: SolverSettings,
}

#[derive(Debug, Args)]
struct MatchDArgs {
    #[command(flatten)]
    inputs: PointInputs,
    /// Correspondence JSON including the transform.
    #[arg(long, short)]
    out: PathBuf,
    /// Write the transform alone as JSON.
    #[arg(long)]
    transform: Option<PathBuf>,
    /// Write set 1 after deformation.
    #[arg(long)]
    aligned: Option<PathBuf>,
    #[command(flatten)]
    deform: DeformSettings,
    #[command(flatten)]
    euclid: EuclidSettings,
    #[command(flatten)]
    solver: SolverSettings,
}

#[derive(Debug, Args)]
struct RemoveOutliersArgs {
    #[command(flatten)]
    inputs: PointInputs,
    /// JSON with the kept set-2 indices and the final correspondence.
    #[arg(long, short)]
    out: PathBuf,
    #[command(flatten)]
    outlier: OutlierSettings,
    #[command(flatten)]
    euclid: EuclidSettings,
    #[command(flatten)]
    solver: SolverSettings,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Shipped grid: paper-noise, paper-outlier, large-scale-noise or
    /// large-scale-outlier.
    #[arg(long, conflicts_with = "grid", required_unless_present = "grid")]
    preset: Option<String>,
    /// Grid file (TOML, or JSON by extension).
    #[arg(long)]
    grid: Option<PathBuf>,
    /// First seed; trial s of every cell uses seed + s.
    #[arg(long)]
    seed: u64,
    /// Seeds per cell, overriding the grid.
    #[arg(long)]
    seeds: Option<usize>,
    /// Worker threads, overriding the grid.
    #[arg(long)]
    workers: Option<usize>,
    /// CSV table; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// SVG plot of accuracy against the varying parameter.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LapArgs {
    /// Cost matrix (m x n, m <= n).
    #[arg(long)]
    cost: PathBuf,
    /// Also write the result JSON here.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum SynthCommand {
    /// Gaussian inliers with noise and Gaussian outliers.
    Points(SynthPointsArgs),
    /// A deformed template with noise, outliers and missing points.
    Deformed(SynthDeformedArgs),
}

#[derive(Debug, Args)]
struct SynthPointsArgs {
    #[arg(long)]
    n_in: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    n_out: usize,
    #[arg(long)]
    seed: u64,
    /// Directory receiving v1.csv, v2.csv and truth.json.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct SynthDeformedArgs {
    /// Built-in shape: fish, spiral, moons, grid or circle.
    #[arg(long, default_value = "fish", conflicts_with = "template_file")]
    template: String,
    /// Template points from a CSV or JSON file.
    #[arg(long)]
    template_file: Option<PathBuf>,
    /// Points of a built-in template.
    #[arg(long, default_value_t = 100)]
    points: usize,
    #[arg(long, value_enum, default_value = "similarity")]
    warp: settings::VariantArg,
    /// Rotation angle in radians (similarity).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    theta: f64,
    /// Scale factor (similarity).
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Translation "x,y" (similarity, affine).
    #[arg(long, default_value = "0,0", allow_hyphen_values = true)]
    translation: String,
    /// Linear part "a00,a01,a10,a11" acting on row vectors (affine).
    #[arg(long, default_value = "1,0,0,1", allow_hyphen_values = true)]
    matrix: String,
    /// Standard deviation of the warp weights (nonrigid).
    #[arg(long, default_value_t = 0.2)]
    warp_sigma: f64,
    /// Kernel bandwidth of the warp (nonrigid).
    #[arg(long, default_value_t = 0.5)]
    warp_bandwidth: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0.0)]
    outlier_ratio: f64,
    #[arg(long, default_value_t = 0.0)]
    missing_ratio: f64,
    #[arg(long)]
    seed: u64,
    /// Directory receiving v1.csv, v2.csv, truth.json and transform.json.
    #[arg(long)]
    out_dir: PathBuf,
}

/// Exit status for each error class.
fn exit_code(e: &FrgmError) -> u8 {
    match e {
        FrgmError::Input(_) | FrgmError::Io(_) | FrgmError::DegenerateGeometry(_) => 2,
        FrgmError::Numerical { .. } => 3,
        FrgmError::Parameter(_) | FrgmError::SizeGuard(_) => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FRGM_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
