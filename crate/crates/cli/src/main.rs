//! `lgi`: build indices, reconstruct tracks, and run the verification workflows.
//!
//! Results go to stdout as JSON, logs to stderr. Exit codes: 0 success, 1 I/O failure,
//! 2 invalid input, 3 an acceptance threshold was not met.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "lgi", version, about = "Dense facial reconstruction from sparse bundle tracks")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Random seed for synthetic data.
    #[arg(long, global = true, default_value_t = 7)]
    pub seed: u64,
    /// Acceptance tolerance as a fraction of the neutral bounding-box diagonal.
    #[arg(long, global = true, default_value_t = 1e-6)]
    pub tol: f64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic library, a performance track, and its ground-truth meshes.
    Synth(SynthArgs),
    /// Build the tetrahedral index and the blending weights for a library.
    BuildIndex(BuildArgs),
    /// Reconstruct dense meshes from a bundle track or from sampled meshes.
    Reconstruct(ReconstructArgs),
    /// Reconstruct every library shape from its own bundles and compare.
    Roundtrip(RoundtripArgs),
    /// Compare two OBJ sequences vertex by vertex.
    Compare(CompareArgs),
    /// Drop rarely used or blacklisted tetrahedra from an index.
    PruneIndex(PruneArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 32)]
    pub nx: usize,
    #[arg(long, default_value_t = 64)]
    pub ny: usize,
    /// Library shapes, extremes plus in-betweens.
    #[arg(long, default_value_t = 30)]
    pub shapes: usize,
    #[arg(long, default_value_t = 10)]
    pub inbetweens: usize,
    #[arg(long, default_value_t = 40)]
    pub bundles: usize,
    /// Peak bulge height of in-betweens in length units.
    #[arg(long, default_value_t = 4.0)]
    pub nonlinearity: f64,
    /// Fraction of extremes that open the jaw.
    #[arg(long, default_value_t = 0.3)]
    pub jaw_fraction: f64,
    /// Frames in the performance track.
    #[arg(long, default_value_t = 48)]
    pub frames: usize,
}

#[derive(Args, Debug, Clone)]
pub struct LibraryArgs {
    /// Library manifest (`library.json`).
    #[arg(long)]
    pub library: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Index file written by `build-index`.
    #[arg(long)]
    pub index: PathBuf,
    /// Blending weight cache (default: the index path with extension `lgnn`).
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum NnModeArg {
    Uv,
    Mesh,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[command(flatten)]
    pub lib: LibraryArgs,
    /// Output index file; the weight cache goes next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// UV lattice resolution for geodesics and natural-neighbor weights.
    #[arg(long, default_value_t = 512)]
    pub resolution: usize,
    #[arg(long, value_enum, default_value_t = NnModeArg::Uv)]
    pub nn_mode: NnModeArg,
    /// Shapes moving a bundle less than this fraction of the diagonal are pruned.
    #[arg(long)]
    pub min_disp_frac: Option<f64>,
    /// Cloud points closer than this fraction of the diagonal are merged.
    #[arg(long)]
    pub dedupe_frac: Option<f64>,
    #[arg(long)]
    pub min_vol_frac: Option<f64>,
    #[arg(long)]
    pub max_aspect: Option<f64>,
    #[arg(long)]
    pub max_extent_frac: Option<f64>,
    /// Largest number of 4-point combinations per cloud.
    #[arg(long)]
    pub cap: Option<u64>,
    /// Jaw-rotation breakpoints in radians, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub jaw_bins: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BlendArg {
    Nn,
    Rbf,
    Baseline,
    Lsq,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    #[command(flatten)]
    pub lib: LibraryArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Bundle track CSV (`frame,bundle,x,y,z`).
    #[arg(long, conflicts_with = "meshes", required_unless_present = "meshes")]
    pub track: Option<PathBuf>,
    /// Jaw track CSV (`frame,rot,protrude,lateral`).
    #[arg(long)]
    pub jaw: Option<PathBuf>,
    /// Directory of posed OBJs (for example rig output) to sample bundles from.
    #[arg(long)]
    pub meshes: Option<PathBuf>,
    /// Odd moving-average window over per-bundle weights; 1 disables smoothing.
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    #[arg(long, value_enum, default_value_t = BlendArg::Nn)]
    pub blend: BlendArg,
    /// Gaussian width for `--blend rbf` (default: half the median bundle spacing).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Disable the temporal tet-selection criterion.
    #[arg(long)]
    pub no_temporal: bool,
    /// Output directory for OBJs, `solution.json`, and reports.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory of ground-truth OBJs, one per frame in order.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RoundtripArgs {
    #[command(flatten)]
    pub lib: LibraryArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Directory (or single OBJ) under test.
    #[arg(long)]
    pub got: PathBuf,
    /// Reference directory (or single OBJ).
    #[arg(long)]
    pub truth: PathBuf,
    /// Label stored in the report.
    #[arg(long, default_value = "compare")]
    pub method: String,
    /// Per-vertex error CSV.
    #[arg(long)]
    pub vertex_errors: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PruneArgs {
    #[command(flatten)]
    pub lib: LibraryArgs,
    /// Index to prune.
    #[arg(long)]
    pub index: PathBuf,
    /// Track whose tet selections count as usage.
    #[arg(long)]
    pub track: Option<PathBuf>,
    #[arg(long)]
    pub jaw: Option<PathBuf>,
    /// Tets selected fewer times than this are dropped.
    #[arg(long, default_value_t = 1)]
    pub min_usage: u64,
    /// CSV of `bundle,a,b,c,d` cloud point ids to exclude.
    #[arg(long)]
    pub blacklist: Option<PathBuf>,
    /// Output index file.
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::error!("cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(outcome) => {
            println!("{}", serde_json::to_string_pretty(&outcome.json).expect("serializable output"));
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            }
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}
