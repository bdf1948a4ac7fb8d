use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "crisp",
    version,
    about = "Case-level patch selection and retrieval for whole-slide image cohorts"
)]
pub struct Cli {
    /// Directory that relative paths are resolved against.
    #[arg(long, global = true, value_name = "DIR")]
    pub workdir: Option<PathBuf>,

    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,

    /// TOML file with a [pipeline] table of defaults.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter tile PNGs by tissue occupancy and write per-slide descriptor CSVs.
    Descriptors(DescriptorsArgs),
    /// Run the per-slide percentile scan and write collages.json.
    Splice(SpliceArgs),
    /// Pool collages per case, cluster, and write mosaics.json.
    Mosaic(MosaicArgs),
    /// Rank the archive for one query case and write ranking.json.
    Retrieve(RetrieveArgs),
    /// Leave-one-patient-out evaluation of one configuration.
    Evaluate(EvaluateArgs),
    /// Evaluate a hyperparameter grid and write grid.csv.
    Gridsearch(GridArgs),
    /// Generate a synthetic cohort.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct DescriptorsArgs {
    /// Directory of `<slide>__<x>_<y>.png` tiles.
    #[arg(long)]
    pub tiles: PathBuf,
    /// Output directory for `<slide>.csv` files.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub occ_min: Option<f64>,
    #[arg(long)]
    pub bg_threshold: Option<u32>,
    #[arg(long)]
    pub tile_size: Option<u32>,
}

#[derive(Debug, Args)]
pub struct SpliceArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long = "s-t")]
    pub s_t: Option<f64>,
    #[arg(long, default_value = "collages.json")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Reduction {
    Kmeans,
    SpliceReselect,
}

#[derive(Debug, Args)]
pub struct MosaicArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "collages.json")]
    pub collages: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Case-level reduction. `splice-reselect` rescans the pooled case with
    /// the percentile taken from --s-t.
    #[arg(long, value_enum, default_value_t = Reduction::Kmeans)]
    pub reduction: Reduction,
    #[arg(long = "s-t")]
    pub s_t: Option<f64>,
    #[arg(long, default_value = "mosaics.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "mosaics.json")]
    pub mosaics: PathBuf,
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long)]
    pub query: String,
    #[arg(long, default_value_t = 5)]
    pub top: usize,
    #[arg(long, default_value = "ranking.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long = "s-t")]
    pub s_t: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub metric: Option<String>,
    /// Comma-separated vote sizes, e.g. 1,3,5.
    #[arg(long)]
    pub topk: Option<String>,
    #[arg(long, value_enum, default_value_t = Reduction::Kmeans)]
    pub reduction: Reduction,
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Values as `a..b` (unit step), `a..b:step` or `a,b,c`.
    #[arg(long = "s-t")]
    pub s_t: Option<String>,
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub alpha: Option<String>,
    /// A metric name or `both`.
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long)]
    pub topk: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "grid.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 5)]
    pub cases_per_class: usize,
    /// Slides per case as `lo..hi` or a single count.
    #[arg(long, default_value = "2..4")]
    pub slides_per_case: String,
    #[arg(long, default_value = "80..160")]
    pub patches_per_slide: String,
    #[arg(long, default_value_t = 10.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 0.8)]
    pub redundancy: f64,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Split each class over per-slide tissue modes, with this share of
    /// patches drawn from a class-neutral type.
    #[arg(long, value_name = "FRACTION")]
    pub shared_fraction: Option<f64>,
    #[arg(long, default_value_t = 3, requires = "shared_fraction")]
    pub modes_per_slide: usize,
    #[arg(long)]
    pub out: PathBuf,
}
