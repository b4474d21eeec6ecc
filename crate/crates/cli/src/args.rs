use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use finprint::contour::Format;
use finprint::{MatcherKind, PipelineConfig, Profile};

#[derive(Debug, Parser)]
#[command(name = "finprint", version, about = "Identify individuals from fin trailing-edge contours")]
pub struct Cli {
    /// Workspace directory holding db/, artifacts/ and reports/.
    #[arg(long, short = 'w', global = true, default_value = ".")]
    pub workspace: PathBuf,

    /// Worker threads; defaults to the available parallelism.
    #[arg(long, short = 'j', global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate contour files and store them as the workspace database.
    Ingest(IngestArgs),
    /// Write a synthetic labelled contour set.
    Synthgen(SynthArgs),
    /// Precompute curvature and, for lnbnn, the descriptor index.
    BuildIndex(BuildArgs),
    /// Learn spatial weights for the time-warping matcher.
    LearnWeights(LearnArgs),
    /// Rank database individuals for each query encounter.
    Query(QueryArgs),
    /// Top-k accuracy over random encounter splits.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Jsonl,
    Csv,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Jsonl => Format::Jsonl,
            FormatArg::Csv => Format::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProfileArg {
    Bottlenose,
    Humpback,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Bottlenose => Profile::Bottlenose,
            ProfileArg::Humpback => Profile::Humpback,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatcherArg {
    Dtw,
    Lnbnn,
    Hocs,
}

impl From<MatcherArg> for MatcherKind {
    fn from(m: MatcherArg) -> Self {
        match m {
            MatcherArg::Dtw => MatcherKind::Dtw,
            MatcherArg::Lnbnn => MatcherKind::Lnbnn,
            MatcherArg::Hocs => MatcherKind::Hocs,
        }
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Contour files; all are merged into one database.
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,

    #[arg(long, value_enum, default_value = "jsonl")]
    pub format: FormatArg,

    /// Abort on the first undecodable record instead of skipping it.
    #[arg(long)]
    pub strict: bool,

    /// Merge into the existing database instead of replacing it.
    #[arg(long)]
    pub append: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    None,
    Mild,
    NoisyEndpoints,
    Occlusion,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output file; standard output when omitted.
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,

    /// Starting point for every setting below.
    #[arg(long, value_enum, default_value = "mild")]
    pub preset: Preset,

    #[arg(long)]
    pub individuals: Option<usize>,
    /// Marks per individual.
    #[arg(long)]
    pub marks: Option<usize>,
    #[arg(long)]
    pub encounters: Option<usize>,
    /// Images per encounter.
    #[arg(long)]
    pub images: Option<usize>,
    /// Rotation half-range in degrees.
    #[arg(long)]
    pub rotation: Option<f64>,
    /// Per-axis scale half-range.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Largest fraction of arc length cut from the base end.
    #[arg(long)]
    pub truncation: Option<f64>,
    /// Gaussian point jitter in pixels.
    #[arg(long)]
    pub jitter: Option<f64>,
    /// Endpoint deformation amplitude in pixels.
    #[arg(long)]
    pub endpoint_noise: Option<f64>,
    /// Fraction of arc length affected by endpoint deformation.
    #[arg(long)]
    pub endpoint_span: Option<f64>,
    /// Largest fraction of arc length hidden from one end, per encounter.
    #[arg(long)]
    pub occlusion: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Profile plus per-value overrides.
#[derive(Debug, Args)]
pub struct Tuning {
    #[arg(long, value_enum, default_value = "bottlenose")]
    pub profile: ProfileArg,
    /// Relative curvature scales, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub scales: Option<Vec<f64>>,
    /// Points the edge is resampled to before curvature.
    #[arg(long)]
    pub edge_points: Option<usize>,
    /// Warping band half-width; 0 disables the band.
    #[arg(long)]
    pub band: Option<usize>,
    /// Columns each curvature matrix is resampled to before alignment.
    #[arg(long)]
    pub resample: Option<usize>,
    #[arg(long)]
    pub keypoints: Option<usize>,
    /// Descriptor dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Neighbours per descriptor in lnbnn scoring.
    #[arg(long, short = 'k')]
    pub k: Option<usize>,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub leaf_size: Option<usize>,
    /// Exhaustive neighbour search instead of the forest.
    #[arg(long)]
    pub exact: bool,
    /// Histogram bins for hocs.
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl Tuning {
    pub fn config(&self) -> PipelineConfig {
        let mut c = PipelineConfig::profile(self.profile.into());
        if let Some(s) = &self.scales {
            c.scales = s.clone();
        }
        macro_rules! set {
            ($($field:ident <- $arg:ident),*) => {
                $(if let Some(v) = self.$arg { c.$field = v; })*
            };
        }
        set!(edge_points <- edge_points, resample_to <- resample, keypoints <- keypoints, dim <- dim,
             k <- k, trees <- trees, leaf_size <- leaf_size, bins <- bins);
        if let Some(b) = self.band {
            c.band = (b > 0).then_some(b);
        }
        c.exact = c.exact || self.exact;
        c.seed = self.seed;
        c
    }
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[command(flatten)]
    pub tuning: Tuning,
    #[arg(long, value_enum, default_value = "dtw")]
    pub matcher: MatcherArg,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    #[command(flatten)]
    pub tuning: Tuning,
    /// Objective evaluations, including the uniform start.
    #[arg(long, default_value_t = 200)]
    pub budget: usize,
    /// The k of the top-k training objective.
    #[arg(long, default_value_t = 1)]
    pub k_objective: usize,
    /// Bernstein degree of the weight curve.
    #[arg(long)]
    pub degree: Option<usize>,
    /// Output file; reports/weights-<hash>.json when omitted.
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    /// Contour file of query encounters.
    pub queries: PathBuf,
    #[arg(long, value_enum, default_value = "jsonl")]
    pub format: FormatArg,
    #[command(flatten)]
    pub tuning: Tuning,
    #[arg(long, value_enum, default_value = "dtw")]
    pub matcher: MatcherArg,
    /// Learned weights for the dtw matcher.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Ranking dump; standard output when omitted.
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub tuning: Tuning,
    #[arg(long, value_enum, default_value = "dtw")]
    pub matcher: MatcherArg,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Random splits, seeded from --seed upwards.
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    /// Database encounters per individual.
    #[arg(long, default_value_t = 1)]
    pub encounters: usize,
    #[arg(long, default_value_t = 25)]
    pub k_max: usize,
    /// Ranking dump of another algorithm over the first run's queries.
    #[arg(long)]
    pub fuse: Option<PathBuf>,
}
