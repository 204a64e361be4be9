use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "routescope", version, about = "Expert-routing overlap analysis for mixture-of-experts traces")]
pub struct Cli {
    /// Seed for every stochastic step; overrides config files.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Directory that relative output paths are resolved against.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate routing traces from the synthetic router.
    Simulate(SimulateArgs),
    /// Build, import or check dataset records.
    #[command(subcommand)]
    Records(RecordsCommand),
    /// Check that a trace corpus parses and validates.
    Validate(ValidateArgs),
    /// Score paired traces and write the layer-wise overlap report.
    Experiment(ExperimentArgs),
    /// Significance test over paired differences.
    Stats(StatsArgs),
    /// Sparse autoencoder training.
    #[command(subcommand)]
    Sae(SaeCommand),
    /// Expert-occurrence atlas for one SAE feature.
    Atlas(AtlasArgs),
    /// Layer-wise plot series from an overlap report.
    Plotdata(PlotdataArgs),
    /// Re-run a recorded invocation and compare output digests.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML simulator configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset records (JSON lines).
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Semantic coupling applied to every layer.
    #[arg(long)]
    pub beta_semantic: Option<f64>,
    /// Token coupling applied to every layer.
    #[arg(long)]
    pub beta_token: Option<f64>,
    #[arg(long)]
    pub noise_temp: Option<f64>,
    /// Layers whose hidden states are stored, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub activation_layers: Option<Vec<u32>>,
}

#[derive(Debug, Subcommand)]
pub enum RecordsCommand {
    /// Synthetic WiC or SWORDS records over pseudo-words.
    Synth(SynthArgs),
    /// Tab-separated WiC data plus its gold label file.
    ImportWic(ImportWicArgs),
    /// SWORDS benchmark JSON.
    ImportSwords(ImportSwordsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Wic,
    Swords,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// TOML with n_records, vocab_size, n_senses and seed.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub vocab_size: Option<u32>,
    #[arg(long)]
    pub n_senses: Option<u32>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImportWicArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    /// Whether the offsets column counts words or characters.
    #[arg(long, default_value = "word")]
    pub offsets: String,
    #[arg(long, default_value_t = 0)]
    pub col_word: usize,
    #[arg(long, default_value_t = 2)]
    pub col_offsets: usize,
    #[arg(long, default_value_t = 3)]
    pub col_a: usize,
    #[arg(long, default_value_t = 4)]
    pub col_b: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Where to list skipped rows (JSON lines).
    #[arg(long)]
    pub skipped: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ImportSwordsArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub equivalent_min: f64,
    #[arg(long, default_value_t = 0.1)]
    pub different_max: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub skipped: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub traces: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(value_enum)]
    pub kind: KindArg,
    /// TOML with any of records, traces, span_policy, out, diffs, effect.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub records: Option<PathBuf>,
    #[arg(long)]
    pub traces: Option<PathBuf>,
    /// last-token or mean-over-span.
    #[arg(long)]
    pub span_policy: Option<String>,
    /// Layer-wise report CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-pair differences CSV for the stats command.
    #[arg(long)]
    pub diffs: Option<PathBuf>,
    /// Treatment effect and drop list as JSON.
    #[arg(long)]
    pub effect: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    /// Paired t-test.
    T,
    /// Sign-flip permutation test.
    Perm,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub diffs: PathBuf,
    #[arg(long, value_enum, default_value = "t")]
    pub method: MethodArg,
    #[arg(long, default_value_t = 0.001)]
    pub alpha: f64,
    /// greater or two-sided.
    #[arg(long, default_value = "greater")]
    pub alternative: String,
    #[arg(long, default_value_t = 10_000)]
    pub resamples: u64,
    /// Enumerate every sign pattern when there are at most this many.
    #[arg(long, default_value_t = 1 << 20)]
    pub exact_cap: u64,
    /// Column of the diffs file to test.
    #[arg(long, default_value = "layer_averaged")]
    pub column: String,
    /// Test every layer_* column as well.
    #[arg(long)]
    pub per_layer: bool,
    #[arg(long, default_value = "stats.json")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum SaeCommand {
    /// Train an SAE on stored hidden states of one layer.
    Train(SaeTrainArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    /// Small, quick run for synthetic data.
    Desk,
    /// Full-size width, batch and schedule.
    Full,
}

#[derive(Debug, Args)]
pub struct SaeTrainArgs {
    #[arg(long)]
    pub traces: PathBuf,
    #[arg(long)]
    pub layer: Option<u32>,
    /// TOML with width, lambda, layer and a [train] table.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// full: width 28672, lambda 5, lr 5e-5, batch 4096, 30K steps.
    /// desk: width 4*d, lambda 0.1, lr 1e-3, batch 128, 5K steps.
    #[arg(long, value_enum, default_value = "full")]
    pub preset: PresetArg,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Training log CSV.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AtlasArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub traces: PathBuf,
    #[arg(long)]
    pub layer: u32,
    /// Pick the feature that fires most on this token.
    #[arg(long, conflicts_with = "feature", required_unless_present = "feature")]
    pub token: Option<String>,
    #[arg(long)]
    pub feature: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub top_m: usize,
    /// instances or types.
    #[arg(long, default_value = "instances")]
    pub mode: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotdataArgs {
    #[arg(long)]
    pub report: PathBuf,
    /// score or overlap.
    #[arg(long, default_value = "score")]
    pub value: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}
