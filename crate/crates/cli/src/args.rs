use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "moealloc", version, about = "Compute allocation and scaling-law tools for MoE Transformers")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// Print errors as one JSON object on stderr.
    #[arg(long, global = true)]
    pub json_errors: bool,

    /// Worker threads for fitting (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,

    /// Law store to read coefficients from; the built-in published
    /// coefficients are used when absent.
    #[arg(long, global = true, value_name = "PATH")]
    pub law_store: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact FLOPs breakdown for a model config.
    Flops(FlopsArgs),
    /// Optimal expert/attention ratio for a compute budget.
    Rstar(RstarArgs),
    /// Pick r* from ratio sweeps (C,S,r,loss CSV).
    SweepExtract(SweepArgs),
    /// Fit y = alpha x^beta on two CSV columns.
    FitPowerlaw(PowerlawArgs),
    /// Fit the sparsity laws from per-sparsity (S,alpha_r,beta_r) rows.
    FitSparsity(SparsityArgs),
    /// Fit a loss law to run records.
    FitLoss(FitLossArgs),
    /// Predicted vs observed loss for run records.
    Predict(PredictArgs),
    /// Search for an architecture that realizes r* within budget.
    Plan(PlanArgs),
    /// Generate synthetic run records from a loss law.
    Synth(SynthArgs),
    /// Show training hyperparameters for a size label.
    Preset(PresetArgs),
}

#[derive(Debug, Args)]
pub struct Output {
    /// Write to this file instead of stdout.
    #[arg(short, long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct FlopsArgs {
    /// ModelConfig JSON file.
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[command(flatten)]
    pub out: Output,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct RstarArgs {
    /// Total training FLOPs.
    #[arg(long)]
    pub compute: f64,
    #[arg(long, required_unless_present_all = ["alpha_r", "beta_r"])]
    pub sparsity: Option<f64>,
    /// Explicit law coefficient; needs --beta-r too.
    #[arg(long, requires = "beta_r", conflicts_with = "sparsity")]
    pub alpha_r: Option<f64>,
    #[arg(long, requires = "alpha_r", conflicts_with = "sparsity")]
    pub beta_r: Option<f64>,
    /// Print a JSON object instead of the bare number.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct SweepArgs {
    #[arg(short, long, value_name = "PATH")]
    pub input: PathBuf,
    /// Loss slack under which a larger r is preferred to a non-monotone argmin.
    #[arg(long, default_value_t = moealloc::fit::DEFAULT_FLUCTUATION_TOLERANCE)]
    pub tolerance: f64,
    #[command(flatten)]
    pub out: Output,
}

#[derive(Debug, Args)]
pub struct PowerlawArgs {
    #[arg(short, long, value_name = "PATH")]
    pub input: PathBuf,
    #[arg(long, default_value = "C")]
    pub x: String,
    #[arg(long, default_value = "r_star")]
    pub y: String,
    /// Store the fit as the allocation law in this law store.
    #[arg(long, value_name = "PATH")]
    pub write_store: Option<PathBuf>,
    #[command(flatten)]
    pub out: Output,
}

#[derive(Debug, Args)]
pub struct SparsityArgs {
    #[arg(short, long, value_name = "PATH")]
    pub input: PathBuf,
    /// Store the fitted sparsity law in this law store.
    #[arg(long, value_name = "PATH")]
    pub write_store: Option<PathBuf>,
    #[command(flatten)]
    pub out: Output,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Variant {
    Final,
    Wang,
    Abnar,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RTerm {
    R,
    #[value(name = "r_over_1plus_r")]
    ROver1PlusR,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct FitLossArgs {
    #[arg(short, long, value_name = "PATH")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "final")]
    pub variant: Variant,
    /// Grid starts to sample.
    #[arg(long, default_value_t = 1024)]
    pub starts: usize,
    /// Run every grid start.
    #[arg(long)]
    pub full_grid: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Exclude this sparsity level from fitting and report on it.
    #[arg(long)]
    pub holdout_sparsity: Option<f64>,
    #[arg(long, default_value_t = 1e-3)]
    pub huber_delta: f64,
    #[arg(long, value_enum, default_value = "r")]
    pub r_term: RTerm,
    /// Active experts per token, for the expert-count law.
    #[arg(long, default_value_t = 3.0)]
    pub e_act: f64,
    /// Hold a parameter fixed, e.g. `--fix log_d=-40`.
    #[arg(long, value_name = "NAME=VALUE")]
    pub fix: Vec<String>,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    /// Store the fitted coefficients in this law store.
    #[arg(long, value_name = "PATH")]
    pub write_store: Option<PathBuf>,
    #[command(flatten)]
    pub out: Output,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(short, long, value_name = "PATH")]
    pub input: PathBuf,
    /// Use the coefficients of this fit report instead of the law store.
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub out: Output,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct PlanArgs {
    /// Total training FLOPs.
    #[arg(long)]
    pub compute: f64,
    /// Training tokens.
    #[arg(long)]
    pub tokens: f64,
    #[arg(long, required_unless_present = "experts")]
    pub sparsity: Option<f64>,
    /// Total experts (sparsity then follows from top-k and shared).
    #[arg(long)]
    pub experts: Option<u64>,
    #[arg(long, default_value_t = 2)]
    pub top_k: u64,
    #[arg(long, default_value_t = 1)]
    pub shared: u64,
    /// Explicit law coefficient; needs --beta-r too.
    #[arg(long, requires = "beta_r")]
    pub alpha_r: Option<f64>,
    #[arg(long, requires = "alpha_r")]
    pub beta_r: Option<f64>,
    /// Preferred d_hidden among otherwise equal candidates.
    #[arg(long, default_value_t = 1024)]
    pub d_hidden_seed: u64,
    #[arg(long, default_value_t = 16)]
    pub n_layer: u64,
    #[arg(long, default_value_t = 16)]
    pub n_head: u64,
    #[arg(long, default_value_t = 4096)]
    pub n_ctx: u64,
    #[arg(long, default_value_t = 128_000)]
    pub n_vocab: u64,
    #[arg(long, default_value_t = 64)]
    pub granularity: u64,
    #[arg(long, default_value_t = 0.05)]
    pub ratio_tolerance: f64,
    #[arg(long, default_value_t = 0.02)]
    pub budget_tolerance: f64,
    #[arg(long)]
    pub gqa: bool,
    #[arg(long, default_value_t = 1)]
    pub kv_head_ratio: u64,
    #[arg(long)]
    pub peft: bool,
    #[arg(long)]
    pub grad_checkpoint: bool,
    #[command(flatten)]
    pub out: Output,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct SynthArgs {
    /// Grid JSON: {"N": [...], "D": [...], "S": [...], "r": [...]}.
    #[arg(long, value_name = "PATH")]
    pub grid: PathBuf,
    /// Log-normal noise scale.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Generate from this fit report's coefficients instead of the law store.
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub out: Output,
}

#[derive(Debug, Args)]
pub struct PresetArgs {
    /// Size label, e.g. 30M.
    #[arg(required_unless_present = "all")]
    pub label: Option<String>,
    /// List every preset.
    #[arg(long, conflicts_with = "label")]
    pub all: bool,
}
