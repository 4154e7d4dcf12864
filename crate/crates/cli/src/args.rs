//! Command-line surface. Every run serializes its parsed arguments into the
//! output artifacts for provenance.

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "rfgp",
    about = "Out-of-core approximate GP regression with structured random features",
    args_override_self = true
)]
pub struct Cli {
    /// Plain-text key=value file providing default flag values.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<std::path::PathBuf>,

    /// Worker-thread cap (also RFGP_THREADS); never affects results.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case", tag = "command")]
pub enum Command {
    /// Convert a text input (csv / sequence+label / xyz-with-target) into a
    /// chunked dataset directory.
    Ingest(IngestArgs),
    /// Hyperparameter search: closed-form grid, Thompson sampling, or the
    /// iterative approximate-likelihood grid.
    Tune(TuneArgs),
    /// Fit a model and write the model artifact.
    Fit(FitArgs),
    /// Predict means and standard deviations for a dataset.
    Predict(PredictArgs),
    /// Calibration curve and AUCE of a model on labeled data.
    Calibrate(CalibrateArgs),
    /// Kernel k-means in feature space, with an elbow table over k.
    Cluster(ClusterArgs),
    /// Kernel PCA projections of a dataset.
    Kpca(KpcaArgs),
    /// Rank training points by kernel similarity to queries.
    Retrieve(RetrieveArgs),
    /// Simulated active-learning loop over a labeled pool.
    Boloop(BoloopArgs),
    /// Synthetic performance benchmarks (feature generation, preconditioning).
    Bench(BenchArgs),
}

#[derive(Debug, Args, Serialize, Clone)]
pub struct KernelArgs {
    /// rbf | arc_cosine_1 | fht_conv_1d | fast_conv_1d | graph_rbf
    #[arg(long, default_value = "rbf")]
    pub kernel: String,
    /// Window width for the convolution kernels.
    #[arg(long, default_value_t = 1)]
    pub window: usize,
    #[arg(long, default_value_t = 2048)]
    pub num_rffs: usize,
    #[arg(long, default_value_t = 512)]
    pub variance_rffs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stage-1 width for fast_conv_1d (0 = automatic).
    #[arg(long, default_value_t = 0)]
    pub stage1_features: usize,
}

#[derive(Debug, Args, Serialize, Clone)]
pub struct SolverArgs {
    /// pcg | dense
    #[arg(long, default_value = "pcg")]
    pub mode: String,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub maxiter: usize,
    /// Preconditioner rank (0 disables preconditioning).
    #[arg(long, default_value_t = 256)]
    pub precond_rank: usize,
    /// gauss | srht | srht_2
    #[arg(long, default_value = "srht_2")]
    pub precond_variant: String,
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: std::path::PathBuf,
    /// csv | seq | xyz
    #[arg(long)]
    pub format: String,
    /// Target column name or 0-based index (csv).
    #[arg(long, default_value = "target")]
    pub target_column: String,
    /// Token alphabet (seq).
    #[arg(long, default_value = "ACDEFGHIKLMNPQRSTVWY")]
    pub alphabet: String,
    /// Comma-separated element symbols (xyz).
    #[arg(long, default_value = "H,C,N,O,F")]
    pub elements: String,
    #[arg(long, default_value_t = 15)]
    pub max_neighbors: usize,
    #[arg(long, default_value_t = 2000)]
    pub chunk_rows: usize,
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TuneArgs {
    #[arg(long)]
    pub dataset: std::path::PathBuf,
    /// grid | bayes | approx_mll
    #[arg(long, default_value = "grid")]
    pub strategy: String,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// log10 lambda grid: "lo:hi:count" or comma-separated values.
    #[arg(long, default_value = "-2:0:9", allow_hyphen_values = true)]
    pub lambda_grid: String,
    /// log10 beta grid.
    #[arg(long, default_value = "-0.5:0.5:5", allow_hyphen_values = true)]
    pub beta_grid: String,
    /// log10 sigma grid (grid / approx_mll strategies).
    #[arg(long, default_value = "0:0:1", allow_hyphen_values = true)]
    pub sigma_grid: String,
    /// log10 sigma bounds "lo:hi" (bayes strategy).
    #[arg(long, default_value = "-1:1", allow_hyphen_values = true)]
    pub sigma_bounds: String,
    #[arg(long, default_value_t = 10)]
    pub n_init: usize,
    #[arg(long, default_value_t = 30)]
    pub tune_maxiter: usize,
    #[arg(long, default_value_t = 64)]
    pub n_candidates: usize,
    #[arg(long, default_value_t = 1)]
    pub m_samples: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub tune_tol: f64,
    #[arg(long, default_value_t = 0)]
    pub tune_seed: u64,
    /// Probe vectors for the approx_mll strategy.
    #[arg(long, default_value_t = 25)]
    pub n_v: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub dataset: std::path::PathBuf,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Read lambda/beta/sigma from a tune output instead.
    #[arg(long)]
    pub tune_result: Option<std::path::PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: std::path::PathBuf,
    #[arg(long)]
    pub dataset: std::path::PathBuf,
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub model: std::path::PathBuf,
    #[arg(long)]
    pub dataset: std::path::PathBuf,
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ClusterArgs {
    #[arg(long)]
    pub model: std::path::PathBuf,
    #[arg(long)]
    pub dataset: std::path::PathBuf,
    /// Cluster count for the final index.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Elbow table range "lo:hi".
    #[arg(long, default_value = "1:10")]
    pub k_range: String,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 0)]
    pub cluster_seed: u64,
    /// Output prefix; writes <out>.elbow.txt, <out>.assign.txt, <out>.index.json.
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct KpcaArgs {
    #[arg(long)]
    pub model: std::path::PathBuf,
    #[arg(long)]
    pub dataset: std::path::PathBuf,
    #[arg(long, default_value_t = 2)]
    pub components: usize,
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub model: std::path::PathBuf,
    /// Training store.
    #[arg(long)]
    pub dataset: std::path::PathBuf,
    /// Cluster index from `rfgp cluster`.
    #[arg(long)]
    pub index: std::path::PathBuf,
    /// Query inputs (same kind as the store).
    #[arg(long)]
    pub queries: std::path::PathBuf,
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    /// full_scan | cluster_restricted
    #[arg(long, default_value = "cluster_restricted")]
    pub retrieval_mode: String,
    #[arg(long, default_value_t = 1)]
    pub clusters_searched: usize,
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct BoloopArgs {
    /// Labeled fixed-vector pool.
    #[arg(long)]
    pub dataset: std::path::PathBuf,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long, default_value_t = 0.05)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 384)]
    pub init_size: usize,
    #[arg(long, default_value_t = 96)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 5)]
    pub iterations: usize,
    /// ucb | random
    #[arg(long, default_value = "ucb")]
    pub acquisition: String,
    #[arg(long, default_value_t = 1.0)]
    pub multiplier: f64,
    /// Number of independent repeats (seeds 0..n).
    #[arg(long, default_value_t = 20)]
    pub repeats: u64,
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    /// sorf | precond | all
    #[arg(long, default_value = "all")]
    pub suite: String,
    #[arg(long, default_value_t = 0)]
    pub bench_seed: u64,
    #[arg(long)]
    pub out: std::path::PathBuf,
}
