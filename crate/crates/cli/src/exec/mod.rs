pub mod analysis;
pub mod bench;
pub mod data;
pub mod model;

use rfgp_core::dataset::ChunkedDataset;
use rfgp_core::error::{Error, Result};
use rfgp_core::features::{FeatureMapSpec, KernelKind};
use rfgp_core::gp::{FitMode, FitOptions};
use rfgp_core::precond::PrecondVariant;

use crate::args::{KernelArgs, SolverArgs};

pub fn parse_kernel_kind(name: &str) -> Result<KernelKind> {
    match name {
        "rbf" => Ok(KernelKind::Rbf),
        "arc_cosine_1" | "arccos1" => Ok(KernelKind::ArcCosine1),
        "fht_conv_1d" | "fht_conv1d" => Ok(KernelKind::FhtConv1d),
        "fast_conv_1d" | "fast_conv1d" => Ok(KernelKind::FastConv1d),
        "graph_rbf" => Ok(KernelKind::GraphRbf),
        other => Err(Error::InvalidInput(format!("unknown kernel '{other}'"))),
    }
}

/// Build the map spec from CLI flags plus the dataset's feature width.
pub fn spec_from_args(
    kernel: &KernelArgs,
    dataset: &ChunkedDataset,
    lambda: f64,
    beta: f64,
    sigma: f64,
) -> Result<FeatureMapSpec> {
    let kind = parse_kernel_kind(&kernel.kernel)?;
    let spec = FeatureMapSpec::new(kind, dataset.feature_width(), kernel.num_rffs)
        .with_window(if kind == KernelKind::GraphRbf { 1 } else { kernel.window })
        .with_variance_rffs(kernel.variance_rffs.min(kernel.num_rffs))
        .with_seed(kernel.seed)
        .with_stage1_features(kernel.stage1_features)
        .with_hyperparams(lambda, beta, sigma);
    spec.validate()?;
    Ok(spec)
}

pub fn fit_options(solver: &SolverArgs) -> Result<FitOptions> {
    let mode = match solver.mode.as_str() {
        "pcg" => FitMode::Pcg,
        "dense" => FitMode::Dense,
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown solver mode '{other}' (expected pcg or dense)"
            )))
        }
    };
    let variant: PrecondVariant = solver.precond_variant.parse()?;
    Ok(FitOptions {
        mode,
        tol: solver.tol,
        maxiter: solver.maxiter,
        precond_rank: solver.precond_rank,
        precond_variant: variant,
    })
}

/// Missing input paths are usage errors (exit 2), not io failures.
pub fn open_dataset(path: &std::path::Path) -> Result<ChunkedDataset> {
    if !path.exists() {
        return Err(Error::InvalidInput(format!(
            "dataset path {} does not exist",
            path.display()
        )));
    }
    ChunkedDataset::open(path)
}
