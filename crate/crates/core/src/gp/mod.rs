//! The user-facing regression model.
//!
//! `fit` solves `(Z^T Z + lambda^2 I) w = Z^T y` with the selected solver and
//! factors the smaller variance system `(Z_var^T Z_var + lambda^2 I)` densely
//! at `variance_rffs` features. Predictions are `mean = z(x).w` and
//! `variance = lambda^2 z_var(x)^T (Z_var^T Z_var + lambda^2 I)^-1 z_var(x)`,
//! which recovers the prior amplitude `beta^2` far from the data.

pub mod nmll;
pub mod surrogate;
pub mod tune;

pub use nmll::{build_nmll_cache, nmll_approx, nmll_exact, ApproxNmllOptions, NmllCache, NmllTerms};
pub use surrogate::{matern52, MaternSurrogate};
pub use tune::{
    tune_approx_mll, tune_bayes, tune_grid, BayesOptions, TuneEval, TuneMethod, TuneResult,
};

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{ChunkData, ChunkedDataset};
use crate::error::{Error, Result};
use crate::features::{FeatureMap, FeatureMapSpec};
use crate::precond::{build_preconditioner, PrecondVariant};
use crate::rng::RNG_IDENTITY;
use crate::solve::{
    cg_solve, dense_eig_solve, GramSystem, SolveReport, DEFAULT_FIT_TOL, DEFAULT_MAXITER,
    DENSE_GUARD,
};
use crate::stream::{
    assemble_gram, feature_target_product, FeatureSource, MappedDataset,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    Pcg,
    Dense,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOptions {
    pub mode: FitMode,
    pub tol: f64,
    pub maxiter: usize,
    /// Preconditioner rank for PCG mode; 0 disables preconditioning.
    pub precond_rank: usize,
    pub precond_variant: PrecondVariant,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            mode: FitMode::Pcg,
            tol: DEFAULT_FIT_TOL,
            maxiter: DEFAULT_MAXITER,
            precond_rank: 256,
            precond_variant: PrecondVariant::Srht2,
        }
    }
}

impl FitOptions {
    pub fn dense() -> Self {
        Self {
            mode: FitMode::Dense,
            ..Default::default()
        }
    }
}

/// Provenance recorded with every fitted model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelManifest {
    pub dataset_hash: String,
    pub rng_identity: String,
    pub mode: FitMode,
    pub tol: f64,
    pub num_rows: usize,
    /// Set when the solver stopped at maxiter; predictions stay usable.
    pub fit_warning: Option<String>,
}

/// A fitted model: feature map spec, weights, and the variance factor.
#[derive(Debug, Clone)]
pub struct GPModel {
    spec: FeatureMapSpec,
    weights: Array1<f64>,
    /// Lower Cholesky factor of `Z_var^T Z_var + lambda^2 I`.
    var_chol: Array2<f64>,
    report: SolveReport,
    manifest: ModelManifest,
    map: FeatureMap,
    var_map: FeatureMap,
}

impl GPModel {
    /// Fit on a chunked dataset.
    pub fn fit(dataset: &ChunkedDataset, spec: &FeatureMapSpec, opts: &FitOptions) -> Result<Self> {
        spec.validate()?;
        let map = FeatureMap::build(spec)?;
        let source = MappedDataset::new(dataset, &map)?;
        let report = solve_weights(&source, spec, opts)?;
        let var_chol = variance_factor(dataset, spec)?;
        let manifest = ModelManifest {
            dataset_hash: dataset.content_hash().to_string(),
            rng_identity: RNG_IDENTITY.into(),
            mode: opts.mode,
            tol: opts.tol,
            num_rows: dataset.num_rows(),
            fit_warning: if report.converged {
                None
            } else {
                Some(format!(
                    "solver stopped at {} iterations without reaching tol {}",
                    report.iterations, opts.tol
                ))
            },
        };
        Self::assemble(
            spec.clone(),
            report.weights.clone(),
            var_chol,
            report,
            manifest,
        )
    }

    /// Rebuild a model from stored parts (artifact loading).
    pub fn assemble(
        spec: FeatureMapSpec,
        weights: Array1<f64>,
        var_chol: Array2<f64>,
        report: SolveReport,
        manifest: ModelManifest,
    ) -> Result<Self> {
        spec.validate()?;
        let map = FeatureMap::build(&spec)?;
        let var_map = FeatureMap::build_variance(&spec)?;
        if weights.len() != map.output_dim() {
            return Err(Error::InvalidDimension {
                what: "weight vector",
                expected: map.output_dim(),
                got: weights.len(),
            });
        }
        if var_chol.nrows() != spec.variance_rffs || var_chol.ncols() != spec.variance_rffs {
            return Err(Error::InvalidDimension {
                what: "variance factor",
                expected: spec.variance_rffs,
                got: var_chol.nrows(),
            });
        }
        Ok(Self {
            spec,
            weights,
            var_chol,
            report,
            manifest,
            map,
            var_map,
        })
    }

    pub fn spec(&self) -> &FeatureMapSpec {
        &self.spec
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn var_chol(&self) -> &Array2<f64> {
        &self.var_chol
    }

    pub fn report(&self) -> &SolveReport {
        &self.report
    }

    pub fn manifest(&self) -> &ModelManifest {
        &self.manifest
    }

    pub fn feature_map(&self) -> &FeatureMap {
        &self.map
    }

    /// Predictive means and variances for a batch of inputs.
    pub fn predict(&self, inputs: &ChunkData) -> Result<(Array1<f64>, Array1<f64>)> {
        let z = self.map.transform_chunk(inputs)?;
        let means = z.dot(&self.weights);
        let zv = self.var_map.transform_chunk(inputs)?;
        let l2 = self.spec.lambda * self.spec.lambda;
        let mut vars = Array1::zeros(zv.nrows());
        for (i, row) in zv.axis_iter(Axis(0)).enumerate() {
            // variance = lambda^2 |L^-1 z|^2 >= 0 by construction.
            let solved = forward_substitute(&self.var_chol, row.to_owned());
            vars[i] = l2 * solved.dot(&solved);
        }
        Ok((means, vars))
    }

    /// Means only (skips the variance factor entirely).
    pub fn predict_mean(&self, inputs: &ChunkData) -> Result<Array1<f64>> {
        let z = self.map.transform_chunk(inputs)?;
        Ok(z.dot(&self.weights))
    }
}

/// Solve the regularized system for the weight vector.
pub fn solve_weights(
    source: &impl FeatureSource,
    spec: &FeatureMapSpec,
    opts: &FitOptions,
) -> Result<SolveReport> {
    let zty = feature_target_product(source)?;
    let report = match opts.mode {
        FitMode::Dense => {
            let gram = assemble_gram(source, DENSE_GUARD)?;
            let solved = dense_eig_solve(gram.view(), zty.view(), spec.lambda)?;
            SolveReport {
                weights: solved.weights,
                iterations: 0,
                converged: true,
                residual_history: Vec::new(),
                alphas: Vec::new(),
                betas: Vec::new(),
                logdet_estimate: None,
            }
        }
        FitMode::Pcg => {
            let sys = GramSystem::new(source, spec.lambda)?;
            let precond = if opts.precond_rank > 0 {
                Some(build_preconditioner(
                    source,
                    opts.precond_rank.min(source.num_features()),
                    spec.lambda,
                    opts.precond_variant,
                    spec.seed,
                )?)
            } else {
                None
            };
            cg_solve(&sys, zty.view(), opts.tol, opts.maxiter, precond.as_ref())?
        }
    };
    Ok(report)
}

/// Dense factorization of the variance system at `variance_rffs` features,
/// streamed through the variance map on an independent seed substream.
fn variance_factor(dataset: &ChunkedDataset, spec: &FeatureMapSpec) -> Result<Array2<f64>> {
    let var_map = FeatureMap::build_variance(spec)?;
    let source = MappedDataset::new(dataset, &var_map)?;
    let m_var = var_map.output_dim();
    let mut gram = assemble_gram(&source, DENSE_GUARD)?;
    let l2 = spec.lambda * spec.lambda;
    for i in 0..m_var {
        gram[(i, i)] += l2;
    }
    crate::linalg::cholesky_lower(gram.view())
}

fn forward_substitute(l: &Array2<f64>, mut b: Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    for i in 0..n {
        let mut s = b[i];
        for j in 0..i {
            s -= l[(i, j)] * b[j];
        }
        b[i] = s / l[(i, i)];
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::write_fixed_dataset;
    use crate::features::KernelKind;
    use crate::rng::{self, StreamDomain};
    use rand::Rng as _;
    use tempfile::tempdir;

    fn toy(
        dir: &std::path::Path,
        seed: u64,
        n: usize,
        d: usize,
        chunk: usize,
    ) -> (ChunkedDataset, Array2<f64>, Array1<f64>) {
        let mut rng = rng::substream(seed, StreamDomain::Bench, 10);
        let x = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0f64));
        let y = Array1::from_shape_fn(n, |i| x.row(i).sum().tanh());
        let ds = write_fixed_dataset(dir, x.view(), y.view(), chunk).unwrap();
        (ds, x, y)
    }

    #[test]
    fn near_interpolation_at_tiny_lambda() {
        let dir = tempdir().unwrap();
        let (ds, x, y) = toy(dir.path(), 1, 50, 3, 16);
        // A sharp kernel keeps the 50-point Gram well conditioned, so the
        // vanishing-noise limit actually interpolates within f64.
        let spec = FeatureMapSpec::new(KernelKind::Rbf, 3, 128)
            .with_seed(3)
            .with_hyperparams(1e-6, 1.0, 2.5)
            .with_variance_rffs(64);
        let model = GPModel::fit(&ds, &spec, &FitOptions::dense()).unwrap();
        let (means, _) = model.predict(&ChunkData::Fixed(x)).unwrap();
        let range = y.iter().fold(f64::MIN, |a, &v| a.max(v))
            - y.iter().fold(f64::MAX, |a, &v| a.min(v));
        for (m, t) in means.iter().zip(y.iter()) {
            assert!((m - t).abs() <= 1e-3 * range, "{m} vs {t}");
        }
    }

    #[test]
    fn fit_matches_closed_form_ridge() {
        let dir = tempdir().unwrap();
        let (ds, _, _) = toy(dir.path(), 2, 300, 4, 64);
        let spec = FeatureMapSpec::new(KernelKind::Rbf, 4, 256)
            .with_seed(5)
            .with_hyperparams(0.3, 1.1, 0.9)
            .with_variance_rffs(64);
        let pcg = GPModel::fit(
            &ds,
            &spec,
            &FitOptions {
                tol: 1e-8,
                precond_rank: 64,
                ..Default::default()
            },
        )
        .unwrap();
        // Dense ridge oracle.
        let map = FeatureMap::build(&spec).unwrap();
        let src = MappedDataset::new(&ds, &map).unwrap();
        let (z, y) = crate::stream::materialize(&src).unwrap();
        let gram = z.t().dot(&z);
        let zty = z.t().dot(&y);
        let l2 = spec.lambda * spec.lambda;
        let mut reg = gram.clone();
        for i in 0..256 {
            reg[(i, i)] += l2;
        }
        let want = crate::linalg::to_na(reg.view())
            .lu()
            .solve(&crate::linalg::to_na_vec(zty.view()))
            .unwrap();
        let scale = want.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        for (a, b) in pcg.weights().iter().zip(want.iter()) {
            assert!((a - b).abs() <= 1e-4 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn refit_is_bit_identical() {
        let dir = tempdir().unwrap();
        let (ds, _, _) = toy(dir.path(), 3, 100, 3, 32);
        let spec = FeatureMapSpec::new(KernelKind::Rbf, 3, 64)
            .with_seed(11)
            .with_hyperparams(0.2, 1.0, 1.0)
            .with_variance_rffs(32);
        let opts = FitOptions {
            precond_rank: 16,
            ..Default::default()
        };
        let a = GPModel::fit(&ds, &spec, &opts).unwrap();
        let b = GPModel::fit(&ds, &spec, &opts).unwrap();
        assert_eq!(a.weights(), b.weights());
        assert_eq!(a.var_chol(), b.var_chol());
    }

    #[test]
    fn variance_recovers_prior_amplitude_at_dominant_noise() {
        let dir = tempdir().unwrap();
        let (ds, x, _) = toy(dir.path(), 4, 60, 3, 16);
        let beta = 1.7;
        let spec = FeatureMapSpec::new(KernelKind::Rbf, 3, 64)
            .with_seed(2)
            .with_hyperparams(1e4, beta, 1.0)
            .with_variance_rffs(32);
        let model = GPModel::fit(&ds, &spec, &FitOptions::dense()).unwrap();
        let (_, vars) = model.predict(&ChunkData::Fixed(x)).unwrap();
        for v in vars.iter() {
            assert!((v - beta * beta).abs() <= 1e-4 * beta * beta, "{v}");
        }
    }

    #[test]
    fn variance_matches_dense_formula() {
        let dir = tempdir().unwrap();
        let (ds, x, _) = toy(dir.path(), 5, 120, 3, 32);
        let spec = FeatureMapSpec::new(KernelKind::Rbf, 3, 128)
            .with_seed(7)
            .with_hyperparams(0.4, 1.0, 0.8)
            .with_variance_rffs(48);
        let model = GPModel::fit(&ds, &spec, &FitOptions::dense()).unwrap();
        let (_, vars) = model.predict(&ChunkData::Fixed(x.clone())).unwrap();

        // Dense oracle at the variance feature count.
        let var_map = FeatureMap::build_variance(&spec).unwrap();
        let src = MappedDataset::new(&ds, &var_map).unwrap();
        let (zv, _) = crate::stream::materialize(&src).unwrap();
        let l2 = spec.lambda * spec.lambda;
        let mut reg = zv.t().dot(&zv);
        for i in 0..48 {
            reg[(i, i)] += l2;
        }
        let inv = crate::linalg::to_na(reg.view()).try_inverse().unwrap();
        let zq = var_map.transform_chunk(&ChunkData::Fixed(x)).unwrap();
        for (i, row) in zq.axis_iter(Axis(0)).enumerate() {
            let rna = crate::linalg::to_na_vec(row);
            let want = l2 * rna.dot(&(&inv * &rna));
            assert!(
                (vars[i] - want).abs() <= 1e-6 * want.abs().max(1e-12),
                "{} vs {want}",
                vars[i]
            );
        }
    }

    #[test]
    fn means_invariant_to_variance_feature_count() {
        let dir = tempdir().unwrap();
        let (ds, x, _) = toy(dir.path(), 6, 80, 3, 32);
        let mk = |m_var: usize| {
            let spec = FeatureMapSpec::new(KernelKind::Rbf, 3, 64)
                .with_seed(4)
                .with_hyperparams(0.3, 1.0, 1.0)
                .with_variance_rffs(m_var);
            GPModel::fit(&ds, &spec, &FitOptions::dense()).unwrap()
        };
        let a = mk(16);
        let b = mk(64);
        let (ma, va) = a.predict(&ChunkData::Fixed(x.clone())).unwrap();
        let (mb, vb) = b.predict(&ChunkData::Fixed(x)).unwrap();
        assert_eq!(ma, mb);
        assert_ne!(va, vb);
    }

    #[test]
    fn non_convergence_is_flagged_but_usable() {
        let dir = tempdir().unwrap();
        let (ds, x, _) = toy(dir.path(), 7, 200, 4, 64);
        let spec = FeatureMapSpec::new(KernelKind::Rbf, 4, 128)
            .with_seed(9)
            .with_hyperparams(1e-4, 1.0, 1.0)
            .with_variance_rffs(32);
        let model = GPModel::fit(
            &ds,
            &spec,
            &FitOptions {
                maxiter: 2,
                precond_rank: 0,
                tol: 1e-12,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(model.manifest().fit_warning.is_some());
        let (means, vars) = model.predict(&ChunkData::Fixed(x)).unwrap();
        assert!(means.iter().all(|v| v.is_finite()));
        assert!(vars.iter().all(|&v| v >= 0.0));
    }
}
