//! Negative marginal log likelihood, exact and approximate.
//!
//! The exact path streams the dataset once per sigma value, accumulating
//! `W = Q^T Q`, `S = Q^T y` and `a = y^T y` with `Q = Z / beta`, then
//! eigendecomposes `W` once. Every `(lambda, beta)` evaluation after that is
//! closed form:
//!
//! ```text
//! nmll = -(beta^2 / 2 lambda^2) sum_k S_k^2 / (beta^2 L_k + lambda^2)
//!        + a / (2 lambda^2)
//!        + (n - m) log lambda + 1/2 sum_k log(beta^2 L_k + lambda^2)
//!        + (n / 2) log 2 pi
//! ```
//!
//! The approximate path takes the performance term from the PCG weight column
//! and the log-determinant from stochastic Lanczos quadrature.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMap, FeatureMapSpec};
use crate::linalg;
use crate::precond::{build_preconditioner, PrecondVariant};
use crate::solve::{pcg_slq_solve, GramSystem, DENSE_GUARD};
use crate::stream::{FeatureSource, MappedDataset};
use crate::dataset::ChunkedDataset;

/// Decomposed objective; `total` is the sum of the three parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmllTerms {
    /// Data-fit quadratic, `(y^T y - y^T Z w) / (2 lambda^2)`; nonnegative.
    pub performance_term: f64,
    /// `(n - m) log lambda + 1/2 log|Z^T Z + lambda^2 I|`.
    pub logdet_term: f64,
    /// `(n / 2) log 2 pi`.
    pub constant_terms: f64,
    pub total: f64,
}

impl NmllTerms {
    fn assemble(performance_term: f64, logdet_term: f64, constant_terms: f64) -> Self {
        Self {
            performance_term,
            logdet_term,
            constant_terms,
            total: performance_term + logdet_term + constant_terms,
        }
    }
}

/// One streaming pass worth of sufficient statistics, reusable across a whole
/// `(lambda, beta)` grid.
#[derive(Debug, Clone)]
pub struct NmllCache {
    /// Eigenvalues of `Q^T Q`, descending, clamped nonnegative.
    pub eigvals: Array1<f64>,
    /// `U^T Q^T y` in the same eigen order.
    pub rotated: Array1<f64>,
    /// `y^T y`.
    pub y_sq: f64,
    pub num_rows: usize,
    pub num_features: usize,
}

impl NmllCache {
    /// Build from a source streaming *unit-amplitude* features (`beta = 1`);
    /// the amplitude re-enters analytically in [`NmllCache::evaluate`], which
    /// keeps one cache valid for every `(lambda, beta)` pair and makes grid
    /// reuse bit-identical to a fresh evaluation.
    pub fn build(source: &impl FeatureSource) -> Result<Self> {
        let m = source.num_features();
        if m > DENSE_GUARD {
            return Err(Error::DenseGuard {
                what: "nmll gram accumulation",
                got: m,
                guard: DENSE_GUARD,
            });
        }
        let mut w = ndarray::Array2::<f64>::zeros((m, m));
        let mut s = Array1::<f64>::zeros(m);
        let mut y_sq = 0.0;
        source.for_each_feature_chunk(&mut |z, y| {
            w += &z.t().dot(&z);
            s += &z.t().dot(&y);
            y_sq += y.dot(&y);
            Ok(())
        })?;
        // Scale-relative shift before the decomposition, removed afterwards.
        let max_diag = (0..m).fold(0.0f64, |acc, i| acc.max(w[(i, i)].abs()));
        let delta = 1e-5 * max_diag;
        for i in 0..m {
            w[(i, i)] += delta;
        }
        let (vals, vecs) = linalg::eigh_desc(w.view())?;
        let eigvals = vals.mapv(|v| (v - delta).max(0.0));
        let rotated = vecs.t().dot(&s);
        Ok(Self {
            eigvals,
            rotated,
            y_sq,
            num_rows: source.num_rows(),
            num_features: m,
        })
    }

    /// Closed-form evaluation at `(lambda, beta)`.
    pub fn evaluate(&self, lambda: f64, beta: f64) -> Result<NmllTerms> {
        if !(lambda > 0.0) || !(beta > 0.0) {
            return Err(Error::InvalidHyperparam {
                name: if lambda > 0.0 { "beta" } else { "lambda" },
                reason: "nmll requires lambda > 0 and beta > 0".into(),
            });
        }
        let l2 = lambda * lambda;
        let b2 = beta * beta;
        let mut quad = 0.0;
        let mut logsum = 0.0;
        for (&ev, &s) in self.eigvals.iter().zip(self.rotated.iter()) {
            let denom = b2 * ev + l2;
            quad += s * s / denom;
            logsum += denom.ln();
        }
        let performance = -(b2 / (2.0 * l2)) * quad + self.y_sq / (2.0 * l2);
        let n = self.num_rows as f64;
        let m = self.num_features as f64;
        let logdet = (n - m) * lambda.ln() + 0.5 * logsum;
        let constant = n / 2.0 * (2.0 * std::f64::consts::PI).ln();
        Ok(NmllTerms::assemble(performance, logdet, constant))
    }
}

/// Build the reusable cache for a spec's kernel and sigma (its lambda/beta are
/// ignored; the features stream at unit amplitude).
pub fn build_nmll_cache(dataset: &ChunkedDataset, spec: &FeatureMapSpec) -> Result<NmllCache> {
    let unit = spec.clone().with_hyperparams(spec.lambda, 1.0, spec.sigma);
    let map = FeatureMap::build(&unit)?;
    let source = MappedDataset::new(dataset, &map)?;
    NmllCache::build(&source)
}

/// Exact NMLL at the spec's hyperparameters via one streaming pass and one
/// eigendecomposition.
pub fn nmll_exact(dataset: &ChunkedDataset, spec: &FeatureMapSpec) -> Result<NmllTerms> {
    build_nmll_cache(dataset, spec)?.evaluate(spec.lambda, spec.beta)
}

/// Solver settings for the approximate marginal-likelihood path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApproxNmllOptions {
    pub precond_rank: usize,
    pub variant: PrecondVariant,
    pub n_v: usize,
    pub tol: f64,
    pub maxiter: usize,
    pub seed: u64,
}

impl Default for ApproxNmllOptions {
    fn default() -> Self {
        Self {
            precond_rank: 256,
            variant: PrecondVariant::Srht2,
            n_v: 25,
            tol: crate::solve::DEFAULT_TUNE_TOL,
            maxiter: crate::solve::DEFAULT_MAXITER,
            seed: 0,
        }
    }
}

/// Approximate NMLL: performance term from the PCG weight column, log
/// determinant from stochastic Lanczos quadrature.
pub fn nmll_approx(
    dataset: &ChunkedDataset,
    spec: &FeatureMapSpec,
    opts: &ApproxNmllOptions,
) -> Result<NmllTerms> {
    let map = FeatureMap::build(spec)?;
    let source = MappedDataset::new(dataset, &map)?;
    nmll_approx_source(&source, spec, opts)
}

/// Approximate NMLL on any feature source (the features must already include
/// the spec's beta and sigma).
pub fn nmll_approx_source(
    source: &impl FeatureSource,
    spec: &FeatureMapSpec,
    opts: &ApproxNmllOptions,
) -> Result<NmllTerms> {
    let lambda = spec.lambda;
    let rank = opts.precond_rank.min(source.num_features());
    let precond = build_preconditioner(source, rank, lambda, opts.variant, opts.seed)?;
    let sys = GramSystem::new(source, lambda)?;
    let (zty, y_sq) = crate::stream::feature_target_product_with_norm(source)?;
    let report = pcg_slq_solve(
        &sys,
        zty.view(),
        &precond,
        opts.n_v,
        opts.tol,
        opts.maxiter,
        opts.seed,
    )?;
    let l2 = lambda * lambda;
    let performance = (y_sq - zty.dot(&report.weights)) / (2.0 * l2);
    let n = source.num_rows() as f64;
    let m = source.num_features() as f64;
    let logdet = (n - m) * lambda.ln()
        + 0.5 * report.logdet_estimate.expect("slq path always estimates");
    let constant = n / 2.0 * (2.0 * std::f64::consts::PI).ln();
    Ok(NmllTerms::assemble(performance, logdet, constant))
}
