//! Hyperparameter tuning.
//!
//! The grid tuner streams the dataset once per sigma value and reuses that
//! pass's eigendecomposition for the entire `(lambda, beta)` grid. The
//! Bayesian tuner Thompson-samples sigma from a small exact Matern-5/2
//! surrogate, scoring each sigma with the same closed-form grid. Hyperparameter
//! search happens in log10 space throughout.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nmll::{nmll_approx, ApproxNmllOptions};
use super::surrogate::MaternSurrogate;
use crate::dataset::ChunkedDataset;
use crate::error::{Error, Result};
use crate::features::FeatureMapSpec;
use crate::rng::{self, StreamDomain};


#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuneMethod {
    Grid,
    Bayes,
    ApproxMll,
}

/// One scored hyperparameter combination.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TuneEval {
    pub lambda: f64,
    pub beta: f64,
    pub sigma: f64,
    pub nmll: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: TuneEval,
    pub trace: Vec<TuneEval>,
    pub method: TuneMethod,
}

impl TuneResult {
    fn from_trace(trace: Vec<TuneEval>, method: TuneMethod) -> Result<Self> {
        let best = trace
            .iter()
            .copied()
            .min_by(|a, b| a.nmll.total_cmp(&b.nmll))
            .ok_or_else(|| Error::EmptySearchSpace("no evaluations".into()))?;
        Ok(Self {
            best,
            trace,
            method,
        })
    }

    /// The spec updated with the winning hyperparameters.
    pub fn apply_to(&self, spec: &FeatureMapSpec) -> FeatureMapSpec {
        spec.clone()
            .with_hyperparams(self.best.lambda, self.best.beta, self.best.sigma)
    }
}

fn check_grids(lambda_grid: &[f64], beta_grid: &[f64]) -> Result<()> {
    if lambda_grid.is_empty() || beta_grid.is_empty() {
        return Err(Error::EmptySearchSpace(
            "lambda and beta grids must be nonempty".into(),
        ));
    }
    for &l in lambda_grid {
        if !(l > 0.0) {
            return Err(Error::InvalidHyperparam {
                name: "lambda",
                reason: format!("grid value {l} is not positive"),
            });
        }
    }
    for &b in beta_grid {
        if !(b > 0.0) {
            return Err(Error::InvalidHyperparam {
                name: "beta",
                reason: format!("grid value {b} is not positive"),
            });
        }
    }
    Ok(())
}

/// Score one sigma: stream once, eigendecompose once, evaluate the whole
/// `(lambda, beta)` grid in closed form.
fn grid_at_sigma(
    dataset: &ChunkedDataset,
    base: &FeatureMapSpec,
    sigma: f64,
    lambda_grid: &[f64],
    beta_grid: &[f64],
) -> Result<Vec<TuneEval>> {
    let spec = base.clone().with_hyperparams(base.lambda, base.beta, sigma);
    let cache = super::nmll::build_nmll_cache(dataset, &spec)?;
    let mut evals = Vec::with_capacity(lambda_grid.len() * beta_grid.len());
    for &lambda in lambda_grid {
        for &beta in beta_grid {
            let terms = cache.evaluate(lambda, beta)?;
            evals.push(TuneEval {
                lambda,
                beta,
                sigma,
                nmll: terms.total,
            });
        }
    }
    Ok(evals)
}

/// Exhaustive closed-form grid search over `(sigma, lambda, beta)`.
pub fn tune_grid(
    dataset: &ChunkedDataset,
    base: &FeatureMapSpec,
    sigma_values: &[f64],
    lambda_grid: &[f64],
    beta_grid: &[f64],
) -> Result<TuneResult> {
    if sigma_values.is_empty() {
        return Err(Error::EmptySearchSpace("sigma grid is empty".into()));
    }
    check_grids(lambda_grid, beta_grid)?;
    let mut trace = Vec::new();
    for &sigma in sigma_values {
        trace.extend(grid_at_sigma(dataset, base, sigma, lambda_grid, beta_grid)?);
    }
    TuneResult::from_trace(trace, TuneMethod::Grid)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BayesOptions {
    /// Random sigma evaluations before the surrogate starts, at least 5.
    pub n_init: usize,
    /// Total evaluation budget including the initial design.
    pub maxiter: usize,
    /// Candidate sigmas drawn per iteration.
    pub n_candidates: usize,
    /// Posterior samples drawn per iteration.
    pub m_samples: usize,
    /// Stop when the proposed sigma is within this log10 distance of the
    /// incumbent.
    pub tol: f64,
    pub seed: u64,
}

impl Default for BayesOptions {
    fn default() -> Self {
        Self {
            n_init: 10,
            maxiter: 30,
            n_candidates: 64,
            m_samples: 1,
            tol: 1e-2,
            seed: 0,
        }
    }
}

/// Thompson-sampling optimization of sigma with `(lambda, beta)` handled by
/// the closed-form grid at every evaluation. `sigma_bounds_log10` are the
/// (low, high) log10 limits of the search box.
pub fn tune_bayes(
    dataset: &ChunkedDataset,
    base: &FeatureMapSpec,
    sigma_bounds_log10: (f64, f64),
    lambda_grid: &[f64],
    beta_grid: &[f64],
    opts: &BayesOptions,
) -> Result<TuneResult> {
    let (lo, hi) = sigma_bounds_log10;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::EmptySearchSpace(format!(
            "sigma bounds ({lo}, {hi}) are degenerate"
        )));
    }
    check_grids(lambda_grid, beta_grid)?;

    let n_init = opts.n_init.max(5);
    let mut rng = rng::substream(opts.seed, StreamDomain::Tuning, 0);
    let mut sigma_log: Vec<f64> = Vec::new();
    let mut scores: Vec<f64> = Vec::new();
    let mut trace: Vec<TuneEval> = Vec::new();

    let evaluate = |s_log: f64,
                        sigma_log: &mut Vec<f64>,
                        scores: &mut Vec<f64>,
                        trace: &mut Vec<TuneEval>|
     -> Result<f64> {
        let sigma = 10f64.powf(s_log);
        let evals = grid_at_sigma(dataset, base, sigma, lambda_grid, beta_grid)?;
        let best = evals
            .iter()
            .map(|e| e.nmll)
            .fold(f64::INFINITY, f64::min);
        trace.extend(evals);
        sigma_log.push(s_log);
        scores.push(best);
        Ok(best)
    };

    for _ in 0..n_init.min(opts.maxiter) {
        let s_log = rng.gen_range(lo..hi);
        evaluate(s_log, &mut sigma_log, &mut scores, &mut trace)?;
    }

    let mut iter = sigma_log.len();
    while iter < opts.maxiter {
        let points =
            Array2::from_shape_vec((sigma_log.len(), 1), sigma_log.clone()).expect("shape");
        let values = Array1::from_vec(scores.clone());
        let surrogate = MaternSurrogate::fit(points.view(), values.view())?;

        let mut cand_rng = rng::substream(opts.seed, StreamDomain::Tuning, iter as u64 + 1);
        let cands: Vec<f64> = (0..opts.n_candidates.max(1))
            .map(|_| cand_rng.gen_range(lo..hi))
            .collect();
        let cand_matrix =
            Array2::from_shape_vec((cands.len(), 1), cands.clone()).expect("shape");
        let samples =
            surrogate.sample(cand_matrix.view(), opts.m_samples.max(1), &mut cand_rng)?;
        // Winner: the candidate achieving the smallest sampled objective.
        let mut best_cand = 0;
        let mut best_val = f64::INFINITY;
        for row in samples.outer_iter() {
            for (j, &v) in row.iter().enumerate() {
                if v < best_val {
                    best_val = v;
                    best_cand = j;
                }
            }
        }
        let proposal = cands[best_cand];

        let incumbent_idx = scores
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("nonempty");
        if (proposal - sigma_log[incumbent_idx]).abs() < opts.tol {
            break;
        }
        evaluate(proposal, &mut sigma_log, &mut scores, &mut trace)?;
        iter += 1;
    }

    TuneResult::from_trace(trace, TuneMethod::Bayes)
}

/// Grid search scored by the approximate (PCG + quadrature) marginal
/// likelihood; every point costs a full iterative solve, so grids here are
/// expected to be small.
pub fn tune_approx_mll(
    dataset: &ChunkedDataset,
    base: &FeatureMapSpec,
    sigma_values: &[f64],
    lambda_grid: &[f64],
    beta_grid: &[f64],
    opts: &ApproxNmllOptions,
) -> Result<TuneResult> {
    if sigma_values.is_empty() {
        return Err(Error::EmptySearchSpace("sigma grid is empty".into()));
    }
    check_grids(lambda_grid, beta_grid)?;
    let mut trace = Vec::new();
    for &sigma in sigma_values {
        for &lambda in lambda_grid {
            for &beta in beta_grid {
                let spec = base.clone().with_hyperparams(lambda, beta, sigma);
                let terms = nmll_approx(dataset, &spec, opts)?;
                trace.push(TuneEval {
                    lambda,
                    beta,
                    sigma,
                    nmll: terms.total,
                });
            }
        }
    }
    TuneResult::from_trace(trace, TuneMethod::ApproxMll)
}
