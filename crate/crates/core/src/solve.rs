//! Streaming conjugate-gradient solvers for the regularized Gram system
//! `(Z^T Z + lambda^2 I) w = b`, plus the dense eigendecomposition path for
//! small feature counts.
//!
//! The multi-right-hand-side engine drives every column through the same
//! preconditioned recurrences; probe columns additionally feed stochastic
//! Lanczos quadrature, which rebuilds each probe's Lanczos tridiagonal from
//! the stored alpha/beta coefficients and integrates `log theta` against the
//! squared first eigenvector components. Converged columns are frozen so that
//! late iterations cannot contaminate their coefficients.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::precond::NystromPreconditioner;
use crate::rng::{self, StreamDomain};
use crate::stream::FeatureSource;

/// Iteration cap when the caller does not specify one.
pub const DEFAULT_MAXITER: usize = 500;
/// Relative-residual tolerance used for fitting.
pub const DEFAULT_FIT_TOL: f64 = 1e-6;
/// Looser tolerance used by marginal-likelihood tuning passes.
pub const DEFAULT_TUNE_TOL: f64 = 1e-5;
/// Largest feature count the dense paths will assemble.
pub const DENSE_GUARD: usize = 8192;

/// The regularized Gram operator `v -> (Z^T Z + lambda^2 I) v`, evaluated by
/// one streaming pass per application.
pub struct GramSystem<'a, S: FeatureSource> {
    source: &'a S,
    lambda: f64,
}

impl<'a, S: FeatureSource> GramSystem<'a, S> {
    pub fn new(source: &'a S, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidHyperparam {
                name: "lambda",
                reason: "gram system requires lambda > 0".into(),
            });
        }
        Ok(Self { source, lambda })
    }

    pub fn dim(&self) -> usize {
        self.source.num_features()
    }

    pub fn num_rows(&self) -> usize {
        self.source.num_rows()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn source(&self) -> &'a S {
        self.source
    }

    /// `B = (Z^T Z + lambda^2 I) P` for a block of column vectors.
    pub fn matvec(&self, p: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if p.nrows() != self.dim() {
            return Err(Error::InvalidDimension {
                what: "matvec rows",
                expected: self.dim(),
                got: p.nrows(),
            });
        }
        let mut b = Array2::zeros(p.raw_dim());
        self.source.for_each_feature_chunk(&mut |z, _| {
            let zp = z.dot(&p);
            b += &z.t().dot(&zp);
            Ok(())
        })?;
        let l2 = self.lambda * self.lambda;
        b.zip_mut_with(&p, |bv, &pv| *bv += l2 * pv);
        Ok(b)
    }
}

/// Trajectory and outputs of one solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    /// Solution for the `Z^T y` right-hand side.
    #[serde(skip, default)]
    pub weights: Array1<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Per-iteration relative residual, one entry per right-hand side.
    pub residual_history: Vec<Vec<f64>>,
    /// Per-iteration step coefficients, one row per iteration.
    pub alphas: Vec<Vec<f64>>,
    /// Per-iteration direction-update coefficients.
    pub betas: Vec<Vec<f64>>,
    pub logdet_estimate: Option<f64>,
}

struct EngineOutput {
    w: Array2<f64>,
    alphas: Vec<Vec<f64>>,
    betas: Vec<Vec<f64>>,
    residual_history: Vec<Vec<f64>>,
    /// Iteration index at which each column first met the tolerance.
    converged_at: Vec<Option<usize>>,
    iterations: usize,
}

fn apply_precond(
    precond: Option<&NystromPreconditioner>,
    r: &Array2<f64>,
) -> Result<Array2<f64>> {
    match precond {
        Some(p) => p.apply_inverse(r.view()),
        None => Ok(r.clone()),
    }
}

fn column_dots(a: &Array2<f64>, b: &Array2<f64>) -> Vec<f64> {
    (0..a.ncols())
        .map(|k| a.column(k).dot(&b.column(k)))
        .collect()
}

fn pcg_engine(
    sys: &GramSystem<'_, impl FeatureSource>,
    rhs: ArrayView2<'_, f64>,
    tol: f64,
    maxiter: usize,
    precond: Option<&NystromPreconditioner>,
) -> Result<EngineOutput> {
    let m = sys.dim();
    let k = rhs.ncols();
    if rhs.nrows() != m {
        return Err(Error::InvalidDimension {
            what: "right-hand side rows",
            expected: m,
            got: rhs.nrows(),
        });
    }
    let norm0: Vec<f64> = (0..k)
        .map(|j| rhs.column(j).dot(&rhs.column(j)).sqrt())
        .collect();

    let mut w = Array2::zeros((m, k));
    let mut r = rhs.to_owned();
    let mut z = apply_precond(precond, &r)?;
    let mut p = z.clone();
    let mut rz = column_dots(&r, &z);

    let mut converged_at: Vec<Option<usize>> = norm0
        .iter()
        .map(|&n| if n == 0.0 { Some(0) } else { None })
        .collect();
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    let mut residual_history = Vec::new();
    let mut iterations = 0;

    for j in 0..maxiter {
        if converged_at.iter().all(|c| c.is_some()) {
            break;
        }
        iterations = j + 1;
        let b = sys.matvec(p.view())?;
        let pb = column_dots(&p, &b);
        let mut alpha = vec![0.0; k];
        for col in 0..k {
            if converged_at[col].is_some() {
                continue;
            }
            if !(pb[col] > 0.0) {
                return Err(Error::NumericalBreakdown(format!(
                    "non-positive curvature p.Ap = {} in column {col} at iteration {j}",
                    pb[col]
                )));
            }
            alpha[col] = rz[col] / pb[col];
        }
        // w += alpha . p ; r -= alpha . b  (frozen columns have alpha = 0)
        for col in 0..k {
            if alpha[col] == 0.0 {
                continue;
            }
            let a = alpha[col];
            let mut wc = w.column_mut(col);
            wc.zip_mut_with(&p.column(col), |x, &pv| *x += a * pv);
            let mut rc = r.column_mut(col);
            rc.zip_mut_with(&b.column(col), |x, &bv| *x -= a * bv);
        }
        let errs: Vec<f64> = (0..k)
            .map(|col| {
                let n = r.column(col).dot(&r.column(col)).sqrt();
                if norm0[col] == 0.0 {
                    0.0
                } else {
                    n / norm0[col]
                }
            })
            .collect();
        for col in 0..k {
            if converged_at[col].is_none() && errs[col] <= tol {
                converged_at[col] = Some(j);
            }
        }
        z = apply_precond(precond, &r)?;
        let rz_new = column_dots(&r, &z);
        let mut beta = vec![0.0; k];
        for col in 0..k {
            // A column that converged exactly at this iteration keeps its
            // beta: it closes the tridiagonal row for that probe.
            if matches!(converged_at[col], Some(t) if t < j) {
                continue;
            }
            if rz[col] != 0.0 {
                beta[col] = rz_new[col] / rz[col];
            }
        }
        for col in 0..k {
            if matches!(converged_at[col], Some(t) if t < j) {
                continue;
            }
            let bcoef = beta[col];
            let zc = z.column(col).to_owned();
            let mut pc = p.column_mut(col);
            pc.zip_mut_with(&zc, |x, &zv| *x = zv + bcoef * *x);
        }
        rz = rz_new;
        alphas.push(alpha);
        betas.push(beta);
        residual_history.push(errs);
    }

    Ok(EngineOutput {
        w,
        alphas,
        betas,
        residual_history,
        converged_at,
        iterations,
    })
}

/// Solve for a single right-hand side; `precond = None` gives plain CG.
///
/// Exhausting `maxiter` is not an error: the report comes back with
/// `converged = false` and the best iterate so far.
pub fn cg_solve(
    sys: &GramSystem<'_, impl FeatureSource>,
    rhs: ArrayView1<'_, f64>,
    tol: f64,
    maxiter: usize,
    precond: Option<&NystromPreconditioner>,
) -> Result<SolveReport> {
    let rhs2 = rhs.insert_axis(Axis(1));
    let out = pcg_engine(sys, rhs2, tol, maxiter, precond)?;
    Ok(SolveReport {
        weights: out.w.index_axis(Axis(1), 0).to_owned(),
        iterations: out.iterations,
        converged: out.converged_at[0].is_some(),
        residual_history: out.residual_history,
        alphas: out.alphas,
        betas: out.betas,
        logdet_estimate: None,
    })
}

/// Multi-right-hand-side PCG that solves the `Z^T y` system and estimates
/// `log|Z^T Z + lambda^2 I|` at the same time.
///
/// `n_v` probe vectors are drawn from a normal distribution whose covariance
/// is the preconditioner (`P^(1/2) g`); their conjugate-gradient coefficients
/// assemble Lanczos tridiagonals whose Gauss quadrature integrates the log of
/// the preconditioned spectrum. The preconditioner's own log-determinant is
/// added back at the end.
#[allow(clippy::too_many_arguments)]
pub fn pcg_slq_solve(
    sys: &GramSystem<'_, impl FeatureSource>,
    rhs_zty: ArrayView1<'_, f64>,
    precond: &NystromPreconditioner,
    n_v: usize,
    tol: f64,
    maxiter: usize,
    seed: u64,
) -> Result<SolveReport> {
    if n_v == 0 {
        return Err(Error::InvalidInput("n_v must be >= 1".into()));
    }
    let m = sys.dim();
    if precond.dim() != m {
        return Err(Error::InvalidDimension {
            what: "preconditioner dimension",
            expected: m,
            got: precond.dim(),
        });
    }
    if precond.lambda() != sys.lambda() {
        return Err(Error::InvalidHyperparam {
            name: "lambda",
            reason: format!(
                "preconditioner was built at lambda = {}, solver uses {}",
                precond.lambda(),
                sys.lambda()
            ),
        });
    }
    let mut rhs = Array2::zeros((m, n_v + 1));
    for i in 0..n_v {
        let mut rng = rng::substream(seed, StreamDomain::TraceProbe, i as u64);
        let g = Array1::from_vec(rng::standard_normal(&mut rng, m));
        let c = precond.apply_sqrt(g.view())?;
        rhs.column_mut(i).assign(&c);
    }
    rhs.column_mut(n_v).assign(&rhs_zty);

    let out = pcg_engine(sys, rhs.view(), tol, maxiter, Some(precond))?;

    // Quadrature: each probe's tridiagonal corresponds to Lanczos on the
    // preconditioned operator started from the *normalized* probe, so
    // sum_m tau_m^2 log(theta_m) approximates v^T log(.) v with |v| = 1 and
    // the trace estimate scales by M / n_v. Normalizing (rather than carrying
    // each probe's squared norm) removes the chi-squared norm fluctuation and
    // makes the estimate exact for isotropic spectra. log|P| restores the
    // unpreconditioned determinant.
    let mut gamma = 0.0;
    for probe in 0..n_v {
        let t_len = out.converged_at[probe].map_or(out.iterations, |t| t + 1);
        if t_len == 0 {
            continue;
        }
        let t = lanczos_tridiagonal(&out.alphas, &out.betas, probe, t_len);
        let eig = linalg::to_na(t.view()).symmetric_eigen();
        for mi in 0..t_len {
            let theta = eig.eigenvalues[mi];
            if !(theta > 0.0) {
                return Err(Error::NumericalBreakdown(format!(
                    "non-positive Ritz value {theta} for probe {probe}"
                )));
            }
            let tau = eig.eigenvectors[(0, mi)];
            gamma += tau * tau * theta.ln();
        }
    }
    let logdet = gamma * m as f64 / n_v as f64 + precond.logdet();

    Ok(SolveReport {
        weights: out.w.index_axis(Axis(1), n_v).to_owned(),
        iterations: out.iterations,
        converged: out.converged_at.iter().all(|c| c.is_some()),
        residual_history: out.residual_history,
        alphas: out.alphas,
        betas: out.betas,
        logdet_estimate: Some(logdet),
    })
}

/// Tridiagonal Lanczos matrix for one probe from stored CG coefficients:
/// `T[j,j] = 1/alpha_j + beta_{j-1}/alpha_{j-1}`, off-diagonals
/// `sqrt(beta_j)/alpha_j`.
fn lanczos_tridiagonal(
    alphas: &[Vec<f64>],
    betas: &[Vec<f64>],
    col: usize,
    t_len: usize,
) -> Array2<f64> {
    let mut t = Array2::zeros((t_len, t_len));
    for j in 0..t_len {
        let a = alphas[j][col];
        t[(j, j)] = 1.0 / a;
        if j > 0 {
            let ap = alphas[j - 1][col];
            t[(j, j)] += betas[j - 1][col] / ap;
        }
        if j + 1 < t_len {
            let off = betas[j][col].max(0.0).sqrt() / a;
            t[(j, j + 1)] = off;
            t[(j + 1, j)] = off;
        }
    }
    t
}

/// Result of the dense small-feature-count solve.
#[derive(Debug, Clone)]
pub struct DenseEigSolve {
    pub weights: Array1<f64>,
    /// Eigenvalues of the (unregularized) Gram, descending and nonnegative.
    pub eigvals: Array1<f64>,
    /// Target rotated into the eigenbasis, `U^T Z^T y`.
    pub rotated_target: Array1<f64>,
}

/// Solve via one eigendecomposition of the assembled Gram matrix. The
/// eigenpair `(eigvals, rotated_target)` can be reused to re-evaluate the
/// solution and the marginal likelihood at other `(lambda, beta)` values.
pub fn dense_eig_solve(
    gram: ArrayView2<'_, f64>,
    zty: ArrayView1<'_, f64>,
    lambda: f64,
) -> Result<DenseEigSolve> {
    let m = gram.nrows();
    if m > DENSE_GUARD {
        return Err(Error::DenseGuard {
            what: "eigendecomposition",
            got: m,
            guard: DENSE_GUARD,
        });
    }
    if gram.ncols() != m || zty.len() != m {
        return Err(Error::InvalidDimension {
            what: "gram/zty",
            expected: m,
            got: zty.len(),
        });
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidHyperparam {
            name: "lambda",
            reason: "dense solve requires lambda > 0".into(),
        });
    }
    // Shift by a scale-relative delta before decomposing, remove it after.
    let max_diag = (0..m).fold(0.0f64, |acc, i| acc.max(gram[(i, i)].abs()));
    let delta = 1e-5 * max_diag;
    let mut shifted = gram.to_owned();
    for i in 0..m {
        shifted[(i, i)] += delta;
    }
    let (vals, vecs) = linalg::eigh_desc(shifted.view())?;
    let eigvals = vals.mapv(|v| (v - delta).max(0.0));
    let rotated = vecs.t().dot(&zty);
    let l2 = lambda * lambda;
    let scaled = ndarray::Zip::from(&rotated)
        .and(&eigvals)
        .map_collect(|&s, &ev| s / (ev + l2));
    let weights = vecs.dot(&scaled);
    Ok(DenseEigSolve {
        weights,
        eigvals,
        rotated_target: rotated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precond::{build_preconditioner, PrecondVariant};
    use crate::stream::{assemble_gram, feature_target_product, DenseSource};
    use rand::Rng as _;

    fn random_source(seed: u64, n: usize, m: usize, scale: impl Fn(usize) -> f64) -> DenseSource {
        let mut rng = rng::substream(seed, StreamDomain::Bench, 5);
        let z = Array2::from_shape_fn((n, m), |(_, j)| rng.gen_range(-1.0..1.0f64) * scale(j));
        let y = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0));
        DenseSource::new(z, y).unwrap()
    }

    #[test]
    fn matvec_zero_vector_and_symmetry() {
        let src = random_source(1, 50, 16, |_| 1.0);
        let sys = GramSystem::new(&src, 0.3).unwrap();
        let zero = Array2::zeros((16, 1));
        let out = sys.matvec(zero.view()).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));

        let mut rng = rng::substream(9, StreamDomain::Bench, 6);
        let u = Array1::from_vec(rng::standard_normal(&mut rng, 16));
        let v = Array1::from_vec(rng::standard_normal(&mut rng, 16));
        let au = sys
            .matvec(u.view().insert_axis(Axis(1)))
            .unwrap()
            .index_axis(Axis(1), 0)
            .to_owned();
        let av = sys
            .matvec(v.view().insert_axis(Axis(1)))
            .unwrap()
            .index_axis(Axis(1), 0)
            .to_owned();
        let uav = u.dot(&av);
        let vau = v.dot(&au);
        assert!((uav - vau).abs() <= 1e-8 * uav.abs().max(1.0));
    }

    #[test]
    fn matvec_matches_dense_assembly() {
        let src = random_source(2, 30, 16, |_| 1.0);
        let lambda = 0.5;
        let sys = GramSystem::new(&src, lambda).unwrap();
        let gram = assemble_gram(&src, 64).unwrap();
        let mut rng = rng::substream(3, StreamDomain::Bench, 7);
        let v = Array1::from_vec(rng::standard_normal(&mut rng, 16));
        let got = sys
            .matvec(v.view().insert_axis(Axis(1)))
            .unwrap()
            .index_axis(Axis(1), 0)
            .to_owned();
        let want = gram.dot(&v) + &(v.mapv(|x| x * lambda * lambda));
        for (a, b) in got.iter().zip(want.iter()) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
    }

    #[test]
    fn zero_data_system_converges_in_one_iteration() {
        let src = DenseSource::new(Array2::zeros((5, 8)), Array1::zeros(5)).unwrap();
        let lambda = 2.0;
        let sys = GramSystem::new(&src, lambda).unwrap();
        let rhs = Array1::from_shape_fn(8, |i| i as f64 + 1.0);
        let report = cg_solve(&sys, rhs.view(), 1e-12, 10, None).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 1);
        for (w, b) in report.weights.iter().zip(rhs.iter()) {
            assert!((w - b / (lambda * lambda)).abs() < 1e-12);
        }
    }

    #[test]
    fn cg_matches_dense_solver() {
        let src = random_source(4, 200, 64, |j| 1.0 / (1.0 + j as f64 / 16.0));
        let lambda = 0.3;
        let sys = GramSystem::new(&src, lambda).unwrap();
        let zty = feature_target_product(&src).unwrap();
        let report = cg_solve(&sys, zty.view(), 1e-8, 500, None).unwrap();
        assert!(report.converged);
        let gram = assemble_gram(&src, 128).unwrap();
        let dense = dense_eig_solve(gram.view(), zty.view(), lambda).unwrap();
        let scale = dense.weights.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        for (a, b) in report.weights.iter().zip(dense.weights.iter()) {
            assert!((a - b).abs() <= 1e-4 * scale);
        }
    }

    #[test]
    fn near_exact_preconditioner_converges_in_three_iterations() {
        // Full-rank preconditioner on a small synthetic problem.
        let src = random_source(5, 300, 64, |j| 1.0 / (1.0 + j as f64 / 4.0));
        let lambda = 0.2;
        let sys = GramSystem::new(&src, lambda).unwrap();
        let zty = feature_target_product(&src).unwrap();
        let p = build_preconditioner(&src, 64, lambda, PrecondVariant::Srht2, 3).unwrap();
        let report = cg_solve(&sys, zty.view(), 1e-6, 100, Some(&p)).unwrap();
        assert!(report.converged);
        assert!(
            report.iterations <= 3,
            "expected <= 3 iterations, got {}",
            report.iterations
        );
    }

    #[test]
    fn preconditioning_reduces_iterations_on_ill_conditioned_system() {
        // Geometric spectrum spanning ~6 orders of magnitude.
        let src = random_source(6, 400, 96, |j| 0.87f64.powi(j as i32));
        let lambda = 1e-3;
        let sys = GramSystem::new(&src, lambda).unwrap();
        let zty = feature_target_product(&src).unwrap();
        let plain = cg_solve(&sys, zty.view(), 1e-6, 4000, None).unwrap();
        let p = build_preconditioner(&src, 48, lambda, PrecondVariant::Srht2, 1).unwrap();
        let pre = cg_solve(&sys, zty.view(), 1e-6, 4000, Some(&p)).unwrap();
        assert!(pre.converged);
        assert!(
            pre.iterations < plain.iterations,
            "pcg {} vs cg {}",
            pre.iterations,
            plain.iterations
        );
    }

    #[test]
    fn cg_a_norm_error_non_increasing() {
        let src = random_source(7, 150, 32, |j| 1.0 / (1.0 + j as f64 / 8.0));
        let lambda = 0.4;
        let sys = GramSystem::new(&src, lambda).unwrap();
        let zty = feature_target_product(&src).unwrap();
        let gram = assemble_gram(&src, 64).unwrap();
        let exact = dense_eig_solve(gram.view(), zty.view(), lambda).unwrap().weights;
        let l2 = lambda * lambda;

        // Re-run CG capped at increasing iteration counts; the A-norm error of
        // the iterate must decrease monotonically.
        let mut last = f64::INFINITY;
        for iters in 1..12 {
            let report = cg_solve(&sys, zty.view(), 1e-14, iters, None).unwrap();
            let diff = &report.weights - &exact;
            let adiff = gram.dot(&diff) + &(diff.mapv(|x| x * l2));
            let err = diff.dot(&adiff);
            assert!(err <= last * (1.0 + 1e-9), "iter {iters}: {err} > {last}");
            last = err;
        }
    }

    #[test]
    fn dense_eig_solve_diagonal_case() {
        let mut gram = Array2::zeros((4, 4));
        for (i, v) in [4.0, 3.0, 2.0, 1.0].iter().enumerate() {
            gram[(i, i)] = *v;
        }
        let zty = Array1::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let lambda = 0.5;
        let out = dense_eig_solve(gram.view(), zty.view(), lambda).unwrap();
        for i in 0..4 {
            let want = zty[i] / (gram[(i, i)] + lambda * lambda);
            assert!((out.weights[i] - want).abs() < 1e-9);
        }
        // Eigenvalues descending, nonnegative.
        for w in out.eigvals.to_vec().windows(2) {
            assert!(w[0] >= w[1]);
        }
        assert!(out.eigvals.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn dense_guard_refuses_large_problems() {
        let gram = Array2::<f64>::zeros((2, 2));
        let zty = Array1::<f64>::zeros(2);
        assert!(dense_eig_solve(gram.view(), zty.view(), 0.1).is_ok());
        // Guard check happens before any allocation-heavy work.
        let big = Array2::<f64>::zeros((DENSE_GUARD + 1, DENSE_GUARD + 1));
        let bigrhs = Array1::<f64>::zeros(DENSE_GUARD + 1);
        assert!(matches!(
            dense_eig_solve(big.view(), bigrhs.view(), 0.1),
            Err(Error::DenseGuard { .. })
        ));
    }

    #[test]
    fn slq_dominant_regularizer_limit() {
        // lambda^2 >> |Z^T Z|: logdet -> 2 M log(lambda), w -> Z^T y / lambda^2.
        let m = 32;
        let src = random_source(8, 100, m, |_| 1.0);
        let lambda = 1e3;
        let sys = GramSystem::new(&src, lambda).unwrap();
        let zty = feature_target_product(&src).unwrap();
        let p = build_preconditioner(&src, 8, lambda, PrecondVariant::Gauss, 2).unwrap();
        let report = pcg_slq_solve(&sys, zty.view(), &p, 10, 1e-10, 100, 77).unwrap();
        let logdet = report.logdet_estimate.unwrap();
        let want = 2.0 * m as f64 * lambda.ln();
        assert!(
            (logdet - want).abs() / want.abs() < 1e-3,
            "logdet {logdet} vs {want}"
        );
        for (w, b) in report.weights.iter().zip(zty.iter()) {
            let want = b / (lambda * lambda);
            assert!((w - want).abs() <= 1e-3 * want.abs().max(1e-12));
        }
    }

    #[test]
    fn slq_weights_agree_with_cg_and_are_seed_independent() {
        let src = random_source(9, 250, 48, |j| 1.0 / (1.0 + j as f64 / 6.0));
        let lambda = 0.25;
        let sys = GramSystem::new(&src, lambda).unwrap();
        let zty = feature_target_product(&src).unwrap();
        let p = build_preconditioner(&src, 24, lambda, PrecondVariant::Srht2, 4).unwrap();
        let cg = cg_solve(&sys, zty.view(), 1e-9, 500, Some(&p)).unwrap();
        let a = pcg_slq_solve(&sys, zty.view(), &p, 5, 1e-9, 500, 1).unwrap();
        let b = pcg_slq_solve(&sys, zty.view(), &p, 5, 1e-9, 500, 2).unwrap();
        let scale = cg.weights.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
        for (x, y) in a.weights.iter().zip(cg.weights.iter()) {
            assert!((x - y).abs() <= 1e-6 * scale);
        }
        for (x, y) in a.weights.iter().zip(b.weights.iter()) {
            assert!((x - y).abs() <= 1e-6 * scale);
        }
    }

    #[test]
    fn slq_logdet_matches_dense_on_small_system() {
        let src = random_source(10, 300, 64, |j| 1.0 / (1.0 + j as f64 / 8.0));
        let lambda = 0.3;
        let sys = GramSystem::new(&src, lambda).unwrap();
        let zty = feature_target_product(&src).unwrap();
        let gram = assemble_gram(&src, 128).unwrap();
        let (evals, _) = linalg::eigh_desc(gram.view()).unwrap();
        let exact: f64 = evals.iter().map(|&v| (v + lambda * lambda).ln()).sum();
        let p = build_preconditioner(&src, 32, lambda, PrecondVariant::Srht2, 5).unwrap();
        let report = pcg_slq_solve(&sys, zty.view(), &p, 25, 1e-6, 500, 11).unwrap();
        let got = report.logdet_estimate.unwrap();
        assert!(
            (got - exact).abs() / exact.abs() <= 0.05,
            "slq {got} vs exact {exact}"
        );
    }

    #[test]
    fn maxiter_exhaustion_is_flagged_not_fatal() {
        let src = random_source(11, 400, 96, |j| 0.9f64.powi(j as i32));
        let sys = GramSystem::new(&src, 1e-4).unwrap();
        let zty = feature_target_product(&src).unwrap();
        let report = cg_solve(&sys, zty.view(), 1e-10, 3, None).unwrap();
        assert!(!report.converged);
        assert_eq!(report.iterations, 3);
    }
}
