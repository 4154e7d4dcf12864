//! Randomized Nystrom preconditioner for the regularized Gram system.
//!
//! The builder sketches `A = Z^T Z` as `U Lambda U^T` in one streaming pass
//! (two for the `srht_2` variant) holding only one chunk plus `M x L` state,
//! then factors the sketch through a self-adjoint square root. The inverse is
//! applied as
//!
//! ```text
//! M^-1 v = (beta_L + lambda^2) U (Lambda + lambda^2 I)^-1 U^T v + (v - U U^T v)
//! ```
//!
//! without ever forming an `M x M` matrix.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{self, StreamDomain};
use crate::stream::FeatureSource;
use crate::transform::SrhtOperator;

/// How the sketch matrix is realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecondVariant {
    /// Explicit Gaussian test matrix, orthonormalized before streaming.
    Gauss,
    /// Subsampled randomized Hadamard transform applied on the fly.
    Srht,
    /// SRHT product re-orthogonalized, then a second pass over the data.
    Srht2,
}

impl std::fmt::Display for PrecondVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PrecondVariant::Gauss => write!(f, "gauss"),
            PrecondVariant::Srht => write!(f, "srht"),
            PrecondVariant::Srht2 => write!(f, "srht_2"),
        }
    }
}

impl std::str::FromStr for PrecondVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gauss" => Ok(PrecondVariant::Gauss),
            "srht" => Ok(PrecondVariant::Srht),
            "srht_2" | "srht2" => Ok(PrecondVariant::Srht2),
            other => Err(Error::InvalidInput(format!(
                "unknown preconditioner variant '{other}'"
            ))),
        }
    }
}

/// Factored low-rank preconditioner.
#[derive(Debug, Clone)]
pub struct NystromPreconditioner {
    /// `M x L`, orthonormal columns.
    u: Array2<f64>,
    /// Length L, descending, nonnegative.
    eigvals: Array1<f64>,
    beta_l: f64,
    lambda: f64,
    variant: PrecondVariant,
}

impl NystromPreconditioner {
    pub fn from_parts(
        u: Array2<f64>,
        eigvals: Array1<f64>,
        lambda: f64,
        variant: PrecondVariant,
    ) -> Result<Self> {
        if u.ncols() != eigvals.len() {
            return Err(Error::InvalidDimension {
                what: "eigenvalue count",
                expected: u.ncols(),
                got: eigvals.len(),
            });
        }
        if !(lambda > 0.0) {
            return Err(Error::InvalidHyperparam {
                name: "lambda",
                reason: "preconditioner requires lambda > 0".into(),
            });
        }
        let beta_l = eigvals[eigvals.len() - 1];
        Ok(Self {
            u,
            eigvals,
            beta_l,
            lambda,
            variant,
        })
    }

    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn basis(&self) -> ArrayView2<'_, f64> {
        self.u.view()
    }

    pub fn eigenvalues(&self) -> ArrayView1<'_, f64> {
        self.eigvals.view()
    }

    /// Smallest retained eigenvalue.
    pub fn beta_l(&self) -> f64 {
        self.beta_l
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn variant(&self) -> PrecondVariant {
        self.variant
    }

    /// `beta_L / lambda^2`, the iteration-count predictor.
    pub fn estimate_ratio(&self) -> Result<f64> {
        if self.lambda == 0.0 {
            return Err(Error::InvalidHyperparam {
                name: "lambda",
                reason: "ratio beta_L / lambda^2 undefined at lambda = 0".into(),
            });
        }
        Ok(self.beta_l / (self.lambda * self.lambda))
    }

    /// `log|P|` where `P` is the preconditioner as a covariance; the
    /// complement of `range(U)` contributes nothing.
    pub fn logdet(&self) -> f64 {
        let l2 = self.lambda * self.lambda;
        self.eigvals
            .iter()
            .map(|&ev| ((ev + l2) / (self.beta_l + l2)).ln())
            .sum()
    }

    /// Shared form of both applications: `v + U (diag(a) - I) U^T v`.
    fn apply_spectral(&self, v: ArrayView2<'_, f64>, a: &Array1<f64>) -> Result<Array2<f64>> {
        if v.nrows() != self.dim() {
            return Err(Error::InvalidDimension {
                what: "preconditioner input rows",
                expected: self.dim(),
                got: v.nrows(),
            });
        }
        let ut_v = self.u.t().dot(&v); // L x k
        let mut scaled = ut_v;
        for (mut row, &ai) in scaled.axis_iter_mut(Axis(0)).zip(a.iter()) {
            row.mapv_inplace(|x| x * (ai - 1.0));
        }
        Ok(&v + &self.u.dot(&scaled))
    }

    /// `M^-1 v` columnwise for a batch of column vectors.
    pub fn apply_inverse(&self, v: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let l2 = self.lambda * self.lambda;
        let a = self.eigvals.mapv(|ev| (self.beta_l + l2) / (ev + l2));
        self.apply_spectral(v, &a)
    }

    pub fn apply_inverse_vec(&self, v: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        let out = self.apply_inverse(v.insert_axis(Axis(1)))?;
        Ok(out.index_axis(Axis(1), 0).to_owned())
    }

    /// `P^(1/2) g`: transforms a standard normal draw into one whose
    /// covariance is the preconditioner.
    pub fn apply_sqrt(&self, g: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        let l2 = self.lambda * self.lambda;
        let a = self
            .eigvals
            .mapv(|ev| ((ev + l2) / (self.beta_l + l2)).sqrt());
        let out = self.apply_spectral(g.insert_axis(Axis(1)), &a)?;
        Ok(out.index_axis(Axis(1), 0).to_owned())
    }

    /// Max absolute deviation of `U^T U` from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let gram = self.u.t().dot(&self.u);
        let mut worst = 0.0f64;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - want).abs());
            }
        }
        worst
    }
}

/// Build a preconditioner by streaming the source once (twice for `srht_2`).
pub fn build_preconditioner(
    source: &impl FeatureSource,
    rank: usize,
    lambda: f64,
    variant: PrecondVariant,
    seed: u64,
) -> Result<NystromPreconditioner> {
    let m = source.num_features();
    if rank == 0 || rank > m {
        return Err(Error::InvalidRank { rank, dim: m });
    }
    if source.num_rows() == 0 {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidHyperparam {
            name: "lambda",
            reason: "preconditioner requires lambda > 0".into(),
        });
    }

    // Sketch pass(es): Q = A * Omega accumulated chunk by chunk, and the L x L
    // core C = Omega^T A Omega.
    let (q, c) = match variant {
        PrecondVariant::Gauss => {
            let omega = orthonormal_gaussian(seed, m, rank);
            let q = stream_product(source, omega.view())?;
            let c = omega.t().dot(&q);
            (q, c)
        }
        PrecondVariant::Srht => {
            let srht = SrhtOperator::sample(seed, m.next_power_of_two(), rank)?;
            let mut q = Array2::zeros((m, rank));
            source.for_each_feature_chunk(&mut |z, _| {
                let t = srht.apply_batch(z)?; // rows x L, Theta applied per feature row
                q += &z.t().dot(&t);
                Ok(())
            })?;
            // C = Theta * Q: apply the operator to each column of Q.
            let ct = srht.apply_batch(pad_columns(q.t().view(), srht.dim()).view())?;
            (q, ct.t().to_owned())
        }
        PrecondVariant::Srht2 => {
            let srht = SrhtOperator::sample(seed, m.next_power_of_two(), rank)?;
            let mut q1 = Array2::zeros((m, rank));
            source.for_each_feature_chunk(&mut |z, _| {
                let t = srht.apply_batch(z)?;
                q1 += &z.t().dot(&t);
                Ok(())
            })?;
            if max_abs(&q1) == 0.0 {
                return zero_data_preconditioner(m, rank, lambda, variant);
            }
            let omega = linalg::thin_qr_q(q1.view());
            let q = stream_product(source, omega.view())?;
            let c = omega.t().dot(&q);
            (q, c)
        }
    };

    let q_norm = max_abs(&q);
    if q_norm == 0.0 {
        return zero_data_preconditioner(m, rank, lambda, variant);
    }
    if !q_norm.is_finite() {
        return Err(Error::DegenerateSketch("sketch overflowed".into()));
    }

    // Self-adjoint square root of the core with a spectral floor of
    // nu = sqrt(M) * eps * max|Q| (max-absolute-entry norm).
    let nu = (m as f64).sqrt() * f64::EPSILON * q_norm;
    let c_sym = (&c + &c.t()) / 2.0;
    let (s, v) = linalg::eigh_desc(c_sym.view())?;
    if !s.iter().all(|x| x.is_finite()) {
        return Err(Error::DegenerateSketch("core eigenvalues not finite".into()));
    }
    if s[0] <= 0.0 {
        return Err(Error::DegenerateSketch(
            "core matrix has no positive eigenvalues".into(),
        ));
    }
    let inv_sqrt = s.mapv(|x| 1.0 / x.max(nu).sqrt());
    // B = Q V diag(s^-1/2) V^T ; A_nys = B B^T.
    let mut qv = q.dot(&v);
    for (mut col, &w) in qv.axis_iter_mut(Axis(1)).zip(inv_sqrt.iter()) {
        col.mapv_inplace(|x| x * w);
    }
    let b = qv.dot(&v.t());
    let (u, sigma, _) = linalg::svd_thin(b.view())?;
    let eigvals = sigma.mapv(|x| (x * x).max(0.0));

    let precond = NystromPreconditioner::from_parts(u, eigvals, lambda, variant)?;
    debug_assert!(precond.orthonormality_defect() <= 1e-6);
    Ok(precond)
}

fn stream_product(
    source: &impl FeatureSource,
    omega: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    let mut q = Array2::zeros((omega.nrows(), omega.ncols()));
    source.for_each_feature_chunk(&mut |z, _| {
        let zo = z.dot(&omega); // rows x L
        q += &z.t().dot(&zo);
        Ok(())
    })?;
    Ok(q)
}

fn orthonormal_gaussian(seed: u64, m: usize, rank: usize) -> Array2<f64> {
    let mut rng = rng::substream(seed, StreamDomain::SketchGauss, 0);
    let raw = rng::standard_normal(&mut rng, m * rank);
    let omega = Array2::from_shape_vec((m, rank), raw).expect("shape");
    linalg::thin_qr_q(omega.view())
}

fn pad_columns(rows: ArrayView2<'_, f64>, width: usize) -> Array2<f64> {
    let mut out = Array2::zeros((rows.nrows(), width));
    out.slice_mut(ndarray::s![.., ..rows.ncols()]).assign(&rows);
    out
}

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()))
}

/// All-zero features: Lambda = 0 and the inverse acts as the identity, so any
/// deterministic orthonormal basis serves as U.
fn zero_data_preconditioner(
    m: usize,
    rank: usize,
    lambda: f64,
    variant: PrecondVariant,
) -> Result<NystromPreconditioner> {
    let mut u = Array2::zeros((m, rank));
    for j in 0..rank {
        u[(j, j)] = 1.0;
    }
    NystromPreconditioner::from_parts(u, Array1::zeros(rank), lambda, variant)
}
