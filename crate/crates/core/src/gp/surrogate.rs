//! Small exact Matern-5/2 Gaussian process used as the Thompson-sampling
//! surrogate over hyperparameter space. Sizes here are tiny (tens of points),
//! so everything is dense.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, cholesky_solve};
use crate::rng;

const MAX_POINTS: usize = 500;

/// Matern-5/2 correlation at distance `r` with lengthscale `ell`.
pub fn matern52(r: f64, ell: f64) -> f64 {
    let s = 5f64.sqrt() * r / ell;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

#[derive(Debug, Clone)]
pub struct MaternSurrogate {
    points: Array2<f64>,
    chol: Array2<f64>,
    alpha: Array1<f64>,
    lengthscale: f64,
    value_mean: f64,
    value_scale: f64,
    jitter: f64,
}

impl MaternSurrogate {
    /// Fit on `(points, values)` with jitter escalation if the kernel matrix
    /// is numerically singular.
    pub fn fit(points: ArrayView2<'_, f64>, values: ArrayView1<'_, f64>) -> Result<Self> {
        Self::fit_with_jitter(points, values, 1e-10)
    }

    pub fn fit_with_jitter(
        points: ArrayView2<'_, f64>,
        values: ArrayView1<'_, f64>,
        base_jitter: f64,
    ) -> Result<Self> {
        let n = points.nrows();
        if n == 0 || n != values.len() {
            return Err(Error::InvalidInput(
                "surrogate needs matching, nonempty points and values".into(),
            ));
        }
        if n > MAX_POINTS {
            return Err(Error::DenseGuard {
                what: "surrogate points",
                got: n,
                guard: MAX_POINTS,
            });
        }
        let value_mean = values.sum() / n as f64;
        let var = values.iter().map(|v| (v - value_mean).powi(2)).sum::<f64>() / n as f64;
        let value_scale = var.sqrt().max(1e-12);
        let normalized = values.mapv(|v| (v - value_mean) / value_scale);

        let lengthscale = median_distance(points).max(1e-9);
        let mut jitter = base_jitter;
        loop {
            let mut k = Array2::zeros((n, n));
            for i in 0..n {
                for j in 0..n {
                    k[(i, j)] = matern52(distance(points.row(i), points.row(j)), lengthscale);
                }
                k[(i, i)] += jitter;
            }
            match cholesky_lower(k.view()) {
                Ok(chol) => {
                    let alpha = cholesky_solve(chol.view(), normalized.view());
                    return Ok(Self {
                        points: points.to_owned(),
                        chol,
                        alpha,
                        lengthscale,
                        value_mean,
                        value_scale,
                        jitter,
                    });
                }
                Err(_) if jitter < 1e-2 => jitter *= 10.0,
                Err(_) => {
                    return Err(Error::NumericalBreakdown(
                        "surrogate kernel matrix stayed singular up to jitter 1e-2".into(),
                    ))
                }
            }
        }
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    fn cross_kernel(&self, cands: ArrayView2<'_, f64>) -> Array2<f64> {
        let n = self.points.nrows();
        let c = cands.nrows();
        Array2::from_shape_fn((n, c), |(i, j)| {
            matern52(
                distance(self.points.row(i), cands.row(j)),
                self.lengthscale,
            )
        })
    }

    /// Posterior mean and covariance at candidate points, in original units.
    pub fn posterior(&self, cands: ArrayView2<'_, f64>) -> (Array1<f64>, Array2<f64>) {
        let kx = self.cross_kernel(cands);
        let c = cands.nrows();
        let mean = kx.t().dot(&self.alpha).mapv(|v| v * self.value_scale + self.value_mean);
        // cov = K** - Kx^T K^-1 Kx, via Cholesky solves column by column.
        let mut kinv_kx = Array2::zeros(kx.raw_dim());
        for j in 0..c {
            let col = cholesky_solve(self.chol.view(), kx.column(j));
            kinv_kx.column_mut(j).assign(&col);
        }
        let mut cov = Array2::from_shape_fn((c, c), |(i, j)| {
            matern52(distance(cands.row(i), cands.row(j)), self.lengthscale)
        });
        cov -= &kx.t().dot(&kinv_kx);
        cov.mapv_inplace(|v| v * self.value_scale * self.value_scale);
        (mean, cov)
    }

    /// Joint posterior samples at the candidates: `m_samples x n_candidates`.
    pub fn sample(
        &self,
        cands: ArrayView2<'_, f64>,
        m_samples: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Array2<f64>> {
        let (mean, mut cov) = self.posterior(cands);
        let c = cands.nrows();
        let floor = 1e-12 * self.value_scale * self.value_scale;
        for i in 0..c {
            cov[(i, i)] += floor.max(self.jitter * self.value_scale * self.value_scale);
        }
        let l = cholesky_lower(cov.view())?;
        let mut out = Array2::zeros((m_samples, c));
        for mut row in out.outer_iter_mut() {
            let g = Array1::from_vec(rng::standard_normal(rng, c));
            let draw = l.dot(&g) + &mean;
            row.assign(&draw);
        }
        Ok(out)
    }
}

fn distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn median_distance(points: ArrayView2<'_, f64>) -> f64 {
    let n = points.nrows();
    let mut dists = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            dists.push(distance(points.row(i), points.row(j)));
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(f64::total_cmp);
    dists[dists.len() / 2].max(f64::EPSILON)
}
