//! Simulated active learning over a labeled candidate pool.
//!
//! The loop trains on a random initial design, scores the remaining pool with
//! an acquisition function, moves the top batch into the training set, refits
//! and repeats. Pool fitness is normalized to [0, 1] up front. Features for
//! the whole pool are generated once (the map is fixed across refits), so each
//! iteration is a dense solve at the feature dimension plus a scan.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMap, FeatureMapSpec};
use crate::linalg::cholesky_lower;
use crate::rng::{self, StreamDomain};
use crate::solve::dense_eig_solve;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Acquisition {
    /// `mean + multiplier * std`.
    Ucb { multiplier: f64 },
    /// Uniform-random scores; the baseline selection strategy.
    Random,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoConfig {
    pub init_size: usize,
    pub batch_size: usize,
    pub iterations: usize,
    pub acquisition: Acquisition,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoTrajectory {
    /// Pool ids selected at each iteration.
    pub selected: Vec<Vec<usize>>,
    /// Best normalized fitness among evaluated points: entry 0 after the
    /// initial design, then one entry per iteration. Non-decreasing.
    pub best_so_far: Vec<f64>,
    /// Total labels consumed (initial design plus batches).
    pub evaluations: usize,
    pub seed: u64,
}

impl BoTrajectory {
    /// Labels consumed before `best_so_far` first reached `threshold`, if it
    /// did within budget.
    pub fn evaluations_to_reach(&self, threshold: f64, init: usize, batch: usize) -> Option<usize> {
        self.best_so_far
            .iter()
            .position(|&b| b >= threshold)
            .map(|idx| init + idx * batch)
    }
}

/// Run the loop on an in-memory pool. `spec` describes the surrogate
/// regression model (a fixed-vector kernel over the pool encoding); its
/// `lambda/beta/sigma` are used as-is at every refit.
pub fn run_bo_loop(
    pool_x: ArrayView2<'_, f64>,
    pool_y: ArrayView1<'_, f64>,
    spec: &FeatureMapSpec,
    cfg: &BoConfig,
) -> Result<BoTrajectory> {
    let n = pool_x.nrows();
    if pool_y.len() != n {
        return Err(Error::InvalidDimension {
            what: "pool labels",
            expected: n,
            got: pool_y.len(),
        });
    }
    if cfg.init_size == 0 || cfg.batch_size == 0 {
        return Err(Error::InvalidInput(
            "init_size and batch_size must be >= 1".into(),
        ));
    }
    if n <= cfg.init_size {
        return Err(Error::InvalidInput(format!(
            "pool of {n} cannot cover an initial design of {}",
            cfg.init_size
        )));
    }
    spec.validate()?;

    // Normalize fitness to [0, 1].
    let y_min = pool_y.iter().cloned().fold(f64::INFINITY, f64::min);
    let y_max = pool_y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(y_max > y_min) {
        return Err(Error::InvalidInput(
            "pool fitness is constant; nothing to optimize".into(),
        ));
    }
    let y: Array1<f64> = pool_y.mapv(|v| (v - y_min) / (y_max - y_min));

    // Features once for the whole pool, at both feature counts.
    let map = FeatureMap::build(spec)?;
    let var_map = FeatureMap::build_variance(spec)?;
    let fixed = crate::dataset::ChunkData::Fixed(pool_x.to_owned());
    let z = map.transform_chunk(&fixed)?;
    let zv = var_map.transform_chunk(&fixed)?;
    let l2 = spec.lambda * spec.lambda;

    // Initial design without replacement.
    let mut pick_rng = rng::substream(cfg.seed, StreamDomain::ActiveLearning, 0);
    let mut train: Vec<usize> =
        rng::sample_without_replacement(&mut pick_rng, n, cfg.init_size.min(n));
    let mut in_train = vec![false; n];
    for &i in &train {
        in_train[i] = true;
    }

    let best_of = |train: &[usize]| -> f64 {
        train.iter().map(|&i| y[i]).fold(f64::NEG_INFINITY, f64::max)
    };
    let mut best_so_far = vec![best_of(&train)];
    let mut selected = Vec::new();

    for iter in 0..cfg.iterations {
        let remaining: Vec<usize> = (0..n).filter(|&i| !in_train[i]).collect();
        if remaining.is_empty() {
            break;
        }
        let scores: Vec<f64> = match cfg.acquisition {
            Acquisition::Random => {
                let mut r =
                    rng::substream(cfg.seed, StreamDomain::ActiveLearning, iter as u64 + 1);
                remaining.iter().map(|_| r.gen_range(0.0..1.0)).collect()
            }
            Acquisition::Ucb { multiplier } => {
                if multiplier < 0.0 {
                    return Err(Error::InvalidInput(
                        "ucb multiplier must be >= 0".into(),
                    ));
                }
                // Refit on the current training rows.
                let (weights, var_chol) = refit(&z, &zv, &y, &train, l2)?;
                remaining
                    .iter()
                    .map(|&i| {
                        let mean = z.row(i).dot(&weights);
                        let solved = forward_substitute(&var_chol, zv.row(i));
                        let var = l2 * solved.dot(&solved);
                        mean + multiplier * var.max(0.0).sqrt()
                    })
                    .collect()
            }
        };
        // Top batch by score, ties to the lower pool id.
        let mut order: Vec<usize> = (0..remaining.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .total_cmp(&scores[a])
                .then(remaining[a].cmp(&remaining[b]))
        });
        let batch: Vec<usize> = order
            .into_iter()
            .take(cfg.batch_size)
            .map(|j| remaining[j])
            .collect();
        for &i in &batch {
            in_train[i] = true;
            train.push(i);
        }
        selected.push(batch);
        best_so_far.push(best_of(&train));
    }

    Ok(BoTrajectory {
        selected,
        best_so_far,
        evaluations: train.len(),
        seed: cfg.seed,
    })
}

fn refit(
    z: &Array2<f64>,
    zv: &Array2<f64>,
    y: &Array1<f64>,
    train: &[usize],
    l2: f64,
) -> Result<(Array1<f64>, Array2<f64>)> {
    let m = z.ncols();
    let mv = zv.ncols();
    let mut z_tr = Array2::zeros((train.len(), m));
    let mut zv_tr = Array2::zeros((train.len(), mv));
    let mut y_tr = Array1::zeros(train.len());
    for (slot, &i) in train.iter().enumerate() {
        z_tr.row_mut(slot).assign(&z.row(i));
        zv_tr.row_mut(slot).assign(&zv.row(i));
        y_tr[slot] = y[i];
    }
    let gram = z_tr.t().dot(&z_tr);
    let zty = z_tr.t().dot(&y_tr);
    let mut vgram = zv_tr.t().dot(&zv_tr);
    for a in 0..mv {
        vgram[(a, a)] += l2;
    }
    let solved = dense_eig_solve(gram.view(), zty.view(), l2.sqrt())?;
    let chol = cholesky_lower(vgram.view())?;
    Ok((solved.weights, chol))
}

fn forward_substitute(l: &Array2<f64>, b: ArrayView1<'_, f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = b.to_owned();
    for i in 0..n {
        let mut s = x[i];
        for j in 0..i {
            s -= l[(i, j)] * x[j];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::KernelKind;

    /// Tiny smooth landscape over 2-d grid points.
    fn toy_pool(n_side: usize) -> (Array2<f64>, Array1<f64>) {
        let n = n_side * n_side;
        let mut x = Array2::zeros((n, 2));
        let mut y = Array1::zeros(n);
        for i in 0..n_side {
            for j in 0..n_side {
                let r = i * n_side + j;
                let (a, b) = (i as f64 / n_side as f64, j as f64 / n_side as f64);
                x[(r, 0)] = a;
                x[(r, 1)] = b;
                y[r] = -((a - 0.7).powi(2) + (b - 0.3).powi(2));
            }
        }
        (x, y)
    }

    fn toy_spec() -> FeatureMapSpec {
        FeatureMapSpec::new(KernelKind::Rbf, 2, 64)
            .with_seed(3)
            .with_hyperparams(0.05, 1.0, 2.0)
            .with_variance_rffs(32)
    }

    #[test]
    fn best_so_far_is_non_decreasing_for_every_seed() {
        let (x, y) = toy_pool(12);
        for seed in 0..6 {
            let cfg = BoConfig {
                init_size: 10,
                batch_size: 5,
                iterations: 4,
                acquisition: Acquisition::Ucb { multiplier: 1.0 },
                seed,
            };
            let t = run_bo_loop(x.view(), y.view(), &toy_spec(), &cfg).unwrap();
            for w in t.best_so_far.windows(2) {
                assert!(w[1] >= w[0]);
            }
            assert_eq!(t.evaluations, 10 + 4 * 5);
        }
    }

    #[test]
    fn oversized_batch_takes_entire_remainder() {
        let (x, y) = toy_pool(5); // 25 points
        let cfg = BoConfig {
            init_size: 10,
            batch_size: 100,
            iterations: 3,
            acquisition: Acquisition::Random,
            seed: 1,
        };
        let t = run_bo_loop(x.view(), y.view(), &toy_spec(), &cfg).unwrap();
        assert_eq!(t.selected.len(), 1); // everything consumed in one batch
        assert_eq!(t.evaluations, 25);
    }

    #[test]
    fn exploitation_and_exploration_both_terminate_but_differ() {
        let (x, y) = toy_pool(14);
        let mk = |mult: f64| BoConfig {
            init_size: 16,
            batch_size: 8,
            iterations: 4,
            acquisition: Acquisition::Ucb { multiplier: mult },
            seed: 5,
        };
        let exploit = run_bo_loop(x.view(), y.view(), &toy_spec(), &mk(0.0)).unwrap();
        let explore = run_bo_loop(x.view(), y.view(), &toy_spec(), &mk(25.0)).unwrap();
        assert_eq!(exploit.evaluations, explore.evaluations);
        assert_ne!(exploit.selected, explore.selected);
    }

    #[test]
    fn ucb_beats_random_on_smooth_landscape() {
        let (x, y) = toy_pool(16); // 256 points, unique optimum at (0.7, 0.3)
        let mut ucb_hits = 0;
        let mut random_hits = 0;
        for seed in 0..10 {
            let base = BoConfig {
                init_size: 12,
                batch_size: 6,
                iterations: 4,
                acquisition: Acquisition::Ucb { multiplier: 0.5 },
                seed,
            };
            let u = run_bo_loop(x.view(), y.view(), &toy_spec(), &base).unwrap();
            let r = run_bo_loop(
                x.view(),
                y.view(),
                &toy_spec(),
                &BoConfig {
                    acquisition: Acquisition::Random,
                    ..base
                },
            )
            .unwrap();
            if *u.best_so_far.last().unwrap() >= 0.999 {
                ucb_hits += 1;
            }
            if *r.best_so_far.last().unwrap() >= 0.999 {
                random_hits += 1;
            }
        }
        assert!(
            ucb_hits > random_hits,
            "ucb {ucb_hits} vs random {random_hits}"
        );
    }

    #[test]
    fn degenerate_pools_are_rejected() {
        let (x, _) = toy_pool(4);
        let flat = Array1::zeros(16);
        let cfg = BoConfig {
            init_size: 4,
            batch_size: 2,
            iterations: 2,
            acquisition: Acquisition::Random,
            seed: 0,
        };
        assert!(run_bo_loop(x.view(), flat.view(), &toy_spec(), &cfg).is_err());
        let (x, y) = toy_pool(2);
        let cfg_big = BoConfig {
            init_size: 4,
            ..cfg
        };
        assert!(run_bo_loop(x.view(), y.view(), &toy_spec(), &cfg_big).is_err());
    }
}
