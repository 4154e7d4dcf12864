//! Kernel k-means, kernel PCA and similarity retrieval, all operating in the
//! random-feature space where the kernel is an inner product.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{self, StreamDomain};

/// Lloyd's algorithm output over feature rows.
#[derive(Debug, Clone)]
pub struct ClusterIndex {
    pub k: usize,
    /// `k x M` centroid matrix.
    pub centroids: Array2<f64>,
    pub assignments: Vec<usize>,
    /// Sum of squared feature-space distances to assigned centroids, one
    /// entry per Lloyd iteration, non-increasing.
    pub objective_history: Vec<f64>,
}

impl ClusterIndex {
    pub fn objective(&self) -> f64 {
        *self.objective_history.last().expect("at least one iteration")
    }

    /// Centroids nearest to `query`, closest first.
    pub fn nearest_centroids(&self, query: ArrayView1<'_, f64>) -> Vec<usize> {
        let mut order: Vec<(f64, usize)> = self
            .centroids
            .axis_iter(Axis(0))
            .enumerate()
            .map(|(c, row)| (sq_distance(row, query), c))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        order.into_iter().map(|(_, c)| c).collect()
    }
}

fn sq_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Greedy farthest-point seeding: a seeded uniform first pick, then repeatedly
/// the point farthest from its nearest chosen centroid (ties to the lowest
/// index).
fn farthest_point_init(features: ArrayView2<'_, f64>, k: usize, seed: u64) -> Vec<usize> {
    let n = features.nrows();
    let mut rng = rng::substream(seed, StreamDomain::Clustering, 0);
    let first = rng.gen_range(0..n);
    let mut chosen = vec![first];
    let mut min_d: Vec<f64> = (0..n)
        .map(|i| sq_distance(features.row(i), features.row(first)))
        .collect();
    while chosen.len() < k {
        let mut best = 0;
        let mut best_d = -1.0;
        for (i, &d) in min_d.iter().enumerate() {
            if d > best_d {
                best_d = d;
                best = i;
            }
        }
        chosen.push(best);
        for i in 0..n {
            let d = sq_distance(features.row(i), features.row(best));
            if d < min_d[i] {
                min_d[i] = d;
            }
        }
    }
    chosen
}

/// Lloyd iterations in random-feature space; equivalent to approximate kernel
/// k-means on the original data.
pub fn kmeans_rf(
    features: ArrayView2<'_, f64>,
    k: usize,
    max_iter: usize,
    seed: u64,
) -> Result<ClusterIndex> {
    let n = features.nrows();
    let m = features.ncols();
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!(
            "cluster count {k} must be in [1, {n}]"
        )));
    }
    let init = farthest_point_init(features, k, seed);
    let mut centroids = Array2::zeros((k, m));
    for (c, &i) in init.iter().enumerate() {
        centroids.row_mut(c).assign(&features.row(i));
    }
    let mut assignments = vec![0usize; n];
    let mut history = Vec::new();
    for _ in 0..max_iter.max(1) {
        // Assignment step.
        let mut changed = false;
        let mut objective = 0.0;
        for i in 0..n {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let d = sq_distance(features.row(i), centroids.row(c));
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            objective += best_d;
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
        }
        history.push(objective);
        if !changed && history.len() > 1 {
            break;
        }
        // Update step; empty clusters keep their previous centroid.
        let mut sums = Array2::<f64>::zeros((k, m));
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = assignments[i];
            let mut row = sums.row_mut(c);
            row += &features.row(i);
            counts[c] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                let mean = sums.row(c).mapv(|v| v / counts[c] as f64);
                centroids.row_mut(c).assign(&mean);
            }
        }
    }
    Ok(ClusterIndex {
        k,
        centroids,
        assignments,
        objective_history: history,
    })
}

/// Principal directions of the mean-centered feature matrix.
#[derive(Debug, Clone)]
pub struct KpcaResult {
    /// `M x k`, orthonormal columns.
    pub directions: Array2<f64>,
    /// `N x k` training projections.
    pub projections: Array2<f64>,
    /// Descending, one per retained component.
    pub explained_variance: Array1<f64>,
    /// True when rank deficiency forced fewer components than requested.
    pub truncated: bool,
}

pub fn kpca_rf(features: ArrayView2<'_, f64>, num_components: usize) -> Result<KpcaResult> {
    let n = features.nrows();
    let m = features.ncols();
    if num_components == 0 || num_components > n.min(m) {
        return Err(Error::InvalidInput(format!(
            "component count {num_components} must be in [1, min(N, M) = {}]",
            n.min(m)
        )));
    }
    let mean = features.mean_axis(Axis(0)).expect("nonempty");
    let centered = &features - &mean.insert_axis(Axis(0));
    let (u, s, vt) = linalg::svd_thin(centered.view())?;
    let rank_tol = s[0].max(f64::EPSILON) * (n.max(m) as f64) * f64::EPSILON;
    let rank = s.iter().take_while(|&&v| v > rank_tol).count();
    let keep = num_components.min(rank.max(1));
    let truncated = keep < num_components;
    let directions = vt.slice(ndarray::s![..keep, ..]).t().to_owned();
    let mut projections = u.slice(ndarray::s![.., ..keep]).to_owned();
    for (mut col, &sv) in projections.axis_iter_mut(Axis(1)).zip(s.iter()) {
        col.mapv_inplace(|v| v * sv);
    }
    let explained = Array1::from_shape_fn(keep, |i| s[i] * s[i] / (n as f64 - 1.0).max(1.0));
    Ok(KpcaResult {
        directions,
        projections,
        explained_variance: explained,
        truncated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMode {
    FullScan,
    ClusterRestricted,
}

#[derive(Debug, Clone)]
pub struct Retrieval {
    /// Store row ids, most similar first.
    pub ids: Vec<usize>,
    /// Inner-product similarities matching `ids`.
    pub scores: Vec<f64>,
    /// True when the restricted candidate set held fewer than `top_k` rows.
    pub truncated: bool,
}

/// Rank stored feature rows by inner-product similarity to the query. In
/// restricted mode only members of the nearest centroid's cluster are scanned
/// (`clusters_searched` widens that to several nearest clusters).
pub fn retrieve_similar(
    index: &ClusterIndex,
    store: ArrayView2<'_, f64>,
    query: ArrayView1<'_, f64>,
    top_k: usize,
    mode: RetrievalMode,
    clusters_searched: usize,
) -> Result<Retrieval> {
    let n = store.nrows();
    if n == 0 {
        return Err(Error::InvalidInput("empty feature store".into()));
    }
    if query.len() != store.ncols() {
        return Err(Error::InvalidDimension {
            what: "query width",
            expected: store.ncols(),
            got: query.len(),
        });
    }
    let candidates: Vec<usize> = match mode {
        RetrievalMode::FullScan => (0..n).collect(),
        RetrievalMode::ClusterRestricted => {
            if index.assignments.len() != n {
                return Err(Error::InvalidDimension {
                    what: "cluster assignments",
                    expected: n,
                    got: index.assignments.len(),
                });
            }
            let nearest = index.nearest_centroids(query);
            let searched = &nearest[..clusters_searched.clamp(1, index.k)];
            (0..n)
                .filter(|&i| searched.contains(&index.assignments[i]))
                .collect()
        }
    };
    let mut scored: Vec<(f64, usize)> = candidates
        .into_iter()
        .map(|i| (store.row(i).dot(&query), i))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let truncated = scored.len() < top_k;
    scored.truncate(top_k);
    Ok(Retrieval {
        ids: scored.iter().map(|&(_, i)| i).collect(),
        scores: scored.iter().map(|&(s, _)| s).collect(),
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(seed: u64, per_cluster: usize, centers: &[[f64; 4]]) -> Array2<f64> {
        let mut rng = rng::substream(seed, StreamDomain::Bench, 13);
        let n = per_cluster * centers.len();
        let mut out = Array2::zeros((n, 4));
        for (ci, c) in centers.iter().enumerate() {
            for i in 0..per_cluster {
                for j in 0..4 {
                    out[(ci * per_cluster + i, j)] = c[j] + 0.1 * rng.gen_range(-1.0..1.0f64);
                }
            }
        }
        out
    }

    #[test]
    fn k1_centroid_is_mean_and_objective_is_variance() {
        let f = blobs(1, 10, &[[1.0, -1.0, 0.5, 2.0]]);
        let idx = kmeans_rf(f.view(), 1, 20, 0).unwrap();
        let mean = f.mean_axis(Axis(0)).unwrap();
        for (c, m) in idx.centroids.row(0).iter().zip(mean.iter()) {
            assert!((c - m).abs() < 1e-12);
        }
        let total: f64 = f
            .axis_iter(Axis(0))
            .map(|r| sq_distance(r, mean.view()))
            .sum();
        assert!((idx.objective() - total).abs() <= 1e-9 * total.max(1.0));
    }

    #[test]
    fn objective_history_non_increasing() {
        let f = blobs(2, 30, &[[0.0; 4], [3.0, 3.0, 3.0, 3.0], [-3.0, 0.0, 3.0, 0.0]]);
        for seed in 0..5 {
            let idx = kmeans_rf(f.view(), 3, 50, seed).unwrap();
            for w in idx.objective_history.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", idx.objective_history);
            }
        }
    }

    #[test]
    fn duplicated_dataset_yields_same_centroids() {
        let f = blobs(3, 20, &[[0.0; 4], [4.0, 4.0, 4.0, 4.0]]);
        let doubled = ndarray::concatenate(Axis(0), &[f.view(), f.view()]).unwrap();
        let a = kmeans_rf(f.view(), 2, 50, 7).unwrap();
        let b = kmeans_rf(doubled.view(), 2, 50, 7).unwrap();
        // Same cluster structure: objectives scale by 2, centroids match up
        // to cluster relabeling.
        let mut matched = 0;
        for ca in a.centroids.axis_iter(Axis(0)) {
            for cb in b.centroids.axis_iter(Axis(0)) {
                if sq_distance(ca, cb) < 1e-9 {
                    matched += 1;
                }
            }
        }
        assert_eq!(matched, 2);
        assert!((b.objective() - 2.0 * a.objective()).abs() <= 1e-6 * b.objective());
    }

    #[test]
    fn kmeans_rejects_bad_k() {
        let f = blobs(4, 3, &[[0.0; 4]]);
        assert!(kmeans_rf(f.view(), 0, 10, 0).is_err());
        assert!(kmeans_rf(f.view(), 4, 10, 0).is_err());
    }

    #[test]
    fn kpca_directions_orthonormal_and_variance_sorted() {
        let f = blobs(5, 40, &[[0.0; 4], [2.0, -1.0, 1.0, 0.0]]);
        let r = kpca_rf(f.view(), 3).unwrap();
        let gram = r.directions.t().dot(&r.directions);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - want).abs() < 1e-8);
            }
        }
        for w in r.explained_variance.to_vec().windows(2) {
            assert!(w[0] >= w[1]);
        }
        assert!(!r.truncated);
    }

    #[test]
    fn kpca_flags_rank_deficiency() {
        // Rank-1 data cannot support 3 components.
        let mut f = Array2::zeros((10, 4));
        for i in 0..10 {
            for j in 0..4 {
                f[(i, j)] = (i as f64) * (j as f64 + 1.0);
            }
        }
        let r = kpca_rf(f.view(), 3).unwrap();
        assert!(r.truncated);
        assert_eq!(r.directions.ncols(), 1);
    }

    #[test]
    fn retrieval_self_query_ranks_first_and_orders_all() {
        let f = blobs(6, 15, &[[0.0; 4], [5.0, 5.0, 5.0, 5.0]]);
        let idx = kmeans_rf(f.view(), 2, 30, 1).unwrap();
        let q = f.row(7).to_owned();
        let full = retrieve_similar(&idx, f.view(), q.view(), f.nrows(), RetrievalMode::FullScan, 1)
            .unwrap();
        assert_eq!(full.ids.len(), f.nrows());
        // A stored point queried against the store ranks itself first when its
        // self-similarity is maximal, which holds for these well-separated blobs.
        assert_eq!(full.ids[0], 7);
        for w in full.scores.windows(2) {
            assert!(w[0] >= w[1]);
        }
        // Full scan is exactly the descending similarity sort.
        let mut direct: Vec<(f64, usize)> = (0..f.nrows())
            .map(|i| (f.row(i).dot(&q.view()), i))
            .collect();
        direct.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        assert_eq!(
            full.ids,
            direct.iter().map(|&(_, i)| i).collect::<Vec<_>>()
        );
    }

    #[test]
    fn restricted_retrieval_truncates_with_flag() {
        let f = blobs(7, 5, &[[0.0; 4], [6.0, 6.0, 6.0, 6.0]]);
        let idx = kmeans_rf(f.view(), 2, 30, 2).unwrap();
        let q = f.row(0).to_owned();
        let r = retrieve_similar(
            &idx,
            f.view(),
            q.view(),
            8,
            RetrievalMode::ClusterRestricted,
            1,
        )
        .unwrap();
        assert!(r.truncated);
        assert!(r.ids.len() <= 5);
    }
}
