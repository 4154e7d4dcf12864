//! Random-feature maps for every supported kernel.
//!
//! All maps share one convention: the feature vector of an input against
//! itself recovers the squared amplitude, `z(x).z(x) = beta^2`, so the
//! predictive-variance formula can read the prior amplitude directly off the
//! map. For trigonometric maps this means `M/2` sampled frequencies feeding
//! paired cos/sin features scaled by `beta * sqrt(2 / M) / sqrt(2)`.
//!
//! `sigma` multiplies the sampled frequencies, so it acts as an *inverse*
//! lengthscale: the RBF map approximates `beta^2 * exp(-sigma^2 |x-y|^2 / 2)`.

mod conv;
mod graph;

pub use conv::{persist_stage1, FastConvMap, FhtConvMap};
pub use graph::GraphRbfMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{ChunkData, InputKind};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, StreamDomain};
use crate::transform::SorfOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Rbf,
    ArcCosine1,
    FhtConv1d,
    FastConv1d,
    GraphRbf,
}

impl KernelKind {
    /// Maps with paired cos/sin features need an even feature count.
    pub fn is_trigonometric(self) -> bool {
        !matches!(self, KernelKind::ArcCosine1)
    }

    pub fn input_kind(self) -> InputKind {
        match self {
            KernelKind::Rbf | KernelKind::ArcCosine1 => InputKind::FixedVector,
            KernelKind::FhtConv1d | KernelKind::FastConv1d => InputKind::Sequence,
            KernelKind::GraphRbf => InputKind::Graph,
        }
    }
}

/// Immutable description of a feature map; two equal specs produce
/// bit-identical features for identical inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMapSpec {
    pub kernel: KernelKind,
    /// Features per element: the vector width for fixed kernels, the
    /// per-position/per-node width for convolution and graph kernels.
    pub input_width: usize,
    /// k-mer window for the convolution kernels; 1 for GraphRbf.
    pub window: usize,
    /// Total random features M used for the mean.
    pub num_rffs: usize,
    /// Feature count for the variance factor, at most `num_rffs`.
    pub variance_rffs: usize,
    /// Noise hyperparameter (used by the fitter, carried here for provenance).
    pub lambda: f64,
    /// Amplitude hyperparameter.
    pub beta: f64,
    /// Inverse lengthscale; ignored by ArcCosine1.
    pub sigma: f64,
    pub seed: u64,
    /// Stage-1 width for FastConv1d; 0 selects `2 * next_pow2(window * input_width)`.
    #[serde(default)]
    pub stage1_features: usize,
}

impl FeatureMapSpec {
    pub fn new(kernel: KernelKind, input_width: usize, num_rffs: usize) -> Self {
        Self {
            kernel,
            input_width,
            window: 1,
            num_rffs,
            variance_rffs: num_rffs.min(512),
            lambda: 1e-1,
            beta: 1.0,
            sigma: 1.0,
            seed: 0,
            stage1_features: 0,
        }
    }

    pub fn with_window(mut self, window: usize) -> Self {
        self.window = window;
        self
    }

    pub fn with_num_rffs(mut self, m: usize) -> Self {
        self.num_rffs = m;
        self
    }

    pub fn with_hyperparams(mut self, lambda: f64, beta: f64, sigma: f64) -> Self {
        self.lambda = lambda;
        self.beta = beta;
        self.sigma = sigma;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_variance_rffs(mut self, m_var: usize) -> Self {
        self.variance_rffs = m_var;
        self
    }

    pub fn with_stage1_features(mut self, m1: usize) -> Self {
        self.stage1_features = m1;
        self
    }

    /// Effective stage-1 width for FastConv1d.
    pub fn stage1_width(&self) -> usize {
        if self.stage1_features > 0 {
            self.stage1_features
        } else {
            2 * (self.window * self.input_width).next_power_of_two()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_width == 0 {
            return Err(Error::InvalidSpec("input_width must be >= 1".into()));
        }
        if self.window == 0 {
            return Err(Error::InvalidSpec("window must be >= 1".into()));
        }
        if self.kernel == KernelKind::GraphRbf && self.window != 1 {
            return Err(Error::InvalidSpec("GraphRbf requires window = 1".into()));
        }
        if self.num_rffs == 0 {
            return Err(Error::InvalidSpec("num_rffs must be >= 1".into()));
        }
        if self.kernel.is_trigonometric() {
            for (name, m) in [("num_rffs", self.num_rffs), ("variance_rffs", self.variance_rffs)] {
                if m < 2 || m % 2 != 0 {
                    return Err(Error::InvalidSpec(format!(
                        "{name} must be even and >= 2 for trigonometric maps, got {m}"
                    )));
                }
            }
        }
        if self.variance_rffs == 0 || self.variance_rffs > self.num_rffs {
            return Err(Error::InvalidSpec(format!(
                "variance_rffs must be in [1, num_rffs], got {}",
                self.variance_rffs
            )));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidHyperparam {
                name: "lambda",
                reason: format!("must be > 0, got {}", self.lambda),
            });
        }
        if !(self.beta > 0.0) {
            return Err(Error::InvalidHyperparam {
                name: "beta",
                reason: format!("must be > 0, got {}", self.beta),
            });
        }
        if self.kernel != KernelKind::ArcCosine1 && !(self.sigma > 0.0) {
            return Err(Error::InvalidHyperparam {
                name: "sigma",
                reason: format!("must be > 0, got {}", self.sigma),
            });
        }
        Ok(())
    }
}

/// A built feature map: the sampled operators plus hyperparameters.
#[derive(Debug, Clone)]
pub enum FeatureMap {
    Rbf(RbfMap),
    ArcCos(ArcCosMap),
    FhtConv(FhtConvMap),
    FastConv(FastConvMap),
    GraphRbf(GraphRbfMap),
}

impl FeatureMap {
    pub fn build(spec: &FeatureMapSpec) -> Result<Self> {
        spec.validate()?;
        Self::build_with(spec, spec.num_rffs, spec.seed)
    }

    /// Variance map: same kernel family at `variance_rffs` features on an
    /// independent seed substream.
    pub fn build_variance(spec: &FeatureMapSpec) -> Result<Self> {
        spec.validate()?;
        let seed = derive_seed(spec.seed, StreamDomain::VarianceMap, 0);
        Self::build_with(spec, spec.variance_rffs, seed)
    }

    fn build_with(spec: &FeatureMapSpec, m: usize, seed: u64) -> Result<Self> {
        Ok(match spec.kernel {
            KernelKind::Rbf => FeatureMap::Rbf(RbfMap::new(
                seed,
                spec.input_width,
                m,
                spec.beta,
                spec.sigma,
            )?),
            KernelKind::ArcCosine1 => {
                FeatureMap::ArcCos(ArcCosMap::new(seed, spec.input_width, m, spec.beta)?)
            }
            KernelKind::FhtConv1d => FeatureMap::FhtConv(FhtConvMap::new(
                seed,
                spec.input_width,
                spec.window,
                m,
                spec.beta,
                spec.sigma,
            )?),
            KernelKind::FastConv1d => FeatureMap::FastConv(FastConvMap::new(
                // Stage 1 always derives from the spec seed so cached stage-1
                // outputs stay valid when only M or hyperparameters change.
                spec.seed,
                seed,
                spec.input_width,
                spec.window,
                spec.stage1_width(),
                m,
                spec.beta,
                spec.sigma,
            )?),
            KernelKind::GraphRbf => FeatureMap::GraphRbf(GraphRbfMap::new(
                seed,
                spec.input_width,
                m,
                spec.beta,
                spec.sigma,
            )?),
        })
    }

    pub fn output_dim(&self) -> usize {
        match self {
            FeatureMap::Rbf(m) => m.output_dim(),
            FeatureMap::ArcCos(m) => m.output_dim(),
            FeatureMap::FhtConv(m) => m.output_dim(),
            FeatureMap::FastConv(m) => m.output_dim(),
            FeatureMap::GraphRbf(m) => m.output_dim(),
        }
    }

    pub fn expected_kind(&self) -> InputKind {
        match self {
            FeatureMap::Rbf(_) | FeatureMap::ArcCos(_) => InputKind::FixedVector,
            FeatureMap::FhtConv(_) | FeatureMap::FastConv(_) => InputKind::Sequence,
            FeatureMap::GraphRbf(_) => InputKind::Graph,
        }
    }

    /// Transform one chunk of inputs into its `rows x M` feature block.
    pub fn transform_chunk(&self, data: &ChunkData) -> Result<Array2<f64>> {
        match (self, data) {
            (FeatureMap::Rbf(m), ChunkData::Fixed(x)) => m.features(x.view()),
            (FeatureMap::ArcCos(m), ChunkData::Fixed(x)) => m.features(x.view()),
            (FeatureMap::FhtConv(m), ChunkData::Sequences(seqs)) => {
                stack_rows(m.output_dim(), seqs, |s| m.features(s.view()))
            }
            (FeatureMap::FastConv(m), ChunkData::Sequences(seqs)) => {
                stack_rows(m.output_dim(), seqs, |s| m.features(s.view()))
            }
            (FeatureMap::GraphRbf(m), ChunkData::Graphs(gs)) => {
                stack_rows(m.output_dim(), gs, |g| m.features(g.view()))
            }
            _ => Err(Error::InvalidInput(
                "chunk kind does not match the feature map's kernel".into(),
            )),
        }
    }
}

fn stack_rows(
    m: usize,
    items: &[Array2<f64>],
    f: impl Fn(&Array2<f64>) -> Result<Array1<f64>> + Sync,
) -> Result<Array2<f64>> {
    use rayon::prelude::*;
    let rows: Vec<Result<Array1<f64>>> = items.par_iter().map(|item| f(item)).collect();
    let mut out = Array2::zeros((items.len(), m));
    for (i, row) in rows.into_iter().enumerate() {
        out.row_mut(i).assign(&row?);
    }
    Ok(out)
}

/// RBF map: paired cos/sin of SORF frequencies.
#[derive(Debug, Clone)]
pub struct RbfMap {
    sorf: SorfOperator,
    beta: f64,
    sigma: f64,
    m_half: usize,
}

impl RbfMap {
    pub fn new(seed: u64, input_dim: usize, m: usize, beta: f64, sigma: f64) -> Result<Self> {
        if m < 2 || m % 2 != 0 {
            return Err(Error::InvalidSpec(format!(
                "RBF feature count must be even and >= 2, got {m}"
            )));
        }
        let m_half = m / 2;
        Ok(Self {
            sorf: SorfOperator::sample(seed, input_dim, m_half)?,
            beta,
            sigma,
            m_half,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.sorf.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.m_half
    }

    /// `z(x) = beta * sqrt(1/m_half) * [cos(sigma * u), sin(sigma * u)]`
    /// with `u = SORF(x)`, so `z(x).z(x) = beta^2` exactly.
    pub fn features(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let freqs = self.sorf.apply_batch(x)?;
        let scale = self.beta / (self.m_half as f64).sqrt();
        let mut out = Array2::zeros((x.nrows(), 2 * self.m_half));
        for (mut orow, frow) in out.axis_iter_mut(Axis(0)).zip(freqs.axis_iter(Axis(0))) {
            for (j, &u) in frow.iter().enumerate() {
                let arg = self.sigma * u;
                orow[j] = scale * arg.cos();
                orow[j + self.m_half] = scale * arg.sin();
            }
        }
        Ok(out)
    }

    pub fn features_row(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        let m = self
            .features(x.insert_axis(Axis(0)))?
            .row(0)
            .to_owned();
        Ok(m)
    }
}

/// Order-1 arc-cosine map with bias: the input is augmented with a constant 1,
/// SORF-transformed and rectified.
#[derive(Debug, Clone)]
pub struct ArcCosMap {
    sorf: SorfOperator,
    beta: f64,
    input_dim: usize,
    m: usize,
}

impl ArcCosMap {
    pub fn new(seed: u64, input_dim: usize, m: usize, beta: f64) -> Result<Self> {
        Ok(Self {
            sorf: SorfOperator::sample(seed, input_dim + 1, m)?,
            beta,
            input_dim,
            m,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.m
    }

    /// `z(x) = beta * sqrt(1/M) * relu(SORF([x, 1]))`; `z(x).z(y)` estimates
    /// the order-1 arc-cosine kernel with bias, scaled by `beta^2`.
    pub fn features(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim {
            return Err(Error::InvalidDimension {
                what: "arc-cosine input columns",
                expected: self.input_dim,
                got: x.ncols(),
            });
        }
        let mut augmented = Array2::ones((x.nrows(), self.input_dim + 1));
        augmented
            .slice_mut(ndarray::s![.., ..self.input_dim])
            .assign(&x);
        let mut freqs = self.sorf.apply_batch(augmented.view())?;
        let scale = self.beta / (self.m as f64).sqrt();
        freqs.mapv_inplace(|v| scale * v.max(0.0));
        Ok(freqs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, StreamDomain};
    use ndarray::array;
    use rand::Rng as _;

    fn random_batch(seed: u64, n: usize, d: usize) -> Array2<f64> {
        let mut rng = rng::substream(seed, StreamDomain::Bench, 1);
        Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn spec_validation_catches_bad_values() {
        let mut spec = FeatureMapSpec::new(KernelKind::Rbf, 4, 16);
        spec.validate().unwrap();
        spec.num_rffs = 15;
        assert!(spec.validate().is_err());
        spec.num_rffs = 16;
        spec.lambda = 0.0;
        assert!(spec.validate().is_err());
        spec.lambda = 0.1;
        spec.sigma = -1.0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn rbf_self_similarity_is_beta_squared() {
        let beta = 1.7;
        let map = RbfMap::new(3, 6, 64, beta, 0.8).unwrap();
        let x = random_batch(1, 4, 6);
        let z = map.features(x.view()).unwrap();
        for row in z.outer_iter() {
            let dot: f64 = row.iter().map(|v| v * v).sum();
            assert!((dot - beta * beta).abs() < 1e-10);
        }
    }

    #[test]
    fn rbf_dot_products_bounded_by_beta_squared() {
        let beta = 2.0;
        let map = RbfMap::new(5, 4, 128, beta, 1.0).unwrap();
        let x = random_batch(2, 10, 4);
        let z = map.features(x.view()).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let dot: f64 = z.row(i).dot(&z.row(j));
                assert!(dot <= beta * beta + 1e-9);
                assert!(dot >= -beta * beta - 1e-9);
            }
        }
    }

    #[test]
    fn rbf_distant_points_strictly_less_similar() {
        let map = RbfMap::new(7, 8, 256, 1.0, 1.0).unwrap();
        let x = array![[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]];
        let y = array![[8.0, -8.0, 8.0, -8.0, 8.0, -8.0, 8.0, -8.0]];
        let zx = map.features(x.view()).unwrap();
        let zy = map.features(y.view()).unwrap();
        let cross: f64 = zx.row(0).dot(&zy.row(0));
        let self_sim: f64 = zx.row(0).dot(&zx.row(0));
        assert!(cross < self_sim);
    }

    #[test]
    fn rbf_rejects_odd_feature_count() {
        assert!(RbfMap::new(0, 4, 7, 1.0, 1.0).is_err());
    }

    #[test]
    fn arccos_features_nonnegative() {
        let map = ArcCosMap::new(11, 5, 64, 1.0).unwrap();
        let x = random_batch(3, 6, 5);
        let z = map.features(x.view()).unwrap();
        assert!(z.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn arccos_bias_only_second_moment() {
        // x = 0 leaves only the bias coordinate; E[relu(w_b)^2] = 1/2 for the
        // matched Gaussian construction, and the structured map shares second
        // moments with it exactly.
        let m = 65536;
        let map = ArcCosMap::new(5, 3, m, 1.0).unwrap();
        let x = Array2::zeros((1, 3));
        let z = map.features(x.view()).unwrap();
        let dot: f64 = z.row(0).iter().map(|v| v * v).sum();
        assert!((dot - 0.5).abs() < 0.02 * 0.5, "got {dot}");
    }

    #[test]
    fn feature_map_determinism_across_builds() {
        let spec = FeatureMapSpec::new(KernelKind::Rbf, 6, 32).with_seed(42);
        let a = FeatureMap::build(&spec).unwrap();
        let b = FeatureMap::build(&spec).unwrap();
        let x = ChunkData::Fixed(random_batch(9, 5, 6));
        let za = a.transform_chunk(&x).unwrap();
        let zb = b.transform_chunk(&x).unwrap();
        assert_eq!(za, zb);
    }

    #[test]
    fn variance_map_uses_independent_stream() {
        let spec = FeatureMapSpec::new(KernelKind::Rbf, 6, 32)
            .with_seed(42)
            .with_variance_rffs(32);
        let main = FeatureMap::build(&spec).unwrap();
        let var = FeatureMap::build_variance(&spec).unwrap();
        let x = ChunkData::Fixed(random_batch(9, 2, 6));
        let zm = main.transform_chunk(&x).unwrap();
        let zv = var.transform_chunk(&x).unwrap();
        assert_eq!(zm.shape(), zv.shape());
        assert_ne!(zm, zv);
    }

    #[test]
    fn chunk_kind_mismatch_is_rejected() {
        let spec = FeatureMapSpec::new(KernelKind::Rbf, 6, 32);
        let map = FeatureMap::build(&spec).unwrap();
        let seqs = ChunkData::Sequences(vec![random_batch(0, 4, 6)]);
        assert!(map.transform_chunk(&seqs).is_err());
    }
}
