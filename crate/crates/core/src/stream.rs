//! Streaming access to feature blocks.
//!
//! Solvers, preconditioner builders and tuners all consume a [`FeatureSource`]:
//! something that can replay `(features, targets)` chunks in a fixed order.
//! The two implementations are a chunked dataset viewed through a feature map
//! (the out-of-core path) and an in-memory matrix (tests, benches, small
//! problems). Chunking is a memory decision only: every consumer accumulates
//! in chunk order with f64 state, so results do not depend on chunk size.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::dataset::ChunkedDataset;
use crate::error::{Error, Result};
use crate::features::FeatureMap;

pub trait FeatureSource: Sync {
    /// Feature dimension M.
    fn num_features(&self) -> usize;

    /// Total row count N.
    fn num_rows(&self) -> usize;

    /// Replay `(Z_chunk, y_chunk)` blocks in a fixed order.
    fn for_each_feature_chunk(
        &self,
        f: &mut dyn FnMut(ArrayView2<'_, f64>, ArrayView1<'_, f64>) -> Result<()>,
    ) -> Result<()>;
}

/// A chunked dataset streamed through a feature map.
pub struct MappedDataset<'a> {
    dataset: &'a ChunkedDataset,
    map: &'a FeatureMap,
}

impl<'a> MappedDataset<'a> {
    pub fn new(dataset: &'a ChunkedDataset, map: &'a FeatureMap) -> Result<Self> {
        if dataset.kind() != map.expected_kind() {
            return Err(Error::InvalidInput(format!(
                "dataset kind {:?} does not match the feature map",
                dataset.kind()
            )));
        }
        Ok(Self { dataset, map })
    }

    pub fn dataset(&self) -> &ChunkedDataset {
        self.dataset
    }
}

impl FeatureSource for MappedDataset<'_> {
    fn num_features(&self) -> usize {
        self.map.output_dim()
    }

    fn num_rows(&self) -> usize {
        self.dataset.num_rows()
    }

    fn for_each_feature_chunk(
        &self,
        f: &mut dyn FnMut(ArrayView2<'_, f64>, ArrayView1<'_, f64>) -> Result<()>,
    ) -> Result<()> {
        self.dataset.for_each_chunk(|chunk| {
            let z = self.map.transform_chunk(&chunk.data)?;
            f(z.view(), chunk.targets.view())
        })
    }
}

/// In-memory features; the "chunking" is a single block.
pub struct DenseSource {
    features: Array2<f64>,
    targets: Array1<f64>,
}

impl DenseSource {
    pub fn new(features: Array2<f64>, targets: Array1<f64>) -> Result<Self> {
        if features.nrows() != targets.len() {
            return Err(Error::InvalidDimension {
                what: "target count",
                expected: features.nrows(),
                got: targets.len(),
            });
        }
        Ok(Self { features, targets })
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn targets(&self) -> ArrayView1<'_, f64> {
        self.targets.view()
    }
}

impl FeatureSource for DenseSource {
    fn num_features(&self) -> usize {
        self.features.ncols()
    }

    fn num_rows(&self) -> usize {
        self.features.nrows()
    }

    fn for_each_feature_chunk(
        &self,
        f: &mut dyn FnMut(ArrayView2<'_, f64>, ArrayView1<'_, f64>) -> Result<()>,
    ) -> Result<()> {
        f(self.features.view(), self.targets.view())
    }
}

/// `Z^T y` in one pass.
pub fn feature_target_product(source: &impl FeatureSource) -> Result<Array1<f64>> {
    Ok(feature_target_product_with_norm(source)?.0)
}

/// `(Z^T y, y^T y)` in one pass.
pub fn feature_target_product_with_norm(
    source: &impl FeatureSource,
) -> Result<(Array1<f64>, f64)> {
    let mut out = Array1::zeros(source.num_features());
    let mut y_sq = 0.0;
    source.for_each_feature_chunk(&mut |z, y| {
        out += &z.t().dot(&y);
        y_sq += y.dot(&y);
        Ok(())
    })?;
    Ok((out, y_sq))
}

/// `Z^T Z` assembled densely; refuses above `guard` features.
pub fn assemble_gram(source: &impl FeatureSource, guard: usize) -> Result<Array2<f64>> {
    let m = source.num_features();
    if m > guard {
        return Err(Error::DenseGuard {
            what: "gram matrix",
            got: m,
            guard,
        });
    }
    let mut gram = Array2::zeros((m, m));
    source.for_each_feature_chunk(&mut |z, _| {
        gram += &z.t().dot(&z);
        Ok(())
    })?;
    Ok(gram)
}

/// Materialize the full `N x M` feature matrix (clustering, retrieval stores).
pub fn materialize(source: &impl FeatureSource) -> Result<(Array2<f64>, Array1<f64>)> {
    let mut features = Array2::zeros((source.num_rows(), source.num_features()));
    let mut targets = Array1::zeros(source.num_rows());
    let mut row = 0;
    source.for_each_feature_chunk(&mut |z, y| {
        features
            .slice_mut(ndarray::s![row..row + z.nrows(), ..])
            .assign(&z);
        targets.slice_mut(ndarray::s![row..row + z.nrows()]).assign(&y);
        row += z.nrows();
        Ok(())
    })?;
    Ok((features, targets))
}
