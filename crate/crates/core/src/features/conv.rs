//! Convolution kernels for unaligned sequences.
//!
//! `FhtConvMap` sums the RBF random features of every width-`W` window, which
//! approximates the all-pairs window-comparison kernel in a single vector per
//! sequence. `FastConvMap` instead builds a fixed-length "profile" per
//! sequence (random convolution, ReLU, global max pooling) and feeds it to an
//! RBF map; the profile depends only on the sequence and the stage-1 seed, so
//! it can be computed once per corpus and cached on disk.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::RbfMap;
use crate::dataset::{ChunkData, ChunkedDataset, DatasetWriter, InputKind};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, StreamDomain};
use crate::transform::SorfOperator;

/// Flatten every width-`window` slice of `seq` (P x K) into the rows of a
/// `(P - window + 1) x (window * K)` matrix, position-major: window position
/// varies slowest, per-position features stay contiguous.
fn unroll_windows(seq: ArrayView2<'_, f64>, window: usize, width: usize) -> Result<Array2<f64>> {
    if seq.ncols() != width {
        return Err(Error::InvalidDimension {
            what: "sequence feature width",
            expected: width,
            got: seq.ncols(),
        });
    }
    let positions = seq.nrows();
    if positions < window {
        return Err(Error::SequenceTooShort {
            length: positions,
            window,
        });
    }
    let count = positions - window + 1;
    let mut out = Array2::zeros((count, window * width));
    for i in 0..count {
        for w in 0..window {
            for k in 0..width {
                out[(i, w * width + k)] = seq[(i + w, k)];
            }
        }
    }
    Ok(out)
}

/// Sum-of-window-features kernel.
#[derive(Debug, Clone)]
pub struct FhtConvMap {
    rbf: RbfMap,
    window: usize,
    width: usize,
}

impl FhtConvMap {
    pub fn new(
        seed: u64,
        width: usize,
        window: usize,
        m: usize,
        beta: f64,
        sigma: f64,
    ) -> Result<Self> {
        Ok(Self {
            rbf: RbfMap::new(seed, window * width, m, beta, sigma)?,
            window,
            width,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.rbf.output_dim()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// One summed feature vector per sequence; cost is
    /// `O((P - W + 1) * M log M)` via the fast transform.
    pub fn features(&self, seq: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        let windows = unroll_windows(seq, self.window, self.width)?;
        let z = self.rbf.features(windows.view())?;
        Ok(z.sum_axis(Axis(0)))
    }
}

/// Two-stage kernel: random convolution profile, then RBF features.
#[derive(Debug, Clone)]
pub struct FastConvMap {
    stage1: SorfOperator,
    rbf: RbfMap,
    window: usize,
    width: usize,
}

impl FastConvMap {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        spec_seed: u64,
        stage2_seed: u64,
        width: usize,
        window: usize,
        stage1_features: usize,
        m: usize,
        beta: f64,
        sigma: f64,
    ) -> Result<Self> {
        let stage1_seed = derive_seed(spec_seed, StreamDomain::ConvStage1, 0);
        Ok(Self {
            stage1: SorfOperator::sample(stage1_seed, window * width, stage1_features)?,
            rbf: RbfMap::new(stage2_seed, stage1_features, m, beta, sigma)?,
            window,
            width,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.rbf.output_dim()
    }

    pub fn stage1_dim(&self) -> usize {
        self.stage1.out_dim()
    }

    #[cfg(test)]
    pub(crate) fn stage1_operator(&self) -> &SorfOperator {
        &self.stage1
    }

    /// Random convolution over all windows, ReLU, per-filter max over
    /// positions. Depends only on the sequence and the stage-1 seed, never on
    /// the hyperparameters, so the result is cacheable.
    pub fn stage1(&self, seq: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        let windows = unroll_windows(seq, self.window, self.width)?;
        let pre = self.stage1.apply_batch(windows.view())?;
        let mut profile = Array1::zeros(self.stage1.out_dim());
        for row in pre.axis_iter(Axis(0)) {
            for (p, &v) in profile.iter_mut().zip(row.iter()) {
                let r = v.max(0.0);
                if r > *p {
                    *p = r;
                }
            }
        }
        Ok(profile)
    }

    /// RBF features of the stage-1 profile.
    pub fn features(&self, seq: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        let profile = self.stage1(seq)?;
        self.rbf.features_row(profile.view())
    }
}

/// Run stage 1 over a whole sequence dataset and persist the profiles as a
/// fixed-vector dataset, so the convolutions happen once per corpus. Fitting
/// the persisted profiles with an RBF map (same seed, `input_width` equal to
/// the stage-1 width) reproduces the FastConv1d model exactly up to the f32
/// storage rounding.
pub fn persist_stage1(
    dataset: &ChunkedDataset,
    map: &FastConvMap,
    out_dir: impl AsRef<std::path::Path>,
    chunk_rows: usize,
) -> Result<ChunkedDataset> {
    if dataset.kind() != InputKind::Sequence {
        return Err(Error::InvalidInput(
            "stage-1 caching expects a sequence dataset".into(),
        ));
    }
    let mut writer = DatasetWriter::create(
        out_dir,
        InputKind::FixedVector,
        map.stage1_dim(),
        chunk_rows,
    )?;
    writer.set_metadata("derived_from", dataset.content_hash());
    writer.set_metadata("stage1_seed", map.stage1.seed().to_string());
    writer.set_metadata("stage1_width", map.stage1_dim().to_string());
    dataset.for_each_chunk(|chunk| {
        let seqs = match &chunk.data {
            ChunkData::Sequences(s) => s,
            _ => unreachable!("kind checked above"),
        };
        for (seq, &y) in seqs.iter().zip(chunk.targets.iter()) {
            let profile = map.stage1(seq.view())?;
            writer.push_fixed(profile.view(), y)?;
        }
        Ok(())
    })?;
    writer.finalize()
}
