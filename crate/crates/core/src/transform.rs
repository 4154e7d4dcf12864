//! Fast Walsh-Hadamard transform and the structured random operators built on
//! it: the SORF frequency generator and the subsampled randomized Hadamard
//! transform (SRHT).
//!
//! The transform is normalized: one application multiplies by the orthonormal
//! Hadamard matrix `H` with `H * H = I`, so applying it twice restores the
//! input. All operators are immutable after construction and reproducible from
//! `(dims, seed)` via the substream rule in [`crate::rng`].

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::rng::{self, StreamDomain};

/// Contiguous power-of-two buffer accepted by the in-place transform.
#[derive(Debug, Clone)]
pub struct HadamardBuffer {
    data: Vec<f64>,
}

impl HadamardBuffer {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if !data.len().is_power_of_two() {
            return Err(Error::NotPowerOfTwo(data.len()));
        }
        Ok(Self { data })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.data
    }

    /// Normalized in-place transform; the length invariant is held by
    /// construction so this cannot fail.
    pub fn fwht(&mut self) {
        fwht_unchecked(&mut self.data);
    }
}

/// Normalized fast Walsh-Hadamard transform, in place.
///
/// `O(n log n)` adds and one scaling pass; errors if the length is not a
/// power of two. Length 1 is the identity.
pub fn fwht_inplace(data: &mut [f64]) -> Result<()> {
    if !data.len().is_power_of_two() {
        return Err(Error::NotPowerOfTwo(data.len()));
    }
    fwht_unchecked(data);
    Ok(())
}

/// Butterfly core; caller guarantees the power-of-two length.
#[inline]
pub(crate) fn fwht_unchecked(data: &mut [f64]) {
    let n = data.len();
    let mut h = 1;
    while h < n {
        let mut i = 0;
        while i < n {
            for j in i..i + h {
                let x = data[j];
                let y = data[j + h];
                data[j] = x + y;
                data[j + h] = x - y;
            }
            i += h * 2;
        }
        h *= 2;
    }
    let scale = 1.0 / (n as f64).sqrt();
    for v in data.iter_mut() {
        *v *= scale;
    }
}

/// Structured orthogonal random features operator.
///
/// Holds the three Rademacher diagonals per block and the chi scaling vector;
/// applying it to a row costs `O(P * D log D)` where `D` is the padded input
/// width and `P` the number of blocks needed to reach `out_dim` frequencies.
#[derive(Debug, Clone)]
pub struct SorfOperator {
    input_dim: usize,
    padded_dim: usize,
    num_blocks: usize,
    out_dim: usize,
    /// `[block][diag]`, each of length `padded_dim`; diag 0 touches the input first.
    rademacher: Vec<[Vec<f64>; 3]>,
    /// Length `out_dim`, strictly positive.
    chi: Vec<f64>,
    seed: u64,
}

impl SorfOperator {
    /// Sample the diagonals for `(input_dim, out_dim)` from `seed`.
    ///
    /// The padded width is the next power of two of `max(input_dim, 2)`; the
    /// chi scaling uses `padded_dim` degrees of freedom.
    pub fn sample(seed: u64, input_dim: usize, out_dim: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidDimension {
                what: "sorf input_dim",
                expected: 1,
                got: 0,
            });
        }
        if out_dim == 0 {
            return Err(Error::InvalidDimension {
                what: "sorf out_dim",
                expected: 1,
                got: 0,
            });
        }
        let padded_dim = input_dim.max(2).next_power_of_two();
        let num_blocks = if padded_dim < out_dim {
            out_dim.div_ceil(padded_dim)
        } else {
            1
        };
        let rademacher = (0..num_blocks)
            .map(|block| {
                let mut diags: [Vec<f64>; 3] = Default::default();
                for (k, diag) in diags.iter_mut().enumerate() {
                    let mut rng = rng::substream(
                        seed,
                        StreamDomain::SorfRademacher,
                        (block * 3 + k) as u64,
                    );
                    *diag = rng::rademacher(&mut rng, padded_dim);
                }
                diags
            })
            .collect();
        let mut chi_rng = rng::substream(seed, StreamDomain::SorfChi, 0);
        let chi = rng::chi(&mut chi_rng, out_dim, padded_dim as f64);
        Ok(Self {
            input_dim,
            padded_dim,
            num_blocks,
            out_dim,
            rademacher,
            chi,
            seed,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn padded_dim(&self) -> usize {
        self.padded_dim
    }

    pub fn num_blocks(&self) -> usize {
        self.num_blocks
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn chi_diag(&self) -> &[f64] {
        &self.chi
    }

    pub fn rademacher_diag(&self, block: usize, k: usize) -> &[f64] {
        &self.rademacher[block][k]
    }

    /// Pre-activation frequencies for one row, written to `out`
    /// (`out.len() == out_dim`). `scratch` must hold `padded_dim` scalars.
    pub(crate) fn apply_row_into(&self, x: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        debug_assert_eq!(x.len(), self.input_dim);
        debug_assert_eq!(out.len(), self.out_dim);
        debug_assert_eq!(scratch.len(), self.padded_dim);
        for block in 0..self.num_blocks {
            scratch[..x.len()].copy_from_slice(x);
            scratch[x.len()..].fill(0.0);
            for diag in &self.rademacher[block] {
                for (v, s) in scratch.iter_mut().zip(diag) {
                    *v *= s;
                }
                fwht_unchecked(scratch);
            }
            let start = block * self.padded_dim;
            if start >= self.out_dim {
                break;
            }
            let take = self.padded_dim.min(self.out_dim - start);
            out[start..start + take].copy_from_slice(&scratch[..take]);
        }
        for (v, s) in out.iter_mut().zip(&self.chi) {
            *v *= s;
        }
    }

    /// Apply to a batch of rows, producing the `N x out_dim` frequency matrix.
    ///
    /// Rows are independent, so the batch is processed in parallel; each output
    /// row is written by exactly one worker, keeping results identical for any
    /// worker count.
    pub fn apply_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim {
            return Err(Error::InvalidDimension {
                what: "sorf batch columns",
                expected: self.input_dim,
                got: x.ncols(),
            });
        }
        let mut out = Array2::zeros((x.nrows(), self.out_dim));
        ndarray::Zip::from(out.axis_iter_mut(Axis(0)))
            .and(x.axis_iter(Axis(0)))
            .par_for_each(|mut orow, xrow| {
                let mut scratch = vec![0.0; self.padded_dim];
                let xr = xrow.to_vec();
                self.apply_row_into(
                    &xr,
                    orow.as_slice_mut().expect("row is contiguous"),
                    &mut scratch,
                );
            });
        Ok(out)
    }
}

/// Subsampled randomized Hadamard transform `sqrt(M/L) * S * H * D`.
#[derive(Debug, Clone)]
pub struct SrhtOperator {
    dim: usize,
    rank: usize,
    signs: Vec<f64>,
    rows: Vec<usize>,
    seed: u64,
}

impl SrhtOperator {
    pub fn sample(seed: u64, dim: usize, rank: usize) -> Result<Self> {
        if !dim.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(dim));
        }
        if rank == 0 || rank > dim {
            return Err(Error::InvalidRank { rank, dim });
        }
        let mut sign_rng = rng::substream(seed, StreamDomain::SrhtSign, 0);
        let signs = rng::rademacher(&mut sign_rng, dim);
        let mut row_rng = rng::substream(seed, StreamDomain::SrhtSubset, 0);
        let rows = rng::sample_without_replacement(&mut row_rng, dim, rank);
        Ok(Self {
            dim,
            rank,
            signs,
            rows,
            seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn scale(&self) -> f64 {
        (self.dim as f64 / self.rank as f64).sqrt()
    }

    pub fn sign_diag(&self) -> &[f64] {
        &self.signs
    }

    pub fn row_subset(&self) -> &[usize] {
        &self.rows
    }

    pub(crate) fn apply_row_into(&self, v: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        debug_assert!(v.len() <= self.dim);
        scratch[..v.len()].copy_from_slice(v);
        scratch[v.len()..].fill(0.0);
        for (s, d) in scratch.iter_mut().zip(&self.signs) {
            *s *= d;
        }
        fwht_unchecked(scratch);
        let scale = self.scale();
        for (o, &r) in out.iter_mut().zip(&self.rows) {
            *o = scratch[r] * scale;
        }
    }

    /// Apply to a batch of rows (`N x dim`, or narrower with implicit zero
    /// padding), producing `N x rank`.
    pub fn apply_batch(&self, v: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if v.ncols() > self.dim {
            return Err(Error::InvalidDimension {
                what: "srht batch columns",
                expected: self.dim,
                got: v.ncols(),
            });
        }
        let mut out = Array2::zeros((v.nrows(), self.rank));
        ndarray::Zip::from(out.axis_iter_mut(Axis(0)))
            .and(v.axis_iter(Axis(0)))
            .par_for_each(|mut orow, vrow| {
                let mut scratch = vec![0.0; self.dim];
                let vr = vrow.to_vec();
                self.apply_row_into(
                    &vr,
                    orow.as_slice_mut().expect("row is contiguous"),
                    &mut scratch,
                );
            });
        Ok(out)
    }

    /// Materialize the `dim x rank` sketch matrix `Omega = Theta^T` scaled so
    /// its columns are orthonormal.
    #[cfg(test)]
    pub(crate) fn orthonormal_columns(&self) -> Array2<f64> {
        let mut omega = Array2::zeros((self.dim, self.rank));
        let mut scratch = vec![0.0; self.dim];
        let mut row = vec![0.0; self.rank];
        // Row i of Theta^T is Theta applied to e_i; undo the sqrt(M/L) scale
        // and divide by the remaining sqrt(M/L)... columns of Theta^T have
        // norm sqrt(M/L) * 1, so scaling rows by 1/scale^... Simpler: apply to
        // identity and normalize columns by their exact norm sqrt(M/L)/...
        let col_norm = self.scale(); // each column of Theta^T has this norm
        for i in 0..self.dim {
            let mut e = vec![0.0; self.dim];
            e[i] = 1.0;
            self.apply_row_into(&e, &mut row, &mut scratch);
            for (j, &v) in row.iter().enumerate() {
                omega[(i, j)] = v / col_norm;
            }
        }
        omega
    }
}
