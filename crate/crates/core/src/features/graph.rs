//! Node-set kernel for graphs: a width-1 convolution (per-node RBF features)
//! summed over nodes, invariant to node numbering.

use ndarray::{Array1, Array2, ArrayView2};

use super::RbfMap;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GraphRbfMap {
    rbf: RbfMap,
}

impl GraphRbfMap {
    pub fn new(seed: u64, width: usize, m: usize, beta: f64, sigma: f64) -> Result<Self> {
        Ok(Self {
            rbf: RbfMap::new(seed, width, m, beta, sigma)?,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.rbf.output_dim()
    }

    /// Per-node RBF features summed over nodes. Node contributions are
    /// accumulated in a canonical order (sorted by a hash of the node feature
    /// bytes, ties broken by the bytes themselves) so a permutation of the
    /// input rows yields a bit-identical output.
    pub fn features(&self, nodes: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if nodes.nrows() == 0 {
            return Err(Error::InvalidInput("graph has no nodes".into()));
        }
        let order = canonical_order(nodes);
        let mut reordered = Array2::zeros((nodes.nrows(), nodes.ncols()));
        for (slot, &i) in order.iter().enumerate() {
            reordered.row_mut(slot).assign(&nodes.row(i));
        }
        let z = self.rbf.features(reordered.view())?;
        let mut out = Array1::zeros(self.output_dim());
        for row in z.outer_iter() {
            out += &row;
        }
        Ok(out)
    }
}

fn canonical_order(nodes: ArrayView2<'_, f64>) -> Vec<usize> {
    let keys: Vec<(u64, Vec<u8>)> = nodes
        .outer_iter()
        .map(|row| {
            let bytes: Vec<u8> = row.iter().flat_map(|v| v.to_le_bytes()).collect();
            (fnv1a(&bytes), bytes)
        })
        .collect();
    let mut order: Vec<usize> = (0..nodes.nrows()).collect();
    order.sort_by(|&a, &b| keys[a].0.cmp(&keys[b].0).then_with(|| keys[a].1.cmp(&keys[b].1)));
    order
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
