//! Seedable, counter-based random streams.
//!
//! Every stochastic object in the toolkit is reproducible from a single `u64`
//! seed plus a documented substream rule. The generator is ChaCha8
//! (`chacha8/stream-split-v1` in manifests): the seed selects the key and the
//! 64-bit stream id is `(domain << 32) | index`, so each diagonal, each sketch,
//! each probe batch draws from its own independent stream. Identical seeds
//! therefore reproduce identical operators regardless of worker count or the
//! order in which components are constructed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

/// Generator identity recorded in dataset and model manifests.
pub const RNG_IDENTITY: &str = "chacha8/stream-split-v1";

/// Substream domains. The numeric tags are part of the on-disk contract:
/// changing them changes every sampled operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum StreamDomain {
    /// SORF Rademacher diagonals; index = block * 3 + diagonal.
    SorfRademacher = 1,
    /// SORF chi scaling vector; index = 0.
    SorfChi = 2,
    /// SRHT sign diagonal; index = 0.
    SrhtSign = 3,
    /// SRHT row subset; index = 0.
    SrhtSubset = 4,
    /// Gaussian sketch matrix for the preconditioner; index = column block.
    SketchGauss = 5,
    /// Probe vectors for trace estimation; index = probe.
    TraceProbe = 6,
    /// Derived seed for the variance feature map.
    VarianceMap = 7,
    /// Derived seed for the convolution stage-1 map.
    ConvStage1 = 8,
    /// Hyperparameter tuning (initial design, candidate draws, posterior samples).
    Tuning = 9,
    /// Clustering initialization.
    Clustering = 10,
    /// Active-learning loop (pool shuffling, refit seeds).
    ActiveLearning = 11,
    /// Synthetic workload generation for the bench command.
    Bench = 12,
}

/// ChaCha8 stream for `(seed, domain, index)`.
pub fn substream(seed: u64, domain: StreamDomain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 32) | (index & 0xFFFF_FFFF));
    rng
}

/// Deterministically derive a child seed, e.g. for the variance map.
pub fn derive_seed(seed: u64, domain: StreamDomain, index: u64) -> u64 {
    substream(seed, domain, index).gen()
}

/// `n` fair signs in {-1.0, +1.0}.
pub fn rademacher(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
        .collect()
}

/// `n` draws from the chi distribution with `dof` degrees of freedom.
pub fn chi(rng: &mut ChaCha8Rng, n: usize, dof: f64) -> Vec<f64> {
    let chi2 = ChiSquared::new(dof).expect("dof > 0");
    (0..n).map(|_| chi2.sample(rng).sqrt()).collect()
}

/// `n` standard normal draws.
pub fn standard_normal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// `count` distinct indices in `[0, n)`, ascending.
pub fn sample_without_replacement(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<usize> {
    assert!(count <= n);
    // Partial Fisher-Yates on a lazily materialized index map.
    let mut swaps = std::collections::HashMap::new();
    let mut picked = Vec::with_capacity(count);
    for i in 0..count {
        let j = rng.gen_range(i..n);
        let vj = *swaps.get(&j).unwrap_or(&j);
        let vi = *swaps.get(&i).unwrap_or(&i);
        picked.push(vj);
        swaps.insert(j, vi);
    }
    picked.sort_unstable();
    picked
}
