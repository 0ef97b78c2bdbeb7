use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphDataset, Split};

/// Edge probability of the dense class in `dense-vs-sparse`.
pub const DENSE_P: f64 = 0.8;
/// Edge probability of the sparse class in `dense-vs-sparse`.
pub const SPARSE_P: f64 = 0.2;
/// Within-block edge probability of the two-community class.
pub const COMMUNITY_P_IN: f64 = 0.7;
/// Cross-block edge probability of the two-community class.
pub const COMMUNITY_P_OUT: f64 = 0.05;
pub const FEATURE_DIM: usize = 4;
pub const FEATURE_NOISE: f64 = 0.1;

/// Binary classification tasks whose classes differ structurally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    /// Class 0: Erdős–Rényi with p = 0.8. Class 1: p = 0.2.
    DenseVsSparse,
    /// Class 0: two-block stochastic block model. Class 1: Erdős–Rényi with
    /// the same expected edge density.
    TwoCommunity,
    /// Class 0: path. Class 1: cycle.
    PathVsCycle,
}

impl SyntheticKind {
    pub const ALL: [SyntheticKind; 3] = [
        SyntheticKind::DenseVsSparse,
        SyntheticKind::TwoCommunity,
        SyntheticKind::PathVsCycle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SyntheticKind::DenseVsSparse => "dense-vs-sparse",
            SyntheticKind::TwoCommunity => "two-community",
            SyntheticKind::PathVsCycle => "path-vs-cycle",
        }
    }

    fn min_nodes(self) -> usize {
        match self {
            SyntheticKind::TwoCommunity => 4,
            _ => 3,
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SyntheticKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown synthetic task {s:?} (expected dense-vs-sparse, two-community or path-vs-cycle)"
                ))
            })
    }
}

fn erdos_renyi(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    edges
}

fn two_blocks(rng: &mut ChaCha8Rng, n: usize) -> Vec<(usize, usize)> {
    let half = n / 2;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if (i < half) == (j < half) {
                COMMUNITY_P_IN
            } else {
                COMMUNITY_P_OUT
            };
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// Expected edge density of [`two_blocks`] on `n` nodes.
fn two_block_density(n: usize) -> f64 {
    let half = n / 2;
    let rest = n - half;
    let within = (half * half.saturating_sub(1) + rest * rest.saturating_sub(1)) / 2;
    let across = half * rest;
    (within as f64 * COMMUNITY_P_IN + across as f64 * COMMUNITY_P_OUT) / (within + across) as f64
}

/// Generates `count` graphs, alternating class 0 and class 1, with node
/// counts drawn uniformly from `nodes`. Every node carries
/// [`FEATURE_DIM`] features equal to its degree over `n − 1` plus Gaussian
/// noise of standard deviation [`FEATURE_NOISE`].
pub fn gen_synthetic(
    kind: SyntheticKind,
    count: usize,
    nodes: RangeInclusive<usize>,
    seed: u64,
) -> Result<GraphDataset> {
    if count < 4 || !count.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!(
            "synthetic datasets need an even count of at least 4, got {count}"
        )));
    }
    let (lo, hi) = (*nodes.start(), *nodes.end());
    if lo < kind.min_nodes() || lo > hi {
        return Err(Error::InvalidConfig(format!(
            "invalid node range {lo}..={hi} for {kind} (minimum {})",
            kind.min_nodes()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, FEATURE_NOISE).expect("positive std");
    let mut graphs = Vec::with_capacity(count);
    for k in 0..count {
        let class = k % 2;
        let n = rng.random_range(lo..=hi);
        let edges = match (kind, class) {
            (SyntheticKind::DenseVsSparse, 0) => erdos_renyi(&mut rng, n, DENSE_P),
            (SyntheticKind::DenseVsSparse, _) => erdos_renyi(&mut rng, n, SPARSE_P),
            (SyntheticKind::TwoCommunity, 0) => two_blocks(&mut rng, n),
            (SyntheticKind::TwoCommunity, _) => erdos_renyi(&mut rng, n, two_block_density(n)),
            (SyntheticKind::PathVsCycle, 0) => (0..n - 1).map(|i| (i, i + 1)).collect(),
            (SyntheticKind::PathVsCycle, _) => (0..n).map(|i| (i, (i + 1) % n)).collect(),
        };
        let structure = Graph::new(n, edges, None)?;
        let deg = structure.degrees();
        let x = Array2::from_shape_fn((n, FEATURE_DIM), |(i, _)| deg[i] as f64 / (n - 1) as f64)
            + Array2::from_shape_simple_fn((n, FEATURE_DIM), || noise.sample(&mut rng));
        graphs.push(structure.with_features(Some(x))?.with_label(class));
    }
    GraphDataset::new(graphs, 2, Split::seeded(count, seed))
}
