//! Isolation forest anomaly scoring.

use rand::seq::index;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsoForestParams {
    pub n_trees: usize,
    pub subsample_size: usize,
    pub seed: u64,
}

impl Default for IsoForestParams {
    fn default() -> Self {
        Self { n_trees: 100, subsample_size: 256, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum INode {
    /// Rows with `x[feature] < threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    External { size: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ITree {
    pub nodes: Vec<INode>,
}

impl ITree {
    /// Depth at which `row` lands, adjusted by `c(size)` for unresolved leaves.
    pub fn path_length(&self, row: &[f64]) -> f64 {
        let (mut i, mut depth) = (0, 0usize);
        loop {
            match self.nodes[i] {
                INode::External { size } => return depth as f64 + average_path_length(size),
                INode::Split { feature, threshold, left, right } => {
                    i = if row[feature] < threshold { left } else { right };
                    depth += 1;
                }
            }
        }
    }

    pub fn height(&self) -> usize {
        fn go(t: &ITree, i: usize) -> usize {
            match t.nodes[i] {
                INode::External { .. } => 0,
                INode::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoForestModel {
    pub trees: Vec<ITree>,
    /// Effective subsample size `n` used in the normalizer `c(n)`.
    pub subsample_size: usize,
    pub n_features: usize,
}

/// `H(i) = 1 + 1/2 + ... + 1/i`.
pub fn harmonic(i: usize) -> f64 {
    (1..=i).map(|k| 1.0 / k as f64).sum()
}

/// Average unsuccessful-search path length in a binary search tree of `n`
/// nodes: `c(n) = 2H(n-1) - 2(n-1)/n`, with `c(n) = 0` for `n <= 1`.
pub fn average_path_length(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let m = (n - 1) as f64;
    2.0 * harmonic(n - 1) - 2.0 * m / n as f64
}

pub fn isoforest_fit(x: &Matrix, params: &IsoForestParams) -> Result<IsoForestModel> {
    if x.rows() < 2 {
        return Err(Error::InsufficientData("isolation forest needs at least two rows".into()));
    }
    if params.n_trees == 0 || params.subsample_size < 2 {
        return Err(Error::Config("isoforest: n_trees >= 1 and subsample_size >= 2 required".into()));
    }
    let psi = params.subsample_size.min(x.rows());
    let limit = (psi as f64).log2().ceil() as usize;
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::rng_from(params.seed, &[rng::str_tag("iforest"), t as u64]);
            let rows = index::sample(&mut rng, x.rows(), psi).into_vec();
            let mut nodes = Vec::new();
            build(x, rows, 0, limit, &mut nodes, &mut rng);
            ITree { nodes }
        })
        .collect();
    Ok(IsoForestModel { trees, subsample_size: psi, n_features: x.cols() })
}

fn build(x: &Matrix, rows: Vec<usize>, depth: usize, limit: usize, nodes: &mut Vec<INode>, rng: &mut rng::Rng) -> usize {
    let id = nodes.len();
    nodes.push(INode::External { size: rows.len() });
    if depth >= limit || rows.len() <= 1 {
        return id;
    }
    let ranges: Vec<(usize, f64, f64)> = (0..x.cols())
        .filter_map(|j| {
            let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                let v = x.get(r, j);
                (lo.min(v), hi.max(v))
            });
            (hi > lo).then_some((j, lo, hi))
        })
        .collect();
    if ranges.is_empty() {
        return id;
    }
    let (feature, lo, hi) = ranges[rng.random_range(0..ranges.len())];
    let mut threshold = rng.random_range(lo..hi);
    if threshold <= lo {
        threshold = lo + (hi - lo) / 2.0;
    }
    let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| x.get(i, feature) < threshold);
    let left = build(x, l, depth + 1, limit, nodes, rng);
    let right = build(x, r, depth + 1, limit, nodes, rng);
    nodes[id] = INode::Split { feature, threshold, left, right };
    id
}

impl IsoForestModel {
    /// Anomaly score `2^(-E[h(x)] / c(n))` in (0, 1); higher is more anomalous.
    pub fn score(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features {
            return Err(Error::SchemaMismatch { expected: self.n_features, actual: row.len() });
        }
        let mean = self.trees.iter().map(|t| t.path_length(row)).sum::<f64>() / self.trees.len() as f64;
        Ok(score_from_path(mean, self.subsample_size))
    }
}

pub fn score_from_path(mean_path: f64, n: usize) -> f64 {
    2f64.powf(-mean_path / average_path_length(n))
}
