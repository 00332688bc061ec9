//! Gradient-boosted regression trees with logistic or squared loss.
//!
//! Trees are grown level-wise with exact greedy split search over sorted
//! unique feature values on a row subsample, scoring splits with the
//! second-order gain `G_L^2/(H_L+l) + G_R^2/(H_R+l) - G^2/(H+l)`. Leaf values
//! are shrunken Newton steps re-estimated on every training row of the leaf,
//! halved while they would increase that leaf's loss, so the training loss
//! never increases from one round to the next.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

/// L2 penalty on leaf values.
const LAMBDA: f64 = 1.0;
const MIN_GAIN: f64 = 1e-12;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Loss {
    Logistic,
    Squared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
    pub subsample_ratio: f64,
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self { n_trees: 200, max_depth: 4, learning_rate: 0.1, min_leaf: 20, subsample_ratio: 0.8, seed: 0 }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("gbt: {m}")));
        if self.n_trees == 0 || self.max_depth == 0 || self.min_leaf == 0 {
            return bad("n_trees, max_depth and min_leaf must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must lie in (0, 1]");
        }
        if !(self.subsample_ratio > 0.0 && self.subsample_ratio <= 1.0) {
            return bad("subsample_ratio must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split { feature, threshold, left, right } => {
                    i = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(row)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub loss: Loss,
    pub base_score: f64,
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() }
}

fn point_loss(loss: Loss, f: f64, y: f64) -> f64 {
    match loss {
        Loss::Logistic => softplus(f) - y * f,
        Loss::Squared => 0.5 * (f - y) * (f - y),
    }
}

/// Mean training loss of raw scores `f` against targets `y`.
pub fn mean_loss(loss: Loss, f: &[f64], y: &[f64]) -> f64 {
    f.iter().zip(y).map(|(&f, &y)| point_loss(loss, f, y)).sum::<f64>() / f.len() as f64
}

impl GbtModel {
    /// Model with no trees.
    pub fn constant(loss: Loss, base_score: f64, n_features: usize) -> Self {
        Self { loss, base_score, n_features, trees: Vec::new() }
    }

    /// Summed tree scores plus the base score.
    pub fn raw_score(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features {
            return Err(Error::SchemaMismatch { expected: self.n_features, actual: row.len() });
        }
        Ok(self.trees.iter().fold(self.base_score, |acc, t| acc + t.predict(row)))
    }

    /// Probability for logistic models, raw regression value for squared.
    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        let z = self.raw_score(row)?;
        Ok(match self.loss {
            Loss::Logistic => sigmoid(z),
            Loss::Squared => z,
        })
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Result<Vec<f64>> {
        x.iter_rows().map(|r| self.predict(r)).collect()
    }
}

/// Fits a model; see [`fit_with_history`].
pub fn gbt_fit(x: &Matrix, y: &[f64], params: &GbtParams, loss: Loss) -> Result<GbtModel> {
    fit_with_history(x, y, params, loss).map(|(m, _)| m)
}

/// Fits a model and returns the mean training loss before the first round
/// and after every round.
pub fn fit_with_history(x: &Matrix, y: &[f64], params: &GbtParams, loss: Loss) -> Result<(GbtModel, Vec<f64>)> {
    params.validate()?;
    let n = x.rows();
    if n != y.len() {
        return Err(Error::Config(format!("gbt: {n} rows but {} targets", y.len())));
    }
    if n < 2 {
        return Err(Error::InsufficientData("gbt needs at least two rows".into()));
    }
    if x.as_slice().iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Config("gbt: non-finite input; impute features first".into()));
    }
    let base_score = match loss {
        Loss::Logistic => {
            if y.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::Config("logistic targets must be 0 or 1".into()));
            }
            let pos = y.iter().sum::<f64>();
            if pos == 0.0 || pos == n as f64 {
                return Err(Error::SingleClass("logistic gbt needs both classes".into()));
            }
            let p = pos / n as f64;
            (p / (1.0 - p)).ln()
        }
        Loss::Squared => y.iter().sum::<f64>() / n as f64,
    };

    let sorted: Vec<Vec<(u32, f64)>> = (0..x.cols())
        .map(|j| {
            let mut col: Vec<(u32, f64)> = x.column(j).enumerate().map(|(i, v)| (i as u32, v)).collect();
            col.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            col
        })
        .collect();

    let mut model = GbtModel::constant(loss, base_score, x.cols());
    let mut f = vec![base_score; n];
    let mut history = vec![mean_loss(loss, &f, y)];
    let mut rng = rng::rng_from(params.seed, &[rng::str_tag("gbt")]);
    let n_sample = ((params.subsample_ratio * n as f64).floor() as usize).clamp(1, n);
    let (mut g, mut h) = (vec![0.0; n], vec![0.0; n]);

    for _ in 0..params.n_trees {
        for i in 0..n {
            let (gi, hi) = match loss {
                Loss::Logistic => {
                    let p = sigmoid(f[i]);
                    (p - y[i], (p * (1.0 - p)).max(1e-16))
                }
                Loss::Squared => (f[i] - y[i], 1.0),
            };
            g[i] = gi;
            h[i] = hi;
        }
        let mut in_sample = vec![n_sample == n; n];
        if n_sample < n {
            for i in index::sample(&mut rng, n, n_sample) {
                in_sample[i] = true;
            }
        }
        let mut tree = grow(x, &sorted, &g, &h, &in_sample, params);
        let changed = set_leaf_values(&mut tree, x, y, &f, loss, params.learning_rate);
        if !changed {
            break;
        }
        for (i, fi) in f.iter_mut().enumerate() {
            *fi += tree.predict(x.row(i));
        }
        history.push(mean_loss(loss, &f, y));
        model.trees.push(tree);
    }
    Ok((model, history))
}

#[derive(Clone, Copy, Default)]
struct Sums {
    g: f64,
    h: f64,
    n: usize,
}

impl Sums {
    fn add(&mut self, g: f64, h: f64) {
        self.g += g;
        self.h += h;
        self.n += 1;
    }

    fn score(&self) -> f64 {
        self.g * self.g / (self.h + LAMBDA)
    }
}

#[derive(Clone, Copy)]
struct Scan {
    left: Sums,
    last: f64,
}

impl Default for Scan {
    fn default() -> Self {
        Self { left: Sums::default(), last: f64::NAN }
    }
}

#[derive(Clone, Copy)]
struct RowStat {
    slot: u32,
    g: f64,
    h: f64,
}

#[derive(Clone, Copy)]
struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

fn grow(x: &Matrix, sorted: &[Vec<(u32, f64)>], g: &[f64], h: &[f64], in_sample: &[bool], params: &GbtParams) -> Tree {
    let n = x.rows();
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    // Position of each sampled row's node in `active`, or usize::MAX.
    let mut slot: Vec<usize> = (0..n).map(|i| if in_sample[i] { 0 } else { usize::MAX }).collect();
    let mut active: Vec<usize> = vec![0];

    for _depth in 0..params.max_depth {
        let k = active.len();
        let mut total = vec![Sums::default(); k];
        for i in 0..n {
            if slot[i] != usize::MAX {
                total[slot[i]].add(g[i], h[i]);
            }
        }
        // Nodes too small to yield two leaves take no part in the search.
        let search: Vec<RowStat> = (0..n)
            .map(|i| {
                let s = slot[i];
                let s = if s != usize::MAX && total[s].n >= 2 * params.min_leaf { s as u32 } else { u32::MAX };
                RowStat { slot: s, g: g[i], h: h[i] }
            })
            .collect();
        let mut best: Vec<Option<Best>> = vec![None; k];
        let parent: Vec<f64> = total.iter().map(Sums::score).collect();
        let min_leaf = params.min_leaf;
        let mut scan = vec![Scan::default(); k];
        for (feature, order) in sorted.iter().enumerate() {
            scan.iter_mut().for_each(|c| *c = Scan::default());
            for &(r, v) in order {
                let row = search[r as usize];
                if row.slot == u32::MAX {
                    continue;
                }
                let s = row.slot as usize;
                let c = &mut scan[s];
                // `last` starts as NaN, so the first value never splits.
                if v > c.last && c.left.n >= min_leaf {
                    let t = total[s];
                    let rn = t.n - c.left.n;
                    if rn >= min_leaf {
                        let right = Sums { g: t.g - c.left.g, h: t.h - c.left.h, n: rn };
                        let gain = c.left.score() + right.score() - parent[s];
                        if gain > MIN_GAIN && best[s].is_none_or(|b| gain > b.gain) {
                            let lv = c.last;
                            let mut threshold = lv + (v - lv) / 2.0;
                            if threshold >= v {
                                threshold = lv;
                            }
                            best[s] = Some(Best { gain, feature, threshold });
                        }
                    }
                }
                c.left.add(row.g, row.h);
                c.last = v;
            }
        }

        let mut next_active = Vec::new();
        let mut remap: Vec<Option<(usize, usize)>> = vec![None; k];
        for (s, b) in best.iter().enumerate() {
            let Some(b) = b else { continue };
            let (l, r) = (nodes.len(), nodes.len() + 1);
            nodes.push(Node::Leaf { value: 0.0 });
            nodes.push(Node::Leaf { value: 0.0 });
            nodes[active[s]] = Node::Split { feature: b.feature, threshold: b.threshold, left: l, right: r };
            remap[s] = Some((next_active.len(), next_active.len() + 1));
            next_active.push(l);
            next_active.push(r);
        }
        if next_active.is_empty() {
            break;
        }
        for i in 0..n {
            let s = slot[i];
            if s == usize::MAX {
                continue;
            }
            slot[i] = match (remap[s], &nodes[active[s]]) {
                (Some((ls, rs)), Node::Split { feature, threshold, .. }) => {
                    if x.get(i, *feature) <= *threshold { ls } else { rs }
                }
                _ => usize::MAX,
            };
        }
        active = next_active;
    }
    Tree { nodes }
}

/// Sets each leaf to a shrunken Newton step computed on all rows routed to it,
/// halving the step while it would raise the leaf's loss. Returns whether any
/// leaf moved.
fn set_leaf_values(tree: &mut Tree, x: &Matrix, y: &[f64], f: &[f64], loss: Loss, lr: f64) -> bool {
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); tree.nodes.len()];
    for i in 0..x.rows() {
        members[tree.leaf_index(x.row(i))].push(i);
    }
    let mut changed = false;
    for (leaf, rows) in members.iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        let (mut gs, mut hs) = (0.0, 0.0);
        for &i in rows {
            match loss {
                Loss::Logistic => {
                    let p = sigmoid(f[i]);
                    gs += p - y[i];
                    hs += p * (1.0 - p);
                }
                Loss::Squared => {
                    gs += f[i] - y[i];
                    hs += 1.0;
                }
            }
        }
        let leaf_loss = |d: f64| rows.iter().map(|&i| point_loss(loss, f[i] + d, y[i])).sum::<f64>();
        let before = leaf_loss(0.0);
        let mut step = -lr * gs / (hs + LAMBDA);
        let mut halvings = 0;
        while step != 0.0 && leaf_loss(step) > before {
            step *= 0.5;
            halvings += 1;
            if halvings == MAX_HALVINGS {
                step = 0.0;
            }
        }
        if step != 0.0 {
            changed = true;
        }
        tree.nodes[leaf] = Node::Leaf { value: step };
    }
    changed
}
