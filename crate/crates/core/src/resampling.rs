//! Class rebalancing of training datasets.
//!
//! Balancing strategies target a 1:1 class ratio. Neighbor searches use
//! Euclidean distance on features standardized with the dataset's own
//! column mean and standard deviation; ties go to the lowest row index.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

/// Neighborhood size for SMOTE and ADASYN.
pub const DEFAULT_K: usize = 5;

/// Where a row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RowOrigin {
    /// Row `i` of the dataset the training set was built from.
    Original(usize),
    /// Synthetic point generated from the given original row.
    Synthetic { seed_row: usize },
}

/// Labeled feature matrix with entity and time provenance per row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<bool>,
    pub groups: Vec<String>,
    pub t: Vec<i64>,
    pub origin: Vec<RowOrigin>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<bool>, groups: Vec<String>, t: Vec<i64>) -> Result<Self> {
        let n = x.rows();
        if y.len() != n || groups.len() != n || t.len() != n {
            return Err(Error::Config(format!(
                "dataset field lengths disagree: x={n}, y={}, groups={}, t={}",
                y.len(),
                groups.len(),
                t.len()
            )));
        }
        Ok(Self { x, y, groups, t, origin: (0..n).map(RowOrigin::Original).collect() })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.y.iter().filter(|&&v| v).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    /// Rows at `idx`, in order, keeping provenance.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            groups: idx.iter().map(|&i| self.groups[i].clone()).collect(),
            t: idx.iter().map(|&i| self.t[i]).collect(),
            origin: idx.iter().map(|&i| self.origin[i]).collect(),
        }
    }

    /// Same rows with labels replaced.
    pub fn with_labels(&self, y: Vec<bool>) -> Result<Self> {
        if y.len() != self.len() {
            return Err(Error::Config("label vector length differs from dataset".into()));
        }
        Ok(Self { y, ..self.clone() })
    }

    fn push(&mut self, row: &[f64], y: bool, from: usize, origin: RowOrigin) {
        self.x.push_row(row);
        self.y.push(y);
        self.groups.push(self.groups[from].clone());
        self.t.push(self.t[from]);
        self.origin.push(origin);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Strategy {
    /// No resampling.
    Nr,
    /// Random undersampling of the majority class.
    Ru,
    /// Random oversampling (duplication) of the minority class.
    Ro,
    Smote,
    Adasyn,
    /// Removal of both members of every Tomek link.
    Tomek,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [Self::Nr, Self::Ru, Self::Ro, Self::Smote, Self::Adasyn, Self::Tomek];

    pub fn name(self) -> &'static str {
        match self {
            Self::Nr => "NR",
            Self::Ru => "RU",
            Self::Ro => "RO",
            Self::Smote => "SMOTE",
            Self::Adasyn => "ADASYN",
            Self::Tomek => "TOMEK",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown resampling strategy `{s}`")))
    }
}

/// Rebalances `ds`. Output rows keep their provenance; synthetic rows inherit
/// the group and time of the row they were generated from.
pub fn resample(ds: &Dataset, strategy: Strategy, seed: u64) -> Result<Dataset> {
    let mut rng = rng::rng_from(seed, &[rng::str_tag(strategy.name())]);
    match strategy {
        Strategy::Nr => Ok(ds.clone()),
        Strategy::Tomek => Ok(tomek(ds)),
        _ => {
            let (minority, majority) = split_classes(ds, strategy)?;
            if minority.len() == majority.len() {
                return Ok(ds.clone());
            }
            match strategy {
                Strategy::Ru => {
                    let keep = index::sample(&mut rng, majority.len(), minority.len());
                    let mut rows: Vec<usize> = minority.clone();
                    rows.extend(keep.iter().map(|k| majority[k]));
                    rows.sort_unstable();
                    Ok(ds.subset(&rows))
                }
                Strategy::Ro => {
                    let mut out = ds.clone();
                    for _ in 0..majority.len() - minority.len() {
                        let src = minority[rng.random_range(0..minority.len())];
                        out.push(ds.x.row(src), ds.y[src], src, ds.origin[src]);
                    }
                    Ok(out)
                }
                Strategy::Smote => smote(ds, &minority, majority.len() - minority.len(), DEFAULT_K, &mut rng),
                Strategy::Adasyn => adasyn(ds, &minority, majority.len() - minority.len(), DEFAULT_K, &mut rng),
                Strategy::Nr | Strategy::Tomek => unreachable!(),
            }
        }
    }
}

fn split_classes(ds: &Dataset, strategy: Strategy) -> Result<(Vec<usize>, Vec<usize>)> {
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..ds.len()).partition(|&i| ds.y[i]);
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::SingleClass(format!("{strategy} needs both classes")));
    }
    Ok(if pos.len() <= neg.len() { (pos, neg) } else { (neg, pos) })
}

/// Column means and standard deviations (zero deviation maps to 1).
fn standardizer(x: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = x.rows().max(1) as f64;
    let mean: Vec<f64> = (0..x.cols()).map(|j| x.column(j).sum::<f64>() / n).collect();
    let sd = (0..x.cols())
        .map(|j| {
            let var = x.column(j).map(|v| (v - mean[j]).powi(2)).sum::<f64>() / n;
            if var > 0.0 { var.sqrt() } else { 1.0 }
        })
        .collect();
    (mean, sd)
}

fn standardized(x: &Matrix) -> Matrix {
    let (mean, sd) = standardizer(x);
    let mut z = x.clone();
    for i in 0..z.rows() {
        for (j, v) in z.row_mut(i).iter_mut().enumerate() {
            *v = (*v - mean[j]) / sd[j];
        }
    }
    z
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// The `k` nearest candidates of `query` (excluding itself), ordered by
/// distance then index.
fn knn(z: &Matrix, query: usize, candidates: &[usize], k: usize) -> Vec<usize> {
    let q = z.row(query);
    let mut d: Vec<(f64, usize)> =
        candidates.iter().filter(|&&c| c != query).map(|&c| (sq_dist(q, z.row(c)), c)).collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.truncate(k);
    d.into_iter().map(|(_, c)| c).collect()
}

fn interpolate(a: &[f64], b: &[f64], u: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + u * (y - x)).collect()
}

fn smote(ds: &Dataset, minority: &[usize], n_new: usize, k: usize, rng: &mut rng::Rng) -> Result<Dataset> {
    if minority.len() < 2 {
        return Err(Error::InsufficientData("SMOTE needs at least two minority rows".into()));
    }
    let k = k.min(minority.len() - 1);
    let z = standardized(&ds.x);
    let neighbors: Vec<Vec<usize>> = minority.par_iter().map(|&i| knn(&z, i, minority, k)).collect();
    let mut out = ds.clone();
    for _ in 0..n_new {
        let s = rng.random_range(0..minority.len());
        let nb = neighbors[s][rng.random_range(0..k)];
        let u: f64 = rng.random();
        let src = minority[s];
        let row = interpolate(ds.x.row(src), ds.x.row(nb), u);
        out.push(&row, ds.y[src], src, RowOrigin::Synthetic { seed_row: src });
    }
    Ok(out)
}

/// Integer budgets proportional to `weights` summing exactly to `total`
/// (largest remainder, ties to the lower index).
fn apportion(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let share: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut out: Vec<usize> = share.iter().map(|s| s.floor() as usize).collect();
    let assigned: usize = out.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (share[b] - share[b].floor()).total_cmp(&(share[a] - share[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        out[i] += 1;
    }
    out
}

fn adasyn(ds: &Dataset, minority: &[usize], n_new: usize, k: usize, rng: &mut rng::Rng) -> Result<Dataset> {
    if minority.len() < 2 {
        return Err(Error::InsufficientData("ADASYN needs at least two minority rows".into()));
    }
    let z = standardized(&ds.x);
    let all: Vec<usize> = (0..ds.len()).collect();
    let k_all = k.min(ds.len() - 1);
    let k_min = k.min(minority.len() - 1);
    let minority_label = ds.y[minority[0]];
    let hardness: Vec<f64> = minority
        .par_iter()
        .map(|&i| {
            let nb = knn(&z, i, &all, k_all);
            nb.iter().filter(|&&j| ds.y[j] != minority_label).count() as f64 / k_all as f64
        })
        .collect();
    // No minority point has a majority neighbor: fall back to uniform budgets.
    let weights = if hardness.iter().sum::<f64>() > 0.0 { hardness } else { vec![1.0; minority.len()] };
    let budget = apportion(&weights, n_new);
    let neighbors: Vec<Vec<usize>> = minority.par_iter().map(|&i| knn(&z, i, minority, k_min)).collect();

    let mut out = ds.clone();
    for (s, &g) in budget.iter().enumerate() {
        let src = minority[s];
        for _ in 0..g {
            let nb = neighbors[s][rng.random_range(0..k_min)];
            let u: f64 = rng.random();
            let row = interpolate(ds.x.row(src), ds.x.row(nb), u);
            out.push(&row, ds.y[src], src, RowOrigin::Synthetic { seed_row: src });
        }
    }
    Ok(out)
}

/// Indices of all cross-class mutual nearest-neighbor pairs.
pub fn tomek_links(ds: &Dataset) -> Vec<(usize, usize)> {
    if ds.len() < 2 {
        return Vec::new();
    }
    let z = standardized(&ds.x);
    let all: Vec<usize> = (0..ds.len()).collect();
    let nn: Vec<usize> = all.par_iter().map(|&i| knn(&z, i, &all, 1)[0]).collect();
    (0..ds.len()).filter(|&i| nn[i] > i && nn[nn[i]] == i && ds.y[i] != ds.y[nn[i]]).map(|i| (i, nn[i])).collect()
}

fn tomek(ds: &Dataset) -> Dataset {
    let mut drop = vec![false; ds.len()];
    for (a, b) in tomek_links(ds) {
        drop[a] = true;
        drop[b] = true;
    }
    let keep: Vec<usize> = (0..ds.len()).filter(|&i| !drop[i]).collect();
    ds.subset(&keep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(neg: usize, pos: usize) -> Dataset {
        let rows: Vec<[f64; 2]> = (0..neg + pos)
            .map(|i| if i < neg { [i as f64 * 0.1, (i % 7) as f64] } else { [5.0 + i as f64 * 0.05, (i % 3) as f64] })
            .collect();
        let y = (0..neg + pos).map(|i| i >= neg).collect();
        let groups = (0..neg + pos).map(|i| format!("g{}", i % 4)).collect();
        let t = (0..neg + pos).map(|i| i as i64).collect();
        Dataset::new(Matrix::from_rows(2, rows), y, groups, t).unwrap()
    }

    #[test]
    fn undersample_and_oversample_counts() {
        let ds = toy(90, 10);
        let ru = resample(&ds, Strategy::Ru, 1).unwrap();
        assert_eq!((ru.negatives(), ru.positives()), (10, 10));
        let ro = resample(&ds, Strategy::Ro, 1).unwrap();
        assert_eq!((ro.negatives(), ro.positives()), (90, 90));
        for (i, o) in ro.origin.iter().enumerate().skip(100) {
            let RowOrigin::Original(src) = *o else { panic!("duplicate marked synthetic") };
            assert_eq!(ro.x.row(i), ds.x.row(src));
        }
        let sm = resample(&ds, Strategy::Smote, 1).unwrap();
        assert_eq!((sm.negatives(), sm.positives()), (90, 90));
        let ad = resample(&ds, Strategy::Adasyn, 1).unwrap();
        assert_eq!((ad.negatives(), ad.positives()), (90, 90));
    }

    #[test]
    fn nr_is_identity() {
        let ds = toy(5, 0);
        assert_eq!(resample(&ds, Strategy::Nr, 3).unwrap(), ds);
    }

    #[test]
    fn single_class_rejected() {
        let ds = toy(5, 0);
        for s in [Strategy::Ru, Strategy::Ro, Strategy::Smote, Strategy::Adasyn] {
            assert!(matches!(resample(&ds, s, 0), Err(Error::SingleClass(_))), "{s}");
        }
    }

    #[test]
    fn smote_single_minority_rejected() {
        assert!(matches!(resample(&toy(5, 1), Strategy::Smote, 0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn smote_two_points_stay_on_segment() {
        let ds = toy(20, 2);
        let a = ds.x.row(20).to_vec();
        let b = ds.x.row(21).to_vec();
        let out = resample(&ds, Strategy::Smote, 9).unwrap();
        for i in 22..out.len() {
            let p = out.x.row(i);
            let u = (p[0] - a[0]) / (b[0] - a[0]);
            assert!((0.0..=1.0).contains(&u));
            assert!((p[1] - (a[1] + u * (b[1] - a[1]))).abs() < 1e-12);
            assert!(matches!(out.origin[i], RowOrigin::Synthetic { .. }));
        }
    }

    #[test]
    fn tomek_removes_mutual_cross_pairs() {
        let x = Matrix::from_rows(1, [[0.0], [0.1], [5.0], [5.05], [9.0]]);
        let y = vec![false, false, false, true, true];
        let ds = Dataset::new(x, y, vec!["g".into(); 5], vec![0; 5]).unwrap();
        assert_eq!(tomek_links(&ds), vec![(2, 3)]);
        let out = resample(&ds, Strategy::Tomek, 0).unwrap();
        assert_eq!(out.origin, vec![RowOrigin::Original(0), RowOrigin::Original(1), RowOrigin::Original(4)]);
    }

    #[test]
    fn apportion_is_exact() {
        assert_eq!(apportion(&[1.0, 1.0, 1.0], 10), vec![4, 3, 3]);
        assert_eq!(apportion(&[0.0, 2.0], 5), vec![0, 5]);
    }

    #[test]
    fn deterministic() {
        let ds = toy(50, 8);
        for s in Strategy::ALL {
            assert_eq!(resample(&ds, s, 42).unwrap(), resample(&ds, s, 42).unwrap());
        }
    }
}
