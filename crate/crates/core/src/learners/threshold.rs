//! Decision-threshold tuning for balanced accuracy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    /// Scores `>= value` are positive.
    pub value: f64,
    pub balanced_accuracy: f64,
}

impl Threshold {
    pub fn decide(&self, score: f64) -> bool {
        score >= self.value
    }
}

pub fn balanced_accuracy(tp: usize, tn: usize, pos: usize, neg: usize) -> f64 {
    (tp as f64 / pos as f64 + tn as f64 / neg as f64) / 2.0
}

/// Picks the threshold maximizing `(recall + specificity) / 2` among `0`,
/// `1`, and the midpoints between consecutive distinct scores. Ties go to the
/// higher threshold.
pub fn tune_threshold(scores: &[f64], labels: &[bool]) -> Result<Threshold> {
    if scores.len() != labels.len() {
        return Err(Error::Config("scores and labels differ in length".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass("threshold tuning needs both classes".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Config("NaN score".into()));
    }
    let mut pairs: Vec<(f64, bool)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut candidates = vec![0.0];
    for w in pairs.windows(2) {
        if w[1].0 > w[0].0 {
            candidates.push(w[0].0 + (w[1].0 - w[0].0) / 2.0);
        }
    }
    candidates.push(1.0);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    // Sweep: `below` rows have score < candidate and are predicted negative.
    let (mut below, mut fn_, mut tn) = (0usize, 0usize, 0usize);
    let mut best = Threshold { value: f64::NAN, balanced_accuracy: f64::NEG_INFINITY };
    for &c in &candidates {
        while below < pairs.len() && pairs[below].0 < c {
            if pairs[below].1 {
                fn_ += 1;
            } else {
                tn += 1;
            }
            below += 1;
        }
        let ba = balanced_accuracy(pos - fn_, tn, pos, neg);
        if ba >= best.balanced_accuracy {
            best = Threshold { value: c, balanced_accuracy: ba };
        }
    }
    Ok(best)
}
