//! Patient-grouped repeated cross-validation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detectors::{fit_detector, AlarmLog, DetectorSpec, LabeledRows};
use crate::error::{Error, Result};
use crate::events::EventLog;
use crate::evaluation::classical::Confusion;
use crate::evaluation::matching::{evaluate_alarms, MatchConfig};
use crate::evaluation::report::{EvalReport, RunRecord};
use crate::pipeline::PreparedEntity;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub folds: usize,
    pub repeats: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { folds: 10, repeats: 5 }
    }
}

impl CvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 3 || self.repeats == 0 {
            return Err(Error::Config("cross-validation needs at least 3 folds and 1 repeat".into()));
        }
        Ok(())
    }
}

/// Entity indices of one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub repeat: usize,
    pub fold: usize,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `n` entities into `folds` groups of near-equal size.
pub fn assign_folds(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if n < folds {
        return Err(Error::InsufficientData(format!("{n} entities cannot fill {folds} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::rng_from(seed, &[]));
    let mut fold = vec![0; n];
    for (pos, &e) in order.iter().enumerate() {
        fold[e] = pos % folds;
    }
    Ok(fold)
}

/// Rotation `k`: validation is fold `k`, test is fold `k + 1`, training is
/// everything else.
pub fn rotation(assignment: &[usize], folds: usize, repeat: usize, k: usize) -> Split {
    let test_fold = (k + 1) % folds;
    let pick = |pred: &dyn Fn(usize) -> bool| (0..assignment.len()).filter(|&i| pred(assignment[i])).collect();
    Split {
        repeat,
        fold: k,
        train: pick(&|f| f != k && f != test_fold),
        valid: pick(&|f| f == k),
        test: pick(&|f| f == test_fold),
    }
}

/// All `repeats * folds` splits.
pub fn plan(n: usize, cv: &CvConfig, seed: u64) -> Result<Vec<Split>> {
    cv.validate()?;
    let mut out = Vec::with_capacity(cv.folds * cv.repeats);
    for r in 0..cv.repeats {
        let assignment = assign_folds(n, cv.folds, rng::derive_seed(seed, &[rng::str_tag("folds"), r as u64]))?;
        out.extend((0..cv.folds).map(|k| rotation(&assignment, cv.folds, r, k)));
    }
    Ok(out)
}

fn gather(entities: &[PreparedEntity], idx: &[usize], train: bool) -> LabeledRows {
    let mut rows = LabeledRows::default();
    for &i in idx {
        let e = &entities[i];
        rows.extend(&e.labeled_rows(if train { &e.train_rows } else { &e.eval_rows }));
    }
    rows
}

/// Fits every detector in `specs` on each split and scores its alarms on the
/// split's test entities. Runs execute in parallel with seeds derived from
/// `seed`, the repeat, the fold and the detector.
pub fn cv_harness(
    entities: &[PreparedEntity],
    specs: &[DetectorSpec],
    cv: &CvConfig,
    matching: &MatchConfig,
    seed: u64,
) -> Result<EvalReport> {
    let splits = plan(entities.len(), cv, seed)?;
    let runs = splits
        .par_iter()
        .map(|split| run_split(entities, specs, split, matching, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_runs(runs.into_iter().flatten().collect(), specs.iter().map(|s| s.kind)))
}

fn run_split(
    entities: &[PreparedEntity],
    specs: &[DetectorSpec],
    split: &Split,
    matching: &MatchConfig,
    seed: u64,
) -> Result<Vec<RunRecord>> {
    let train = gather(entities, &split.train, true);
    let valid = gather(entities, &split.valid, false);
    let mut events = EventLog::new();
    let mut monitored = BTreeMap::new();
    for &i in &split.test {
        events.insert(entities[i].entity_id.clone(), entities[i].episodes.clone());
        monitored.insert(entities[i].entity_id.clone(), entities[i].monitored_hours());
    }
    let mut records = Vec::with_capacity(specs.len());
    for spec in specs {
        let run_seed = rng::derive_seed(seed, &[split.repeat as u64, split.fold as u64, rng::str_tag(spec.kind.name())]);
        let spec = DetectorSpec { seed: run_seed, ..spec.clone() };
        let det = fit_detector(&spec, &train, &valid)
            .map_err(|e| e.context(format!("repeat {} fold {} {}", split.repeat, split.fold, spec.kind)))?;
        let mut alarms = AlarmLog::new();
        let (mut whole, mut first, mut second) = (Confusion::default(), Confusion::default(), Confusion::default());
        for &i in &split.test {
            let out = entities[i].run(&det)?;
            alarms.insert(entities[i].entity_id.clone(), out.alarms);
            whole.merge(&out.main);
            first.merge(&out.first);
            second.merge(&out.second);
        }
        let layered = det.kind() == crate::detectors::DetectorKind::Ll;
        records.push(RunRecord {
            detector: spec.kind,
            repeat: split.repeat,
            fold: split.fold,
            test_entities: split.test.len(),
            alarms: evaluate_alarms(&alarms, &events, &monitored, matching),
            subsequence: whole.scores(),
            first_layer: layered.then(|| first.scores()),
            second_layer: layered.then(|| second.scores()),
            validation_ba: det.validation_balanced_accuracy(),
        });
    }
    Ok(records)
}
