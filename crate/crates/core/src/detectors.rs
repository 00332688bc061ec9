//! The five compared alarm producers behind one interface.
//!
//! * `AH`: instantaneous threshold rule on the current target reading.
//! * `CL`: one classifier for the main event.
//! * `LL`: layered classifiers; the first separates normal activity from the
//!   pre-conditional event, the second separates pre-conditional from main
//!   events and is trained only on pre-conditional positives. An alarm needs
//!   both hard decisions.
//! * `RG`: direct multi-step regression of the target window, alarming when
//!   the forecast satisfies the main event rule.
//! * `IF`: isolation-forest anomaly score with a tuned cut.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{window_is_event, EventSpec, LabelTriple, LayeredEventSpec};
use crate::features::Imputer;
use crate::learners::{gbt_fit, isoforest_fit, tune_threshold, GbtModel, GbtParams, IsoForestModel, IsoForestParams, Loss, Threshold};
use crate::matrix::Matrix;
use crate::resampling::{resample, Dataset, Strategy};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DetectorKind {
    Ah,
    Cl,
    Ll,
    Rg,
    If,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 5] = [Self::Ll, Self::Cl, Self::If, Self::Rg, Self::Ah];

    pub fn name(self) -> &'static str {
        match self {
            Self::Ah => "AH",
            Self::Cl => "CL",
            Self::Ll => "LL",
            Self::Rg => "RG",
            Self::If => "IF",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown detector `{s}`")))
    }
}

/// Labeled feature rows used to fit or tune a detector. Features may hold
/// `NaN` for descriptors that could not be computed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledRows {
    pub x: Matrix,
    pub labels: Vec<LabelTriple>,
    pub groups: Vec<String>,
    pub t: Vec<i64>,
    /// Target-signal readings of each row's target window.
    pub targets: Vec<Vec<Option<f64>>>,
}

impl LabeledRows {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Appends the rows of `other`.
    pub fn extend(&mut self, other: &LabeledRows) {
        for r in other.x.iter_rows() {
            self.x.push_row(r);
        }
        self.labels.extend_from_slice(&other.labels);
        self.groups.extend_from_slice(&other.groups);
        self.t.extend_from_slice(&other.t);
        self.targets.extend_from_slice(&other.targets);
    }

    fn dataset(&self, x: Matrix, y: Vec<bool>) -> Result<Dataset> {
        Dataset::new(x, y, self.groups.clone(), self.t.clone())
    }
}

/// What to fit.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorSpec {
    pub kind: DetectorKind,
    pub events: LayeredEventSpec,
    pub resampling: Strategy,
    pub gbt: GbtParams,
    pub iforest: IsoForestParams,
    pub seed: u64,
}

/// A fitted classifier with its tuned cut.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub model: GbtModel,
    pub threshold: Threshold,
}

impl Layer {
    pub fn decide(&self, row: &[f64]) -> Result<bool> {
        Ok(self.threshold.decide(self.model.predict(row)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "UPPERCASE")]
pub enum Detector {
    Ah { event: EventSpec },
    Cl { imputer: Imputer, layer: Layer },
    Ll { imputer: Imputer, first: Layer, second: Layer },
    Rg { imputer: Imputer, models: Vec<GbtModel>, event: EventSpec },
    If { imputer: Imputer, model: IsoForestModel, threshold: Threshold },
}

/// Inputs available at prediction time for one sub-sequence.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    /// Raw feature vector of the observation window.
    pub features: &'a [f64],
    /// Target-signal reading in the last minute of the observation window.
    pub current: Option<f64>,
}

/// Layer-wise hard decisions of a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub alarm: bool,
    /// First and second layer outputs, for layered detectors.
    pub layers: Option<(bool, bool)>,
}

/// `hard(f_s) * hard(f_f)`.
pub fn layered_combine(first: bool, second: bool) -> bool {
    u8::from(first) * u8::from(second) == 1
}

/// Instantaneous rule: alarm iff the current reading crosses the event level.
pub fn adhoc_predict(current: Option<f64>, event: &EventSpec) -> bool {
    current.is_some_and(|v| event.comparator.holds(v, event.level))
}

impl Detector {
    pub fn kind(&self) -> DetectorKind {
        match self {
            Self::Ah { .. } => DetectorKind::Ah,
            Self::Cl { .. } => DetectorKind::Cl,
            Self::Ll { .. } => DetectorKind::Ll,
            Self::Rg { .. } => DetectorKind::Rg,
            Self::If { .. } => DetectorKind::If,
        }
    }

    pub fn adhoc(event: EventSpec) -> Self {
        Self::Ah { event }
    }

    fn imputed(imputer: &Imputer, row: &[f64]) -> Result<Vec<f64>> {
        let mut r = row.to_vec();
        imputer.transform_row(&mut r)?;
        Ok(r)
    }

    pub fn decide(&self, obs: Observation<'_>) -> Result<Decision> {
        let plain = |alarm| Decision { alarm, layers: None };
        Ok(match self {
            Self::Ah { event } => plain(adhoc_predict(obs.current, event)),
            Self::Cl { imputer, layer } => plain(layer.decide(&Self::imputed(imputer, obs.features)?)?),
            Self::Ll { imputer, first, second } => {
                let row = Self::imputed(imputer, obs.features)?;
                let (s, f) = (first.decide(&row)?, second.decide(&row)?);
                Decision { alarm: layered_combine(s, f), layers: Some((s, f)) }
            }
            Self::Rg { imputer, models, event } => {
                let row = Self::imputed(imputer, obs.features)?;
                plain(regression_alarm(models, &row, event)?)
            }
            Self::If { imputer, model, threshold } => {
                plain(threshold.decide(model.score(&Self::imputed(imputer, obs.features)?)?))
            }
        })
    }

    /// Balanced accuracy at each tuned threshold, first layer first.
    pub fn validation_balanced_accuracy(&self) -> Vec<f64> {
        match self {
            Self::Ah { .. } | Self::Rg { .. } => vec![],
            Self::Cl { layer, .. } => vec![layer.threshold.balanced_accuracy],
            Self::Ll { first, second, .. } => vec![first.threshold.balanced_accuracy, second.threshold.balanced_accuracy],
            Self::If { threshold, .. } => vec![threshold.balanced_accuracy],
        }
    }

    pub fn predict(&self, obs: Observation<'_>) -> Result<bool> {
        self.decide(obs).map(|d| d.alarm)
    }

    /// Versioned JSON document. Floats are written in shortest round-trip form.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile { format: MODEL_FORMAT.into(), version: MODEL_VERSION, detector: self.clone() })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(text)?;
        if f.format != MODEL_FORMAT || f.version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model file {} v{}", f.format, f.version)));
        }
        Ok(f.detector)
    }
}

const MODEL_FORMAT: &str = "precursor-detector";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    detector: Detector,
}

/// Forecasts every target-window minute and applies the main event rule.
pub fn regression_alarm(models: &[GbtModel], row: &[f64], event: &EventSpec) -> Result<bool> {
    if models.len() != event.window_minutes {
        return Err(Error::NotFitted(format!("{} regressors for a {}-minute target window", models.len(), event.window_minutes)));
    }
    let forecast = models.iter().map(|m| m.predict(row).map(Some)).collect::<Result<Vec<_>>>()?;
    window_is_event(&forecast, event)
}

/// Fits a classifier layer on `(x, y)` after resampling, tuning its cut on
/// `(vx, vy)`; falls back to the unresampled training rows when the
/// validation rows hold a single class.
#[allow(clippy::too_many_arguments)]
fn fit_layer(
    rows: &LabeledRows,
    x: &Matrix,
    y: Vec<bool>,
    vx: &Matrix,
    vy: &[bool],
    strategy: Strategy,
    params: &GbtParams,
    seed: u64,
) -> Result<Layer> {
    let ds = rows.dataset(x.clone(), y)?;
    let balanced = resample(&ds, strategy, seed)?;
    let target: Vec<f64> = balanced.y.iter().map(|&v| f64::from(u8::from(v))).collect();
    let model = gbt_fit(&balanced.x, &target, &GbtParams { seed, ..*params }, Loss::Logistic)?;
    let threshold = tune_on(&|r| model.predict(r), vx, vy).or_else(|_| tune_on(&|r| model.predict(r), &ds.x, &ds.y))?;
    Ok(Layer { model, threshold })
}

fn tune_on(score: &(dyn Fn(&[f64]) -> Result<f64> + Sync), x: &Matrix, y: &[bool]) -> Result<Threshold> {
    let s = x.iter_rows().map(score).collect::<Result<Vec<_>>>()?;
    tune_threshold(&s, y)
}

fn impute_pair(train: &LabeledRows, valid: &LabeledRows) -> Result<(Imputer, Matrix, Matrix)> {
    let imputer = Imputer::fit(&train.x);
    let x = imputer.transform(&train.x)?;
    let vx = if valid.is_empty() { Matrix::zeros(0, x.cols()) } else { imputer.transform(&valid.x)? };
    Ok((imputer, x, vx))
}

/// Fits the detector described by `spec` on `train`, tuning thresholds on
/// `valid`.
pub fn fit_detector(spec: &DetectorSpec, train: &LabeledRows, valid: &LabeledRows) -> Result<Detector> {
    let main = *spec.events.main();
    if spec.kind == DetectorKind::Ah {
        return Ok(Detector::adhoc(main));
    }
    if train.is_empty() {
        return Err(Error::InsufficientData(format!("{}: empty training set", spec.kind)));
    }
    let (imputer, x, vx) = impute_pair(train, valid)?;
    let y: Vec<bool> = train.labels.iter().map(|l| l.y).collect();
    let vy: Vec<bool> = valid.labels.iter().map(|l| l.y).collect();
    let seed = |tag: &str| rng::derive_seed(spec.seed, &[rng::str_tag(tag)]);

    match spec.kind {
        DetectorKind::Ah => unreachable!(),
        DetectorKind::Cl => {
            let layer = fit_layer(train, &x, y, &vx, &vy, spec.resampling, &spec.gbt, seed("CL"))?;
            Ok(Detector::Cl { imputer, layer })
        }
        DetectorKind::Ll => layered_fit(spec, train, imputer, &x, &vx, valid),
        DetectorKind::Rg => {
            let w = main.window_minutes;
            let models = (0..w)
                .into_par_iter()
                .map(|j| {
                    let rows: Vec<usize> =
                        (0..train.len()).filter(|&i| train.targets[i].get(j).copied().flatten().is_some()).collect();
                    if rows.len() < 2 {
                        return Err(Error::InsufficientData(format!("RG: too few targets for minute {j}")));
                    }
                    let target: Vec<f64> = rows.iter().map(|&i| train.targets[i][j].expect("filtered")).collect();
                    let params = GbtParams { seed: rng::derive_seed(seed("RG"), &[j as u64]), ..spec.gbt };
                    gbt_fit(&x.select_rows(&rows), &target, &params, Loss::Squared)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Detector::Rg { imputer, models, event: main })
        }
        DetectorKind::If => {
            let model = isoforest_fit(&x, &IsoForestParams { seed: seed("IF"), ..spec.iforest })?;
            let threshold = tune_on(&|r| model.score(r), &vx, &vy).or_else(|_| tune_on(&|r| model.score(r), &x, &y))?;
            Ok(Detector::If { imputer, model, threshold })
        }
    }
}

/// Two-layer fit. The first layer sees every row with the pre-conditional
/// label; the second only rows where the pre-conditional event holds, with
/// the main label. Each layer is resampled after the split, and both fits run
/// concurrently.
fn layered_fit(
    spec: &DetectorSpec,
    train: &LabeledRows,
    imputer: Imputer,
    x: &Matrix,
    vx: &Matrix,
    valid: &LabeledRows,
) -> Result<Detector> {
    let seed = |tag: &str| rng::derive_seed(spec.seed, &[rng::str_tag(tag)]);
    let ys: Vec<bool> = train.labels.iter().map(|l| l.y_s).collect();
    let vys: Vec<bool> = valid.labels.iter().map(|l| l.y_s).collect();

    let second_rows: Vec<usize> = (0..train.len()).filter(|&i| train.labels[i].y_s).collect();
    if second_rows.is_empty() {
        return Err(Error::InsufficientData(
            "LL: no pre-conditional positives, second layer has no training rows".into(),
        ));
    }
    let second_train = subset_rows(train, &second_rows);
    let yf: Vec<bool> = second_rows.iter().map(|&i| train.labels[i].y_f.expect("y_s implies y_f")).collect();
    if yf.iter().all(|&v| v) || yf.iter().all(|&v| !v) {
        return Err(Error::SingleClass(format!(
            "LL: second layer has {} rows, all with y_f = {}",
            yf.len(),
            u8::from(yf[0])
        )));
    }
    let valid_second: Vec<usize> = (0..valid.len()).filter(|&i| valid.labels[i].y_s).collect();
    let vyf: Vec<bool> = valid_second.iter().map(|&i| valid.labels[i].y_f.expect("y_s implies y_f")).collect();
    let vx_second = vx.select_rows(&valid_second);
    let x_second = x.select_rows(&second_rows);

    let (first, second) = rayon::join(
        || fit_layer(train, x, ys, vx, &vys, spec.resampling, &spec.gbt, seed("LL-S")),
        || fit_layer(&second_train, &x_second, yf, &vx_second, &vyf, spec.resampling, &spec.gbt, seed("LL-F")),
    );
    Ok(Detector::Ll { imputer, first: first?, second: second? })
}

fn subset_rows(rows: &LabeledRows, idx: &[usize]) -> LabeledRows {
    LabeledRows {
        x: rows.x.select_rows(idx),
        labels: idx.iter().map(|&i| rows.labels[i]).collect(),
        groups: idx.iter().map(|&i| rows.groups[i].clone()).collect(),
        t: idx.iter().map(|&i| rows.t[i]).collect(),
        targets: idx.iter().map(|&i| rows.targets[i].clone()).collect(),
    }
}

/// Alarm minutes per entity, sorted and unique.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlarmLog {
    alarms: BTreeMap<String, Vec<i64>>,
}

impl AlarmLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, entity: impl Into<String>, mut minutes: Vec<i64>) {
        minutes.sort_unstable();
        minutes.dedup();
        self.alarms.insert(entity.into(), minutes);
    }

    pub fn get(&self, entity: &str) -> &[i64] {
        self.alarms.get(entity).map_or(&[], Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[i64])> {
        self.alarms.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn total(&self) -> usize {
        self.alarms.values().map(Vec::len).sum()
    }

    /// CSV `entity_id,alarm_minute,detector`.
    pub fn write_csv<W: Write>(&self, w: W, detector: DetectorKind) -> Result<()> {
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["entity_id", "alarm_minute", "detector"]).map_err(io)?;
        for (id, minutes) in self.iter() {
            for m in minutes {
                w.write_record([id, &m.to_string(), detector.name()]).map_err(io)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
