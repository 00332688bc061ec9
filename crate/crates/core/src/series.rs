//! Per-entity minute series: ingestion, range filtering, derived signals and
//! sub-sequence windowing.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::LabelTriple;

/// Physiological signal carried by a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SignalKind {
    Hr,
    Sbp,
    Dbp,
    Map,
    Co,
    Pp,
}

impl SignalKind {
    /// Schema order used everywhere features are laid out.
    pub const ALL: [SignalKind; 6] = [Self::Hr, Self::Sbp, Self::Dbp, Self::Map, Self::Co, Self::Pp];
    /// Signals read from input files.
    pub const RAW: [SignalKind; 4] = [Self::Hr, Self::Sbp, Self::Dbp, Self::Map];

    pub fn is_derived(self) -> bool {
        matches!(self, Self::Co | Self::Pp)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Hr => "HR",
            Self::Sbp => "SBP",
            Self::Dbp => "DBP",
            Self::Map => "MAP",
            Self::Co => "CO",
            Self::Pp => "PP",
        }
    }
}

impl fmt::Display for SignalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SignalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SignalKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown signal `{s}`")))
    }
}

/// One value per minute; `None` marks a missing or filtered reading.
pub type Values = Vec<Option<f64>>;

/// One monitored entity's minute-sampled record. Index `i` of every signal is
/// minute `start_time + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EntitySeries {
    entity_id: String,
    start_time: i64,
    len: usize,
    signals: BTreeMap<SignalKind, Values>,
}

impl EntitySeries {
    /// Builds a series from raw (ingested) signals. Derived signals are
    /// rejected here; use [`derive_signals`].
    pub fn new(
        entity_id: impl Into<String>,
        start_time: i64,
        signals: impl IntoIterator<Item = (SignalKind, Values)>,
    ) -> Result<Self> {
        let entity_id = entity_id.into();
        let mut map = BTreeMap::new();
        let mut len = None;
        for (kind, values) in signals {
            if kind.is_derived() {
                return Err(Error::Config(format!("{kind} is derived and cannot be ingested")));
            }
            match len {
                None => len = Some(values.len()),
                Some(l) if l != values.len() => {
                    return Err(Error::Config(format!(
                        "entity {entity_id}: signal {kind} has {} values, expected {l}",
                        values.len()
                    )))
                }
                _ => {}
            }
            map.insert(kind, values);
        }
        let len = len.unwrap_or(0);
        if len == 0 {
            return Err(Error::Config(format!("entity {entity_id}: empty series")));
        }
        Ok(Self { entity_id, start_time, len, signals: map })
    }

    pub fn entity_id(&self) -> &str {
        &self.entity_id
    }

    pub fn start_time(&self) -> i64 {
        self.start_time
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn signal(&self, kind: SignalKind) -> Option<&[Option<f64>]> {
        self.signals.get(&kind).map(Vec::as_slice)
    }

    pub fn kinds(&self) -> impl Iterator<Item = SignalKind> + '_ {
        self.signals.keys().copied()
    }

    /// Absolute minute of index `i`.
    pub fn minute(&self, i: usize) -> i64 {
        self.start_time + i as i64
    }
}

/// Observation, warning and target window lengths plus strides, in minutes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub ow_minutes: usize,
    pub ww_minutes: usize,
    pub tw_minutes: usize,
    pub train_stride_minutes: usize,
    pub eval_stride_minutes: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { ow_minutes: 60, ww_minutes: 60, tw_minutes: 30, train_stride_minutes: 30, eval_stride_minutes: 1 }
    }
}

impl WindowConfig {
    pub fn span(&self) -> usize {
        self.ow_minutes + self.ww_minutes + self.tw_minutes
    }

    pub fn validate(&self) -> Result<()> {
        if self.ow_minutes == 0 || self.tw_minutes == 0 {
            return Err(Error::Config("observation and target windows must be positive".into()));
        }
        if self.train_stride_minutes == 0 || self.eval_stride_minutes == 0 {
            return Err(Error::Config("strides must be at least one minute".into()));
        }
        Ok(())
    }
}

/// Unit of learning and prediction: an observation window followed by a
/// warning gap and a target window.
#[derive(Debug, Clone, PartialEq)]
pub struct SubSequence {
    pub entity_id: String,
    /// Absolute minute at which the observation window starts.
    pub t_start: i64,
    /// Index range of the observation window in the parent series.
    pub ow: Range<usize>,
    /// Index range of the target window in the parent series.
    pub tw: Range<usize>,
    pub features: Option<Vec<f64>>,
    pub labels: Option<LabelTriple>,
}

impl SubSequence {
    /// Minute at which a prediction for this sub-sequence can be issued.
    pub fn prediction_minute(&self) -> i64 {
        self.t_start + self.ow.len() as i64
    }
}

/// Outcome of [`filter_outliers`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FilterSummary {
    /// Readings replaced by the missing marker.
    pub removed: usize,
    /// True when no raw reading survived.
    pub all_missing: bool,
}

pub const OUTLIER_LO: f64 = 10.0;
pub const OUTLIER_HI: f64 = 200.0;

/// Replaces raw readings outside the closed interval `[lo, hi]` by the missing
/// marker. Derived signals are left untouched.
pub fn filter_outliers(series: &EntitySeries, lo: f64, hi: f64) -> (EntitySeries, FilterSummary) {
    assert!(lo < hi, "filter bounds must satisfy lo < hi");
    let mut out = series.clone();
    let mut summary = FilterSummary::default();
    let mut present = 0usize;
    for (kind, values) in out.signals.iter_mut() {
        if kind.is_derived() {
            continue;
        }
        for v in values.iter_mut() {
            if let Some(x) = *v {
                if !(lo..=hi).contains(&x) {
                    *v = None;
                    summary.removed += 1;
                } else {
                    present += 1;
                }
            }
        }
    }
    summary.all_missing = present == 0;
    (out, summary)
}

/// Adds pulse pressure `PP = SBP - DBP` and cardiac output surrogate
/// `CO = HR * PP`. A missing operand makes the result missing.
pub fn derive_signals(series: &EntitySeries) -> Result<EntitySeries> {
    let need = |k: SignalKind| {
        series
            .signal(k)
            .ok_or_else(|| Error::Config(format!("entity {}: {k} required to derive CO/PP", series.entity_id)))
    };
    let hr = need(SignalKind::Hr)?;
    let sbp = need(SignalKind::Sbp)?;
    let dbp = need(SignalKind::Dbp)?;

    let pp: Values = sbp.iter().zip(dbp).map(|(s, d)| Some(s.as_ref()? - d.as_ref()?)).collect();
    let co: Values = hr.iter().zip(&pp).map(|(h, p)| Some(h.as_ref()? * p.as_ref()?)).collect();

    let mut out = series.clone();
    out.signals.insert(SignalKind::Pp, pp);
    out.signals.insert(SignalKind::Co, co);
    Ok(out)
}

/// Slices `series` into sub-sequences starting at offsets `0, stride, 2*stride, ...`.
/// Only sub-sequences whose full OW+WW+TW span fits are emitted.
pub fn make_subsequences(series: &EntitySeries, cfg: &WindowConfig, stride: usize) -> Result<Vec<SubSequence>> {
    if stride == 0 {
        return Err(Error::Config("stride must be at least one minute".into()));
    }
    let span = cfg.span();
    if series.len() < span {
        return Ok(Vec::new());
    }
    let tw_start = cfg.ow_minutes + cfg.ww_minutes;
    Ok((0..=series.len() - span)
        .step_by(stride)
        .map(|off| SubSequence {
            entity_id: series.entity_id.clone(),
            t_start: series.minute(off),
            ow: off..off + cfg.ow_minutes,
            tw: off + tw_start..off + tw_start + cfg.tw_minutes,
            features: None,
            labels: None,
        })
        .collect())
}

/// Filters outliers with the default bounds and derives CO/PP.
pub fn preprocess(series: &EntitySeries) -> Result<(EntitySeries, FilterSummary)> {
    let (filtered, summary) = filter_outliers(series, OUTLIER_LO, OUTLIER_HI);
    Ok((derive_signals(&filtered)?, summary))
}

const CSV_HEADER: [&str; 6] = ["entity_id", "minute", "hr", "sbp", "dbp", "map"];

/// Reads `entity_id,minute,hr,sbp,dbp,map` rows. Each entity's rows must be a
/// single contiguous block of consecutive minutes.
pub fn read_series_csv(path: &Path) -> Result<Vec<EntitySeries>> {
    let file = std::fs::File::open(path)?;
    read_series(file, path)
}

pub fn read_series<R: Read>(reader: R, path: &Path) -> Result<Vec<EntitySeries>> {
    let err = |row: usize, message: String| Error::Csv { path: path.to_path_buf(), row, message };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
    let got: Vec<String> = header.iter().map(|h| h.to_ascii_lowercase()).collect();
    if got != CSV_HEADER {
        return Err(err(1, format!("expected header `{}`, got `{}`", CSV_HEADER.join(","), got.join(","))));
    }

    struct Block {
        id: String,
        start: i64,
        cols: [Values; 4],
    }
    let mut done: Vec<String> = Vec::new();
    let mut out = Vec::new();
    let mut cur: Option<Block> = None;

    let finish = |b: Block, out: &mut Vec<EntitySeries>| -> Result<()> {
        let [hr, sbp, dbp, map] = b.cols;
        out.push(EntitySeries::new(
            b.id,
            b.start,
            [(SignalKind::Hr, hr), (SignalKind::Sbp, sbp), (SignalKind::Dbp, dbp), (SignalKind::Map, map)],
        )?);
        Ok(())
    };

    for rec in rdr.records() {
        let rec = rec.map_err(|e| err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 6 {
            return Err(err(row, format!("expected 6 fields, got {}", rec.len())));
        }
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(err(row, "empty entity_id".into()));
        }
        let minute: i64 = rec[1].parse().map_err(|_| err(row, format!("invalid minute `{}`", &rec[1])))?;
        let mut vals = [None; 4];
        for (j, v) in vals.iter_mut().enumerate() {
            let field = &rec[j + 2];
            if !field.is_empty() {
                let x: f64 = field.parse().map_err(|_| err(row, format!("invalid {} value `{field}`", CSV_HEADER[j + 2])))?;
                if !x.is_finite() {
                    return Err(err(row, format!("non-finite {} value", CSV_HEADER[j + 2])));
                }
                *v = Some(x);
            }
        }

        let same = cur.as_ref().is_some_and(|b| b.id == id);
        if !same {
            if done.contains(&id) {
                return Err(err(row, format!("rows of entity `{id}` are not contiguous")));
            }
            if let Some(b) = cur.take() {
                done.push(b.id.clone());
                finish(b, &mut out)?;
            }
            cur = Some(Block { id, start: minute, cols: Default::default() });
        }
        let b = cur.as_mut().expect("block initialised above");
        let expected = b.start + b.cols[0].len() as i64;
        if minute != expected {
            return Err(err(row, format!("entity `{}`: expected minute {expected}, got {minute}", b.id)));
        }
        for (col, v) in b.cols.iter_mut().zip(vals) {
            col.push(v);
        }
    }
    if let Some(b) = cur.take() {
        finish(b, &mut out)?;
    }
    Ok(out)
}

/// Writes the raw signals of `series` in the ingestion format.
pub fn write_series<W: Write>(writer: W, series: &[EntitySeries]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(io)?;
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for s in series {
        let cols: Vec<&[Option<f64>]> = SignalKind::RAW
            .iter()
            .map(|&k| s.signal(k).unwrap_or(&[]))
            .collect();
        for i in 0..s.len() {
            let mut rec = vec![s.entity_id().to_string(), s.minute(i).to_string()];
            rec.extend(cols.iter().map(|c| fmt(c.get(i).copied().flatten())));
            w.write_record(&rec).map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}
