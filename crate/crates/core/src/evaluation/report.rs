//! Per-run records, aggregation and export.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::detectors::DetectorKind;
use crate::error::{Error, Result};
use crate::evaluation::classical::ClassScores;
use crate::evaluation::matching::AlarmMetrics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub detector: DetectorKind,
    pub repeat: usize,
    pub fold: usize,
    pub test_entities: usize,
    pub alarms: AlarmMetrics,
    /// Final decision against the main label on labeled test sub-sequences.
    pub subsequence: ClassScores,
    /// Layered detectors only: first layer against `y_s`.
    pub first_layer: Option<ClassScores>,
    /// Layered detectors only: second layer against `y_f` where `y_s` holds.
    pub second_layer: Option<ClassScores>,
    /// Balanced accuracy at each tuned threshold.
    pub validation_ba: Vec<f64>,
}

/// Mean and sample standard deviation over the defined values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub n: usize,
}

impl MeanSd {
    pub fn of(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        let v: Vec<f64> = values.into_iter().flatten().collect();
        let n = v.len();
        if n == 0 {
            return Self { mean: None, sd: None, n };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
        Self { mean: Some(mean), sd: Some(sd), n }
    }

    pub fn render(&self, digits: usize) -> String {
        match (self.mean, self.sd) {
            (Some(m), Some(s)) => format!("{m:.digits$}±{s:.digits$}"),
            _ => "NA".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub detector: DetectorKind,
    pub runs: usize,
    pub er: MeanSd,
    pub rp: MeanSd,
    pub at_minutes: MeanSd,
    pub fa_per_hour: MeanSd,
    pub fa_disc_per_hour: MeanSd,
    pub false_alarms_per_fold: MeanSd,
    pub dfp: MeanSd,
    pub recall: MeanSd,
    pub precision: MeanSd,
    pub f1: MeanSd,
    pub specificity: MeanSd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub runs: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
}

const RUN_COLUMNS: [&str; 28] = [
    "detector",
    "repeat",
    "fold",
    "test_entities",
    "events",
    "captured",
    "true_alarms",
    "false_alarms",
    "obsolete_alarms",
    "dfp",
    "monitored_hours",
    "er",
    "rp",
    "at_minutes",
    "fa_per_hour",
    "fa_disc_per_hour",
    "recall",
    "precision",
    "f1",
    "specificity",
    "s_recall",
    "s_precision",
    "s_f1",
    "s_specificity",
    "f_recall",
    "f_precision",
    "f_f1",
    "f_specificity",
];

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| x.to_string())
}

fn score_cells(s: Option<&ClassScores>) -> [String; 4] {
    let s = s.copied().unwrap_or_default();
    [cell(s.recall), cell(s.precision), cell(s.f1), cell(s.specificity)]
}

impl EvalReport {
    /// Sorts runs by detector order, repeat and fold, and aggregates them.
    pub fn from_runs(mut runs: Vec<RunRecord>, order: impl IntoIterator<Item = DetectorKind>) -> Self {
        let order: Vec<DetectorKind> = order.into_iter().collect();
        let rank = |k: DetectorKind| order.iter().position(|&o| o == k).unwrap_or(usize::MAX);
        runs.sort_by_key(|r| (rank(r.detector), r.repeat, r.fold));
        let summary = order
            .iter()
            .map(|&k| {
                let rs: Vec<&RunRecord> = runs.iter().filter(|r| r.detector == k).collect();
                let agg = |f: &dyn Fn(&RunRecord) -> Option<f64>| MeanSd::of(rs.iter().map(|r| f(r)));
                SummaryRow {
                    detector: k,
                    runs: rs.len(),
                    er: agg(&|r| r.alarms.er),
                    rp: agg(&|r| r.alarms.rp),
                    at_minutes: agg(&|r| r.alarms.at_minutes),
                    fa_per_hour: agg(&|r| r.alarms.fa_per_hour),
                    fa_disc_per_hour: agg(&|r| r.alarms.fa_disc_per_hour),
                    false_alarms_per_fold: agg(&|r| Some(r.alarms.false_alarms as f64)),
                    dfp: agg(&|r| Some(r.alarms.dfp as f64)),
                    recall: agg(&|r| r.subsequence.recall),
                    precision: agg(&|r| r.subsequence.precision),
                    f1: agg(&|r| r.subsequence.f1),
                    specificity: agg(&|r| r.subsequence.specificity),
                }
            })
            .collect();
        Self { runs, summary }
    }

    pub fn row(&self, kind: DetectorKind) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.detector == kind)
    }

    /// One CSV row per run; undefined values are written as `NA`.
    pub fn write_runs_csv<W: Write>(&self, w: W) -> Result<()> {
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        let mut w = csv::Writer::from_writer(w);
        w.write_record(RUN_COLUMNS).map_err(io)?;
        for r in &self.runs {
            let a = &r.alarms;
            let mut rec = vec![
                r.detector.name().to_string(),
                r.repeat.to_string(),
                r.fold.to_string(),
                r.test_entities.to_string(),
                a.events.to_string(),
                a.captured.to_string(),
                a.true_alarms.to_string(),
                a.false_alarms.to_string(),
                a.obsolete_alarms.to_string(),
                a.dfp.to_string(),
                a.monitored_hours.to_string(),
                cell(a.er),
                cell(a.rp),
                cell(a.at_minutes),
                cell(a.fa_per_hour),
                cell(a.fa_disc_per_hour),
            ];
            rec.extend(score_cells(Some(&r.subsequence)));
            rec.extend(score_cells(r.first_layer.as_ref()));
            rec.extend(score_cells(r.second_layer.as_ref()));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Fixed-width table: detector, ER, RP, Avg. AT, Avg. FA.
    pub fn render_table(&self) -> String {
        let header = ["Detector", "ER", "RP", "Avg. AT", "Avg. FA", "Runs"];
        let rows: Vec<[String; 6]> = self
            .summary
            .iter()
            .map(|s| {
                [
                    s.detector.name().to_string(),
                    s.er.render(3),
                    s.rp.render(3),
                    s.at_minutes.render(1),
                    s.fa_per_hour.render(3),
                    s.runs.to_string(),
                ]
            })
            .collect();
        let mut width = header.map(str::len);
        for r in &rows {
            for (w, c) in width.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, cells: &[String]| {
            let parts: Vec<String> =
                cells.iter().zip(&width).map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count()))).collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&mut out, &header.map(String::from));
        line(&mut out, &width.map(|w| "-".repeat(w)));
        for r in &rows {
            line(&mut out, r);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(kind: DetectorKind, fold: usize, er: Option<f64>) -> RunRecord {
        RunRecord {
            detector: kind,
            repeat: 0,
            fold,
            test_entities: 3,
            alarms: AlarmMetrics { er, ..Default::default() },
            subsequence: ClassScores::default(),
            first_layer: None,
            second_layer: None,
            validation_ba: vec![],
        }
    }

    #[test]
    fn mean_sd_skips_na() {
        let m = MeanSd::of([Some(1.0), None, Some(3.0)]);
        assert_eq!((m.mean, m.n), (Some(2.0), 2));
        approx::assert_abs_diff_eq!(m.sd.unwrap(), 2f64.sqrt());
        assert_eq!(MeanSd::of([None]).render(3), "NA");
    }

    #[test]
    fn aggregation_and_table() {
        let runs = vec![
            record(DetectorKind::Cl, 1, Some(0.5)),
            record(DetectorKind::Ll, 0, Some(1.0)),
            record(DetectorKind::Cl, 0, Some(1.0)),
        ];
        let rep = EvalReport::from_runs(runs, [DetectorKind::Ll, DetectorKind::Cl]);
        assert_eq!(rep.runs[0].detector, DetectorKind::Ll);
        assert_eq!(rep.runs[1].fold, 0);
        assert_eq!(rep.row(DetectorKind::Cl).unwrap().er.mean, Some(0.75));
        let table = rep.render_table();
        let head = table.lines().next().unwrap();
        for col in ["ER", "RP", "Avg. AT", "Avg. FA"] {
            assert!(head.contains(col));
        }
        assert!(table.contains("0.750±0.354"));
        let mut csv = Vec::new();
        rep.write_runs_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().nth(1).unwrap().starts_with("LL,0,0,3,"));
        assert_eq!(EvalReport::from_json(&rep.to_json().unwrap()).unwrap(), rep);
    }
}
