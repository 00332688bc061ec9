//! Orchestration: corpus loading, per-entity preparation and the stage
//! functions behind the command-line tool.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::detectors::{fit_detector, AlarmLog, Detector, LabeledRows, Observation};
use crate::error::{Error, Result};
use crate::evaluation::{cv_harness, evaluate_alarms, plan, AlarmMetrics, Confusion, EvalReport};
use crate::events::{event_log, extract_event_onsets, label_subsequence, DropReason, Episode, EventLog, LabelTriple, LayeredEventSpec};
use crate::features::{featurize, FeatureSchema, FeatureTable};
use crate::matrix::Matrix;
use crate::series::{make_subsequences, preprocess, read_series_csv, write_series, EntitySeries, WindowConfig};
use crate::synth::generate;

/// Everything the detectors need from one entity, computed once.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedEntity {
    pub entity_id: String,
    /// Absolute observation-window start of each row.
    pub t_starts: Vec<i64>,
    /// Raw feature rows; `NaN` marks an undefined descriptor.
    pub features: Matrix,
    /// Target reading in the last observation minute of each row.
    pub current: Vec<Option<f64>>,
    pub labels: Vec<std::result::Result<LabelTriple, DropReason>>,
    /// Target readings over each row's target window.
    pub targets: Vec<Vec<Option<f64>>>,
    /// Rows at the evaluation stride.
    pub eval_rows: Vec<usize>,
    /// Rows at the training stride.
    pub train_rows: Vec<usize>,
    pub episodes: Vec<Episode>,
    pub ow_minutes: usize,
    pub eval_stride_minutes: usize,
}

/// Per-row outcome of running a detector over a prepared entity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EntityRun {
    pub alarms: Vec<i64>,
    /// Final decision against `y`.
    pub main: Confusion,
    /// First layer against `y_s` (layered detectors).
    pub first: Confusion,
    /// Second layer against `y_f` on rows where `y_s` holds.
    pub second: Confusion,
}

impl PreparedEntity {
    /// Labeled rows among `rows`; dropped sub-sequences are skipped.
    pub fn labeled_rows(&self, rows: &[usize]) -> LabeledRows {
        let mut out = LabeledRows { x: Matrix::zeros(0, self.features.cols()), ..Default::default() };
        for &i in rows {
            if let Ok(l) = self.labels[i] {
                out.x.push_row(self.features.row(i));
                out.labels.push(l);
                out.groups.push(self.entity_id.clone());
                out.t.push(self.t_starts[i]);
                out.targets.push(self.targets[i].clone());
            }
        }
        out
    }

    pub fn monitored_hours(&self) -> f64 {
        (self.eval_rows.len() * self.eval_stride_minutes) as f64 / 60.0
    }

    /// Alarm minute of row `i`: the end of its observation window.
    pub fn alarm_minute(&self, i: usize) -> i64 {
        self.t_starts[i] + self.ow_minutes as i64
    }

    /// Runs `det` over every evaluation row.
    pub fn run(&self, det: &Detector) -> Result<EntityRun> {
        let mut out = EntityRun::default();
        for &i in &self.eval_rows {
            let d = det.decide(Observation { features: self.features.row(i), current: self.current[i] })?;
            if d.alarm {
                out.alarms.push(self.alarm_minute(i));
            }
            if let Ok(l) = self.labels[i] {
                out.main.add(d.alarm, l.y);
                if let Some((s, f)) = d.layers {
                    out.first.add(s, l.y_s);
                    if let Some(yf) = l.y_f {
                        out.second.add(f, yf);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Filters, derives signals, windows, featurizes and labels one entity.
/// Cached feature rows are used when given.
pub fn prepare_entity(
    raw: &EntitySeries,
    windows: &WindowConfig,
    events: &LayeredEventSpec,
    cached: Option<Matrix>,
) -> Result<PreparedEntity> {
    windows.validate()?;
    let (series, _) = preprocess(raw)?;
    let train_stride = windows.train_stride_minutes;
    let eval_stride = windows.eval_stride_minutes;
    let subs: Vec<_> = make_subsequences(&series, windows, 1)?
        .into_iter()
        .enumerate()
        .filter(|(off, _)| off % train_stride == 0 || off % eval_stride == 0)
        .collect();
    let features = match cached {
        Some(m) if m.rows() == subs.len() => m,
        Some(m) => {
            return Err(Error::Format(format!(
                "entity {}: cached features hold {} rows, expected {}",
                raw.entity_id(),
                m.rows(),
                subs.len()
            )))
        }
        None => {
            let rows = subs.iter().map(|(_, ss)| featurize(&series, ss)).collect::<Result<Vec<_>>>()?;
            Matrix::from_rows(crate::features::N_FEATURES, rows)
        }
    };
    let target = series
        .signal(events.main().signal)
        .ok_or_else(|| Error::Config(format!("entity {}: no {} signal", raw.entity_id(), events.main().signal)))?;
    let mut out = PreparedEntity {
        entity_id: raw.entity_id().to_string(),
        t_starts: Vec::with_capacity(subs.len()),
        features,
        current: Vec::with_capacity(subs.len()),
        labels: Vec::with_capacity(subs.len()),
        targets: Vec::with_capacity(subs.len()),
        eval_rows: Vec::new(),
        train_rows: Vec::new(),
        episodes: extract_event_onsets(&series, events.main()),
        ow_minutes: windows.ow_minutes,
        eval_stride_minutes: eval_stride,
    };
    for (row, (off, ss)) in subs.iter().enumerate() {
        out.t_starts.push(ss.t_start);
        out.current.push(target[ss.ow.end - 1]);
        out.labels.push(label_subsequence(&series, ss, events));
        out.targets.push(target[ss.tw.clone()].to_vec());
        if off % eval_stride == 0 {
            out.eval_rows.push(row);
        }
        if off % train_stride == 0 {
            out.train_rows.push(row);
        }
    }
    Ok(out)
}

/// Prepares every entity in parallel, in input order.
pub fn prepare_corpus(
    series: &[EntitySeries],
    windows: &WindowConfig,
    events: &LayeredEventSpec,
    cache: Option<&FeatureTable>,
) -> Result<Vec<PreparedEntity>> {
    let mut cached: Vec<Option<Matrix>> = vec![None; series.len()];
    if let Some(table) = cache {
        let mut by_entity: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, id) in table.entity_ids.iter().enumerate() {
            by_entity.entry(id.as_str()).or_default().push(i);
        }
        for (slot, s) in cached.iter_mut().zip(series) {
            let rows = by_entity.get(s.entity_id()).map(Vec::as_slice).unwrap_or(&[]);
            *slot = Some(table.x.select_rows(rows));
        }
    }
    series
        .par_iter()
        .zip(cached.into_par_iter())
        .map(|(s, c)| prepare_entity(s, windows, events, c))
        .collect()
}

/// Input series with their canonical CSV digest.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub series: Vec<EntitySeries>,
    /// Generator-intended episodes for synthetic corpora.
    pub intended: Option<EventLog>,
    pub digest: [u8; 32],
}

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

fn canonical_csv(series: &[EntitySeries]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_series(&mut buf, series)?;
    Ok(buf)
}

impl Corpus {
    pub fn from_series(series: Vec<EntitySeries>, intended: Option<EventLog>) -> Result<Self> {
        let digest = sha256(&canonical_csv(&series)?);
        Ok(Self { series, intended, digest })
    }

    /// Reads the configured CSV, or generates the synthetic corpus.
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        match &cfg.data.csv {
            Some(path) => Self::from_series(read_series_csv(path)?, None),
            None => {
                let c = generate(&cfg.synth)?;
                Self::from_series(c.series, Some(c.intended))
            }
        }
    }

    pub fn digest_hex(&self) -> String {
        hex::encode(self.digest)
    }
}

/// Digest binding cached features to their input series and window setup.
pub fn feature_digest(corpus: &Corpus, windows: &WindowConfig) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(corpus.digest);
    h.update(format!("{windows:?}").as_bytes());
    h.finalize().into()
}

/// Feature rows of all entities, for caching.
pub fn feature_table(prepared: &[PreparedEntity], digest: [u8; 32]) -> FeatureTable {
    let cols = prepared.first().map_or(crate::features::N_FEATURES, |p| p.features.cols());
    let mut table = FeatureTable {
        schema: FeatureSchema::default(),
        entity_ids: Vec::new(),
        t_starts: Vec::new(),
        x: Matrix::zeros(0, cols),
        input_digest: digest,
    };
    for p in prepared {
        for (i, r) in p.features.iter_rows().enumerate() {
            table.entity_ids.push(p.entity_id.clone());
            table.t_starts.push(p.t_starts[i]);
            table.x.push_row(r);
        }
    }
    table
}

/// Loads a feature cache if it matches `digest`.
pub fn load_feature_cache(path: &Path, digest: [u8; 32]) -> Result<Option<FeatureTable>> {
    if !path.exists() {
        return Ok(None);
    }
    let table = FeatureTable::read_binary(std::io::BufReader::new(fs::File::open(path)?))?;
    if table.input_digest != digest {
        log::info!("{}: stale feature cache ignored", path.display());
        return Ok(None);
    }
    table.schema.check(table.x.cols())?;
    Ok(Some(table))
}

/// Counts per entity at the evaluation stride.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelCounts {
    pub subsequences: usize,
    pub dropped: usize,
    pub y: usize,
    pub y_s: usize,
    pub episodes: usize,
}

pub fn label_counts(p: &PreparedEntity) -> LabelCounts {
    let mut c = LabelCounts { episodes: p.episodes.len(), ..Default::default() };
    for &i in &p.eval_rows {
        c.subsequences += 1;
        match p.labels[i] {
            Ok(l) => {
                c.y += usize::from(l.y);
                c.y_s += usize::from(l.y_s);
            }
            Err(_) => c.dropped += 1,
        }
    }
    c
}

/// Label counts per entity without featurizing.
pub fn label_corpus(
    series: &[EntitySeries],
    windows: &WindowConfig,
    events: &LayeredEventSpec,
) -> Result<Vec<(String, LabelCounts)>> {
    series
        .par_iter()
        .map(|raw| {
            let (s, _) = preprocess(raw)?;
            let mut c = LabelCounts { episodes: extract_event_onsets(&s, events.main()).len(), ..Default::default() };
            for ss in make_subsequences(&s, windows, windows.eval_stride_minutes)? {
                c.subsequences += 1;
                match label_subsequence(&s, &ss, events) {
                    Ok(l) => {
                        c.y += usize::from(l.y);
                        c.y_s += usize::from(l.y_s);
                    }
                    Err(_) => c.dropped += 1,
                }
            }
            Ok((raw.entity_id().to_string(), c))
        })
        .collect()
}

/// Writes `entity_id,subsequences,dropped,y,y_s,episodes` rows plus a total.
pub fn write_label_counts<W: Write>(w: W, counts: &[(String, LabelCounts)]) -> Result<LabelCounts> {
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["entity_id", "subsequences", "dropped", "y", "y_s", "episodes"]).map_err(io)?;
    let mut total = LabelCounts::default();
    let mut emit = |id: &str, c: &LabelCounts| {
        w.write_record([id, &c.subsequences.to_string(), &c.dropped.to_string(), &c.y.to_string(), &c.y_s.to_string(), &c.episodes.to_string()])
            .map_err(io)
    };
    for (id, c) in counts {
        emit(id, c)?;
        total.subsequences += c.subsequences;
        total.dropped += c.dropped;
        total.y += c.y;
        total.y_s += c.y_s;
        total.episodes += c.episodes;
    }
    emit("TOTAL", &total)?;
    w.flush()?;
    Ok(total)
}

/// Writes `entity_id,onset,end` rows.
pub fn write_event_log<W: Write>(w: W, log: &EventLog) -> Result<()> {
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["entity_id", "onset", "end"]).map_err(io)?;
    for id in log.entities() {
        for e in log.get(id) {
            w.write_record([id, &e.onset.to_string(), &e.end.to_string()]).map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn episodes_of(prepared: &[PreparedEntity]) -> EventLog {
    let mut log = EventLog::new();
    for p in prepared {
        log.insert(p.entity_id.clone(), p.episodes.clone());
    }
    log
}

/// Fits every configured detector once. Entities are split with the first
/// fold rotation of the seeded plan: the validation fold tunes thresholds and
/// all other entities train.
pub fn train_models(cfg: &ExperimentConfig, prepared: &[PreparedEntity]) -> Result<Vec<Detector>> {
    let split = plan(prepared.len(), &crate::evaluation::CvConfig { repeats: 1, ..cfg.cv }, cfg.seed)?
        .into_iter()
        .next()
        .expect("at least one split");
    let valid_set: Vec<usize> = split.valid.clone();
    let mut train = LabeledRows::default();
    let mut valid = LabeledRows::default();
    for (i, p) in prepared.iter().enumerate() {
        if valid_set.contains(&i) {
            valid.extend(&p.labeled_rows(&p.eval_rows));
        } else {
            train.extend(&p.labeled_rows(&p.train_rows));
        }
    }
    cfg.detector_specs()
        .iter()
        .map(|spec| fit_detector(spec, &train, &valid).map_err(|e| e.context(format!("training {}", spec.kind))))
        .collect()
}

/// Runs a fitted detector over all prepared entities.
pub fn detect(det: &Detector, prepared: &[PreparedEntity]) -> Result<AlarmLog> {
    let runs = prepared.par_iter().map(|p| p.run(det).map(|r| (p.entity_id.clone(), r.alarms))).collect::<Result<Vec<_>>>()?;
    let mut log = AlarmLog::new();
    for (id, a) in runs {
        log.insert(id, a);
    }
    Ok(log)
}

/// Alarm-level metrics of `alarms` over all prepared entities.
pub fn score(cfg: &ExperimentConfig, prepared: &[PreparedEntity], alarms: &AlarmLog) -> AlarmMetrics {
    let monitored: BTreeMap<String, f64> = prepared.iter().map(|p| (p.entity_id.clone(), p.monitored_hours())).collect();
    evaluate_alarms(alarms, &episodes_of(prepared), &monitored, &cfg.matching)
}

/// Full grouped cross-validation over the configured detectors.
pub fn cross_validate(cfg: &ExperimentConfig, prepared: &[PreparedEntity]) -> Result<EvalReport> {
    cv_harness(prepared, &cfg.detector_specs(), &cfg.cv, &cfg.matching, cfg.seed)
}

/// Paths of the artifacts written by [`run_all`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunAllOutputs {
    pub config: PathBuf,
    pub inputs: PathBuf,
    pub runs_csv: PathBuf,
    pub report_json: PathBuf,
    pub summary_json: PathBuf,
    pub report_txt: PathBuf,
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut f = BufWriter::new(fs::File::create(path)?);
    f.write_all(bytes)?;
    f.flush()?;
    Ok(())
}

/// Digest lines recorded next to stage outputs.
pub fn inputs_manifest(cfg: &ExperimentConfig, corpus: &Corpus) -> Result<String> {
    let source = cfg.data.csv.as_ref().map_or_else(|| "synthetic".to_string(), |p| p.display().to_string());
    Ok(format!(
        "{}  series ({source})\n{}  config\n",
        corpus.digest_hex(),
        hex::encode(sha256(cfg.to_toml()?.as_bytes()))
    ))
}

/// Loads or generates the corpus, prepares it, cross-validates every
/// configured detector and writes the resolved config, input digests, per-run
/// CSV, JSON report and summary, and the text table to `cfg.out`. Output
/// bytes depend only on the configuration.
pub fn run_all(cfg: &ExperimentConfig) -> Result<(EvalReport, RunAllOutputs)> {
    let corpus = Corpus::load(cfg).map_err(|e| e.context("ingest"))?;
    let prepared = prepare_corpus(&corpus.series, &cfg.windows, &cfg.events, None).map_err(|e| e.context("featurize"))?;
    let report = cross_validate(cfg, &prepared).map_err(|e| e.context("evaluate"))?;
    let out = &cfg.out;
    let paths = RunAllOutputs {
        config: out.join("config.resolved.toml"),
        inputs: out.join("inputs.sha256"),
        runs_csv: out.join("runs.csv"),
        report_json: out.join("report.json"),
        summary_json: out.join("summary.json"),
        report_txt: out.join("report.txt"),
    };
    write_file(&paths.config, cfg.to_toml()?.as_bytes())?;
    write_file(&paths.inputs, inputs_manifest(cfg, &corpus)?.as_bytes())?;
    let mut runs = Vec::new();
    report.write_runs_csv(&mut runs)?;
    write_file(&paths.runs_csv, &runs)?;
    write_file(&paths.report_json, report.to_json()?.as_bytes())?;
    write_file(&paths.summary_json, report.summary_json()?.as_bytes())?;
    write_file(&paths.report_txt, report.render_table().as_bytes())?;
    Ok((report, paths))
}

/// Ground-truth episodes of raw series under the main event.
pub fn ground_truth(series: &[EntitySeries], events: &LayeredEventSpec) -> Result<EventLog> {
    let pre = series.iter().map(|s| preprocess(s).map(|p| p.0)).collect::<Result<Vec<_>>>()?;
    Ok(event_log(&pre, events.main()))
}
