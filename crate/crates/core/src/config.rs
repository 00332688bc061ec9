//! Experiment configuration.
//!
//! Config files are TOML. Unknown keys are rejected. Every key is optional;
//! missing values come from the `task` preset. [`ExperimentConfig`] is the
//! fully resolved form, and serializing it yields a file that loads back to
//! the same configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detectors::{DetectorKind, DetectorSpec};
use crate::error::{Error, Result};
use crate::evaluation::{CvConfig, MatchConfig};
use crate::events::{EventSpec, LayeredEventSpec};
use crate::learners::{GbtParams, IsoForestParams};
use crate::resampling::Strategy;
use crate::series::WindowConfig;
use crate::synth::SynthParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Task {
    AheLike,
    TeLike,
    Custom,
}

/// Resampling strategy per classifier detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResamplingConfig {
    pub cl: Strategy,
    pub ll: Strategy,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Input series; a synthetic corpus is generated when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub out: PathBuf,
    pub detectors: Vec<DetectorKind>,
    pub data: DataConfig,
    pub windows: WindowConfig,
    pub events: LayeredEventSpec,
    pub resampling: ResamplingConfig,
    pub gbt: GbtParams,
    pub isoforest: IsoForestParams,
    pub cv: CvConfig,
    #[serde(rename = "match")]
    pub matching: MatchConfig,
    pub synth: SynthParams,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    task: Option<Task>,
    seed: Option<u64>,
    threads: Option<usize>,
    out: Option<PathBuf>,
    detectors: Option<Vec<DetectorKind>>,
    data: Option<DataConfig>,
    windows: Option<WindowConfig>,
    events: Option<LayeredEventSpec>,
    resampling: Option<ResamplingConfig>,
    gbt: Option<GbtParams>,
    isoforest: Option<IsoForestParams>,
    cv: Option<CvConfig>,
    #[serde(rename = "match")]
    matching: Option<MatchConfig>,
    synth: Option<toml::Table>,
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Defaults for a task preset.
    pub fn preset(task: Task) -> Self {
        let (events, resampling, synth) = match task {
            Task::TeLike => (
                LayeredEventSpec::relaxed(EventSpec::te()),
                ResamplingConfig { cl: Strategy::Smote, ll: Strategy::Smote },
                SynthParams::te_like(),
            ),
            Task::AheLike | Task::Custom => (
                LayeredEventSpec::relaxed(EventSpec::ahe()),
                ResamplingConfig { cl: Strategy::Ro, ll: Strategy::Ru },
                SynthParams::ahe_like(),
            ),
        };
        Self {
            task,
            seed: 0,
            threads: 0,
            out: PathBuf::from("out"),
            detectors: DetectorKind::ALL.to_vec(),
            data: DataConfig::default(),
            windows: WindowConfig::default(),
            events,
            resampling,
            gbt: GbtParams::default(),
            isoforest: IsoForestParams::default(),
            cv: CvConfig::default(),
            matching: MatchConfig::default(),
            synth,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with(text, &Overrides::default())
    }

    pub fn from_toml_with(text: &str, overrides: &Overrides) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let task = file.task.unwrap_or(Task::AheLike);
        if task == Task::Custom && file.events.is_none() {
            return Err(Error::Config("a CUSTOM task must define [events]".into()));
        }
        let base = Self::preset(task);
        let seed = overrides.seed.or(file.seed).unwrap_or(base.seed);
        let synth = match file.synth {
            None => SynthParams { rng_seed: seed, ..base.synth },
            Some(table) => {
                let mut merged = toml::Table::try_from(base.synth).map_err(|e| Error::Config(e.to_string()))?;
                if !table.contains_key("rng_seed") {
                    merged.insert("rng_seed".into(), toml::Value::Integer(seed_to_toml(seed)?));
                }
                merged.extend(table);
                merged.try_into().map_err(|e: toml::de::Error| Error::Config(format!("[synth]: {e}")))?
            }
        };
        let cfg = Self {
            task,
            seed,
            threads: overrides.threads.or(file.threads).unwrap_or(base.threads),
            out: overrides.out.clone().or(file.out).unwrap_or(base.out),
            detectors: file.detectors.unwrap_or(base.detectors),
            data: file.data.unwrap_or(base.data),
            windows: file.windows.unwrap_or(base.windows),
            events: file.events.unwrap_or(base.events),
            resampling: file.resampling.unwrap_or(base.resampling),
            gbt: file.gbt.unwrap_or(base.gbt),
            isoforest: file.isoforest.unwrap_or(base.isoforest),
            cv: file.cv.unwrap_or(base.cv),
            matching: file.matching.unwrap_or(base.matching),
            synth,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_with(&text, overrides).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        seed_to_toml(self.seed)?;
        seed_to_toml(self.synth.rng_seed)?;
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.windows.validate()?;
        self.gbt.validate()?;
        self.cv.validate()?;
        self.matching.validate()?;
        if self.events.main().window_minutes != self.windows.tw_minutes {
            return Err(Error::Config(format!(
                "event window of {} minutes differs from the {}-minute target window",
                self.events.main().window_minutes,
                self.windows.tw_minutes
            )));
        }
        if self.detectors.is_empty() {
            return Err(Error::Config("no detectors selected".into()));
        }
        for (i, d) in self.detectors.iter().enumerate() {
            if self.detectors[..i].contains(d) {
                return Err(Error::Config(format!("detector {d} listed twice")));
            }
        }
        if self.isoforest.n_trees == 0 || self.isoforest.subsample_size < 2 {
            return Err(Error::Config("isoforest: need at least one tree and a subsample of two".into()));
        }
        if self.data.csv.is_none() {
            self.synth.validate()?;
            self.synth.check_lead(self.windows.ow_minutes + self.windows.ww_minutes)?;
        }
        Ok(())
    }

    /// Fit specification for one detector; seeds are re-derived per run.
    pub fn detector_spec(&self, kind: DetectorKind) -> DetectorSpec {
        let resampling = match kind {
            DetectorKind::Ll => self.resampling.ll,
            DetectorKind::Cl => self.resampling.cl,
            _ => Strategy::Nr,
        };
        DetectorSpec {
            kind,
            events: self.events,
            resampling,
            gbt: self.gbt,
            iforest: self.isoforest,
            seed: self.seed,
        }
    }

    pub fn detector_specs(&self) -> Vec<DetectorSpec> {
        self.detectors.iter().map(|&k| self.detector_spec(k)).collect()
    }
}

fn seed_to_toml(seed: u64) -> Result<i64> {
    i64::try_from(seed).map_err(|_| Error::Config(format!("seed {seed} does not fit a TOML integer")))
}
