//! Early anomaly detection for minute-sampled multivariate vital-sign series.
//!
//! The crate decomposes a rare threshold-proportion event (e.g. an acute
//! hypotensive episode) into a relaxed *pre-conditional* event and the main
//! event, fits one classifier per layer, and gates alarms by the product of
//! both hard decisions. Alarm logs are scored with event-aware metrics
//! (event recall, reduced precision) under a patient-grouped cross-validation
//! harness.
//!
//! Module map:
//!
//! * [`series`]: ingestion, outlier filtering, derived signals, windowing.
//! * [`events`]: event definitions, labels, episode onsets.
//! * [`features`]: statistical, correlation and wavelet descriptors.
//! * [`resampling`]: class rebalancing strategies.
//! * [`learners`]: gradient-boosted trees, isolation forest, threshold tuning.
//! * [`detectors`]: the five compared alarm producers.
//! * [`evaluation`]: alarm matching, metrics, grouped cross-validation.
//! * [`synth`]: seeded synthetic corpus generator.
//! * [`config`] and [`pipeline`]: experiment configuration and orchestration.

pub mod config;
pub mod detectors;
pub mod error;
pub mod evaluation;
pub mod events;
pub mod features;
pub mod learners;
pub mod matrix;
pub mod pipeline;
pub mod resampling;
pub mod rng;
pub mod series;
pub mod synth;

pub use crate::error::{Error, Result};
pub use crate::events::{Comparator, EventLog, EventSpec, Episode, LabelTriple, LayeredEventSpec};
pub use crate::matrix::Matrix;
pub use crate::series::{EntitySeries, SignalKind, SubSequence, WindowConfig};
