//! Event-aware scoring of alarm logs and the grouped cross-validation
//! harness.

pub mod classical;
pub mod cv;
pub mod matching;
pub mod report;

pub use classical::{ClassScores, Confusion};
pub use cv::{assign_folds, cv_harness, plan, rotation, CvConfig, Split};
pub use matching::{
    discounted_false_positives, evaluate_alarms, event_recall, match_entity, reduced_precision, AlarmClass,
    AlarmMetrics, EntityMatch, MatchConfig,
};
pub use report::{EvalReport, MeanSd, RunRecord, SummaryRow};
