//! Event-aware alarm matching and the metrics derived from it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::detectors::AlarmLog;
use crate::error::{Error, Result};
use crate::events::{Episode, EventLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    /// An alarm credits an onset `e` iff `0 < e - a <= credit_window_minutes`.
    pub credit_window_minutes: i64,
    /// Length of the period a false alarm keeps open for discounting.
    pub active_window_minutes: i64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { credit_window_minutes: 60, active_window_minutes: 60 }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.credit_window_minutes <= 0 || self.active_window_minutes <= 0 {
            return Err(Error::Config("credit and active windows must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AlarmClass {
    TrueAlarm,
    FalseAlarm,
    Obsolete,
}

/// Matching outcome for one entity.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EntityMatch {
    /// Per episode: the earliest crediting alarm, if any.
    pub first_credit: Vec<Option<i64>>,
    /// Per alarm, in input order.
    pub classes: Vec<AlarmClass>,
}

impl EntityMatch {
    pub fn captured(&self) -> usize {
        self.first_credit.iter().filter(|c| c.is_some()).count()
    }

    pub fn count(&self, class: AlarmClass) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }

    /// Anticipation times of captured episodes.
    pub fn anticipation<'a>(&'a self, episodes: &'a [Episode]) -> impl Iterator<Item = i64> + 'a {
        self.first_credit.iter().zip(episodes).filter_map(|(c, e)| c.map(|a| e.onset - a))
    }
}

/// Matches sorted `alarms` against sorted `episodes` of one entity.
///
/// An alarm crediting some onset is a true alarm. Otherwise it is obsolete
/// when it falls inside an episode (`onset <= a < end`), and false when not.
pub fn match_entity(alarms: &[i64], episodes: &[Episode], cfg: &MatchConfig) -> EntityMatch {
    let credit = cfg.credit_window_minutes;
    let first_credit = episodes
        .iter()
        .map(|e| {
            let lo = alarms.partition_point(|&a| a < e.onset - credit);
            alarms.get(lo).copied().filter(|&a| a < e.onset)
        })
        .collect();
    let classes = alarms
        .iter()
        .map(|&a| {
            let next = episodes.partition_point(|e| e.onset <= a);
            if episodes.get(next).is_some_and(|e| e.onset - a <= credit) {
                AlarmClass::TrueAlarm
            } else if episodes[..next].iter().any(|e| a < e.end) {
                AlarmClass::Obsolete
            } else {
                AlarmClass::FalseAlarm
            }
        })
        .collect();
    EntityMatch { first_credit, classes }
}

/// Captured over total events; `None` when there are no events.
pub fn event_recall(captured: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| captured as f64 / total as f64)
}

/// Greedy count of disjoint active periods `[a, a + active)` opened by sorted
/// false alarms.
pub fn discounted_false_positives(false_alarms: &[i64], active: i64) -> usize {
    let mut count = 0;
    let mut open_until = i64::MIN;
    for &a in false_alarms {
        if a >= open_until {
            count += 1;
            open_until = a + active;
        }
    }
    count
}

/// `captured / (captured + dfp)`; `None` when both are zero.
pub fn reduced_precision(captured: usize, dfp: usize) -> Option<f64> {
    (captured + dfp > 0).then(|| captured as f64 / (captured + dfp) as f64)
}

/// Alarm-level scores of one detector over a set of entities.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AlarmMetrics {
    pub events: usize,
    pub captured: usize,
    pub true_alarms: usize,
    pub false_alarms: usize,
    pub obsolete_alarms: usize,
    pub dfp: usize,
    pub monitored_hours: f64,
    pub er: Option<f64>,
    pub rp: Option<f64>,
    /// Mean minutes from the earliest crediting alarm to onset.
    pub at_minutes: Option<f64>,
    /// Raw false alarms per monitored hour, averaged over entities.
    pub fa_per_hour: Option<f64>,
    /// Discounted false positives per monitored hour, averaged over entities.
    pub fa_disc_per_hour: Option<f64>,
}

/// Scores `alarms` against `events` for the entities listed in `monitored`,
/// which maps each entity to its monitored hours.
pub fn evaluate_alarms(
    alarms: &AlarmLog,
    events: &EventLog,
    monitored: &BTreeMap<String, f64>,
    cfg: &MatchConfig,
) -> AlarmMetrics {
    let mut m = AlarmMetrics::default();
    let mut at_sum = 0i64;
    let (mut fa_rates, mut disc_rates) = (Vec::new(), Vec::new());
    for (id, &hours) in monitored {
        let (a, eps) = (alarms.get(id), events.get(id));
        let em = match_entity(a, eps, cfg);
        let false_minutes: Vec<i64> =
            a.iter().zip(&em.classes).filter(|(_, &c)| c == AlarmClass::FalseAlarm).map(|(&t, _)| t).collect();
        let dfp = discounted_false_positives(&false_minutes, cfg.active_window_minutes);
        m.events += eps.len();
        m.captured += em.captured();
        m.true_alarms += em.count(AlarmClass::TrueAlarm);
        m.false_alarms += false_minutes.len();
        m.obsolete_alarms += em.count(AlarmClass::Obsolete);
        m.dfp += dfp;
        m.monitored_hours += hours;
        at_sum += em.anticipation(eps).sum::<i64>();
        if hours > 0.0 {
            fa_rates.push(false_minutes.len() as f64 / hours);
            disc_rates.push(dfp as f64 / hours);
        }
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    m.er = event_recall(m.captured, m.events);
    m.rp = reduced_precision(m.captured, m.dfp);
    m.at_minutes = (m.captured > 0).then(|| at_sum as f64 / m.captured as f64);
    m.fa_per_hour = mean(&fa_rates);
    m.fa_disc_per_hour = mean(&disc_rates);
    m
}
