//! Seeded synthetic vitals with planted, learnable episodes.
//!
//! Each signal is a per-entity baseline plus a stationary AR(1) process and
//! white measurement noise. Episodes of the target signal arrive by a seeded
//! renewal process. Over the precursor lead the target drifts linearly,
//! closing `precursor_drift` of the gap to the episode plateau; at onset it
//! steps onto the plateau and holds it for the episode duration. Brief dips
//! onto the plateau, too short to form an episode and with no precursor, are
//! scattered between episodes. SBP and DBP follow MAP excursions.

use rand::Rng as _;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{Episode, EventLog};
use crate::rng;
use crate::series::{EntitySeries, SignalKind, OUTLIER_HI, OUTLIER_LO};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Baseline {
    pub mean: f64,
    /// Stationary standard deviation of the AR(1) component.
    pub sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub n_entities: usize,
    pub minutes_per_entity: usize,
    pub hr: Baseline,
    pub sbp: Baseline,
    pub dbp: Baseline,
    pub map: Baseline,
    /// Standard deviation of the per-entity shift of every baseline mean.
    pub entity_offset_sd: f64,
    pub ar_coefficient: f64,
    pub noise_sd: f64,
    /// Signal carrying the episodes (MAP or HR).
    pub target: SignalKind,
    /// Level the target holds during an episode.
    pub plateau: f64,
    /// Mean episodes per 1000 minutes.
    pub episode_rate: f64,
    pub precursor_lead_minutes: usize,
    /// Fraction of the baseline-to-plateau gap closed by the end of the lead.
    pub precursor_drift: f64,
    pub episode_min_minutes: usize,
    pub episode_max_minutes: usize,
    /// Minutes after an episode before the next precursor may start.
    pub recovery_minutes: usize,
    /// Mean precursor-free dips per 1000 minutes.
    pub dip_rate: f64,
    pub dip_min_minutes: usize,
    pub dip_max_minutes: usize,
    /// Probability that a reading is missing.
    pub missing_rate: f64,
    pub rng_seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self::ahe_like()
    }
}

impl SynthParams {
    /// Hypotension-like corpus: MAP episodes around 50 mmHg.
    pub fn ahe_like() -> Self {
        Self {
            n_entities: 50,
            minutes_per_entity: 2000,
            hr: Baseline { mean: 80.0, sd: 4.0 },
            sbp: Baseline { mean: 120.0, sd: 4.0 },
            dbp: Baseline { mean: 80.0, sd: 3.0 },
            map: Baseline { mean: 80.0, sd: 3.0 },
            entity_offset_sd: 3.0,
            ar_coefficient: 0.95,
            noise_sd: 1.0,
            target: SignalKind::Map,
            plateau: 50.0,
            episode_rate: 1.35,
            precursor_lead_minutes: 150,
            precursor_drift: 0.4,
            episode_min_minutes: 40,
            episode_max_minutes: 60,
            recovery_minutes: 30,
            dip_rate: 1.6,
            dip_min_minutes: 15,
            dip_max_minutes: 24,
            missing_rate: 0.002,
            rng_seed: 0,
        }
    }

    /// Tachycardia-like corpus: HR episodes around 115 bpm, more frequent.
    pub fn te_like() -> Self {
        Self {
            target: SignalKind::Hr,
            plateau: 115.0,
            episode_rate: 3.6,
            precursor_drift: 0.3,
            episode_min_minutes: 45,
            episode_max_minutes: 75,
            ..Self::ahe_like()
        }
    }

    fn baseline(&self, kind: SignalKind) -> Baseline {
        match kind {
            SignalKind::Hr => self.hr,
            SignalKind::Sbp => self.sbp,
            SignalKind::Dbp => self.dbp,
            _ => self.map,
        }
    }

    fn mean_cycle_excess(&self) -> f64 {
        let busy = self.precursor_lead_minutes as f64
            + (self.episode_min_minutes + self.episode_max_minutes) as f64 / 2.0
            + self.recovery_minutes as f64;
        1000.0 / self.episode_rate - busy
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synth: {m}")));
        if !(0.0..1.0).contains(&self.ar_coefficient) {
            return bad("ar_coefficient must lie in [0, 1)");
        }
        let sds = [self.hr.sd, self.sbp.sd, self.dbp.sd, self.map.sd, self.noise_sd];
        if sds.iter().any(|&s| !s.is_finite() || s <= 0.0) || self.entity_offset_sd.is_nan() || self.entity_offset_sd < 0.0 {
            return bad("standard deviations must be positive");
        }
        if !matches!(self.target, SignalKind::Map | SignalKind::Hr) {
            return bad("target must be MAP or HR");
        }
        if !(OUTLIER_LO..=OUTLIER_HI).contains(&self.plateau) {
            return bad("plateau lies outside the valid measurement range");
        }
        if !(self.episode_rate >= 0.0 && self.episode_rate.is_finite()) {
            return bad("episode_rate must be non-negative");
        }
        if self.episode_rate > 0.0 && self.mean_cycle_excess() <= 0.0 {
            return bad("episode_rate too high for the precursor lead and episode duration");
        }
        if !(0.0..=1.0).contains(&self.precursor_drift) {
            return bad("precursor_drift must lie in [0, 1]");
        }
        if self.episode_min_minutes == 0 || self.episode_min_minutes > self.episode_max_minutes {
            return bad("episode duration range is empty");
        }
        if !(self.dip_rate >= 0.0 && self.dip_rate.is_finite()) {
            return bad("dip_rate must be non-negative");
        }
        if self.dip_min_minutes == 0 || self.dip_min_minutes > self.dip_max_minutes {
            return bad("dip duration range is empty");
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return bad("missing_rate must lie in [0, 1)");
        }
        Ok(())
    }

    /// Checks the precursor is long enough to be seen by an observation
    /// window placed `ow + ww` minutes before the event.
    pub fn check_lead(&self, ow_plus_ww: usize) -> Result<()> {
        if self.precursor_lead_minutes < ow_plus_ww {
            return Err(Error::Config(format!(
                "synth: precursor lead {} is shorter than OW + WW = {ow_plus_ww}",
                self.precursor_lead_minutes
            )));
        }
        Ok(())
    }
}

/// Generated series plus the generator's intended episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub series: Vec<EntitySeries>,
    pub intended: EventLog,
}

pub fn entity_id(i: usize, n: usize) -> String {
    let width = n.saturating_sub(1).to_string().len().max(3);
    format!("e{i:0width$}")
}

/// Generates the corpus. Entities are independent and seeded by index.
pub fn generate(params: &SynthParams) -> Result<SynthCorpus> {
    params.validate()?;
    let entities: Vec<(EntitySeries, Vec<Episode>)> = (0..params.n_entities)
        .into_par_iter()
        .map(|i| generate_entity(params, &entity_id(i, params.n_entities), rng::rng_from(params.rng_seed, &[i as u64])))
        .collect::<Result<_>>()?;
    let mut intended = EventLog::new();
    let mut series = Vec::with_capacity(entities.len());
    for (s, eps) in entities {
        intended.insert(s.entity_id(), eps);
        series.push(s);
    }
    Ok(SynthCorpus { series, intended })
}

fn schedule(p: &SynthParams, rng: &mut rng::Rng) -> Result<Vec<Episode>> {
    let mut out = Vec::new();
    if p.episode_rate == 0.0 {
        return Ok(out);
    }
    let gap = Exp::new(1.0 / p.mean_cycle_excess()).map_err(|e| Error::Config(e.to_string()))?;
    let len = p.minutes_per_entity as i64;
    let mut cursor = 0i64;
    loop {
        let onset = cursor + p.precursor_lead_minutes as i64 + gap.sample(rng).round() as i64;
        let duration = rng.random_range(p.episode_min_minutes..=p.episode_max_minutes) as i64;
        if onset + duration > len {
            return Ok(out);
        }
        out.push(Episode { onset, end: onset + duration });
        cursor = onset + duration + p.recovery_minutes as i64;
    }
}

/// Places dips by a Poisson process, dropping any that would touch an
/// episode, its precursor or recovery, or an earlier dip.
fn schedule_dips(p: &SynthParams, episodes: &[Episode], rng: &mut rng::Rng) -> Result<Vec<Episode>> {
    let mut out: Vec<Episode> = Vec::new();
    if p.dip_rate == 0.0 {
        return Ok(out);
    }
    let gap = Exp::new(p.dip_rate / 1000.0).map_err(|e| Error::Config(e.to_string()))?;
    let (lead, rec) = (p.precursor_lead_minutes as i64, p.recovery_minutes as i64);
    let len = p.minutes_per_entity as i64;
    let mut t = 0i64;
    loop {
        t += gap.sample(rng).round() as i64;
        let dip = Episode { onset: t, end: t + rng.random_range(p.dip_min_minutes..=p.dip_max_minutes) as i64 };
        if dip.end > len {
            return Ok(out);
        }
        let clash = episodes.iter().any(|e| dip.onset < e.end + rec && e.onset - lead - rec < dip.end)
            || out.last().is_some_and(|d| dip.onset < d.end + rec);
        if !clash {
            out.push(dip);
        }
        t = dip.end;
    }
}

/// Additive excursion of the target at minute `t`, given its baseline.
fn excursion(p: &SynthParams, episodes: &[Episode], dips: &[Episode], base: f64, t: i64) -> f64 {
    let gap = p.plateau - base;
    let lead = p.precursor_lead_minutes as i64;
    if dips.iter().any(|d| (d.onset..d.end).contains(&t)) {
        return gap;
    }
    for e in episodes {
        if (e.onset..e.end).contains(&t) {
            return gap;
        }
        if lead > 0 && (e.onset - lead..e.onset).contains(&t) {
            let progress = (t - (e.onset - lead) + 1) as f64 / lead as f64;
            return p.precursor_drift * gap * progress;
        }
    }
    0.0
}

fn generate_entity(p: &SynthParams, id: &str, mut rng: rng::Rng) -> Result<(EntitySeries, Vec<Episode>)> {
    let n = p.minutes_per_entity;
    let episodes = schedule(p, &mut rng)?;
    let dips = schedule_dips(p, &episodes, &mut rng)?;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let phi = p.ar_coefficient;
    let innov = (1.0 - phi * phi).sqrt();

    let target_base = p.baseline(p.target).mean + p.entity_offset_sd * unit.sample(&mut rng);
    let shape: Vec<f64> = (0..n as i64).map(|t| excursion(p, &episodes, &dips, target_base, t)).collect();

    let mut signals = Vec::with_capacity(4);
    for kind in SignalKind::RAW {
        let b = p.baseline(kind);
        let base = if kind == p.target { target_base } else { b.mean + p.entity_offset_sd * unit.sample(&mut rng) };
        let coupling = match (p.target, kind) {
            (k, j) if k == j => 1.0,
            (SignalKind::Map, SignalKind::Sbp) => 1.2,
            (SignalKind::Map, SignalKind::Dbp) => 0.9,
            _ => 0.0,
        };
        let mut ar = b.sd * unit.sample(&mut rng);
        let mut values = Vec::with_capacity(n);
        for s in &shape {
            ar = phi * ar + b.sd * innov * unit.sample(&mut rng);
            let v = base + coupling * s + ar + p.noise_sd * unit.sample(&mut rng);
            let v = ((v * 10.0).round() / 10.0).clamp(OUTLIER_LO, OUTLIER_HI);
            let missing = rng.random::<f64>() < p.missing_rate;
            values.push((!missing).then_some(v));
        }
        signals.push((kind, values));
    }
    Ok((EntitySeries::new(id, 0, signals)?, episodes))
}
