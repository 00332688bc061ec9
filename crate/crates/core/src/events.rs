//! Threshold-proportion events, layered label streams and episode onsets.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{EntitySeries, SignalKind, SubSequence};

/// A target window with more than this fraction of missing target readings is
/// not labeled.
pub const MAX_MISSING_FRACTION: Fraction = Fraction { num: 1, den: 10 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Comparator {
    Below,
    Above,
}

impl Comparator {
    /// Strict comparison against `level`.
    pub fn holds(self, value: f64, level: f64) -> bool {
        match self {
            Self::Below => value < level,
            Self::Above => value > level,
        }
    }

    /// True when a `candidate` level is implied by (no stricter than) `reference`.
    fn weaker_or_equal(self, candidate: f64, reference: f64) -> bool {
        match self {
            Self::Below => candidate >= reference,
            Self::Above => candidate <= reference,
        }
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Below => "below",
            Self::Above => "above",
        })
    }
}

/// Exact non-negative rational.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fraction {
    pub num: u64,
    pub den: u64,
}

impl Fraction {
    /// Converts a percentage with up to two decimals (e.g. `45`, `87.5`).
    pub fn from_pct(pct: f64) -> Result<Self> {
        let scaled = (pct * 100.0).round();
        if !pct.is_finite() || (scaled - pct * 100.0).abs() > 1e-6 {
            return Err(Error::EventSpec(format!("fraction_pct {pct} has more than two decimals")));
        }
        Ok(Self { num: scaled as u64, den: 10_000 }.reduced())
    }

    pub fn pct(self) -> f64 {
        self.num as f64 * 100.0 / self.den as f64
    }

    fn reduced(self) -> Self {
        fn gcd(a: u64, b: u64) -> u64 {
            if b == 0 { a } else { gcd(b, a % b) }
        }
        let g = gcd(self.num, self.den).max(1);
        Self { num: self.num / g, den: self.den / g }
    }

    /// `hits / total >= self`, in integer arithmetic.
    pub fn reached_by(self, hits: usize, total: usize) -> bool {
        hits as u128 * self.den as u128 >= self.num as u128 * total as u128
    }

    /// `part / total > self`.
    pub fn exceeded_by(self, part: usize, total: usize) -> bool {
        part as u128 * self.den as u128 > self.num as u128 * total as u128
    }

    fn le(self, other: Self) -> bool {
        self.num as u128 * other.den as u128 <= other.num as u128 * self.den as u128
    }
}

/// "At least `fraction` of the `window_minutes` values of `signal` are
/// `comparator` `level`."
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EventSpecRepr", into = "EventSpecRepr")]
pub struct EventSpec {
    pub signal: SignalKind,
    pub comparator: Comparator,
    pub level: f64,
    pub fraction: Fraction,
    pub window_minutes: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventSpecRepr {
    signal: SignalKind,
    comparator: Comparator,
    level: f64,
    fraction_pct: f64,
    window_minutes: usize,
}

impl TryFrom<EventSpecRepr> for EventSpec {
    type Error = Error;

    fn try_from(r: EventSpecRepr) -> Result<Self> {
        EventSpec::new(r.signal, r.comparator, r.level, Fraction::from_pct(r.fraction_pct)?, r.window_minutes)
    }
}

impl From<EventSpec> for EventSpecRepr {
    fn from(s: EventSpec) -> Self {
        Self {
            signal: s.signal,
            comparator: s.comparator,
            level: s.level,
            fraction_pct: s.fraction.pct(),
            window_minutes: s.window_minutes,
        }
    }
}

impl EventSpec {
    pub fn new(
        signal: SignalKind,
        comparator: Comparator,
        level: f64,
        fraction: Fraction,
        window_minutes: usize,
    ) -> Result<Self> {
        if fraction.den == 0 || fraction.num == 0 || fraction.num > fraction.den {
            return Err(Error::EventSpec("fraction must lie in (0, 1]".into()));
        }
        if window_minutes == 0 {
            return Err(Error::EventSpec("window_minutes must be positive".into()));
        }
        if !level.is_finite() || (!signal.is_derived() && !(0.0..=300.0).contains(&level)) {
            return Err(Error::EventSpec(format!("implausible level {level} for {signal}")));
        }
        Ok(Self { signal, comparator, level, fraction: fraction.reduced(), window_minutes })
    }

    /// Acute hypotension: at least 90% of 30 MAP values below 60 mmHg.
    pub fn ahe() -> Self {
        Self::pct(SignalKind::Map, Comparator::Below, 60.0, 90.0)
    }

    /// Tachycardia: at least 90% of 30 HR values above 100 bpm.
    pub fn te() -> Self {
        Self::pct(SignalKind::Hr, Comparator::Above, 100.0, 90.0)
    }

    fn pct(signal: SignalKind, comparator: Comparator, level: f64, pct: f64) -> Self {
        Self::new(signal, comparator, level, Fraction::from_pct(pct).expect("valid pct"), 30).expect("valid preset")
    }

    /// Same event with a different fraction.
    pub fn with_pct(self, pct: f64) -> Result<Self> {
        Self::new(self.signal, self.comparator, self.level, Fraction::from_pct(pct)?, self.window_minutes)
    }

    /// Parses `"<pct>% [SIGNAL] below|above <level>"`, e.g. `45% below 60`.
    /// The signal defaults to `default_signal`; the window to 30 minutes.
    pub fn parse(text: &str, default_signal: SignalKind) -> Result<Self> {
        let bad = || Error::EventSpec(format!("cannot parse event `{text}`; expected e.g. `45% MAP below 60`"));
        let mut tokens: Vec<&str> = text.split_whitespace().filter(|t| !t.eq_ignore_ascii_case("of")).collect();
        if tokens.len() == 3 {
            tokens.insert(1, default_signal.name());
        }
        let [pct, signal, cmp, level] = tokens.as_slice() else { return Err(bad()) };
        let pct: f64 = pct.trim_end_matches('%').parse().map_err(|_| bad())?;
        let signal = SignalKind::from_str(signal)?;
        let comparator = match cmp.to_ascii_lowercase().as_str() {
            "below" => Comparator::Below,
            "above" => Comparator::Above,
            _ => return Err(bad()),
        };
        let level: f64 = level.parse().map_err(|_| bad())?;
        Self::new(signal, comparator, level, Fraction::from_pct(pct)?, 30)
    }
}

impl fmt::Display for EventSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}% of {} {} {} over {} min",
            self.fraction.pct(),
            self.signal,
            self.comparator,
            self.level,
            self.window_minutes
        )
    }
}

/// Main event plus a pre-conditional event it implies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LayeredRepr", into = "LayeredRepr")]
pub struct LayeredEventSpec {
    main: EventSpec,
    pre: EventSpec,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayeredRepr {
    main: EventSpec,
    pre: EventSpec,
}

impl TryFrom<LayeredRepr> for LayeredEventSpec {
    type Error = Error;

    fn try_from(r: LayeredRepr) -> Result<Self> {
        Self::new(r.main, r.pre)
    }
}

impl From<LayeredEventSpec> for LayeredRepr {
    fn from(s: LayeredEventSpec) -> Self {
        Self { main: s.main, pre: s.pre }
    }
}

impl LayeredEventSpec {
    /// Rejects a `pre` that could be false while `main` holds.
    pub fn new(main: EventSpec, pre: EventSpec) -> Result<Self> {
        if pre.signal != main.signal || pre.comparator != main.comparator {
            return Err(Error::EventSpec("pre-conditional event must share signal and comparator".into()));
        }
        if pre.window_minutes != main.window_minutes {
            return Err(Error::EventSpec("pre-conditional event must share the window length".into()));
        }
        if !pre.fraction.le(main.fraction) || !main.comparator.weaker_or_equal(pre.level, main.level) {
            return Err(Error::EventSpec(format!("`{pre}` is not implied by `{main}`")));
        }
        Ok(Self { main, pre })
    }

    /// Main event with the default 45% fraction relaxation.
    pub fn relaxed(main: EventSpec) -> Self {
        let pre = main.with_pct(45.0_f64.min(main.fraction.pct())).expect("valid relaxation");
        Self::new(main, pre).expect("fraction relaxation implies main")
    }

    pub fn main(&self) -> &EventSpec {
        &self.main
    }

    pub fn pre(&self) -> &EventSpec {
        &self.pre
    }
}

/// Why a window could not be labeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// More than the tolerated fraction of target readings are missing.
    TooManyMissing,
    /// No target reading present at all.
    AllMissing,
    /// The series lacks the target signal.
    MissingSignal,
}

impl DropReason {
    pub fn code(self) -> &'static str {
        match self {
            Self::TooManyMissing => "too_many_missing",
            Self::AllMissing => "all_missing",
            Self::MissingSignal => "missing_signal",
        }
    }
}

/// Decides whether `window` satisfies `spec`. The proportion is taken over
/// present values only and compared exactly.
pub fn window_is_event(window: &[Option<f64>], spec: &EventSpec) -> Result<bool> {
    if window.len() != spec.window_minutes {
        return Err(Error::Labeling(format!(
            "window has {} values, event needs {}",
            window.len(),
            spec.window_minutes
        )));
    }
    let (hits, present) = count_hits(window, spec);
    if present == 0 {
        return Err(Error::Labeling(DropReason::AllMissing.code().into()));
    }
    Ok(spec.fraction.reached_by(hits, present))
}

fn count_hits(window: &[Option<f64>], spec: &EventSpec) -> (usize, usize) {
    window.iter().flatten().fold((0, 0), |(h, p), &v| (h + usize::from(spec.comparator.holds(v, spec.level)), p + 1))
}

/// Labels for one sub-sequence: main event `y`, pre-conditional `y_s`, and
/// the second-layer target `y_f`, defined only when `y_s` holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelTriple {
    pub y: bool,
    pub y_s: bool,
    pub y_f: Option<bool>,
}

impl LabelTriple {
    pub fn new(y: bool, y_s: bool) -> Result<Self> {
        if y && !y_s {
            return Err(Error::Labeling("main event without pre-conditional event".into()));
        }
        Ok(Self { y, y_s, y_f: y_s.then_some(y) })
    }

    pub fn is_consistent(&self) -> bool {
        (!self.y || self.y_s) && (self.y_f.is_some() == self.y_s) && (!self.y_s || self.y_f == Some(self.y))
    }
}

/// Labels the target window of `ss`, or explains why it is skipped.
pub fn label_subsequence(
    series: &EntitySeries,
    ss: &SubSequence,
    spec: &LayeredEventSpec,
) -> std::result::Result<LabelTriple, DropReason> {
    let signal = series.signal(spec.main.signal).ok_or(DropReason::MissingSignal)?;
    let window = &signal[ss.tw.clone()];
    label_window(window, spec)
}

/// Labels a single target window.
pub fn label_window(window: &[Option<f64>], spec: &LayeredEventSpec) -> std::result::Result<LabelTriple, DropReason> {
    let missing = window.iter().filter(|v| v.is_none()).count();
    if missing == window.len() {
        return Err(DropReason::AllMissing);
    }
    if MAX_MISSING_FRACTION.exceeded_by(missing, window.len()) {
        return Err(DropReason::TooManyMissing);
    }
    let y = window_is_event(window, &spec.main).map_err(|_| DropReason::AllMissing)?;
    let y_s = window_is_event(window, &spec.pre).map_err(|_| DropReason::AllMissing)?;
    Ok(LabelTriple::new(y, y_s).expect("a layered spec's main event implies its pre-conditional event"))
}

/// A merged run of qualifying windows. `end` is exclusive: one past the last
/// minute of the last qualifying window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Episode {
    pub onset: i64,
    pub end: i64,
}

/// Ground-truth episodes per entity, sorted by onset.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventLog {
    episodes: BTreeMap<String, Vec<Episode>>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `episodes` for `entity`, which must be sorted by onset.
    pub fn insert(&mut self, entity: impl Into<String>, mut episodes: Vec<Episode>) {
        episodes.sort();
        episodes.dedup();
        self.episodes.insert(entity.into(), episodes);
    }

    pub fn get(&self, entity: &str) -> &[Episode] {
        self.episodes.get(entity).map_or(&[], Vec::as_slice)
    }

    pub fn onsets(&self, entity: &str) -> Vec<i64> {
        self.get(entity).iter().map(|e| e.onset).collect()
    }

    pub fn entities(&self) -> impl Iterator<Item = &str> {
        self.episodes.keys().map(String::as_str)
    }

    pub fn total(&self) -> usize {
        self.episodes.values().map(Vec::len).sum()
    }
}

/// Finds episode onsets in a filtered series. A window start qualifies when
/// the window passes the missingness guard and satisfies `spec`; qualifying
/// windows that overlap are merged into one episode whose onset is the
/// earliest qualifying start.
pub fn extract_event_onsets(series: &EntitySeries, spec: &EventSpec) -> Vec<Episode> {
    let Some(values) = series.signal(spec.signal) else { return Vec::new() };
    let w = spec.window_minutes;
    if values.len() < w {
        return Vec::new();
    }

    let is_hit = |v: &Option<f64>| v.is_some_and(|x| spec.comparator.holds(x, spec.level));
    let mut hits = values[..w].iter().filter(|v| is_hit(v)).count();
    let mut missing = values[..w].iter().filter(|v| v.is_none()).count();

    let mut episodes: Vec<Episode> = Vec::new();
    let mut last_start: Option<usize> = None;
    let mut open: Option<usize> = None;
    for t in 0..=values.len() - w {
        if t > 0 {
            let (out, inn) = (&values[t - 1], &values[t + w - 1]);
            hits = hits + usize::from(is_hit(inn)) - usize::from(is_hit(out));
            missing = missing + usize::from(inn.is_none()) - usize::from(out.is_none());
        }
        let present = w - missing;
        let qualifies =
            present > 0 && !MAX_MISSING_FRACTION.exceeded_by(missing, w) && spec.fraction.reached_by(hits, present);
        if !qualifies {
            continue;
        }
        match (open, last_start) {
            (Some(_), Some(prev)) if t < prev + w => {}
            _ => {
                if let (Some(o), Some(prev)) = (open, last_start) {
                    episodes.push(Episode { onset: series.minute(o), end: series.minute(prev + w) });
                }
                open = Some(t);
            }
        }
        last_start = Some(t);
    }
    if let (Some(o), Some(prev)) = (open, last_start) {
        episodes.push(Episode { onset: series.minute(o), end: series.minute(prev + w) });
    }
    episodes
}

/// Runs [`extract_event_onsets`] over a corpus.
pub fn event_log(series: &[EntitySeries], spec: &EventSpec) -> EventLog {
    let mut log = EventLog::new();
    for s in series {
        log.insert(s.entity_id(), extract_event_onsets(s, spec));
    }
    log
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window(below: usize, n: usize) -> Vec<Option<f64>> {
        (0..n).map(|i| Some(if i < below { 55.0 } else { 70.0 })).collect()
    }

    fn ahe_layered() -> LayeredEventSpec {
        LayeredEventSpec::relaxed(EventSpec::ahe())
    }

    #[test]
    fn proportion_rule() {
        let ahe = EventSpec::ahe();
        assert!(window_is_event(&vec![Some(55.0); 30], &ahe).unwrap());
        assert!(!window_is_event(&window(26, 30), &ahe).unwrap());
        assert!(window_is_event(&window(27, 30), &ahe).unwrap());
        let pre = *ahe_layered().pre();
        assert!(window_is_event(&window(14, 30), &pre).unwrap());
        assert!(!window_is_event(&window(14, 30), &ahe).unwrap());
        assert!(!window_is_event(&window(13, 30), &pre).unwrap());
    }

    #[test]
    fn proportion_over_present_values() {
        let mut w = window(27, 30);
        w[29] = None;
        assert!(window_is_event(&w, &EventSpec::ahe()).unwrap());
        assert!(window_is_event(&vec![None; 30], &EventSpec::ahe()).is_err());
    }

    #[test]
    fn strict_level() {
        assert!(!window_is_event(&vec![Some(60.0); 30], &EventSpec::ahe()).unwrap());
        assert!(!window_is_event(&vec![Some(100.0); 30], &EventSpec::te()).unwrap());
        assert!(window_is_event(&vec![Some(101.0); 30], &EventSpec::te()).unwrap());
    }

    #[test]
    fn label_triples() {
        let spec = ahe_layered();
        let l = |b| label_window(&window(b, 30), &spec).unwrap();
        assert_eq!(l(28), LabelTriple { y: true, y_s: true, y_f: Some(true) });
        assert_eq!(l(20), LabelTriple { y: false, y_s: true, y_f: Some(false) });
        assert_eq!(l(2), LabelTriple { y: false, y_s: false, y_f: None });
    }

    #[test]
    fn missingness_guard() {
        let spec = ahe_layered();
        let mut w = window(30, 30);
        for v in w.iter_mut().take(3) {
            *v = None;
        }
        assert!(label_window(&w, &spec).is_ok());
        w[3] = None;
        assert_eq!(label_window(&w, &spec), Err(DropReason::TooManyMissing));
        assert_eq!(label_window(&vec![None; 30], &spec), Err(DropReason::AllMissing));
    }

    #[test]
    fn layered_validation() {
        let ahe = EventSpec::ahe();
        assert!(LayeredEventSpec::new(ahe, ahe.with_pct(45.0).unwrap()).is_ok());
        let level70 = EventSpec::new(SignalKind::Map, Comparator::Below, 70.0, ahe.fraction, 30).unwrap();
        assert!(LayeredEventSpec::new(ahe, level70).is_ok());
        let level50 = EventSpec::new(SignalKind::Map, Comparator::Below, 50.0, ahe.fraction, 30).unwrap();
        assert!(LayeredEventSpec::new(ahe, level50).is_err());
        assert!(LayeredEventSpec::new(ahe, ahe.with_pct(95.0).unwrap()).is_err());
        assert!(LayeredEventSpec::new(ahe, EventSpec::te()).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(EventSpec::new(SignalKind::Map, Comparator::Below, 60.0, Fraction { num: 0, den: 1 }, 30).is_err());
        assert!(EventSpec::new(SignalKind::Map, Comparator::Below, 60.0, Fraction { num: 3, den: 2 }, 30).is_err());
        assert!(EventSpec::new(SignalKind::Map, Comparator::Below, 60.0, Fraction { num: 1, den: 2 }, 0).is_err());
        assert!(Fraction::from_pct(33.333).is_err());
    }

    #[test]
    fn parse_event_text() {
        let s = EventSpec::parse("45% below 60", SignalKind::Map).unwrap();
        assert_eq!(s, EventSpec::ahe().with_pct(45.0).unwrap());
        let s = EventSpec::parse("90% of HR above 100", SignalKind::Map).unwrap();
        assert_eq!(s, EventSpec::te());
        assert!(EventSpec::parse("half below 60", SignalKind::Map).is_err());
    }

    #[test]
    fn serde_shape() {
        let json = serde_json::to_value(EventSpec::ahe()).unwrap();
        assert_eq!(
            json,
            serde_json::json!({"signal":"MAP","comparator":"BELOW","level":60.0,"fraction_pct":90.0,"window_minutes":30})
        );
        let back: EventSpec = serde_json::from_value(json).unwrap();
        assert_eq!(back, EventSpec::ahe());
    }

    fn map_series(values: Vec<Option<f64>>) -> EntitySeries {
        EntitySeries::new("e", 0, [(SignalKind::Map, values)]).unwrap()
    }

    #[test]
    fn onsets() {
        let ahe = EventSpec::ahe();
        let eps = extract_event_onsets(&map_series(vec![Some(55.0); 100]), &ahe);
        assert_eq!(eps, vec![Episode { onset: 0, end: 100 }]);

        let v: Vec<_> = (0..120).map(|i| Some(if (40..70).contains(&i) { 50.0 } else { 80.0 })).collect();
        let eps = extract_event_onsets(&map_series(v), &ahe);
        // The window starting at 37 already holds 27 of 30 low values.
        assert_eq!(eps, vec![Episode { onset: 37, end: 73 }]);

        assert!(extract_event_onsets(&map_series(vec![Some(80.0); 100]), &ahe).is_empty());
    }

    /// O(L*W) reference: evaluate every window independently, then merge
    /// overlapping qualifying windows.
    fn brute_onsets(values: &[Option<f64>], spec: &EventSpec) -> Vec<Episode> {
        let w = spec.window_minutes;
        let mut starts = Vec::new();
        for t in 0..values.len().saturating_sub(w - 1) {
            let win = &values[t..t + w];
            let missing = win.iter().filter(|v| v.is_none()).count();
            if missing * 10 > w || missing == w {
                continue;
            }
            let present = w - missing;
            let hits = win.iter().flatten().filter(|&&x| spec.comparator.holds(x, spec.level)).count();
            if (hits as f64) * (spec.fraction.den as f64) >= (spec.fraction.num as f64) * (present as f64) {
                starts.push(t);
            }
        }
        let mut out: Vec<Episode> = Vec::new();
        let mut prev: Option<usize> = None;
        for t in starts {
            match (out.last_mut(), prev) {
                (Some(ep), Some(p)) if t < p + w => ep.end = (t + w) as i64,
                _ => out.push(Episode { onset: t as i64, end: (t + w) as i64 }),
            }
            prev = Some(t);
        }
        out
    }

    mod props {
        use proptest::prelude::*;

        use super::*;

        fn arb_series() -> impl Strategy<Value = Vec<Option<f64>>> {
            prop::collection::vec(prop::option::weighted(0.95, prop_oneof![40.0f64..59.9, 60.0f64..90.0]), 0..500)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]

            #[test]
            fn onsets_match_brute_force(v in arb_series(), pct in prop::sample::select(vec![45.0, 60.0, 90.0])) {
                let spec = EventSpec::ahe().with_pct(pct).unwrap();
                let fast = if v.is_empty() { Vec::new() } else { extract_event_onsets(&map_series(v.clone()), &spec) };
                prop_assert_eq!(fast, brute_onsets(&v, &spec));
            }

            #[test]
            fn main_implies_pre(below in 0usize..=30, missing in 0usize..=3, pre_pct in 1.0f64..90.0) {
                let mut w = window(below, 30);
                for v in w.iter_mut().rev().take(missing) { *v = None; }
                let main = EventSpec::ahe();
                let spec = LayeredEventSpec::new(main, main.with_pct((pre_pct * 100.0).round() / 100.0).unwrap()).unwrap();
                let l = label_window(&w, &spec).unwrap();
                prop_assert!(l.is_consistent());
            }
        }
    }
}
