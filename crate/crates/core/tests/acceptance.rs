//! Acceptance suite. Prints one line per criterion and exits nonzero if any
//! criterion fails. Every tolerance is pinned below.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::time::{Duration, Instant};

use precursor::config::{ExperimentConfig, Task};
use precursor::detectors::{AlarmLog, Decision, Detector, DetectorKind, Layer, Observation};
use precursor::evaluation::{cv_harness, evaluate_alarms, plan, CvConfig, MatchConfig};
use precursor::events::{
    label_window, window_is_event, Comparator, EventLog, EventSpec, Episode, Fraction, LayeredEventSpec,
};
use precursor::features::wavelet::{dwt, periodic_extend, LEVELS};
use precursor::features::{wavelet_energies, Imputer};
use precursor::learners::gbt::{fit_with_history, Loss};
use precursor::learners::{gbt_fit, isoforest_fit, GbtModel, GbtParams, IsoForestParams, Threshold};
use precursor::pipeline::{self, Corpus};
use precursor::resampling::{resample, Dataset, RowOrigin, Strategy};
use precursor::series::SignalKind;
use precursor::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const METRIC_LOGS: usize = 1_000;
const METRIC_MAX_ALARMS: usize = 15;
const METRIC_BUDGET: Duration = Duration::from_secs(10);
const FUZZ_WINDOWS: usize = 10_000;
const WAVELET_WINDOWS: usize = 1_000;
const WAVELET_SUM_TOL: f64 = 1e-9;
const PARSEVAL_REL_TOL: f64 = 1e-6;
const GBT_DATASETS: u64 = 20;
const GBT_LOSS_TOL: f64 = 1e-12;
const SEPARABLE_MIN_ACC: f64 = 0.99;
const IF_TRIALS: u64 = 100;
const IF_MIN_WINS: usize = 95;
const SMOTE_POINTS: usize = 1_000;
const SEGMENT_TOL: f64 = 1e-9;
const E2E_MIN_ER: f64 = 0.9;
const E2E_LL_SLACK: f64 = 0.02;
const E2E_BUDGET: Duration = Duration::from_secs(600);

struct Outcome {
    pass: Option<bool>,
    detail: String,
}

fn pass(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass: Some(ok), detail: detail.into() }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("1 published headline numbers", c1_reference),
        ("2 metric oracle equivalence", c2_metric_oracle),
        ("3 labeling implication", c3_labeling),
        ("4 layered truth table", c4_truth_table),
        ("5 wavelet energies", c5_wavelet),
        ("6 learner sanity", c6_learners),
        ("7 resampling", c7_resampling),
        ("8 end-to-end synthetic benchmark", c8_end_to_end),
        ("9 cv leakage", c9_cv_leakage),
        ("10 run-all determinism", c10_determinism),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (name, check) in criteria {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let t = Instant::now();
        let out = check();
        let tag = match out.pass {
            Some(true) => "PASS",
            Some(false) => {
                failed += 1;
                "FAIL"
            }
            None => "N/A ",
        };
        println!("[{tag}] {name}: {} ({:.1}s)", out.detail, t.elapsed().as_secs_f64());
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn c1_reference() -> Outcome {
    Outcome { pass: None, detail: "needs the restricted clinical cohort; covered by criteria 2-10 instead".into() }
}

// ---------------------------------------------------------------- 2

fn random_episodes(r: &mut ChaCha8Rng) -> Vec<Episode> {
    let mut out = Vec::new();
    let mut t = r.random_range(0..120);
    for _ in 0..r.random_range(0..4) {
        let onset = t + r.random_range(1..200);
        let end = onset + r.random_range(30..90);
        out.push(Episode { onset, end });
        t = end;
    }
    out
}

fn random_alarms(r: &mut ChaCha8Rng, n: usize) -> Vec<i64> {
    let mut set = BTreeSet::new();
    while set.len() < n {
        set.insert(r.random_range(0..900));
    }
    set.into_iter().collect()
}

/// Smallest number of `[s, s + len)` intervals covering every point, by
/// exhaustive search over interval starts placed at the points.
fn min_cover(points: &[i64], len: i64) -> usize {
    let n = points.len();
    let covers: Vec<u32> = points
        .iter()
        .map(|&s| points.iter().enumerate().filter(|(_, &p)| s <= p && p < s + len).fold(0u32, |m, (i, _)| m | 1 << i))
        .collect();
    let full = if n == 0 { 0 } else { (1u32 << n) - 1 };
    (0u32..1 << n)
        .filter(|mask| (0..n).filter(|i| mask & 1 << i != 0).fold(0u32, |m, i| m | covers[i]) == full)
        .map(|mask| mask.count_ones() as usize)
        .min()
        .unwrap_or(0)
}

fn c2_metric_oracle() -> Outcome {
    let cfg = MatchConfig::default();
    let mut r = rng(2);
    let start = Instant::now();
    let mut mismatches = 0;
    for _ in 0..METRIC_LOGS {
        let n_entities = r.random_range(1..=3);
        let mut budget = r.random_range(0..=METRIC_MAX_ALARMS);
        let (mut alarms, mut events, mut monitored) = (AlarmLog::new(), EventLog::new(), BTreeMap::new());
        let (mut total, mut captured, mut dfp) = (0usize, 0usize, 0usize);
        let (mut n_true, mut n_false, mut n_obsolete) = (0, 0, 0);
        for e in 0..n_entities {
            let id = format!("x{e}");
            let eps = random_episodes(&mut r);
            let k = if e + 1 == n_entities { budget } else { r.random_range(0..=budget) };
            budget -= k;
            let al = random_alarms(&mut r, k);
            let credits = |a: i64, ep: &Episode| 0 < ep.onset - a && ep.onset - a <= cfg.credit_window_minutes;
            total += eps.len();
            captured += eps.iter().filter(|ep| al.iter().any(|&a| credits(a, ep))).count();
            let mut false_alarms = Vec::new();
            for &a in &al {
                if eps.iter().any(|ep| credits(a, ep)) {
                    n_true += 1;
                } else if eps.iter().any(|ep| ep.onset <= a && a < ep.end) {
                    n_obsolete += 1;
                } else {
                    n_false += 1;
                    false_alarms.push(a);
                }
            }
            dfp += min_cover(&false_alarms, cfg.active_window_minutes);
            alarms.insert(id.clone(), al);
            events.insert(id.clone(), eps);
            monitored.insert(id, 10.0);
        }
        let m = evaluate_alarms(&alarms, &events, &monitored, &cfg);
        let er = (total > 0).then(|| captured as f64 / total as f64);
        let rp = (captured + dfp > 0).then(|| captured as f64 / (captured + dfp) as f64);
        let same = m.events == total
            && m.captured == captured
            && m.dfp == dfp
            && m.er == er
            && m.rp == rp
            && (m.true_alarms, m.false_alarms, m.obsolete_alarms) == (n_true, n_false, n_obsolete);
        mismatches += usize::from(!same);
    }
    let elapsed = start.elapsed();
    pass(
        mismatches == 0 && elapsed < METRIC_BUDGET,
        format!("{mismatches} mismatches over {METRIC_LOGS} logs in {:.2}s (limit {}s)", elapsed.as_secs_f64(), METRIC_BUDGET.as_secs()),
    )
}

// ---------------------------------------------------------------- 3

fn random_layered(r: &mut ChaCha8Rng) -> LayeredEventSpec {
    let comparator = if r.random_bool(0.5) { Comparator::Below } else { Comparator::Above };
    let level = f64::from(r.random_range(80..=220)) / 2.0;
    let main_pct = f64::from(r.random_range(1..=100));
    let pre_pct = f64::from(r.random_range(1..=main_pct as u32));
    let shift = f64::from(r.random_range(0..=20));
    let pre_level = match comparator {
        Comparator::Below => level + shift,
        Comparator::Above => level - shift,
    };
    let spec = |lv: f64, pct: f64| {
        EventSpec::new(SignalKind::Map, comparator, lv, Fraction::from_pct(pct).unwrap(), 30).unwrap()
    };
    LayeredEventSpec::new(spec(level, main_pct), spec(pre_level, pre_pct)).unwrap()
}

fn c3_labeling() -> Outcome {
    let mut r = rng(3);
    let (mut implication, mut triples, mut labeled) = (0, 0, 0);
    for _ in 0..FUZZ_WINDOWS {
        let spec = random_layered(&mut r);
        let centre = spec.main().level;
        let spread = Normal::new(0.0, r.random_range(1.0..15.0)).unwrap();
        let missing = r.random_range(0.0..0.2);
        let window: Vec<Option<f64>> = (0..30)
            .map(|_| {
                if r.random_bool(missing) {
                    None
                } else if r.random_bool(0.1) {
                    Some(centre)
                } else {
                    Some((centre + spread.sample(&mut r)).round())
                }
            })
            .collect();
        if window.iter().any(Option::is_some) {
            let main = window_is_event(&window, spec.main()).unwrap();
            let pre = window_is_event(&window, spec.pre()).unwrap();
            implication += usize::from(main && !pre);
        }
        if let Ok(l) = label_window(&window, &spec) {
            labeled += 1;
            let ok = (!l.y || l.y_s) && (!l.y_s || l.y_f == Some(l.y)) && (l.y_s || (!l.y && l.y_f.is_none()));
            triples += usize::from(!ok);
        }
    }
    pass(
        implication == 0 && triples == 0,
        format!("{implication} implication and {triples} label-triple violations over {FUZZ_WINDOWS} windows ({labeled} labeled)"),
    )
}

// ---------------------------------------------------------------- 4

fn c4_truth_table() -> Outcome {
    let width = 3;
    let row = [0.0; 3];
    let imputer = Imputer::fit(&Matrix::zeros(1, width));
    let layer = |base: f64, offset: f64| {
        let model = GbtModel::constant(Loss::Logistic, base, width);
        let p = model.predict(&row).unwrap();
        Layer { model, threshold: Threshold { value: p + offset, balanced_accuracy: 0.5 } }
    };
    let mut checked = 0;
    let mut wrong = 0;
    for &(b1, o1) in &[(-1.0, 0.1), (0.3, 0.0), (2.0, -0.2)] {
        for &(b2, o2) in &[(-2.0, 1e-9), (0.0, 0.0), (1.0, -1e-9)] {
            let (first, second) = (layer(b1, o1), layer(b2, o2));
            let hard1 = first.model.predict(&row).unwrap() >= first.threshold.value;
            let hard2 = second.model.predict(&row).unwrap() >= second.threshold.value;
            let det = Detector::Ll { imputer: imputer.clone(), first, second };
            let d = det.decide(Observation { features: &row, current: None }).unwrap();
            let expect = Decision { alarm: u8::from(hard1) * u8::from(hard2) == 1, layers: Some((hard1, hard2)) };
            wrong += usize::from(d != expect);
            checked += 1;
        }
    }
    pass(wrong == 0, format!("{wrong} of {checked} layer-output combinations disagree with hard(fS)*hard(fF)"))
}

// ---------------------------------------------------------------- 5

fn random_window(r: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    match r.random_range(0..4) {
        0 => {
            let mut v = r.random_range(40.0..120.0);
            (0..len)
                .map(|_| {
                    v += r.random_range(-2.0..2.0);
                    v
                })
                .collect()
        }
        1 => (0..len).map(|_| r.random_range(-1.0..1.0)).collect(),
        2 => vec![r.random_range(1.0..200.0); len],
        _ => {
            let mut v = vec![0.0; len];
            v[r.random_range(0..len)] = r.random_range(0.5..50.0);
            v
        }
    }
}

fn c5_wavelet() -> Outcome {
    let mut r = rng(5);
    let (mut worst_sum, mut worst_parseval) = (0f64, 0f64);
    for i in 0..WAVELET_WINDOWS {
        let len = if i % 2 == 0 { 60 } else { 64 };
        let x = random_window(&mut r, len);
        let rel = wavelet_energies(&x).unwrap();
        worst_sum = worst_sum.max((rel.iter().sum::<f64>() - 1.0).abs());
        let ext = periodic_extend(&x);
        let bands: f64 = dwt(&ext, LEVELS).unwrap().band_energies().iter().sum();
        let norm: f64 = ext.iter().map(|v| v * v).sum();
        worst_parseval = worst_parseval.max((bands - norm).abs() / norm);
    }
    pass(
        worst_sum <= WAVELET_SUM_TOL && worst_parseval <= PARSEVAL_REL_TOL,
        format!(
            "max |sum - 1| = {worst_sum:.2e} (tol {WAVELET_SUM_TOL:.0e}), max Parseval rel. error = {worst_parseval:.2e} (tol {PARSEVAL_REL_TOL:.0e})"
        ),
    )
}

// ---------------------------------------------------------------- 6

fn noisy_dataset(seed: u64, n: usize, d: usize) -> (Matrix, Vec<f64>) {
    let mut r = rng(seed);
    let mut x = Matrix::zeros(0, d);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
        let logit = row[0] - 0.5 * row[1] + row.get(2).map_or(0.0, |v| v * v) - 1.0;
        y.push(f64::from(u8::from(r.random::<f64>() < 1.0 / (1.0 + (-logit).exp()))));
        x.push_row(&row);
    }
    (x, y)
}

fn c6_learners() -> Outcome {
    let params = GbtParams { n_trees: 40, max_depth: 3, min_leaf: 5, ..GbtParams::default() };
    let mut monotone_bad = 0;
    let mut worst_rise = 0f64;
    for s in 0..GBT_DATASETS {
        let (x, y) = noisy_dataset(600 + s, 300, 4);
        let (_, hist) = fit_with_history(&x, &y, &GbtParams { seed: s, ..params }, Loss::Logistic).unwrap();
        let rise = hist.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
        worst_rise = worst_rise.max(rise);
        monotone_bad += usize::from(rise > GBT_LOSS_TOL);
    }

    let mut r = rng(61);
    let mut x = Matrix::zeros(0, 2);
    let mut y = Vec::new();
    for _ in 0..400 {
        let (a, b): (f64, f64) = (r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
        if (a + b).abs() < 0.05 {
            continue;
        }
        x.push_row(&[a, b]);
        y.push(f64::from(u8::from(a + b > 0.0)));
    }
    let model = gbt_fit(&x, &y, &GbtParams { n_trees: 100, min_leaf: 1, subsample_ratio: 1.0, ..params }, Loss::Logistic).unwrap();
    let correct = x.iter_rows().zip(&y).filter(|(row, &t)| (model.predict(row).unwrap() >= 0.5) == (t == 1.0)).count();
    let acc = correct as f64 / y.len() as f64;

    let mut wins = 0;
    for trial in 0..IF_TRIALS {
        let mut r = rng(6_000 + trial);
        let unit = Normal::new(0.0, 1.0).unwrap();
        let mut x = Matrix::zeros(0, 2);
        for _ in 0..256 {
            x.push_row(&[unit.sample(&mut r), unit.sample(&mut r)]);
        }
        let outlier = [r.random_range(5.0..7.0), r.random_range(-7.0..-5.0)];
        x.push_row(&outlier);
        let model = isoforest_fit(&x, &IsoForestParams { n_trees: 100, subsample_size: 128, seed: trial }).unwrap();
        let mut cluster: Vec<f64> = (0..256).map(|i| model.score(x.row(i)).unwrap()).collect();
        cluster.sort_by(f64::total_cmp);
        let median = (cluster[127] + cluster[128]) / 2.0;
        wins += usize::from(model.score(&outlier).unwrap() > median);
    }
    pass(
        monotone_bad == 0 && acc >= SEPARABLE_MIN_ACC && wins >= IF_MIN_WINS,
        format!(
            "loss rose on {monotone_bad}/{GBT_DATASETS} datasets (max step {worst_rise:.1e}, tol {GBT_LOSS_TOL:.0e}); separable accuracy {acc:.4} (min {SEPARABLE_MIN_ACC}); outlier above median in {wins}/{IF_TRIALS} (min {IF_MIN_WINS})"
        ),
    )
}

// ---------------------------------------------------------------- 7

fn imbalanced(seed: u64, n: usize, pos_rate: f64) -> Dataset {
    let mut r = rng(seed);
    let mut x = Matrix::zeros(0, 3);
    let mut y = Vec::new();
    for i in 0..n {
        let p = i < 2 || r.random_bool(pos_rate);
        let shift = if p { 1.5 } else { 0.0 };
        x.push_row(&[r.random_range(0.0..1.0) + shift, r.random_range(-3.0..3.0), 10.0 * r.random::<f64>()]);
        y.push(p);
    }
    let groups = (0..n).map(|i| format!("g{}", i % 7)).collect();
    Dataset::new(x, y, groups, (0..n as i64).collect()).unwrap()
}

fn bytes(ds: &Dataset) -> Vec<u8> {
    let mut out: Vec<u8> = ds.x.as_slice().iter().flat_map(|v| v.to_bits().to_le_bytes()).collect();
    out.extend(ds.y.iter().map(|&b| u8::from(b)));
    out.extend(format!("{:?}{:?}{:?}", ds.groups, ds.t, ds.origin).into_bytes());
    out
}

fn on_segment(p: &[f64], a: &[f64], b: &[f64]) -> bool {
    let (j, span) = a.iter().zip(b).map(|(u, v)| (v - u).abs()).enumerate().fold((0, 0.0), |m, (j, d)| if d > m.1 { (j, d) } else { m });
    if span == 0.0 {
        return p.iter().zip(a).all(|(u, v)| (u - v).abs() <= SEGMENT_TOL);
    }
    let u = (p[j] - a[j]) / (b[j] - a[j]);
    (-SEGMENT_TOL..=1.0 + SEGMENT_TOL).contains(&u)
        && p.iter().zip(a).zip(b).all(|((&pk, &ak), &bk)| (pk - (ak + u * (bk - ak))).abs() <= SEGMENT_TOL * (1.0 + ak.abs().max(bk.abs())))
}

fn c7_resampling() -> Outcome {
    let mut unbalanced = 0;
    let mut nondeterministic = 0;
    let mut runs = 0;
    for s in 0..10u64 {
        let ds = imbalanced(700 + s, 150 + 20 * s as usize, 0.1 + 0.03 * s as f64);
        for strategy in [Strategy::Ru, Strategy::Ro, Strategy::Smote] {
            let out = resample(&ds, strategy, s).unwrap();
            unbalanced += usize::from(out.positives() != out.negatives());
            nondeterministic += usize::from(bytes(&out) != bytes(&resample(&ds, strategy, s).unwrap()));
            runs += 1;
        }
        for strategy in [Strategy::Adasyn, Strategy::Tomek, Strategy::Nr] {
            nondeterministic += usize::from(bytes(&resample(&ds, strategy, s).unwrap()) != bytes(&resample(&ds, strategy, s).unwrap()));
        }
    }

    let (mut points, mut off_segment, mut seed) = (0, 0, 0);
    while points < SMOTE_POINTS {
        let ds = imbalanced(7_000 + seed, 200, 0.15);
        let out = resample(&ds, Strategy::Smote, seed).unwrap();
        seed += 1;
        let minority_label = ds.positives() <= ds.negatives();
        let minority: Vec<usize> = (0..ds.len()).filter(|&i| ds.y[i] == minority_label).collect();
        for (i, origin) in out.origin.iter().enumerate() {
            let RowOrigin::Synthetic { seed_row } = *origin else { continue };
            if points == SMOTE_POINTS {
                break;
            }
            points += 1;
            let p = out.x.row(i);
            let ok = out.y[i] == minority_label
                && minority.contains(&seed_row)
                && minority.iter().any(|&j| j != seed_row && on_segment(p, ds.x.row(seed_row), ds.x.row(j)));
            off_segment += usize::from(!ok);
        }
    }
    pass(
        unbalanced == 0 && off_segment == 0 && nondeterministic == 0,
        format!(
            "{unbalanced}/{runs} RU/RO/SMOTE outputs unbalanced; {off_segment}/{points} SMOTE points off minority segments; {nondeterministic} same-seed byte differences"
        ),
    )
}

// ---------------------------------------------------------------- 8

fn c8_end_to_end() -> Outcome {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::preset(Task::AheLike);
    cfg.seed = 7;
    cfg.synth.rng_seed = 7;
    cfg.detectors = vec![DetectorKind::Cl, DetectorKind::Ll, DetectorKind::Ah];
    let corpus = Corpus::load(&cfg).unwrap();
    let prepared = pipeline::prepare_corpus(&corpus.series, &cfg.windows, &cfg.events, None).unwrap();
    let (mut rows, mut positives) = (0usize, 0usize);
    for p in &prepared {
        let c = pipeline::label_counts(p);
        rows += c.subsequences - c.dropped;
        positives += c.y;
    }
    let prevalence = positives as f64 / rows as f64;
    let report = pipeline::cross_validate(&cfg, &prepared).unwrap();
    let elapsed = start.elapsed();
    let row = |k| report.row(k).unwrap();
    let er = |k| row(k).er.mean.unwrap_or(0.0);
    let at = |k| row(k).at_minutes.mean;
    let (cl, ll) = (er(DetectorKind::Cl), er(DetectorKind::Ll));
    let a = cl >= E2E_MIN_ER && ll >= E2E_MIN_ER;
    let b = ll >= cl - E2E_LL_SLACK;
    let c = match (at(DetectorKind::Ah), at(DetectorKind::Cl), at(DetectorKind::Ll)) {
        (Some(ah), Some(c), Some(l)) => ah < c && ah < l,
        _ => false,
    };
    let fmt_at = |k| at(k).map_or("NA".to_string(), |v| format!("{v:.1}"));
    pass(
        a && b && c && elapsed < E2E_BUDGET,
        format!(
            "{} entities x {} min, prevalence {:.2}%, {}x{} CV: ER CL {cl:.3} LL {ll:.3} (min {E2E_MIN_ER}, LL slack {E2E_LL_SLACK}); AT AH {} CL {} LL {} min; (a) {a} (b) {b} (c) {c}; limit {}s",
            cfg.synth.n_entities,
            cfg.synth.minutes_per_entity,
            100.0 * prevalence,
            cfg.cv.repeats,
            cfg.cv.folds,
            fmt_at(DetectorKind::Ah),
            fmt_at(DetectorKind::Cl),
            fmt_at(DetectorKind::Ll),
            E2E_BUDGET.as_secs()
        ),
    )
}

// ---------------------------------------------------------------- 9

fn c9_cv_leakage() -> Outcome {
    let cv = CvConfig { folds: 10, repeats: 1 };
    let mut violations = 0;
    let mut tested = vec![0usize; 30];
    for s in plan(30, &cv, 9).unwrap() {
        let sets = [&s.train, &s.valid, &s.test];
        for (i, a) in sets.iter().enumerate() {
            for b in &sets[i + 1..] {
                violations += a.iter().filter(|e| b.contains(e)).count();
            }
        }
        violations += usize::from(s.train.len() + s.valid.len() + s.test.len() != 30);
        for &t in &s.test {
            tested[t] += 1;
        }
    }
    let not_once = tested.iter().filter(|&&c| c != 1).count();

    let mut cfg = ExperimentConfig::preset(Task::AheLike);
    cfg.synth.n_entities = 30;
    cfg.synth.minutes_per_entity = 600;
    let corpus = Corpus::load(&cfg).unwrap();
    let prepared = pipeline::prepare_corpus(&corpus.series, &cfg.windows, &cfg.events, None).unwrap();
    let report = cv_harness(&prepared, &[cfg.detector_spec(DetectorKind::Ah)], &cv, &cfg.matching, 9).unwrap();
    let harness_tested: usize = report.runs.iter().map(|r| r.test_entities).sum();
    pass(
        violations == 0 && not_once == 0 && harness_tested == 30 && report.runs.len() == 10,
        format!(
            "{violations} overlap violations; {not_once} entities not tested exactly once; harness tested {harness_tested} entities over {} runs",
            report.runs.len()
        ),
    )
}

// ---------------------------------------------------------------- 10

fn c10_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let text = "seed = 7\n[synth]\nn_entities = 9\nminutes_per_entity = 900\n[gbt]\nn_trees = 8\n[isoforest]\nn_trees = 20\nsubsample_size = 64\n[cv]\nfolds = 3\nrepeats = 2\n";
    let mut cfg = ExperimentConfig::from_toml(text).unwrap();
    cfg.out = dir.path().join("out");
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| pipeline::run_all(&cfg)).unwrap();
        let mut files = BTreeMap::new();
        for entry in fs::read_dir(&cfg.out).unwrap() {
            let path = entry.unwrap().path();
            files.insert(path.file_name().unwrap().to_owned(), fs::read(&path).unwrap());
        }
        fs::remove_dir_all(&cfg.out).unwrap();
        files
    };
    let a = run(1);
    let b = run(1);
    let c = run(4);
    let differing = a.keys().filter(|k| a.get(*k) != b.get(*k) || a.get(*k) != c.get(*k)).count();
    pass(
        differing == 0 && a.len() == 6 && a.len() == b.len() && a.len() == c.len(),
        format!("{differing} of {} output files differ across three runs (1, 1 and 4 threads)", a.len()),
    )
}
