use precursor::events::{extract_event_onsets, EventSpec, LayeredEventSpec};
use precursor::pipeline::{label_corpus, LabelCounts};
use precursor::series::{preprocess, WindowConfig};
use precursor::synth::{generate, SynthParams};

#[test]
fn intended_onsets_are_recovered_by_the_labeler() {
    let params = SynthParams { rng_seed: 7, ..SynthParams::ahe_like() };
    assert_eq!((params.n_entities, params.minutes_per_entity), (50, 2000));
    let corpus = generate(&params).unwrap();
    let (mut total, mut hit) = (0, 0);
    for s in &corpus.series {
        let (p, _) = preprocess(s).unwrap();
        let found = extract_event_onsets(&p, &EventSpec::ahe());
        for e in corpus.intended.get(s.entity_id()) {
            total += 1;
            hit += usize::from(found.iter().any(|f| (f.onset - e.onset).abs() <= 5));
        }
    }
    assert!(total > 50, "only {total} planted episodes");
    assert!(hit as f64 >= 0.95 * total as f64, "recovered {hit} of {total}");
}

fn prevalence(params: &SynthParams, events: &LayeredEventSpec) -> f64 {
    let corpus = generate(params).unwrap();
    let counts = label_corpus(&corpus.series, &WindowConfig::default(), events).unwrap();
    let sum = counts.iter().fold(LabelCounts::default(), |mut acc, (_, c)| {
        acc.subsequences += c.subsequences;
        acc.dropped += c.dropped;
        acc.y += c.y;
        acc
    });
    sum.y as f64 / (sum.subsequences - sum.dropped) as f64
}

#[test]
fn prevalence_grows_with_episode_rate() {
    let events = LayeredEventSpec::relaxed(EventSpec::ahe());
    let base = SynthParams { n_entities: 20, rng_seed: 3, ..SynthParams::ahe_like() };
    let p: Vec<f64> = [0.5, 1.35, 2.5].iter().map(|&r| prevalence(&SynthParams { episode_rate: r, ..base }, &events)).collect();
    assert!(p[0] < p[1] && p[1] < p[2], "{p:?}");
}

#[test]
fn task_presets_hit_their_prevalence_regimes() {
    let ahe = prevalence(&SynthParams { rng_seed: 7, ..SynthParams::ahe_like() }, &LayeredEventSpec::relaxed(EventSpec::ahe()));
    let te = prevalence(&SynthParams { rng_seed: 7, ..SynthParams::te_like() }, &LayeredEventSpec::relaxed(EventSpec::te()));
    assert!((0.025..0.045).contains(&ahe), "AHE-like prevalence {ahe}");
    assert!((0.115..0.155).contains(&te), "TE-like prevalence {te}");
}
