//! `precursor`: command-line front end for the early-detection pipeline.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use precursor::config::{ExperimentConfig, Overrides};
use precursor::detectors::Detector;
use precursor::events::{EventSpec, LayeredEventSpec};
use precursor::evaluation::EvalReport;
use precursor::pipeline::{self, Corpus};
use precursor::series::{filter_outliers, read_series_csv, write_series, OUTLIER_HI, OUTLIER_LO};
use precursor::synth;

#[derive(Parser)]
#[command(name = "precursor", version, about = "Layered early detection of rare threshold events in vital-sign series")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML experiment config; task presets apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `threads`; 0 uses every core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct Input {
    /// Series CSV; overrides `data.csv`. Without either, the synthetic corpus is used.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus (`series.csv`, `onsets.json`).
    Synth,
    /// Validate and summarize an input series CSV.
    Ingest(Input),
    /// Count labels and extract event episodes.
    Label {
        #[command(flatten)]
        input: Input,
        /// Main event, e.g. `90% below 60` or `90% HR above 100`.
        #[arg(long)]
        spec: Option<String>,
    },
    /// Compute and cache feature rows (`features.bin`).
    Featurize {
        #[command(flatten)]
        input: Input,
        /// Also write `features.csv`.
        #[arg(long)]
        csv: bool,
    },
    /// Fit the configured detectors and write `models/<KIND>.json`.
    Train(Input),
    /// Run saved models over a corpus and score their alarms.
    Evaluate {
        #[command(flatten)]
        input: Input,
        /// Directory holding `<KIND>.json` models; defaults to `<out>/models`.
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Render a saved cross-validation report as a table.
    Report {
        /// Defaults to `<out>/report.json`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Cross-validate every configured detector and write the report.
    RunAll,
}

impl Command {
    fn stage(&self) -> &'static str {
        match self {
            Self::Synth => "synth",
            Self::Ingest(_) => "ingest",
            Self::Label { .. } => "label",
            Self::Featurize { .. } => "featurize",
            Self::Train(_) => "train",
            Self::Evaluate { .. } => "evaluate",
            Self::Report { .. } => "report",
            Self::RunAll => "run-all",
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let stage = cli.command.stage();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{stage}]: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(g: &Global) -> Result<ExperimentConfig> {
    let overrides = Overrides { seed: g.seed, threads: g.threads, out: g.out.clone() };
    Ok(match &g.config {
        Some(path) => ExperimentConfig::load(path, &overrides)?,
        None => ExperimentConfig::from_toml_with("", &overrides)?,
    })
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.global).context("config")?;
    rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global().context("thread pool")?;
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    match cli.command {
        Command::Synth => synth_cmd(&cfg),
        Command::Ingest(input) => {
            apply_input(&mut cfg, &input)?;
            ingest_cmd(&cfg)
        }
        Command::Label { input, spec } => {
            apply_input(&mut cfg, &input)?;
            if let Some(text) = spec {
                let main = EventSpec::parse(&text, cfg.events.main().signal)?;
                cfg.events = LayeredEventSpec::relaxed(main);
                cfg.validate()?;
            }
            label_cmd(&cfg)
        }
        Command::Featurize { input, csv } => {
            apply_input(&mut cfg, &input)?;
            featurize_cmd(&cfg, csv)
        }
        Command::Train(input) => {
            apply_input(&mut cfg, &input)?;
            train_cmd(&cfg)
        }
        Command::Evaluate { input, models } => {
            apply_input(&mut cfg, &input)?;
            let dir = models.unwrap_or_else(|| cfg.out.join("models"));
            evaluate_cmd(&cfg, &dir)
        }
        Command::Report { report } => {
            let path = report.unwrap_or_else(|| cfg.out.join("report.json"));
            report_cmd(&cfg, &path)
        }
        Command::RunAll => {
            let (report, paths) = pipeline::run_all(&cfg)?;
            print!("{}", report.render_table());
            log::info!("report written to {}", paths.report_txt.display());
            Ok(())
        }
    }
}

fn apply_input(cfg: &mut ExperimentConfig, input: &Input) -> Result<()> {
    if let Some(path) = &input.input {
        cfg.data.csv = Some(path.clone());
        cfg.validate()?;
    }
    Ok(())
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    pipeline::write_file(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn record_inputs(cfg: &ExperimentConfig, corpus: &Corpus) -> Result<()> {
    write(&cfg.out.join("config.resolved.toml"), cfg.to_toml()?.as_bytes())?;
    write(&cfg.out.join("inputs.sha256"), pipeline::inputs_manifest(cfg, corpus)?.as_bytes())
}

fn synth_cmd(cfg: &ExperimentConfig) -> Result<()> {
    cfg.synth.validate()?;
    let corpus = synth::generate(&cfg.synth)?;
    let mut csv = Vec::new();
    write_series(&mut csv, &corpus.series)?;
    write(&cfg.out.join("series.csv"), &csv)?;
    write(&cfg.out.join("onsets.json"), serde_json::to_string_pretty(&corpus.intended)?.as_bytes())?;
    let c = Corpus::from_series(corpus.series, Some(corpus.intended))?;
    record_inputs(cfg, &c)?;
    println!("{} entities, {} planted episodes -> {}", c.series.len(), c.intended.as_ref().map_or(0, |l| l.total()), cfg.out.join("series.csv").display());
    Ok(())
}

fn ingest_cmd(cfg: &ExperimentConfig) -> Result<()> {
    let Some(path) = &cfg.data.csv else { bail!("ingest needs --input or data.csv") };
    let series = read_series_csv(path)?;
    let mut w = csv::Writer::from_path(cfg.out.join("ingest.csv"))?;
    w.write_record(["entity_id", "start_minute", "minutes", "outliers_removed", "all_missing"])?;
    let mut removed = 0;
    for s in &series {
        let (_, sum) = filter_outliers(s, OUTLIER_LO, OUTLIER_HI);
        removed += sum.removed;
        w.write_record([
            s.entity_id().to_string(),
            s.start_time().to_string(),
            s.len().to_string(),
            sum.removed.to_string(),
            sum.all_missing.to_string(),
        ])?;
    }
    w.flush()?;
    let c = Corpus::from_series(series, None)?;
    record_inputs(cfg, &c)?;
    println!("{} entities, {} readings outside [{OUTLIER_LO}, {OUTLIER_HI}] removed", c.series.len(), removed);
    Ok(())
}

fn label_cmd(cfg: &ExperimentConfig) -> Result<()> {
    let corpus = Corpus::load(cfg)?;
    let counts = pipeline::label_corpus(&corpus.series, &cfg.windows, &cfg.events)?;
    let mut buf = Vec::new();
    let total = pipeline::write_label_counts(&mut buf, &counts)?;
    write(&cfg.out.join("labels.csv"), &buf)?;
    let mut buf = Vec::new();
    pipeline::write_event_log(&mut buf, &pipeline::ground_truth(&corpus.series, &cfg.events)?)?;
    write(&cfg.out.join("events.csv"), &buf)?;
    record_inputs(cfg, &corpus)?;
    println!(
        "main `{}`, pre `{}`: {} sub-sequences, {} dropped, y = {}, y_s = {}, {} episodes",
        cfg.events.main(),
        cfg.events.pre(),
        total.subsequences,
        total.dropped,
        total.y,
        total.y_s,
        total.episodes
    );
    Ok(())
}

fn prepared(cfg: &ExperimentConfig) -> Result<(Corpus, Vec<pipeline::PreparedEntity>)> {
    let corpus = Corpus::load(cfg).context("ingest")?;
    let digest = pipeline::feature_digest(&corpus, &cfg.windows);
    let cache = pipeline::load_feature_cache(&cfg.out.join("features.bin"), digest)?;
    if cache.is_some() {
        log::info!("using cached features");
    }
    let p = pipeline::prepare_corpus(&corpus.series, &cfg.windows, &cfg.events, cache.as_ref()).context("featurize")?;
    Ok((corpus, p))
}

fn featurize_cmd(cfg: &ExperimentConfig, csv: bool) -> Result<()> {
    let corpus = Corpus::load(cfg).context("ingest")?;
    let p = pipeline::prepare_corpus(&corpus.series, &cfg.windows, &cfg.events, None)?;
    let table = pipeline::feature_table(&p, pipeline::feature_digest(&corpus, &cfg.windows));
    let mut bin = Vec::new();
    table.write_binary(&mut bin)?;
    write(&cfg.out.join("features.bin"), &bin)?;
    if csv {
        let mut text = Vec::new();
        table.write_csv(&mut text)?;
        write(&cfg.out.join("features.csv"), &text)?;
    }
    record_inputs(cfg, &corpus)?;
    println!("{} rows x {} features -> {}", table.x.rows(), table.x.cols(), cfg.out.join("features.bin").display());
    Ok(())
}

fn train_cmd(cfg: &ExperimentConfig) -> Result<()> {
    let (corpus, p) = prepared(cfg)?;
    let models = pipeline::train_models(cfg, &p)?;
    let dir = cfg.out.join("models");
    for det in &models {
        write(&dir.join(format!("{}.json", det.kind())), det.to_json()?.as_bytes())?;
    }
    record_inputs(cfg, &corpus)?;
    println!("{} models -> {}", models.len(), dir.display());
    Ok(())
}

fn evaluate_cmd(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let (corpus, p) = prepared(cfg)?;
    let mut rows = vec!["detector,events,captured,true_alarms,false_alarms,obsolete_alarms,dfp,er,rp,at_minutes,fa_per_hour,fa_disc_per_hour".to_string()];
    let na = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
    let mut summary = Vec::new();
    for kind in &cfg.detectors {
        let path = dir.join(format!("{kind}.json"));
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let det = Detector::from_json(&text).with_context(|| path.display().to_string())?;
        let alarms = pipeline::detect(&det, &p)?;
        let mut buf = Vec::new();
        alarms.write_csv(&mut buf, *kind)?;
        write(&cfg.out.join("alarms").join(format!("{kind}.csv")), &buf)?;
        let m = pipeline::score(cfg, &p, &alarms);
        rows.push(format!(
            "{kind},{},{},{},{},{},{},{},{},{},{},{}",
            m.events,
            m.captured,
            m.true_alarms,
            m.false_alarms,
            m.obsolete_alarms,
            m.dfp,
            na(m.er),
            na(m.rp),
            na(m.at_minutes),
            na(m.fa_per_hour),
            na(m.fa_disc_per_hour)
        ));
        summary.push((kind.to_string(), m));
    }
    rows.push(String::new());
    write(&cfg.out.join("evaluation.csv"), rows.join("\n").as_bytes())?;
    let json: serde_json::Map<String, serde_json::Value> =
        summary.into_iter().map(|(k, m)| (k, serde_json::to_value(m).expect("metrics serialize"))).collect();
    write(&cfg.out.join("evaluation.json"), serde_json::to_string_pretty(&json)?.as_bytes())?;
    record_inputs(cfg, &corpus)?;
    print!("{}", rows.join("\n"));
    Ok(())
}

fn report_cmd(cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let report = EvalReport::from_json(&text)?;
    let table = report.render_table();
    write(&cfg.out.join("report.txt"), table.as_bytes())?;
    print!("{table}");
    Ok(())
}
