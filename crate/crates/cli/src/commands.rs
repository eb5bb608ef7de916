//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use serde_json::{json, Value};
use volcast::deepnet::TrainConfig;
use volcast::econometrics::{fit, FitRecord, ModelKind};
use volcast::harness::{
    run_study, train_on_fold, write_run_dir, DailySeries, ModelSpec, StudyKind, StudyResult, StudySpec,
};
use volcast::marketdata::{build_panel, load_bars, sha256_hex, write_bars, Panel, PanelConfig, Session};
use volcast::metrics::Metric;
use volcast::synth::{simulate, GarchTruth, SimSpec};

use crate::args::{FitArgs, IngestArgs, ModelList, NetArgs, ReportArgs, SessionArgs, SimulateArgs, StudyArgs, TrainCmdArgs};
use crate::config::{existing, require, RunConfig};

/// Command failure, mapped to the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Invalid flags, configuration or inputs (exit 2).
    Usage(anyhow::Error),
    /// A model failed after inputs validated; partial results are on disk (exit 1).
    Model(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Model(_) => 1,
        }
    }
}

impl Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(e) | Failure::Model(e) => write!(f, "{e:#}"),
        }
    }
}

pub type CmdResult = Result<(), Failure>;

trait ResultExt<T> {
    fn usage(self) -> Result<T, Failure>;
    fn model(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> ResultExt<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }
    fn model(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Model(e.into()))
    }
}

fn provenance(start: Instant, extra: Value) -> Value {
    let mut p = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "threads": rayon::current_num_threads(),
        "wall_seconds": start.elapsed().as_secs_f64(),
    });
    if let (Value::Object(m), Value::Object(e)) = (&mut p, extra) {
        m.extend(e);
    }
    p
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn file_digest(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(path)
        .with_context(|| format!("creating {}", path.display()))
        .usage()
}

fn session_of(args: &mut SessionArgs) -> anyhow::Result<Session> {
    let d = Session::default();
    let open = *args.open.get_or_insert(d.open);
    let close = *args.close.get_or_insert(d.close);
    let offset = *args.utc_offset_minutes.get_or_insert(d.utc_offset_minutes);
    Ok(Session::new(open, close, offset)?)
}

fn load_panel(path: Option<PathBuf>) -> Result<(PathBuf, Panel), Failure> {
    let path = existing(path, "panel").usage()?;
    let panel = Panel::load(&path).usage()?;
    Ok((path, panel))
}

fn ticker_indices(panel: &Panel, names: &Option<Vec<String>>) -> anyhow::Result<Vec<usize>> {
    match names {
        None => Ok((0..panel.n_tickers()).collect()),
        Some(names) => names
            .iter()
            .map(|n| panel.ticker_index(n).ok_or_else(|| anyhow!("ticker {n} is not in the panel")))
            .collect(),
    }
}

/// Index of the last panel date on or before `date` (the last date when
/// `None`).
fn end_index(panel: &Panel, date: Option<chrono::NaiveDate>) -> anyhow::Result<usize> {
    let n = match date {
        Some(d) => panel.dates.partition_point(|x| *x <= d),
        None => panel.n_dates(),
    };
    n.checked_sub(1).ok_or_else(|| anyhow!("no panel dates on or before the requested end"))
}

/// Training config from network flags on top of the library defaults.
fn train_config(net: &NetArgs, seed: u64) -> anyhow::Result<TrainConfig> {
    let mut base = serde_json::to_value(TrainConfig::default())?;
    if let (Value::Object(b), Value::Object(o)) = (&mut base, serde_json::to_value(net)?) {
        b.extend(o.into_iter().filter(|(_, v)| !v.is_null()));
    }
    let mut cfg: TrainConfig = serde_json::from_value(base)?;
    cfg.seed = seed;
    cfg.validate()?;
    Ok(cfg)
}

/// Flags echoing every resolved training setting, for `meta.json`.
fn net_echo(cfg: &TrainConfig) -> anyhow::Result<NetArgs> {
    let mut v = serde_json::to_value(cfg)?;
    if let Value::Object(m) = &mut v {
        m.remove("seed");
    }
    Ok(serde_json::from_value(v)?)
}

pub fn simulate_cmd(mut a: SimulateArgs) -> CmdResult {
    let start = Instant::now();
    let out = require(a.out.clone(), "out").usage()?;
    let d = SimSpec::default();
    let session = session_of(&mut a.session).usage()?;
    let params = if a.omega.is_some() || a.alpha.is_some() || a.beta.is_some() || a.params.is_none() {
        let g = GarchTruth::default();
        vec![GarchTruth::new(
            *a.omega.get_or_insert(g.omega),
            *a.alpha.get_or_insert(g.alpha),
            *a.beta.get_or_insert(g.beta),
        )]
    } else {
        a.params.clone().unwrap_or_default()
    };
    a.params = Some(params.clone());
    let spec = SimSpec {
        n_tickers: *a.tickers.get_or_insert(d.n_tickers),
        n_days: *a.days.get_or_insert(d.n_days),
        bars_per_day: *a.bars_per_day.get_or_insert(d.bars_per_day),
        params,
        diurnal: *a.diurnal.get_or_insert(d.diurnal),
        seed: *a.seed.get_or_insert(d.seed),
        session,
        start_date: *a.start_date.get_or_insert(d.start_date),
    };
    spec.validate().usage()?;
    let sim = simulate(&spec).model()?;
    write_bars(&out, &sim.series).usage()?;
    let digest = file_digest(&out).usage()?;
    println!(
        "simulated {} tickers x {} days x {} bars (seed {}) -> {}",
        spec.n_tickers,
        spec.n_days,
        spec.bars_per_day,
        spec.seed,
        out.display()
    );
    for (i, truth) in spec.params.iter().enumerate() {
        println!(
            "  params[{i}]: omega={} alpha={} beta={} (unconditional variance {:.4})",
            truth.omega,
            truth.alpha,
            truth.beta,
            truth.unconditional_variance()
        );
    }
    println!("sha256 {digest}");
    RunConfig::new("simulate", &a, provenance(start, json!({ "sha256": digest })))
        .and_then(|m| m.save(&sidecar(&out)))
        .usage()
}

pub fn ingest_cmd(mut a: IngestArgs) -> CmdResult {
    let start = Instant::now();
    let input = existing(a.input.clone(), "input").usage()?;
    let out = require(a.out.clone(), "out").usage()?;
    let session = session_of(&mut a.session).usage()?;
    let d = PanelConfig::default();
    let config = PanelConfig {
        granularities: a.granularities.get_or_insert_with(|| d.granularities.iter().copied().collect()).iter().copied().collect(),
        rv_granularity: *a.rv_granularity.get_or_insert(d.rv_granularity),
        max_empty_fraction: *a.max_empty_fraction.get_or_insert(d.max_empty_fraction),
    };
    let loaded = load_bars(&input, session).usage()?;
    let panel = build_panel(&loaded.series, &config, Some(loaded.digest.clone())).usage()?;
    panel.save(&out).usage()?;
    println!(
        "panel: {} tickers x {} dates, granularities {:?} -> {}",
        panel.n_tickers(),
        panel.n_dates(),
        config.granularities,
        out.display()
    );
    if loaded.dropped_out_of_session > 0 {
        println!("  dropped {} out-of-session bars", loaded.dropped_out_of_session);
    }
    let mut counts = BTreeMap::new();
    for (t, name) in panel.tickers.iter().enumerate() {
        let missing = panel.missing_count(t);
        let days = panel.n_dates() - missing;
        println!("  {name}: {days} days, {missing} missing");
        counts.insert(name.clone(), json!({ "days": days, "missing": missing }));
    }
    let extra = json!({ "input_sha256": loaded.digest, "tickers": counts });
    RunConfig::new("ingest", &a, provenance(start, extra))
        .and_then(|m| m.save(&sidecar(&out)))
        .usage()
}

pub fn fit_cmd(mut a: FitArgs) -> CmdResult {
    let start = Instant::now();
    let (panel_path, panel) = load_panel(a.panel.clone())?;
    let out = require(a.out.clone(), "out").usage()?;
    let kind: ModelKind = require(a.model.clone(), "model").usage()?.parse().usage()?;
    if kind == ModelKind::Martingale {
        return Err(Failure::Usage(anyhow!("the martingale has no parameters to fit")));
    }
    let tickers = ticker_indices(&panel, &a.tickers).usage()?;
    let end = end_index(&panel, a.train_end).usage()?;
    a.train_end = Some(panel.dates[end]);
    a.model = Some(kind.to_string());
    let fits_dir = out.join("fits");
    create_dir(&fits_dir)?;

    let mut failures = Vec::new();
    for &t in &tickers {
        let name = &panel.tickers[t];
        let series = DailySeries::from_panel(&panel, t);
        let n = series.count_before(end + 1);
        let realised = kind.needs_realised().then(|| &series.rv[..n]);
        match fit(kind, &series.returns[..n], realised) {
            Ok(f) => {
                let range = (
                    panel.dates[series.dates[0]].to_string(),
                    panel.dates[series.dates[n - 1]].to_string(),
                );
                let rec = FitRecord::from_fit(&f, Some(name.clone()), Some(range));
                rec.save(fits_dir.join(format!("{name}.json"))).model()?;
                let params: Vec<String> = rec.params.iter().map(|(k, v)| format!("{k}={v:.6}")).collect();
                println!(
                    "{name}: {kind} loglik {:.4} on {} obs, converged {} | {}",
                    rec.loglik,
                    rec.n_obs,
                    rec.converged,
                    params.join(" ")
                );
                if matches!(kind, ModelKind::Igarch { .. }) {
                    println!("  sum of ARCH and GARCH coefficients = {:.12}", f.params.persistence());
                }
            }
            Err(e) => {
                log::error!("{name}: {kind} fit failed: {e}");
                failures.push(json!({ "ticker": name, "message": e.to_string() }));
            }
        }
    }
    let extra = json!({ "panel_sha256": file_digest(&panel_path).usage()?, "failures": failures });
    RunConfig::new("fit", &a, provenance(start, extra))
        .and_then(|m| m.save(&out.join("meta.json")))
        .usage()?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Model(anyhow!("{} of {} fits failed", failures.len(), tickers.len())))
    }
}

pub fn train_cmd(mut a: TrainCmdArgs) -> CmdResult {
    let start = Instant::now();
    let (panel_path, panel) = load_panel(a.panel.clone())?;
    let out = require(a.out.clone(), "out").usage()?;
    let seed = *a.seed.get_or_insert(0);
    let cfg = train_config(&a.net, seed).usage()?;
    a.net = net_echo(&cfg).usage()?;
    let tickers = ticker_indices(&panel, &a.tickers).usage()?;
    let end = end_index(&panel, a.train_end).usage()?;
    a.train_end = Some(panel.dates[end]);
    let per_day = panel.returns_per_day(cfg.granularity).usage()?;
    log::info!(
        "input length {} ({} days x {} returns at {} min)",
        cfg.receptive_field_days * per_day,
        cfg.receptive_field_days,
        per_day,
        cfg.granularity
    );
    create_dir(&out)?;
    let trained = train_on_fold(&panel, &tickers, end, &cfg);
    let trained = match trained {
        Ok(t) => t,
        Err(e @ (volcast::Error::InvalidInput(_) | volcast::Error::Missing(_))) => return Err(Failure::Usage(e.into())),
        Err(e) => {
            let extra = json!({ "panel_sha256": file_digest(&panel_path).usage()?, "error": e.to_string() });
            RunConfig::new("train", &a, provenance(start, extra))
                .and_then(|m| m.save(&out.join("meta.json")))
                .usage()?;
            return Err(Failure::Model(e.into()));
        }
    };
    let h = &trained.history;
    trained
        .net
        .save(out.join("network.json"), Some(serde_json::to_value(&cfg).usage()?))
        .model()?;
    std::fs::write(out.join("history.json"), serde_json::to_string_pretty(h).usage()?)
        .context("writing history.json")
        .model()?;
    println!(
        "trained {} layers on {} samples ({} validation): best epoch {} validation loss {:.6}{}",
        h.layers,
        h.n_train,
        h.n_validation,
        h.best_epoch,
        h.best_validation_loss,
        if h.stopped_early { " (stopped early)" } else { "" }
    );
    let extra = json!({ "panel_sha256": file_digest(&panel_path).usage()?, "input_len": h.input_len });
    RunConfig::new("train", &a, provenance(start, extra))
        .and_then(|m| m.save(&out.join("meta.json")))
        .usage()
}

pub fn study_cmd(mut a: StudyArgs) -> CmdResult {
    let start = Instant::now();
    let (panel_path, panel) = load_panel(a.panel.clone())?;
    let out = require(a.out.clone(), "out").usage()?;
    let kind = require(a.kind, "kind").usage()?;
    let train_end = require(a.train_end, "train_end").usage()?;
    let mut spec = StudySpec::new(kind, train_end);
    spec.test_end = a.test_end;
    spec.models = a.models.get_or_insert_with(|| ModelList(spec.models.clone())).0.clone();
    spec.train_tickers = a.train_tickers.clone();
    spec.test_tickers = a.test_tickers.clone();
    spec.linearity_receptive_fields = a
        .receptive_fields
        .get_or_insert_with(|| spec.linearity_receptive_fields.clone())
        .clone();
    spec.grid = a.grid.clone();
    spec.seed = *a.seed.get_or_insert(0);
    spec.train = train_config(&a.net, 0).usage()?;
    a.net = net_echo(&spec.train).usage()?;
    spec.validate().usage()?;
    if kind == StudyKind::Generalisation {
        volcast::harness::ticker_split(&panel, &spec).usage()?;
    }
    if kind == StudyKind::Grid && spec.models.iter().any(ModelSpec::is_deep) {
        log::info!("grid studies train one DeepVol per cell; deep entries in --models are ignored");
    }

    let result = run_study(&panel, &spec).usage()?;
    let extra = json!({
        "panel_sha256": file_digest(&panel_path).usage()?,
        "timings_seconds": result.timings,
        "failures": result.failures.len(),
    });
    let meta = RunConfig::new("study", &a, provenance(start, extra)).usage()?;
    write_run_dir(&out, &result, serde_json::to_value(&meta).usage()?).model()?;
    print_tables(&result);
    println!("run directory {}", out.display());
    if result.failures.is_empty() {
        Ok(())
    } else {
        for f in &result.failures {
            eprintln!("failed: {}/{}: {}", f.table, f.model, f.message);
        }
        Err(Failure::Model(anyhow!("{} model runs failed; partial results written", result.failures.len())))
    }
}

fn print_tables(result: &StudyResult) {
    for t in &result.tables {
        println!("\n[{}] n = {} (first {} test days trimmed)", t.name, t.n, t.trimmed_days);
        print!("{:<14}", "model");
        for m in Metric::ALL {
            print!("{:>12}", m.name());
        }
        println!();
        for r in &t.reports {
            print!("{:<14}", r.model);
            for m in Metric::ALL {
                print!("{:>12.4}", r.get(m));
            }
            println!();
        }
        let mut references: Vec<&str> = t.improvements.rows.iter().map(|r| r.reference.as_str()).collect();
        references.dedup();
        for reference in references {
            println!("improvement over {reference} (%)");
            for row in t.improvements.rows.iter().filter(|r| r.reference == reference && r.model != reference) {
                print!("{:<14}", row.model);
                for m in Metric::ALL {
                    match row.values.get(&m).copied().flatten() {
                        Some(v) => print!("{v:>12.3}"),
                        None => print!("{:>12}", "undefined"),
                    }
                }
                println!();
            }
        }
    }
    if let Some(tr) = &result.transfer {
        println!(
            "\ntransfer: train-ticker QLIKE {:.4}, test-ticker QLIKE {:.4}, ratio {:.4}",
            tr.train_ticker_qlike, tr.test_ticker_qlike, tr.ratio
        );
    }
}

pub fn report_cmd(a: ReportArgs) -> CmdResult {
    let run = existing(a.run, "run").usage()?;
    let path = run.join("report.json");
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading {}", path.display()))
        .usage()?;
    let mut value: Value = serde_json::from_str(&text).usage()?;
    match value.get("schema").and_then(Value::as_str) {
        Some(volcast::harness::REPORT_SCHEMA) => {}
        other => {
            return Err(Failure::Usage(anyhow!(
                "{} has schema {:?}, expected {}",
                path.display(),
                other,
                volcast::harness::REPORT_SCHEMA
            )))
        }
    }
    if let Value::Object(m) = &mut value {
        m.remove("schema");
        m.insert("forecasts".into(), Value::Array(Vec::new()));
    }
    let result: StudyResult = serde_json::from_value(value).usage()?;
    println!("{} study, seed {}", result.kind, result.spec.seed);
    print_tables(&result);
    for f in &result.failures {
        println!("failed: {}/{}: {}", f.table, f.model, f.message);
    }
    Ok(())
}
