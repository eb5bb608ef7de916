//! The four studies.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::classical::ClassicalTrack;
use super::deep::{predict_next, predict_targets, train_on_fold};
use super::spec::{default_grid, derive_seed, GridCell, ModelSpec, StudyKind, StudySpec};
use crate::deepnet::{TrainConfig, TrainHistory};
use crate::econometrics::ModelKind;
use crate::error::{Error, Result};
use crate::forecast::{ForecastRecord, ForecastSet, RecordKey};
use crate::marketdata::Panel;
use crate::metrics::{evaluate, improvement_table, ImprovementTable, MetricsReport};

/// Models used as improvement references when present.
pub const REFERENCES: [&str; 2] = ["martingale", "heavy"];

/// Seed indices of the out-of-sample DeepVol runs.
const DEEPVOL_INDEX: u64 = 0;
const DEEPVOL_RV_INDEX: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Folds {
    /// Panel index of the last training date.
    pub train_end: usize,
    /// Panel indices of the test dates.
    pub test: Vec<usize>,
}

pub fn folds(panel: &Panel, spec: &StudySpec) -> Result<Folds> {
    let n_train = panel.dates.partition_point(|d| *d <= spec.train_end);
    if n_train == 0 {
        return Err(Error::invalid(format!("no panel dates on or before train end {}", spec.train_end)));
    }
    let test: Vec<usize> = (n_train..panel.n_dates())
        .filter(|&i| spec.test_end.is_none_or(|end| panel.dates[i] <= end))
        .collect();
    if test.is_empty() {
        return Err(Error::invalid(format!("no panel dates after train end {}", spec.train_end)));
    }
    Ok(Folds {
        train_end: n_train - 1,
        test,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyTable {
    pub name: String,
    /// Records per model after alignment and trimming.
    pub n: usize,
    /// Leading test days dropped from every model in this table.
    pub trimmed_days: usize,
    pub reports: Vec<MetricsReport>,
    pub improvements: ImprovementTable,
}

impl StudyTable {
    pub fn report(&self, model: &str) -> Option<&MetricsReport> {
        self.reports.iter().find(|r| r.model == model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub table: String,
    pub model: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub label: String,
    pub seed: u64,
    pub history: TrainHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transfer {
    pub train_ticker_qlike: f64,
    pub test_ticker_qlike: f64,
    /// test / train.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub kind: StudyKind,
    pub spec: StudySpec,
    pub tables: Vec<StudyTable>,
    /// Aligned forecasts, one set per (table-specific) model label.
    pub forecasts: Vec<ForecastSet>,
    pub failures: Vec<Failure>,
    pub training: Vec<TrainingSummary>,
    pub transfer: Option<Transfer>,
    /// Wall-clock seconds per stage (not part of the serialised report).
    #[serde(skip)]
    pub timings: BTreeMap<String, f64>,
}

impl StudyResult {
    pub fn table(&self, name: &str) -> Option<&StudyTable> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn forecast_set(&self, label: &str) -> Option<&ForecastSet> {
        self.forecasts.iter().find(|f| f.model == label)
    }
}

struct Ctx<'a> {
    panel: &'a Panel,
    spec: &'a StudySpec,
    folds: Folds,
    failures: Vec<Failure>,
    training: Vec<TrainingSummary>,
    timings: BTreeMap<String, f64>,
}

fn classical_records(panel: &Panel, kind: ModelKind, tickers: &[usize], folds: &Folds) -> Result<Vec<ForecastRecord>> {
    let per_ticker: Vec<Result<Vec<ForecastRecord>>> = tickers
        .par_iter()
        .map(|&t| {
            let track = ClassicalTrack::build(panel, kind, t, folds.train_end)
                .map_err(|e| Error::invalid(format!("{}: {e}", panel.tickers[t])))?;
            let mut out = Vec::new();
            for &d in &folds.test {
                let Some(cell) = panel.cell(t, d) else { continue };
                match track.forecast(d) {
                    Ok(h) => out.push(ForecastRecord {
                        ticker: panel.tickers[t].clone(),
                        date: panel.dates[d],
                        forecast: h,
                        proxy: cell.rv,
                    }),
                    Err(Error::Missing(_)) => {}
                    Err(e) => return Err(e),
                }
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::new();
    for r in per_ticker {
        all.extend(r?);
    }
    Ok(all)
}

fn deep_records(
    panel: &Panel,
    net: &crate::deepnet::Network<f64>,
    tickers: &[usize],
    folds: &Folds,
) -> Result<Vec<ForecastRecord>> {
    let targets: Vec<(usize, usize)> = tickers
        .iter()
        .flat_map(|&t| folds.test.iter().map(move |&d| (t, d)))
        .filter(|&(t, d)| panel.cell(t, d).is_some())
        .collect();
    let values = predict_targets(net, panel, &targets)?;
    Ok(targets
        .iter()
        .zip(values)
        .filter_map(|(&(t, d), h)| {
            h.map(|h| ForecastRecord {
                ticker: panel.tickers[t].clone(),
                date: panel.dates[d],
                forecast: h,
                proxy: panel.cell(t, d).expect("filtered to present cells").rv,
            })
        })
        .collect())
}

/// Training configuration of a DeepVol run: the study's, with the fusion flag
/// and a derived seed.
pub fn deep_config(spec: &StudySpec, fusion: bool, index: u64, cell: Option<GridCell>) -> TrainConfig {
    let mut cfg = spec.train.clone();
    cfg.fusion = fusion;
    cfg.seed = derive_seed(spec.seed, index);
    if let Some(c) = cell {
        cfg.granularity = c.granularity;
        cfg.receptive_field_days = c.receptive_field_days;
    }
    cfg
}

fn oos_index(model: ModelSpec) -> u64 {
    if model == ModelSpec::DeepVolRv {
        DEEPVOL_RV_INDEX
    } else {
        DEEPVOL_INDEX
    }
}

struct DeepOutcome {
    result: Result<(TrainHistory, Vec<ForecastSet>)>,
    seconds: f64,
}

fn train_and_predict(
    panel: &Panel,
    folds: &Folds,
    label: &str,
    config: &TrainConfig,
    train_tickers: &[usize],
    eval_tickers: &[&[usize]],
) -> DeepOutcome {
    let start = Instant::now();
    let result = train_on_fold(panel, train_tickers, folds.train_end, config).and_then(|trained| {
        let sets = eval_tickers
            .iter()
            .map(|ts| deep_records(panel, &trained.net, ts, folds).and_then(|r| ForecastSet::new(label, r)))
            .collect::<Result<Vec<_>>>()?;
        Ok((trained.history, sets))
    });
    DeepOutcome {
        result,
        seconds: start.elapsed().as_secs_f64(),
    }
}

impl Ctx<'_> {
    fn fail(&mut self, table: &str, model: &str, e: &Error) {
        log::warn!("{table}/{model} failed: {e}");
        self.failures.push(Failure {
            table: table.into(),
            model: model.into(),
            message: e.to_string(),
        });
    }

    fn classical(&mut self, table: &str, kind: ModelKind, tickers: &[usize]) -> Option<ForecastSet> {
        let start = Instant::now();
        let label = kind.to_string();
        let out = classical_records(self.panel, kind, tickers, &self.folds).and_then(|r| ForecastSet::new(label.clone(), r));
        self.timings.insert(format!("{table}/{label}"), start.elapsed().as_secs_f64());
        match out {
            Ok(s) => Some(s),
            Err(e) => {
                self.fail(table, &label, &e);
                None
            }
        }
    }

    fn deep(
        &mut self,
        table: &str,
        label: &str,
        config: &TrainConfig,
        train_tickers: &[usize],
        eval_tickers: &[&[usize]],
    ) -> Option<Vec<ForecastSet>> {
        let outcome = train_and_predict(self.panel, &self.folds, label, config, train_tickers, eval_tickers);
        self.record_deep(table, label, config, outcome)
    }

    fn record_deep(&mut self, table: &str, label: &str, config: &TrainConfig, outcome: DeepOutcome) -> Option<Vec<ForecastSet>> {
        self.timings.insert(format!("{table}/{label}"), outcome.seconds);
        match outcome.result {
            Ok((history, sets)) => {
                self.training.push(TrainingSummary {
                    label: format!("{table}/{label}"),
                    seed: config.seed,
                    history,
                });
                Some(sets)
            }
            Err(e) => {
                self.fail(table, label, &e);
                None
            }
        }
    }

    /// Aligns `sets` on their common keys, drops the first `trim` test days and
    /// scores every model.
    fn score(&mut self, name: &str, sets: &[ForecastSet], trim: usize) -> (Option<StudyTable>, Vec<ForecastSet>) {
        if sets.is_empty() {
            return (None, Vec::new());
        }
        let mut keys: BTreeSet<RecordKey> = sets[0].keys();
        for s in &sets[1..] {
            let other = s.keys();
            keys.retain(|k| other.contains(k));
        }
        let dropped: BTreeSet<_> = self.folds.test.iter().take(trim).map(|&d| self.panel.dates[d]).collect();
        keys.retain(|(_, d)| !dropped.contains(d));
        let aligned: Vec<ForecastSet> = sets.iter().map(|s| s.restrict(&keys)).collect();
        let mut reports = Vec::new();
        for s in &aligned {
            match evaluate(s) {
                Ok(r) => reports.push(r),
                Err(e) => self.fail(name, &s.model, &e),
            }
        }
        let refs: Vec<&str> = REFERENCES.iter().copied().filter(|r| reports.iter().any(|m| m.model == *r)).collect();
        let improvements = improvement_table(&reports, &refs).expect("references filtered to present reports");
        let table = StudyTable {
            name: name.into(),
            n: keys.len(),
            trimmed_days: trim,
            reports,
            improvements,
        };
        (Some(table), aligned)
    }
}

fn all_tickers(panel: &Panel) -> Vec<usize> {
    (0..panel.n_tickers()).collect()
}

fn max_rf(spec: &StudySpec) -> usize {
    if spec.models.iter().any(ModelSpec::is_deep) {
        spec.train.receptive_field_days
    } else {
        1
    }
}

fn finish(ctx: Ctx<'_>, kind: StudyKind, tables: Vec<StudyTable>, forecasts: Vec<ForecastSet>, transfer: Option<Transfer>) -> StudyResult {
    StudyResult {
        kind,
        spec: ctx.spec.clone(),
        tables,
        forecasts,
        failures: ctx.failures,
        training: ctx.training,
        transfer,
        timings: ctx.timings,
    }
}

fn context<'a>(panel: &'a Panel, spec: &'a StudySpec) -> Result<Ctx<'a>> {
    spec.validate()?;
    Ok(Ctx {
        panel,
        spec,
        folds: folds(panel, spec)?,
        failures: Vec::new(),
        training: Vec::new(),
        timings: BTreeMap::new(),
    })
}

pub fn run_oos(panel: &Panel, spec: &StudySpec) -> Result<StudyResult> {
    let mut ctx = context(panel, spec)?;
    let tickers = all_tickers(panel);
    let mut sets = Vec::new();
    for &model in &spec.models {
        match model {
            ModelSpec::Classical(kind) => sets.extend(ctx.classical("oos", kind, &tickers)),
            deep => {
                let cfg = deep_config(spec, deep == ModelSpec::DeepVolRv, oos_index(deep), None);
                if let Some(mut s) = ctx.deep("oos", &deep.label(), &cfg, &tickers, &[&tickers]) {
                    sets.push(s.remove(0));
                }
            }
        }
    }
    let (table, aligned) = ctx.score("oos", &sets, max_rf(spec) - 1);
    Ok(finish(ctx, StudyKind::Oos, table.into_iter().collect(), aligned, None))
}

pub fn grid_label(cell: GridCell) -> String {
    format!("g{}_rf{}", cell.granularity, cell.receptive_field_days)
}

pub fn run_grid(panel: &Panel, spec: &StudySpec) -> Result<StudyResult> {
    let mut ctx = context(panel, spec)?;
    let tickers = all_tickers(panel);
    let cells = spec.grid.clone().unwrap_or_else(default_grid);
    let classical: Vec<ForecastSet> = spec
        .models
        .iter()
        .filter_map(|m| match m {
            ModelSpec::Classical(k) => Some(*k),
            _ => None,
        })
        .collect::<Vec<_>>()
        .into_iter()
        .filter_map(|k| ctx.classical("grid", k, &tickers))
        .collect();
    let configs: Vec<TrainConfig> = (0..cells.len())
        .map(|i| deep_config(spec, false, i as u64, Some(cells[i])))
        .collect();
    // cells train independently; results are recorded in cell order
    let outcomes: Vec<DeepOutcome> = configs
        .par_iter()
        .map(|cfg| train_and_predict(panel, &ctx.folds, "deepvol", cfg, &tickers, &[&tickers]))
        .collect();
    let mut tables = Vec::new();
    let mut forecasts = Vec::new();
    for ((&cell, cfg), outcome) in cells.iter().zip(&configs).zip(outcomes) {
        let name = grid_label(cell);
        let mut sets = classical.clone();
        match ctx.record_deep(&name, "deepvol", cfg, outcome) {
            Some(mut s) => sets.push(s.remove(0)),
            None => continue,
        }
        let (table, aligned) = ctx.score(&name, &sets, cell.receptive_field_days - 1);
        tables.extend(table);
        forecasts.extend(aligned.into_iter().map(|mut s| {
            s.model = format!("{name}/{}", s.model);
            s
        }));
    }
    Ok(finish(ctx, StudyKind::Grid, tables, forecasts, None))
}

pub fn run_linearity(panel: &Panel, spec: &StudySpec) -> Result<StudyResult> {
    let mut ctx = context(panel, spec)?;
    let tickers = all_tickers(panel);
    let classical: Vec<ForecastSet> = spec
        .models
        .iter()
        .filter_map(|m| match m {
            ModelSpec::Classical(k) => Some(*k),
            _ => None,
        })
        .collect::<Vec<_>>()
        .into_iter()
        .filter_map(|k| ctx.classical("linearity", k, &tickers))
        .collect();
    let mut tables = Vec::new();
    let mut forecasts = Vec::new();
    for (i, &rf) in spec.linearity_receptive_fields.iter().enumerate() {
        let name = format!("rf{rf}");
        let cell = GridCell {
            granularity: spec.train.granularity,
            receptive_field_days: rf,
        };
        let mut sets = classical.clone();
        // plain and fusion runs share a seed, so they start from the same network
        for (label, fusion) in [("deepvol", false), ("deepvol+rv", true)] {
            let cfg = deep_config(spec, fusion, i as u64, Some(cell));
            if let Some(mut s) = ctx.deep(&name, label, &cfg, &tickers, &[&tickers]) {
                sets.push(s.remove(0));
            }
        }
        let (table, aligned) = ctx.score(&name, &sets, rf - 1);
        tables.extend(table);
        forecasts.extend(aligned.into_iter().map(|mut s| {
            s.model = format!("{name}/{}", s.model);
            s
        }));
    }
    Ok(finish(ctx, StudyKind::Linearity, tables, forecasts, None))
}

/// Ticker indices of the generalisation split.
pub fn ticker_split(panel: &Panel, spec: &StudySpec) -> Result<(Vec<usize>, Vec<usize>)> {
    let lookup = |names: &[String]| -> Result<Vec<usize>> {
        names
            .iter()
            .map(|n| panel.ticker_index(n).ok_or_else(|| Error::invalid(format!("unknown ticker {n}"))))
            .collect()
    };
    let n = panel.n_tickers();
    let (train, test) = match (&spec.train_tickers, &spec.test_tickers) {
        (Some(a), Some(b)) => (lookup(a)?, lookup(b)?),
        (Some(a), None) => {
            let a = lookup(a)?;
            let b = (0..n).filter(|i| !a.contains(i)).collect();
            (a, b)
        }
        (None, Some(b)) => {
            let b = lookup(b)?;
            let a = (0..n).filter(|i| !b.contains(i)).collect();
            (a, b)
        }
        (None, None) => ((0..n / 2).collect(), (n / 2..n).collect()),
    };
    if train.is_empty() || test.is_empty() {
        return Err(Error::invalid("generalisation needs nonempty train and test ticker sets"));
    }
    if train.iter().any(|t| test.contains(t)) {
        return Err(Error::invalid("train and test ticker sets overlap"));
    }
    Ok((train, test))
}

pub fn run_generalisation(panel: &Panel, spec: &StudySpec) -> Result<StudyResult> {
    let mut ctx = context(panel, spec)?;
    let (train_t, test_t) = ticker_split(panel, spec)?;
    let mut test_sets = Vec::new();
    let mut train_sets = Vec::new();
    for &model in &spec.models {
        match model {
            ModelSpec::Classical(kind) => {
                test_sets.extend(ctx.classical("test_tickers", kind, &test_t));
                train_sets.extend(ctx.classical("train_tickers", kind, &train_t));
            }
            deep => {
                let cfg = deep_config(spec, deep == ModelSpec::DeepVolRv, oos_index(deep), None);
                if let Some(mut s) = ctx.deep("generalisation", &deep.label(), &cfg, &train_t, &[&test_t, &train_t]) {
                    train_sets.push(s.remove(1));
                    test_sets.push(s.remove(0));
                }
            }
        }
    }
    let trim = max_rf(spec) - 1;
    let (test_table, test_aligned) = ctx.score("test_tickers", &test_sets, trim);
    let (train_table, train_aligned) = ctx.score("train_tickers", &train_sets, trim);
    let transfer = match (&test_table, &train_table) {
        (Some(a), Some(b)) => match (a.report("deepvol"), b.report("deepvol")) {
            (Some(te), Some(tr)) => Some(Transfer {
                train_ticker_qlike: tr.qlike,
                test_ticker_qlike: te.qlike,
                ratio: te.qlike / tr.qlike,
            }),
            _ => None,
        },
        _ => None,
    };
    let forecasts = test_aligned
        .into_iter()
        .map(|mut s| {
            s.model = format!("test_tickers/{}", s.model);
            s
        })
        .chain(train_aligned.into_iter().map(|mut s| {
            s.model = format!("train_tickers/{}", s.model);
            s
        }))
        .collect();
    let tables = test_table.into_iter().chain(train_table).collect();
    Ok(finish(ctx, StudyKind::Generalisation, tables, forecasts, transfer))
}

pub fn run_study(panel: &Panel, spec: &StudySpec) -> Result<StudyResult> {
    match spec.kind {
        StudyKind::Oos => run_oos(panel, spec),
        StudyKind::Grid => run_grid(panel, spec),
        StudyKind::Linearity => run_linearity(panel, spec),
        StudyKind::Generalisation => run_generalisation(panel, spec),
    }
}

/// Refits `model` from scratch on `panel` exactly as the out-of-sample study
/// does and forecasts the day after the panel's last date for `ticker`.
pub fn forecast_next(panel: &Panel, spec: &StudySpec, model: ModelSpec, ticker: &str) -> Result<f64> {
    let t = panel.ticker_index(ticker).ok_or_else(|| Error::invalid(format!("unknown ticker {ticker}")))?;
    let f = folds_for_refit(panel, spec)?;
    match model {
        ModelSpec::Classical(kind) => ClassicalTrack::build(panel, kind, t, f)?.forecast_next(),
        deep => {
            let cfg = deep_config(spec, deep == ModelSpec::DeepVolRv, oos_index(deep), None);
            let trained = train_on_fold(panel, &all_tickers(panel), f, &cfg)?;
            predict_next(&trained.net, panel, t)
        }
    }
}

fn folds_for_refit(panel: &Panel, spec: &StudySpec) -> Result<usize> {
    let n_train = panel.dates.partition_point(|d| *d <= spec.train_end);
    if n_train == 0 {
        return Err(Error::invalid("no training dates"));
    }
    Ok(n_train - 1)
}
