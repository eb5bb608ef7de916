use std::collections::BTreeSet;

use volcast::deepnet::TrainConfig;
use volcast::econometrics::ModelKind;
use volcast::harness::{
    forecast_next, run_generalisation, run_grid, run_linearity, run_oos, write_run_dir, GridCell, ModelSpec, StudyKind,
    StudySpec,
};
use volcast::marketdata::{build_panel, Panel, PanelConfig};
use volcast::synth::{simulate, GarchTruth, SimSpec};

fn panel(n_tickers: usize, n_days: usize, seed: u64) -> Panel {
    panel_with(n_tickers, n_days, seed, &[5])
}

fn panel_with(n_tickers: usize, n_days: usize, seed: u64, granularities: &[u32]) -> Panel {
    let spec = SimSpec {
        n_tickers,
        n_days,
        seed,
        ..SimSpec::default()
    };
    let config = PanelConfig::with_granularities(granularities.iter().copied());
    build_panel(&simulate(&spec).unwrap().series, &config, None).unwrap()
}

fn quick_train() -> TrainConfig {
    TrainConfig {
        max_epochs: 4,
        patience: 2,
        batch_size: 32,
        channels: 4,
        ..TrainConfig::default()
    }
}

fn spec(kind: StudyKind, panel: &Panel, train_days: usize, models: Vec<ModelSpec>) -> StudySpec {
    let mut s = StudySpec::new(kind, panel.dates[train_days - 1]);
    s.models = models;
    s.train = quick_train();
    s.seed = 11;
    s
}

use ModelKind::{Heavy, Martingale};
const GARCH: ModelKind = ModelKind::Garch { p: 1, q: 1 };
use ModelSpec::{Classical, DeepVol, DeepVolRv};

#[test]
fn martingale_is_exact_on_constant_rv() {
    let mut p = panel(2, 60, 1);
    for row in p.cells.iter_mut() {
        for cell in row.iter_mut().flatten() {
            cell.rv = 2.5;
        }
    }
    let r = run_oos(&p, &spec(StudyKind::Oos, &p, 40, vec![Classical(Martingale)])).unwrap();
    let t = r.table("oos").unwrap();
    assert_eq!(t.n, 2 * 20);
    assert_eq!(t.report("martingale").unwrap().mae, 0.0);
}

#[test]
fn every_model_is_scored_on_the_same_keys() {
    let p = panel(2, 180, 2);
    let mut s = spec(StudyKind::Oos, &p, 140, vec![Classical(Martingale), Classical(GARCH), Classical(Heavy), DeepVol]);
    s.train.receptive_field_days = 2;
    let r = run_oos(&p, &s).unwrap();
    assert!(r.failures.is_empty(), "{:?}", r.failures);
    let t = r.table("oos").unwrap();
    assert_eq!(t.trimmed_days, 1);
    assert_eq!(t.n, 2 * 39);
    let keys = r.forecasts[0].keys();
    for f in &r.forecasts {
        assert_eq!(f.keys(), keys, "{}", f.model);
    }
    let first_test = p.dates[140];
    assert!(keys.iter().all(|(_, d)| *d > first_test));
    assert_eq!(t.reports.len(), 4);
    assert!(t.improvements.rows.iter().any(|row| row.reference == "heavy"));
}

#[test]
fn failures_are_recorded_and_the_study_continues() {
    // fewer than 100 training days: GARCH cannot be fitted
    let p = panel(1, 80, 3);
    let r = run_oos(&p, &spec(StudyKind::Oos, &p, 60, vec![Classical(Martingale), Classical(GARCH)])).unwrap();
    assert_eq!(r.failures.len(), 1);
    assert_eq!(r.failures[0].model, "garch");
    assert_eq!(r.table("oos").unwrap().reports.len(), 1);
}

#[test]
fn forecasts_are_reproduced_from_truncated_panels() {
    let p = panel(2, 150, 4);
    let models = vec![Classical(Martingale), Classical(GARCH), Classical(Heavy), DeepVol, DeepVolRv];
    let s = spec(StudyKind::Oos, &p, 120, models.clone());
    let r = run_oos(&p, &s).unwrap();
    assert!(r.failures.is_empty(), "{:?}", r.failures);
    for model in models {
        let set = r.forecast_set(&model.label()).unwrap();
        for rec in set.records.iter().step_by(17).take(3) {
            let d = p.date_index(rec.date).unwrap();
            let truncated = p.truncate_after(p.dates[d - 1]);
            let again = forecast_next(&truncated, &s, model, &rec.ticker).unwrap();
            assert_eq!(again.to_bits(), rec.forecast.to_bits(), "{} {}", model.label(), rec.date);
        }
    }
}

#[test]
fn one_cell_grid_matches_the_oos_deepvol_branch() {
    let p = panel(2, 130, 5);
    let oos = run_oos(&p, &spec(StudyKind::Oos, &p, 100, vec![DeepVol])).unwrap();
    let mut g = spec(StudyKind::Grid, &p, 100, vec![]);
    g.grid = Some(vec![GridCell {
        granularity: 5,
        receptive_field_days: 1,
    }]);
    let grid = run_grid(&p, &g).unwrap();
    let a = oos.forecast_set("deepvol").unwrap();
    let b = grid.forecast_set("g5_rf1/deepvol").unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(oos.training[0].history.input_len, 77);
}

#[test]
fn grid_cells_trim_their_own_tables() {
    let p = panel_with(1, 130, 6, &[5, 15]);
    let mut g = spec(StudyKind::Grid, &p, 100, vec![Classical(Martingale)]);
    g.grid = Some(vec![
        GridCell {
            granularity: 5,
            receptive_field_days: 1,
        },
        GridCell {
            granularity: 15,
            receptive_field_days: 3,
        },
    ]);
    let r = run_grid(&p, &g).unwrap();
    assert!(r.failures.is_empty(), "{:?}", r.failures);
    let a = r.table("g5_rf1").unwrap();
    let b = r.table("g15_rf3").unwrap();
    assert_eq!((a.n, a.trimmed_days), (30, 0));
    assert_eq!((b.n, b.trimmed_days), (28, 2));
    assert_eq!(r.training[1].history.input_len, 75);

    // a cell whose granularity the panel lacks fails alone
    g.grid.as_mut().unwrap()[1].granularity = 30;
    let r = run_grid(&p, &g).unwrap();
    assert_eq!(r.tables.len(), 1);
    assert_eq!(r.failures[0].table, "g30_rf3");
}

#[test]
fn linearity_pairs_plain_and_fusion_runs() {
    let p = panel(1, 130, 7);
    let mut s = spec(StudyKind::Linearity, &p, 100, vec![]);
    s.linearity_receptive_fields = vec![1, 2];
    let r = run_linearity(&p, &s).unwrap();
    assert_eq!(r.tables.len(), 2);
    for t in &r.tables {
        let models: BTreeSet<_> = t.reports.iter().map(|m| m.model.as_str()).collect();
        assert_eq!(models, BTreeSet::from(["deepvol", "deepvol+rv"]));
    }
    assert_eq!(r.table("rf2").unwrap().trimmed_days, 1);
}

#[test]
fn generalisation_rejects_overlapping_tickers() {
    let p = panel(2, 130, 8);
    let mut s = spec(StudyKind::Generalisation, &p, 100, vec![DeepVol]);
    s.train_tickers = Some(vec![p.tickers[0].clone()]);
    s.test_tickers = Some(vec![p.tickers[0].clone()]);
    assert!(run_generalisation(&p, &s).is_err());
}

#[test]
fn cloned_ticker_gets_in_sample_predictions() {
    let mut p = panel(2, 130, 9);
    let copy: Vec<_> = p.cells[0]
        .iter()
        .map(|c| {
            c.clone().map(|mut c| {
                c.ticker = p.tickers[1].clone();
                c
            })
        })
        .collect();
    p.cells[1] = copy;
    let mut s = spec(StudyKind::Generalisation, &p, 100, vec![Classical(Martingale), DeepVol]);
    s.train_tickers = Some(vec![p.tickers[0].clone()]);
    let r = run_generalisation(&p, &s).unwrap();
    let test = r.forecast_set("test_tickers/deepvol").unwrap();
    let train = r.forecast_set("train_tickers/deepvol").unwrap();
    assert_eq!(test.len(), train.len());
    for (a, b) in test.records.iter().zip(&train.records) {
        assert_eq!(a.date, b.date);
        assert_eq!(a.forecast.to_bits(), b.forecast.to_bits());
    }
    let transfer = r.transfer.unwrap();
    assert_eq!(transfer.ratio, 1.0);
}

#[test]
fn run_directory_is_written_deterministically() {
    let p = panel(2, 140, 10);
    let s = spec(StudyKind::Oos, &p, 110, vec![Classical(Martingale), Classical(GARCH), DeepVol]);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let r = run_oos(&p, &s).unwrap();
        write_run_dir(d.path(), &r, serde_json::json!({"seed": s.seed})).unwrap();
    }
    let read = |d: &tempfile::TempDir, f: &str| std::fs::read(d.path().join(f)).unwrap();
    let csv = String::from_utf8(read(&dirs[0], "report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("table,model,n,mae,rmse,smape,qlike,me,medae"));
    for f in ["report.csv", "report.json", "forecasts/deepvol.csv", "forecasts/garch.csv"] {
        assert_eq!(read(&dirs[0], f), read(&dirs[1], f), "{f}");
    }
    let meta: serde_json::Value = serde_json::from_slice(&read(&dirs[0], "meta.json")).unwrap();
    assert_eq!(meta, serde_json::json!({"seed": s.seed}));
    assert!(dirs[0].path().join("series").read_dir().unwrap().count() >= 2);
}

#[test]
fn shared_parameters_transfer() {
    let spec_sim = SimSpec {
        n_tickers: 2,
        n_days: 130,
        params: vec![GarchTruth::new(0.3, 0.1, 0.6)],
        seed: 12,
        ..SimSpec::default()
    };
    let p = build_panel(&simulate(&spec_sim).unwrap().series, &PanelConfig::default(), None).unwrap();
    let s = spec(StudyKind::Generalisation, &p, 100, vec![DeepVol]);
    let r = run_generalisation(&p, &s).unwrap();
    assert!(r.transfer.unwrap().ratio.is_finite());
}
