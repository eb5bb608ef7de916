use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn volcast(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_volcast"))
        .current_dir(dir)
        .args(args)
        .args(["--log-level", "info"])
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Simulates and ingests a small two-ticker panel into `dir/panel.json`.
fn make_panel(dir: &Path, days: &str, granularities: &str) {
    let sim = volcast(dir, &["simulate", "--days", days, "--tickers", "2", "--seed", "5", "--out", "bars.csv"]);
    assert_eq!(code(&sim), 0, "{}", stderr(&sim));
    let ing = volcast(dir, &["ingest", "--input", "bars.csv", "--granularities", granularities, "--out", "panel.json"]);
    assert_eq!(code(&ing), 0, "{}", stderr(&ing));
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_writes_expected_rows_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["simulate", "--days", "10", "--tickers", "2", "--bars-per-day", "78", "--seed", "7"];
    for out in ["a.csv", "b.csv"] {
        let o = volcast(dir.path(), &[&args[..], &["--out", out]].concat());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let a = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert_eq!(a.lines().count(), 2 * 10 * 78 + 1);
    assert_eq!(a, std::fs::read_to_string(dir.path().join("b.csv")).unwrap());
    let meta = read_json(&dir.path().join("a.csv.meta.json"));
    assert_eq!(meta["command"], "simulate");
    assert_eq!(meta["args"]["days"], 10);
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = volcast(dir.path(), &["simulate", "--alpha", "0.5", "--beta", "0.6", "--out", "x.csv"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("stationarity"), "{}", stderr(&o));
    assert!(!dir.path().join("x.csv").exists());

    let o = volcast(dir.path(), &["ingest", "--input", "missing.csv", "--out", "p.json"]);
    assert_eq!(code(&o), 2);
    let o = volcast(dir.path(), &["study", "--no-such-flag"]);
    assert_eq!(code(&o), 2);
    let o = volcast(dir.path(), &["study", "--kind", "sideways"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn help_documents_flags() {
    let dir = tempfile::tempdir().unwrap();
    let o = volcast(dir.path(), &["--help"]);
    assert_eq!(code(&o), 0);
    for cmd in ["simulate", "ingest", "fit", "train", "study", "report"] {
        assert!(String::from_utf8_lossy(&o.stdout).contains(cmd));
    }
    let o = volcast(dir.path(), &["study", "--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for flag in ["--kind", "--panel", "--train-end", "--models", "--seed", "--out", "--receptive-field", "--threads", "--config"] {
        assert!(text.contains(flag), "{flag}");
    }
}

/// Realised variance recomputed straight from the bar file: percent log
/// returns between consecutive same-day bars.
fn rv_from_bars(csv: &str) -> BTreeMap<(String, String), f64> {
    let mut prices: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        prices.entry((f[0].to_string(), f[1][..10].to_string())).or_default().push(f[2].parse().unwrap());
    }
    prices
        .into_iter()
        .map(|(k, p)| (k, p.windows(2).map(|w| (100.0 * (w[1] / w[0]).ln()).powi(2)).sum()))
        .collect()
}

#[test]
fn ingest_roundtrip_matches_rv_oracle() {
    let dir = tempfile::tempdir().unwrap();
    make_panel(dir.path(), "20", "5");
    let o = volcast(dir.path(), &["ingest", "--input", "bars.csv", "--granularities", "1,5,30", "--out", "p2.json"]);
    // the simulated bars are 5-minute, so 1-minute returns cannot be formed
    assert_eq!(code(&o), 2);

    make_panel(dir.path(), "20", "5,15,30");
    let panel = read_json(&dir.path().join("panel.json"));
    let oracle = rv_from_bars(&std::fs::read_to_string(dir.path().join("bars.csv")).unwrap());
    let mut checked = 0;
    for row in panel["cells"].as_array().unwrap() {
        for cell in row.as_array().unwrap().iter().filter(|c| !c.is_null()) {
            let keys: Vec<&String> = cell["intraday"].as_object().unwrap().keys().collect();
            assert_eq!(keys, ["15", "30", "5"]);
            let key = (cell["ticker"].as_str().unwrap().to_string(), cell["date"].as_str().unwrap().to_string());
            let rv = cell["rv"].as_f64().unwrap();
            assert!((rv - oracle[&key]).abs() <= 1e-9 * oracle[&key].max(1.0), "{key:?}");
            checked += 1;
        }
    }
    assert_eq!(checked, 40);
}

#[test]
fn ingest_keeps_exactly_the_requested_granularities() {
    let dir = tempfile::tempdir().unwrap();
    let o = volcast(dir.path(), &["simulate", "--days", "3", "--bars-per-day", "390", "--out", "minute.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = volcast(dir.path(), &["ingest", "--input", "minute.csv", "--granularities", "1,5,30", "--out", "p.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let panel = read_json(&dir.path().join("p.json"));
    let cell = &panel["cells"][0][0];
    let mut keys: Vec<u32> = cell["intraday"].as_object().unwrap().keys().map(|k| k.parse().unwrap()).collect();
    keys.sort();
    assert_eq!(keys, [1, 5, 30]);
    assert_eq!(cell["intraday"]["1"].as_array().unwrap().len(), 389);
}

#[test]
fn igarch_fit_satisfies_the_constraint() {
    let dir = tempfile::tempdir().unwrap();
    make_panel(dir.path(), "260", "5");
    let o = volcast(dir.path(), &["fit", "--model", "igarch", "--panel", "panel.json", "--out", "fit"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for t in ["SIM000", "SIM001"] {
        let rec = read_json(&dir.path().join(format!("fit/fits/{t}.json")));
        let p = rec["params"].as_object().unwrap();
        let sum: f64 = p
            .iter()
            .filter(|(k, _)| k.starts_with("alpha") || k.starts_with("beta"))
            .map(|(_, v)| v.as_f64().unwrap())
            .sum();
        assert!((sum - 1.0).abs() < 1e-12, "{sum}");
    }
}

#[test]
fn train_logs_input_length() {
    let dir = tempfile::tempdir().unwrap();
    make_panel(dir.path(), "60", "5,15");
    let o = volcast(
        dir.path(),
        &["train", "--receptive-field", "3", "--granularity", "15", "--epochs", "2", "--panel", "panel.json", "--out", "net"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("input length 75"), "{}", stderr(&o));
    assert!(dir.path().join("net/network.json").exists());
    assert_eq!(read_json(&dir.path().join("net/history.json"))["input_len"], 75);
}

#[test]
fn study_writes_report_and_replays_from_meta() {
    let dir = tempfile::tempdir().unwrap();
    make_panel(dir.path(), "200", "5");
    let panel = read_json(&dir.path().join("panel.json"));
    let train_end = panel["dates"][149].as_str().unwrap().to_string();
    let o = volcast(
        dir.path(),
        &[
            "study", "--kind", "oos", "--panel", "panel.json", "--train-end", &train_end, "--models",
            "martingale,garch(1,1),heavy,deepvol", "--seed", "42", "--epochs", "3", "--out", "runs/oos1",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = std::fs::read_to_string(dir.path().join("runs/oos1/report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 4);
    for f in ["report.json", "meta.json", "forecasts/deepvol.csv", "forecasts/martingale.csv"] {
        assert!(dir.path().join("runs/oos1").join(f).exists(), "{f}");
    }

    let replay = volcast(dir.path(), &["study", "--config", "runs/oos1/meta.json", "--out", "runs/oos2", "--threads", "1"]);
    assert_eq!(code(&replay), 0, "{}", stderr(&replay));
    assert_eq!(report, std::fs::read_to_string(dir.path().join("runs/oos2/report.csv")).unwrap());

    let o = volcast(dir.path(), &["report", "--run", "runs/oos1"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("deepvol"));
}

#[test]
fn config_files_are_strict() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, v: Value| std::fs::write(dir.path().join(name), v.to_string()).unwrap();
    write("bad_key.json", serde_json::json!({"schema": "volcast_run_v1", "command": "simulate", "args": {"dayz": 3}}));
    write("bad_schema.json", serde_json::json!({"schema": "v0", "command": "simulate", "args": {}}));
    write("wrong_cmd.json", serde_json::json!({"schema": "volcast_run_v1", "command": "ingest", "args": {}}));
    write(
        "good.json",
        serde_json::json!({"schema": "volcast_run_v1", "command": "simulate", "args": {"days": 3, "out": "c.csv"}}),
    );
    for f in ["bad_key.json", "bad_schema.json", "wrong_cmd.json"] {
        assert_eq!(code(&volcast(dir.path(), &["simulate", "--config", f, "--out", "x.csv"])), 2, "{f}");
    }
    let o = volcast(dir.path(), &["simulate", "--config", "good.json", "--days", "4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // the flag overrides the file
    let rows = std::fs::read_to_string(dir.path().join("c.csv")).unwrap().lines().count();
    assert_eq!(rows, 4 * 78 + 1);
}

#[test]
fn threads_env_fallback_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_volcast"))
        .current_dir(dir.path())
        .env("VOLCAST_THREADS", "2")
        .args(["simulate", "--days", "2", "--out", "t.csv"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let meta = read_json(&dir.path().join("t.csv.meta.json"));
    assert_eq!(meta["provenance"]["threads"], 2);
}
