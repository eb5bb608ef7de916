//! Run-directory persistence.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde_json::Value;

use super::study::StudyResult;
use crate::error::{Error, Result};
use crate::metrics::Metric;

pub const REPORT_SCHEMA: &str = "volcast_report_v1";

/// Writes `report.csv` for every table, one row per (table, model).
pub fn write_report_csv<W: Write>(writer: W, result: &StudyResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["table".to_string(), "model".into(), "n".into()];
    header.extend(Metric::ALL.iter().map(|m| m.name().to_string()));
    w.write_record(&header)?;
    for table in &result.tables {
        for r in &table.reports {
            let mut row = vec![table.name.clone(), r.model.clone(), r.n.to_string()];
            row.extend(Metric::ALL.iter().map(|&m| format!("{:?}", r.get(m))));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::io("report.csv", e))?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Per-ticker plotting series for one table: date, proxy, then one column per
/// model.
pub fn write_series(dir: &Path, result: &StudyResult) -> Result<()> {
    for table in &result.tables {
        let prefix = format!("{}/", table.name);
        let sets: Vec<_> = result
            .forecasts
            .iter()
            .filter(|s| s.model.starts_with(&prefix) || (!s.model.contains('/') && result.tables.len() == 1))
            .collect();
        if sets.is_empty() {
            continue;
        }
        let mut per_ticker: BTreeMap<&str, BTreeMap<NaiveDate, (f64, Vec<Option<f64>>)>> = BTreeMap::new();
        for (j, s) in sets.iter().enumerate() {
            for r in &s.records {
                let row = per_ticker
                    .entry(r.ticker.as_str())
                    .or_default()
                    .entry(r.date)
                    .or_insert_with(|| (r.proxy, vec![None; sets.len()]));
                row.1[j] = Some(r.forecast);
            }
        }
        for (ticker, rows) in per_ticker {
            let path = dir.join(format!("{}__{}.csv", sanitize(&table.name), sanitize(ticker)));
            let mut w = csv::Writer::from_path(path)?;
            let mut header = vec!["date".to_string(), "proxy".into()];
            header.extend(sets.iter().map(|s| s.model.strip_prefix(&prefix).unwrap_or(&s.model).to_string()));
            w.write_record(&header)?;
            for (date, (proxy, values)) in rows {
                let mut row = vec![date.to_string(), format!("{proxy:?}")];
                row.extend(values.iter().map(|v| v.map(|x| format!("{x:?}")).unwrap_or_default()));
                w.write_record(&row)?;
            }
            w.flush().map_err(|e| Error::io(dir, e))?;
        }
    }
    Ok(())
}

/// File-system safe version of a model or table label.
pub fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| match c {
            '/' => '_',
            '+' => 'p',
            c if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' => c,
            _ => '_',
        })
        .collect()
}

/// Writes `report.json`, `report.csv`, `forecasts/*.csv`, `series/*.csv` and
/// `meta.json` (the caller's `meta`, verbatim) into `dir`.
pub fn write_run_dir(dir: impl AsRef<Path>, result: &StudyResult, meta: Value) -> Result<()> {
    let dir = dir.as_ref();
    for sub in ["forecasts", "series"] {
        fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir.join(sub), e))?;
    }

    let mut report = serde_json::to_value(result)?;
    if let Value::Object(map) = &mut report {
        map.insert("schema".into(), Value::from(REPORT_SCHEMA));
        // forecasts live in their own files
        map.remove("forecasts");
    }
    write_text(&dir.join("report.json"), &serde_json::to_string_pretty(&report)?)?;
    let csv_path = dir.join("report.csv");
    write_report_csv(fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?, result)?;
    for set in &result.forecasts {
        set.write_csv(dir.join("forecasts").join(format!("{}.csv", sanitize(&set.model))))?;
    }
    write_series(&dir.join("series"), result)?;

    write_text(&dir.join("meta.json"), &serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}
