//! Forecast-accuracy metrics and improvement tables.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::ForecastSet;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mae,
    Rmse,
    Smape,
    Qlike,
    Me,
    Medae,
}

impl Metric {
    pub const ALL: [Metric; 6] = [Metric::Mae, Metric::Rmse, Metric::Smape, Metric::Qlike, Metric::Me, Metric::Medae];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Mae => "mae",
            Metric::Rmse => "rmse",
            Metric::Smape => "smape",
            Metric::Qlike => "qlike",
            Metric::Me => "me",
            Metric::Medae => "medae",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub n: usize,
    pub mae: f64,
    pub rmse: f64,
    pub smape: f64,
    pub qlike: f64,
    pub me: f64,
    pub medae: f64,
}

impl MetricsReport {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Mae => self.mae,
            Metric::Rmse => self.rmse,
            Metric::Smape => self.smape,
            Metric::Qlike => self.qlike,
            Metric::Me => self.me,
            Metric::Medae => self.medae,
        }
    }
}

/// All six metrics over `(proxy σ², forecast ĥ)` pairs.
pub fn evaluate_pairs<F: Scalar>(model: &str, pairs: &[(F, F)]) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(Error::invalid(format!("{model}: no forecasts to evaluate")));
    }
    if let Some(i) = pairs.iter().position(|&(_, h)| !(h.is_finite() && h > F::zero())) {
        return Err(Error::invalid(format!("{model}: forecast {i} is not positive")));
    }
    if let Some(i) = pairs.iter().position(|&(s, _)| !(s.is_finite() && s >= F::zero())) {
        return Err(Error::invalid(format!("{model}: proxy {i} is negative or non-finite")));
    }
    let n = F::from_usize_lossy(pairs.len());
    let two = F::lit(2.0);
    let mut abs: Vec<F> = pairs.iter().map(|&(s, h)| (s - h).abs()).collect();
    let mae = abs.iter().copied().sum::<F>() / n;
    let rmse = (pairs.iter().map(|&(s, h)| (s - h) * (s - h)).sum::<F>() / n).sqrt();
    let smape = pairs
        .iter()
        .map(|&(s, h)| {
            let den = (s + h) / two;
            (s - h).abs() / den
        })
        .sum::<F>()
        / n;
    let qlike = pairs.iter().map(|&(s, h)| h.ln() + s / h).sum::<F>() / n;
    let me = abs.iter().copied().fold(F::zero(), F::max);
    abs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let mid = abs.len() / 2;
    let medae = if abs.len() % 2 == 1 { abs[mid] } else { (abs[mid - 1] + abs[mid]) / two };
    Ok(MetricsReport {
        model: model.to_string(),
        n: pairs.len(),
        mae: mae.to_f64_lossy(),
        rmse: rmse.to_f64_lossy(),
        smape: smape.to_f64_lossy(),
        qlike: qlike.to_f64_lossy(),
        me: me.to_f64_lossy(),
        medae: medae.to_f64_lossy(),
    })
}

pub fn evaluate(set: &ForecastSet) -> Result<MetricsReport> {
    let pairs: Vec<(f64, f64)> = set.records.iter().map(|r| (r.proxy, r.forecast)).collect();
    evaluate_pairs(&set.model, &pairs)
}

/// 100·(reference − model)/reference per metric; `None` where the reference
/// value is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementRow {
    pub reference: String,
    pub model: String,
    pub values: BTreeMap<Metric, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementTable {
    pub rows: Vec<ImprovementRow>,
}

pub fn improvement(reference: f64, model: f64) -> Option<f64> {
    (reference != 0.0).then(|| 100.0 * (reference - model) / reference)
}

pub fn improvement_table(reports: &[MetricsReport], references: &[&str]) -> Result<ImprovementTable> {
    let mut rows = Vec::new();
    for &label in references {
        let reference = reports
            .iter()
            .find(|r| r.model == label)
            .ok_or_else(|| Error::Missing(format!("reference model '{label}' has no report")))?;
        for r in reports {
            let values = Metric::ALL.iter().map(|&m| (m, improvement(reference.get(m), r.get(m)))).collect();
            rows.push(ImprovementRow {
                reference: label.to_string(),
                model: r.model.clone(),
                values,
            });
        }
    }
    Ok(ImprovementTable { rows })
}

impl ImprovementTable {
    pub fn get(&self, reference: &str, model: &str, metric: Metric) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.reference == reference && r.model == model)
            .and_then(|r| r.values[&metric])
    }
}

fn fmt_value(v: f64) -> String {
    format!("{v:?}")
}

/// One row per model: `model,n,mae,rmse,smape,qlike,me,medae`.
pub fn write_reports_csv(reports: &[MetricsReport], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["model", "n", "mae", "rmse", "smape", "qlike", "me", "medae"])?;
    for r in reports {
        let mut row = vec![r.model.clone(), r.n.to_string()];
        row.extend(Metric::ALL.iter().map(|&m| fmt_value(r.get(m))));
        w.write_record(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `reference,model,<metric>...` with `undefined` for zero references.
pub fn write_improvement_csv(table: &ImprovementTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["reference".to_string(), "model".to_string()];
    header.extend(Metric::ALL.iter().map(|m| m.name().to_string()));
    w.write_record(&header)?;
    for row in &table.rows {
        let mut out = vec![row.reference.clone(), row.model.clone()];
        out.extend(Metric::ALL.iter().map(|m| match row.values[m] {
            Some(v) => format!("{v:.3}"),
            None => "undefined".to_string(),
        }));
        w.write_record(out)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
