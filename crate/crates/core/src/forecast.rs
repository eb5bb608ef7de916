//! Aligned (forecast, proxy) records shared by every model.

use std::collections::BTreeSet;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub ticker: String,
    pub date: NaiveDate,
    /// ĥ, percent².
    pub forecast: f64,
    /// Realised variance of `date`, percent².
    pub proxy: f64,
}

pub type RecordKey = (String, NaiveDate);

impl ForecastRecord {
    pub fn key(&self) -> RecordKey {
        (self.ticker.clone(), self.date)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSet {
    pub model: String,
    pub records: Vec<ForecastRecord>,
}

impl ForecastSet {
    /// Validates `ĥ > 0` and finite, non-negative proxies; records are kept
    /// sorted by (ticker, date).
    pub fn new(model: impl Into<String>, mut records: Vec<ForecastRecord>) -> Result<Self> {
        let model = model.into();
        for (i, r) in records.iter().enumerate() {
            if !(r.forecast.is_finite() && r.forecast > 0.0) {
                return Err(Error::invalid(format!(
                    "{model}: forecast {} for {} {} (record {i}) is not positive",
                    r.forecast, r.ticker, r.date
                )));
            }
            if !(r.proxy.is_finite() && r.proxy >= 0.0) {
                return Err(Error::invalid(format!("{model}: proxy {} for {} {} is invalid", r.proxy, r.ticker, r.date)));
            }
        }
        records.sort_by(|a, b| (&a.ticker, a.date).cmp(&(&b.ticker, b.date)));
        if let Some(w) = records.windows(2).find(|w| w[0].key() == w[1].key()) {
            return Err(Error::invalid(format!("{model}: duplicate record {} {}", w[0].ticker, w[0].date)));
        }
        Ok(ForecastSet { model, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn keys(&self) -> BTreeSet<RecordKey> {
        self.records.iter().map(ForecastRecord::key).collect()
    }

    /// Copy keeping only records whose key is in `keys`.
    pub fn restrict(&self, keys: &BTreeSet<RecordKey>) -> ForecastSet {
        ForecastSet {
            model: self.model.clone(),
            records: self.records.iter().filter(|r| keys.contains(&r.key())).cloned().collect(),
        }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["ticker", "date", "forecast", "proxy"])?;
        for r in &self.records {
            w.write_record([r.ticker.clone(), r.date.to_string(), format!("{:?}", r.forecast), format!("{:?}", r.proxy)])
                ?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(model: impl Into<String>, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rd = csv::Reader::from_path(path)?;
        let mut records = Vec::new();
        for (i, row) in rd.deserialize::<ForecastRecord>().enumerate() {
            records.push(row.map_err(|e| Error::MalformedRow {
                row: i + 2,
                message: e.to_string(),
            })?);
        }
        ForecastSet::new(model, records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: &str, d: u32, f: f64) -> ForecastRecord {
        ForecastRecord {
            ticker: t.into(),
            date: NaiveDate::from_ymd_opt(2020, 1, d).unwrap(),
            forecast: f,
            proxy: 1.0,
        }
    }

    #[test]
    fn rejects_nonpositive_and_duplicates() {
        assert!(ForecastSet::new("m", vec![rec("A", 2, 0.0)]).is_err());
        assert!(ForecastSet::new("m", vec![rec("A", 2, 1.0), rec("A", 2, 2.0)]).is_err());
        let s = ForecastSet::new("m", vec![rec("B", 2, 1.0), rec("A", 3, 2.0)]).unwrap();
        assert_eq!(s.records[0].ticker, "A");
    }

    #[test]
    fn csv_roundtrip() {
        let s = ForecastSet::new("m", vec![rec("A", 2, 0.1 + 0.2), rec("A", 3, 2.5)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        s.write_csv(&p).unwrap();
        assert_eq!(ForecastSet::read_csv("m", &p).unwrap(), s);
    }
}
