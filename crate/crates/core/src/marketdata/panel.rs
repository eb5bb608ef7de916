use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::resample::resample_day;
use super::returns::{daily_return, intraday_returns, realised_variance};
use super::{BarSeries, Session, RV_GRANULARITY};
use crate::error::{Error, Result};

pub const PANEL_SCHEMA: &str = "volcast_panel_v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelConfig {
    pub granularities: BTreeSet<u32>,
    /// Granularity whose squared returns define the realised variance.
    pub rv_granularity: u32,
    /// A day with more empty intervals than this fraction is marked missing.
    pub max_empty_fraction: f64,
}

impl Default for PanelConfig {
    fn default() -> Self {
        PanelConfig {
            granularities: BTreeSet::from([RV_GRANULARITY]),
            rv_granularity: RV_GRANULARITY,
            max_empty_fraction: 0.10,
        }
    }
}

impl PanelConfig {
    pub fn with_granularities(granularities: impl IntoIterator<Item = u32>) -> Self {
        PanelConfig {
            granularities: granularities.into_iter().collect(),
            ..Default::default()
        }
    }
}

/// Everything known about one (ticker, day).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyRecord {
    pub ticker: String,
    pub date: NaiveDate,
    /// Last price of the day.
    pub close: f64,
    /// Close-to-close percent return; `None` on the first day or after a gap.
    pub daily_return: Option<f64>,
    /// Realised variance, percent².
    pub rv: f64,
    /// Granularity (minutes) → within-day percent returns.
    pub intraday: BTreeMap<u32, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_digest: Option<String>,
    pub granularities: Vec<u32>,
    pub rv_granularity: u32,
    pub session: Session,
}

/// Dense (ticker × date) grid of daily records; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub schema: String,
    pub dates: Vec<NaiveDate>,
    pub tickers: Vec<String>,
    /// Indexed `[ticker][date]`.
    pub cells: Vec<Vec<Option<DailyRecord>>>,
    pub provenance: Provenance,
}

struct TickerDays {
    ticker: String,
    days: BTreeMap<NaiveDate, Option<(f64, f64, BTreeMap<u32, Vec<f64>>)>>,
}

fn ingest_ticker(series: &BarSeries, config: &PanelConfig) -> Result<TickerDays> {
    let mut days = BTreeMap::new();
    for (date, bars) in series.days() {
        let mut intraday = BTreeMap::new();
        let mut usable = true;
        for &g in &config.granularities {
            let r = resample_day(&series.session, date, bars, g)?;
            if r.empty_fraction() > config.max_empty_fraction || r.prices.len() < 2 {
                usable = false;
                break;
            }
            intraday.insert(g, intraday_returns(&series.ticker, date, g, &r.prices)?.returns);
        }
        let entry = if usable {
            let rv = realised_variance(&intraday[&config.rv_granularity])?;
            let close = bars.last().map(|b| b.price).unwrap_or(f64::NAN);
            Some((close, rv, intraday))
        } else {
            None
        };
        days.insert(date, entry);
    }
    Ok(TickerDays {
        ticker: series.ticker.clone(),
        days,
    })
}

/// Builds the per-day panel from per-ticker bar series.
pub fn build_panel(series: &[BarSeries], config: &PanelConfig, source_digest: Option<String>) -> Result<Panel> {
    if config.granularities.is_empty() {
        return Err(Error::invalid("at least one granularity is required"));
    }
    if !config.granularities.contains(&config.rv_granularity) {
        return Err(Error::invalid(format!(
            "realised-variance granularity {} min is absent from the requested set {:?}",
            config.rv_granularity, config.granularities
        )));
    }
    let session = match series.first() {
        Some(s) => s.session,
        None => return Err(Error::invalid("no bar series supplied")),
    };
    if series.iter().any(|s| s.session != session) {
        return Err(Error::invalid("all series must share one session"));
    }
    for &g in &config.granularities {
        session.intervals(g)?;
    }
    for s in series {
        if let Some(spacing) = s.min_spacing_seconds() {
            let finest = *config.granularities.iter().next().unwrap();
            if i64::from(finest) * 60 < spacing {
                return Err(Error::invalid(format!(
                    "{}: granularity {finest} min is finer than the source spacing of {spacing} s",
                    s.ticker
                )));
            }
        }
        if s.bars.is_empty() {
            return Err(Error::invalid(format!("{}: no trading day present", s.ticker)));
        }
    }

    let mut per_ticker: Vec<TickerDays> = series
        .par_iter()
        .map(|s| ingest_ticker(s, config))
        .collect::<Result<_>>()?;
    per_ticker.sort_by(|a, b| a.ticker.cmp(&b.ticker));
    if per_ticker.windows(2).any(|w| w[0].ticker == w[1].ticker) {
        return Err(Error::invalid("duplicate ticker series"));
    }

    let dates: Vec<NaiveDate> = per_ticker
        .iter()
        .flat_map(|t| t.days.keys().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut cells = Vec::with_capacity(per_ticker.len());
    for t in &per_ticker {
        let mut row: Vec<Option<DailyRecord>> = Vec::with_capacity(dates.len());
        for &date in &dates {
            let prev_close = row.last().and_then(|c| c.as_ref()).map(|c| c.close);
            let cell = t.days.get(&date).cloned().flatten().map(|(close, rv, intraday)| DailyRecord {
                ticker: t.ticker.clone(),
                date,
                close,
                daily_return: daily_return(prev_close, close),
                rv,
                intraday,
            });
            row.push(cell);
        }
        cells.push(row);
    }

    Ok(Panel {
        schema: PANEL_SCHEMA.to_string(),
        dates,
        tickers: per_ticker.into_iter().map(|t| t.ticker).collect(),
        cells,
        provenance: Provenance {
            source_digest,
            granularities: config.granularities.iter().copied().collect(),
            rv_granularity: config.rv_granularity,
            session,
        },
    })
}

impl Panel {
    pub fn n_tickers(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn ticker_index(&self, ticker: &str) -> Option<usize> {
        self.tickers.iter().position(|t| t == ticker)
    }

    pub fn date_index(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    pub fn cell(&self, ticker: usize, date: usize) -> Option<&DailyRecord> {
        self.cells.get(ticker)?.get(date)?.as_ref()
    }

    pub fn missing_count(&self, ticker: usize) -> usize {
        self.cells[ticker].iter().filter(|c| c.is_none()).count()
    }

    pub fn has_granularity(&self, g: u32) -> bool {
        self.provenance.granularities.contains(&g)
    }

    /// Intraday return length of a full day at `g`.
    pub fn returns_per_day(&self, g: u32) -> Result<usize> {
        self.provenance.session.returns_per_day(g)
    }

    /// Copy with every date strictly after `date` removed.
    pub fn truncate_after(&self, date: NaiveDate) -> Panel {
        let keep = self.dates.partition_point(|d| *d <= date);
        Panel {
            schema: self.schema.clone(),
            dates: self.dates[..keep].to_vec(),
            tickers: self.tickers.clone(),
            cells: self.cells.iter().map(|row| row[..keep].to_vec()).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Copy restricted to the given tickers (in the given order).
    pub fn select_tickers(&self, tickers: &[String]) -> Result<Panel> {
        let mut cells = Vec::with_capacity(tickers.len());
        for t in tickers {
            let i = self
                .ticker_index(t)
                .ok_or_else(|| Error::invalid(format!("unknown ticker {t}")))?;
            cells.push(self.cells[i].clone());
        }
        Ok(Panel {
            schema: self.schema.clone(),
            dates: self.dates.clone(),
            tickers: tickers.to_vec(),
            cells,
            provenance: self.provenance.clone(),
        })
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json_str(text: &str) -> Result<Panel> {
        let panel: Panel = serde_json::from_str(text)?;
        if panel.schema != PANEL_SCHEMA {
            return Err(Error::Schema {
                expected: PANEL_SCHEMA.into(),
                found: panel.schema,
            });
        }
        if panel.dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("panel dates must strictly increase"));
        }
        if panel.cells.len() != panel.tickers.len() || panel.cells.iter().any(|r| r.len() != panel.dates.len()) {
            return Err(Error::Shape("panel grid does not match its axes".into()));
        }
        Ok(panel)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Panel> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Panel::from_json_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marketdata::{realised_variance, Bar};
    use chrono::Duration;

    fn full_day(session: &Session, date: NaiveDate, spacing_min: i64, base: f64, wiggle: f64) -> Vec<Bar> {
        let n = i64::from(session.minutes()) / spacing_min;
        (1..=n)
            .map(|k| Bar {
                timestamp: session.to_utc(date.and_time(session.open) + Duration::minutes(k * spacing_min)),
                price: base * (1.0 + wiggle * ((k as f64) * 0.7).sin()),
            })
            .collect()
    }

    fn dates(n: usize) -> Vec<NaiveDate> {
        let start = NaiveDate::from_ymd_opt(2020, 3, 2).unwrap();
        (0..n).map(|i| start + Duration::days(i as i64)).collect()
    }

    fn series(ticker: &str, days: &[NaiveDate], spacing: i64) -> BarSeries {
        let s = Session::default();
        let bars = days
            .iter()
            .enumerate()
            .flat_map(|(i, &d)| full_day(&s, d, spacing, 100.0 + i as f64, 0.01))
            .collect();
        BarSeries::new(ticker, s, bars).unwrap()
    }

    #[test]
    fn two_tickers_three_days_all_present() {
        let ds = dates(3);
        let p = build_panel(&[series("A", &ds, 5), series("B", &ds, 5)], &PanelConfig::default(), None).unwrap();
        assert_eq!((p.n_tickers(), p.n_dates()), (2, 3));
        assert!(p.cells.iter().flatten().all(|c| c.is_some()));
        let first = p.cell(0, 0).unwrap();
        assert_eq!(first.intraday[&5].len(), 77);
        assert!(first.daily_return.is_none());
        assert!(p.cell(0, 1).unwrap().daily_return.is_some());
    }

    #[test]
    fn missing_day_is_marked() {
        let ds = dates(3);
        let skip = vec![ds[0], ds[2]];
        let p = build_panel(&[series("A", &ds, 5), series("B", &skip, 5)], &PanelConfig::default(), None).unwrap();
        assert!(p.cell(1, 1).is_none());
        assert!(p.cell(1, 2).unwrap().daily_return.is_none());
        assert_eq!(p.missing_count(1), 1);
    }

    #[test]
    fn sparse_day_is_missing() {
        let s = Session::default();
        let d = dates(1)[0];
        let mut bars = full_day(&s, d, 5, 100.0, 0.01);
        bars.truncate(60); // 18 of 78 intervals empty
        let series = BarSeries::new("A", s, bars).unwrap();
        let p = build_panel(&[series], &PanelConfig::default(), None).unwrap();
        assert!(p.cell(0, 0).is_none());
    }

    #[test]
    fn rv_cell_matches_rv_of_five_minute_returns() {
        let ds = dates(4);
        let p = build_panel(&[series("A", &ds, 1)], &PanelConfig::with_granularities([1, 5, 30]), None).unwrap();
        for c in p.cells[0].iter().flatten() {
            let oracle: f64 = c.intraday[&5].iter().map(|r| r * r).sum();
            assert!((c.rv - oracle).abs() <= 1e-10 * oracle.max(1e-300));
            assert_eq!(c.rv, realised_variance(&c.intraday[&5]).unwrap());
            assert_eq!(c.intraday.keys().copied().collect::<Vec<_>>(), vec![1, 5, 30]);
        }
    }

    #[test]
    fn five_minute_returns_telescope_with_one_minute_returns() {
        let ds = dates(1);
        let p = build_panel(&[series("A", &ds, 1)], &PanelConfig::with_granularities([1, 5]), None).unwrap();
        let c = p.cell(0, 0).unwrap();
        let five: f64 = c.intraday[&5].iter().sum();
        // both sums telescope from the first 5-minute close (minute 5) to the session close
        let one: f64 = c.intraday[&1][4..].iter().sum();
        assert!((five - one).abs() < 1e-9);
    }

    #[test]
    fn rv_granularity_must_be_requested() {
        let ds = dates(1);
        let err = build_panel(&[series("A", &ds, 1)], &PanelConfig::with_granularities([1, 30]), None);
        assert!(err.is_err());
    }

    #[test]
    fn json_roundtrip_and_schema_check() {
        let ds = dates(2);
        let p = build_panel(&[series("A", &ds, 5)], &PanelConfig::default(), Some("abc".into())).unwrap();
        let text = p.to_json_string().unwrap();
        assert!(text.contains("\"volcast_panel_v1\""));
        assert!(Panel::from_json_str(&text).unwrap() == p, "panel changed across json");
        let bad = text.replace("volcast_panel_v1", "volcast_panel_v0");
        assert!(matches!(Panel::from_json_str(&bad), Err(Error::Schema { .. })));
    }

    #[test]
    fn truncate_after_drops_later_dates() {
        let ds = dates(5);
        let p = build_panel(&[series("A", &ds, 5)], &PanelConfig::default(), None).unwrap();
        let t = p.truncate_after(ds[2]);
        assert_eq!(t.dates, ds[..3].to_vec());
        assert_eq!(t.cells[0], p.cells[0][..3].to_vec());
    }
}
