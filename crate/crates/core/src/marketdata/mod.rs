//! Intraday bar ingestion, resampling, returns and the per-day panel.
//!
//! Prices are kept as raw currency values; every return produced here is a
//! log return scaled by 100 (percent), so realised variance is in percent².
//! The overnight gap never enters an intraday return vector.

mod ingest;
mod panel;
mod resample;
mod returns;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, NaiveTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ingest::{load_bars, read_bars, sha256_hex, write_bars, write_bars_to, LoadedBars};
pub use panel::{build_panel, DailyRecord, Panel, PanelConfig, Provenance, PANEL_SCHEMA};
pub use resample::{resample, resample_day, ResampledDay};
pub use returns::{daily_return, intraday_returns, log_return_pct, realised_variance, IntradayReturns};

/// Sampling frequencies studied throughout, in minutes.
pub const STANDARD_GRANULARITIES: [u32; 5] = [1, 5, 15, 30, 60];

/// Granularity used for the realised-variance proxy.
pub const RV_GRANULARITY: u32 = 5;

/// One observed last price. The ticker lives on the owning [`BarSeries`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub timestamp: DateTime<Utc>,
    pub price: f64,
}

/// Fixed daily trading window, expressed in exchange-local wall time with a
/// constant UTC offset (no calendar or DST handling).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub open: NaiveTime,
    pub close: NaiveTime,
    /// Local time minus UTC, in minutes (New York summer time is -240).
    pub utc_offset_minutes: i32,
}

impl Default for Session {
    fn default() -> Self {
        Session {
            open: NaiveTime::from_hms_opt(9, 30, 0).unwrap(),
            close: NaiveTime::from_hms_opt(16, 0, 0).unwrap(),
            utc_offset_minutes: -240,
        }
    }
}

impl Session {
    pub fn new(open: NaiveTime, close: NaiveTime, utc_offset_minutes: i32) -> Result<Self> {
        if close <= open {
            return Err(Error::invalid("session close must be after open"));
        }
        Ok(Session {
            open,
            close,
            utc_offset_minutes,
        })
    }

    pub fn seconds(&self) -> i64 {
        (self.close - self.open).num_seconds()
    }

    pub fn minutes(&self) -> u32 {
        (self.seconds() / 60) as u32
    }

    /// Number of whole intervals of `granularity` minutes, or an error when it
    /// does not divide the session.
    pub fn intervals(&self, granularity: u32) -> Result<usize> {
        if granularity == 0 || self.seconds() % (i64::from(granularity) * 60) != 0 {
            return Err(Error::invalid(format!(
                "granularity {granularity} min does not divide the {} min session",
                self.minutes()
            )));
        }
        Ok((self.seconds() / (i64::from(granularity) * 60)) as usize)
    }

    /// Intraday return count of a full session: intervals - 1.
    pub fn returns_per_day(&self, granularity: u32) -> Result<usize> {
        Ok(self.intervals(granularity)?.saturating_sub(1))
    }

    pub fn to_local(&self, ts: DateTime<Utc>) -> NaiveDateTime {
        ts.naive_utc() + Duration::minutes(i64::from(self.utc_offset_minutes))
    }

    pub fn to_utc(&self, local: NaiveDateTime) -> DateTime<Utc> {
        (local - Duration::minutes(i64::from(self.utc_offset_minutes))).and_utc()
    }

    pub fn local_date(&self, ts: DateTime<Utc>) -> NaiveDate {
        self.to_local(ts).date()
    }

    /// Seconds elapsed since the session open of the bar's own local day.
    pub fn seconds_from_open(&self, ts: DateTime<Utc>) -> i64 {
        let local = self.to_local(ts);
        (local - local.date().and_time(self.open)).num_seconds()
    }

    pub fn contains(&self, ts: DateTime<Utc>) -> bool {
        let s = self.seconds_from_open(ts);
        (0..=self.seconds()).contains(&s)
    }

    /// UTC instant at the end of interval `k` (1-based) of `date`.
    pub fn interval_end(&self, date: NaiveDate, k: usize, granularity: u32) -> DateTime<Utc> {
        let local = date.and_time(self.open) + Duration::minutes(k as i64 * i64::from(granularity));
        self.to_utc(local)
    }
}

/// Time-ordered bars of one ticker, all inside the session window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarSeries {
    pub ticker: String,
    pub session: Session,
    pub bars: Vec<Bar>,
}

impl BarSeries {
    pub fn new(ticker: impl Into<String>, session: Session, bars: Vec<Bar>) -> Result<Self> {
        let ticker = ticker.into();
        for (i, b) in bars.iter().enumerate() {
            if !(b.price.is_finite() && b.price > 0.0) {
                return Err(Error::invalid(format!("{ticker}: bar {i} has non-positive price")));
            }
            if !session.contains(b.timestamp) {
                return Err(Error::invalid(format!("{ticker}: bar {i} outside session")));
            }
            if i > 0 && bars[i - 1].timestamp >= b.timestamp {
                return Err(Error::invalid(format!("{ticker}: bar {i} not strictly after its predecessor")));
            }
        }
        Ok(BarSeries {
            ticker,
            session,
            bars,
        })
    }

    /// Bars grouped by local trading date, in date order.
    pub fn days(&self) -> Vec<(NaiveDate, &[Bar])> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.bars.len() {
            let split = i == self.bars.len()
                || self.session.local_date(self.bars[i].timestamp)
                    != self.session.local_date(self.bars[start].timestamp);
            if split && start < i {
                out.push((self.session.local_date(self.bars[start].timestamp), &self.bars[start..i]));
                start = i;
            }
        }
        out
    }

    /// Smallest positive spacing between consecutive bars of the same day.
    pub fn min_spacing_seconds(&self) -> Option<i64> {
        self.days()
            .iter()
            .flat_map(|(_, bars)| bars.windows(2).map(|w| (w[1].timestamp - w[0].timestamp).num_seconds()))
            .filter(|&s| s > 0)
            .min()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_session_five_minute_arithmetic() {
        let s = Session::default();
        assert_eq!(s.minutes(), 390);
        assert_eq!(s.intervals(5).unwrap(), 78);
        assert_eq!(s.returns_per_day(5).unwrap(), 77);
        assert_eq!(s.returns_per_day(15).unwrap(), 25);
        assert!(s.intervals(7).is_err());
    }

    #[test]
    fn utc_conversion_matches_example_timestamp() {
        let s = Session::default();
        let ts: DateTime<Utc> = "2019-09-30T13:35:00Z".parse().unwrap();
        assert_eq!(s.seconds_from_open(ts), 300);
        assert_eq!(s.interval_end(s.local_date(ts), 1, 5), ts);
    }
}
