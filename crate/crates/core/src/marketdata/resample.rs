use chrono::NaiveDate;

use super::{Bar, BarSeries, Session};
use crate::error::{Error, Result};

/// Last-price bars of one day on a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ResampledDay {
    pub date: NaiveDate,
    /// One price per interval, interval `k` (0-based) ending at open + (k+1)·g.
    pub prices: Vec<f64>,
    /// Intervals without any observed trade (filled, not observed).
    pub empty_intervals: usize,
}

impl ResampledDay {
    pub fn empty_fraction(&self) -> f64 {
        self.empty_intervals as f64 / self.prices.len() as f64
    }
}

/// Resamples one day's bars to `granularity` minutes.
///
/// Each interval `(open + (k-1)g, open + kg]` keeps its last observed price;
/// a bar exactly at the open counts towards the first interval. Empty
/// intervals carry the previous interval's price forward, and an empty first
/// interval takes the day's first observed price.
pub fn resample_day(session: &Session, date: NaiveDate, bars: &[Bar], granularity: u32) -> Result<ResampledDay> {
    let n = session.intervals(granularity)?;
    let first = bars
        .first()
        .ok_or_else(|| Error::Missing(format!("no bars on {date}")))?;
    let width = i64::from(granularity) * 60;
    let mut last: Vec<Option<f64>> = vec![None; n];
    for b in bars {
        let secs = session.seconds_from_open(b.timestamp);
        if session.local_date(b.timestamp) != date || !(0..=session.seconds()).contains(&secs) {
            return Err(Error::invalid(format!("bar at {} is not inside the {date} session", b.timestamp)));
        }
        let k = ((secs + width - 1) / width).max(1) as usize;
        last[k - 1] = Some(b.price);
    }
    let mut prices = Vec::with_capacity(n);
    let mut empty = 0;
    let mut carry = first.price;
    for slot in last {
        match slot {
            Some(p) => carry = p,
            None => empty += 1,
        }
        prices.push(carry);
    }
    Ok(ResampledDay {
        date,
        prices,
        empty_intervals: empty,
    })
}

/// Resamples a whole series. Days without bars stay absent.
pub fn resample(series: &BarSeries, granularity: u32) -> Result<BarSeries> {
    let session = &series.session;
    session.intervals(granularity)?;
    if let Some(spacing) = series.min_spacing_seconds() {
        if i64::from(granularity) * 60 < spacing {
            return Err(Error::invalid(format!(
                "granularity {granularity} min is finer than the source spacing of {spacing} s"
            )));
        }
    }
    let mut bars = Vec::with_capacity(series.bars.len());
    for (date, day) in series.days() {
        let r = resample_day(session, date, day, granularity)?;
        bars.extend(r.prices.iter().enumerate().map(|(k, &price)| Bar {
            timestamp: session.interval_end(date, k + 1, granularity),
            price,
        }));
    }
    Ok(BarSeries {
        ticker: series.ticker.clone(),
        session: *session,
        bars,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Duration;

    fn minute_bars(date: NaiveDate, minutes: &[i64], prices: &[f64]) -> Vec<Bar> {
        let s = Session::default();
        minutes
            .iter()
            .zip(prices)
            .map(|(&m, &price)| Bar {
                timestamp: s.to_utc(date.and_time(s.open) + Duration::minutes(m)),
                price,
            })
            .collect()
    }

    fn date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2019, 9, 30).unwrap()
    }

    #[test]
    fn last_price_rule() {
        let bars = minute_bars(date(), &[1, 2, 3, 4, 5], &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let r = resample_day(&Session::default(), date(), &bars, 5).unwrap();
        assert_eq!(r.prices[0], 5.0);
        assert_eq!(r.prices.len(), 78);
    }

    #[test]
    fn forward_fill_empty_interval() {
        // 09:30-09:35 closes at 4; no trades in 09:35-09:40; trade at 09:41
        let bars = minute_bars(date(), &[2, 4, 11], &[3.0, 4.0, 9.0]);
        let r = resample_day(&Session::default(), date(), &bars, 5).unwrap();
        assert_eq!(&r.prices[..3], &[4.0, 4.0, 9.0]);
    }

    #[test]
    fn empty_first_interval_uses_first_observed_price() {
        let bars = minute_bars(date(), &[12, 13], &[7.0, 8.0]);
        let r = resample_day(&Session::default(), date(), &bars, 5).unwrap();
        assert_eq!(&r.prices[..3], &[7.0, 7.0, 8.0]);
        assert_eq!(r.empty_intervals, 77);
    }

    #[test]
    fn non_divisor_granularity_rejected() {
        let bars = minute_bars(date(), &[5], &[1.0]);
        let series = BarSeries::new("X", Session::default(), bars).unwrap();
        assert!(resample(&series, 7).is_err());
    }

    #[test]
    fn finer_than_source_rejected() {
        let bars = minute_bars(date(), &[5, 10, 15], &[1.0, 1.0, 1.0]);
        let series = BarSeries::new("X", Session::default(), bars).unwrap();
        assert!(resample(&series, 1).is_err());
        assert!(resample(&series, 15).is_ok());
    }

    #[test]
    fn resampling_is_idempotent() {
        let bars = minute_bars(date(), &[0, 3, 17, 18, 200, 389], &[1.0, 2.0, 3.0, 2.5, 2.0, 4.0]);
        let series = BarSeries::new("X", Session::default(), bars).unwrap();
        let once = resample(&series, 5).unwrap();
        let twice = resample(&once, 5).unwrap();
        assert_eq!(once, twice);
    }
}
