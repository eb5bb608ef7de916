//! Synthetic intraday bars with a known GARCH(1,1) daily variance path.

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marketdata::{Bar, BarSeries, Session};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchTruth {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl GarchTruth {
    pub fn new(omega: f64, alpha: f64, beta: f64) -> Self {
        GarchTruth { omega, alpha, beta }
    }

    pub fn unconditional_variance(&self) -> f64 {
        self.omega / (1.0 - self.alpha - self.beta)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.omega.is_finite()
            && self.omega > 0.0
            && self.alpha >= 0.0
            && self.beta >= 0.0
            && self.alpha + self.beta < 1.0;
        if !ok {
            return Err(Error::Constraint(format!(
                "simulation needs omega > 0, alpha, beta >= 0 and alpha + beta < 1 for covariance stationarity (got omega={}, alpha={}, beta={})",
                self.omega, self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

impl Default for GarchTruth {
    fn default() -> Self {
        GarchTruth::new(0.05, 0.10, 0.85)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub n_tickers: usize,
    pub n_days: usize,
    pub bars_per_day: usize,
    /// One entry shared by all tickers, or one per ticker.
    pub params: Vec<GarchTruth>,
    /// U-shaped intraday variance profile (mean 1) when set.
    pub diurnal: bool,
    pub seed: u64,
    pub session: Session,
    pub start_date: NaiveDate,
}

impl Default for SimSpec {
    fn default() -> Self {
        SimSpec {
            n_tickers: 1,
            n_days: 250,
            bars_per_day: 78,
            params: vec![GarchTruth::default()],
            diurnal: false,
            seed: 0,
            session: Session::default(),
            start_date: NaiveDate::from_ymd_opt(2019, 9, 30).unwrap(),
        }
    }
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_tickers == 0 || self.n_days == 0 {
            return Err(Error::invalid("simulation needs at least one ticker and one day"));
        }
        if self.bars_per_day < 2 {
            return Err(Error::invalid("bars_per_day must be at least 2"));
        }
        if self.session.seconds() % self.bars_per_day as i64 != 0 {
            return Err(Error::invalid(format!(
                "{} bars do not evenly divide the {}-second session",
                self.bars_per_day,
                self.session.seconds()
            )));
        }
        if self.params.len() != 1 && self.params.len() != self.n_tickers {
            return Err(Error::invalid("params must have one entry or one per ticker"));
        }
        self.params.iter().try_for_each(GarchTruth::validate)
    }

    pub fn params_for(&self, ticker: usize) -> GarchTruth {
        if self.params.len() == 1 {
            self.params[0]
        } else {
            self.params[ticker]
        }
    }

    pub fn ticker_name(ticker: usize) -> String {
        format!("SIM{ticker:03}")
    }

    /// Intraday variance weights per bar, mean 1.
    pub fn intraday_profile(&self) -> Vec<f64> {
        let n = self.bars_per_day;
        if !self.diurnal {
            return vec![1.0; n];
        }
        let raw: Vec<f64> = (0..n)
            .map(|k| {
                let x = (k as f64 + 0.5) / n as f64;
                1.0 + 6.0 * (x - 0.5).powi(2)
            })
            .collect();
        let m = raw.iter().sum::<f64>() / n as f64;
        raw.into_iter().map(|w| w / m).collect()
    }

    /// Weekday trading dates starting at `start_date`.
    pub fn trading_dates(&self) -> Vec<NaiveDate> {
        let mut out = Vec::with_capacity(self.n_days);
        let mut d = self.start_date;
        while out.len() < self.n_days {
            if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
                out.push(d);
            }
            d += Duration::days(1);
        }
        out
    }

    fn rng_for(&self, ticker: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(ticker as u64 + 1);
        rng
    }
}

/// Ground truth for one simulated ticker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickerTruth {
    pub ticker: String,
    pub dates: Vec<NaiveDate>,
    /// True conditional variance h_t, percent².
    pub variance: Vec<f64>,
    /// Daily innovation ε_t (close-to-close percent return).
    pub innovation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub series: Vec<BarSeries>,
    pub truth: Vec<TickerTruth>,
}

fn simulate_ticker(spec: &SimSpec, ticker: usize, dates: &[NaiveDate]) -> (BarSeries, TickerTruth) {
    let p = spec.params_for(ticker);
    let profile = spec.intraday_profile();
    let bpd = spec.bars_per_day;
    let spacing = spec.session.seconds() / bpd as i64;
    let mut rng = spec.rng_for(ticker);

    let mut bars = Vec::with_capacity(dates.len() * bpd);
    let mut variance = Vec::with_capacity(dates.len());
    let mut innovation = Vec::with_capacity(dates.len());
    let mut h = p.unconditional_variance();
    let mut log_price = 100.0_f64.ln();
    let mut prev_eps2 = 0.0;
    for (t, &date) in dates.iter().enumerate() {
        if t > 0 {
            h = p.omega + p.alpha * prev_eps2 + p.beta * h;
        }
        let open = date.and_time(spec.session.open);
        let mut eps = 0.0;
        for (k, w) in profile.iter().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            let inc = (h * w / bpd as f64).sqrt() * z;
            eps += inc;
            log_price += inc / 100.0;
            bars.push(Bar {
                timestamp: spec.session.to_utc(open + Duration::seconds(spacing * (k as i64 + 1))),
                price: log_price.exp(),
            });
        }
        variance.push(h);
        innovation.push(eps);
        prev_eps2 = eps * eps;
    }
    let name = SimSpec::ticker_name(ticker);
    (
        BarSeries {
            ticker: name.clone(),
            session: spec.session,
            bars,
        },
        TickerTruth {
            ticker: name,
            dates: dates.to_vec(),
            variance,
            innovation,
        },
    )
}

/// Simulates bars for every ticker. Deterministic in `spec.seed`; each
/// ticker draws from its own ChaCha stream so thread count is irrelevant.
pub fn simulate(spec: &SimSpec) -> Result<SimOutput> {
    spec.validate()?;
    let dates = spec.trading_dates();
    let (series, truth): (Vec<_>, Vec<_>) = (0..spec.n_tickers)
        .into_par_iter()
        .map(|i| simulate_ticker(spec, i, &dates))
        .collect::<Vec<_>>()
        .into_iter()
        .unzip();
    Ok(SimOutput { series, truth })
}

/// Monte-Carlo estimate of `E|RV_t - h_t|`, where RV_t sums the squares of
/// all `bars_per_day` increments of a day, averaged over `horizon` days of
/// ticker 0's variance path.
pub fn expected_rv_error(spec: &SimSpec, horizon: usize) -> Result<f64> {
    let mut check = spec.clone();
    check.bars_per_day = check.bars_per_day.max(2);
    check.validate()?;
    if horizon == 0 {
        return Err(Error::invalid("horizon must be positive"));
    }
    let p = spec.params_for(0);
    let setup = SimSpec {
        bars_per_day: spec.bars_per_day.max(1),
        ..spec.clone()
    };
    let profile = if setup.bars_per_day == 1 {
        vec![1.0]
    } else {
        setup.intraday_profile()
    };
    let n = profile.len() as f64;
    let mut rng = setup.rng_for(usize::MAX >> 1);
    let mut h = p.unconditional_variance();
    let mut total = 0.0;
    for t in 0..horizon {
        let mut eps = 0.0;
        let mut rv = 0.0;
        for w in &profile {
            let z: f64 = rng.sample(StandardNormal);
            let inc = (h * w / n).sqrt() * z;
            eps += inc;
            rv += inc * inc;
        }
        total += (rv - h).abs();
        if t + 1 < horizon {
            h = p.omega + p.alpha * eps * eps + p.beta * h;
        }
    }
    Ok(total / horizon as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marketdata::realised_variance;

    fn spec(days: usize, bpd: usize, p: GarchTruth, seed: u64) -> SimSpec {
        SimSpec {
            n_days: days,
            bars_per_day: bpd,
            params: vec![p],
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn constant_variance_when_alpha_beta_zero() {
        let out = simulate(&spec(50, 13, GarchTruth::new(0.7, 0.0, 0.0), 3)).unwrap();
        assert!(out.truth[0].variance.iter().all(|&h| h == 0.7));
    }

    #[test]
    fn sample_mean_variance_matches_unconditional() {
        let out = simulate(&spec(10_000, 2, GarchTruth::default(), 11)).unwrap();
        let h = &out.truth[0].variance;
        let m = h.iter().sum::<f64>() / h.len() as f64;
        assert!((m - 1.0).abs() < 0.05, "mean h = {m}");
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let s = SimSpec {
            n_tickers: 3,
            ..spec(20, 13, GarchTruth::default(), 9)
        };
        assert_eq!(simulate(&s).unwrap(), simulate(&s).unwrap());
        let other = SimSpec { seed: 10, ..s.clone() };
        assert_ne!(simulate(&s).unwrap().truth, simulate(&other).unwrap().truth);
    }

    #[test]
    fn non_stationary_spec_rejected() {
        assert!(simulate(&spec(10, 13, GarchTruth::new(0.1, 0.5, 0.6), 1)).is_err());
        assert!(simulate(&spec(10, 1, GarchTruth::default(), 1)).is_err());
        assert!(simulate(&spec(10, 7, GarchTruth::default(), 1)).is_err());
    }

    #[test]
    fn diurnal_profile_has_unit_mean_and_u_shape() {
        let s = SimSpec {
            diurnal: true,
            ..spec(1, 78, GarchTruth::default(), 1)
        };
        let w = s.intraday_profile();
        let m = w.iter().sum::<f64>() / w.len() as f64;
        assert!((m - 1.0).abs() < 1e-12);
        assert!(w[0] > w[39] && w[77] > w[39]);
    }

    #[test]
    fn close_to_close_return_is_the_daily_innovation() {
        let out = simulate(&spec(5, 13, GarchTruth::default(), 2)).unwrap();
        let days = out.series[0].days();
        for t in 1..days.len() {
            let prev = days[t - 1].1.last().unwrap().price;
            let close = days[t].1.last().unwrap().price;
            let r = 100.0 * (close / prev).ln();
            assert!((r - out.truth[0].innovation[t]).abs() < 1e-9);
        }
    }

    #[test]
    fn rv_tracks_variance_better_with_more_bars() {
        let mad = |bpd: usize| {
            let out = simulate(&spec(400, bpd, GarchTruth::default(), 5)).unwrap();
            let days = out.series[0].days();
            let h = &out.truth[0].variance;
            let mut total = 0.0;
            for (t, (_, bars)) in days.iter().enumerate() {
                let r: Vec<f64> = bars.windows(2).map(|w| 100.0 * (w[1].price / w[0].price).ln()).collect();
                total += (realised_variance(&r).unwrap() - h[t]).abs();
            }
            total / days.len() as f64
        };
        assert!(mad(78) < mad(13));
    }

    #[test]
    fn rv_error_limits() {
        let p = GarchTruth::default();
        // bars_per_day = 1: E|z^2 - 1| · E[h]; E|z^2-1| = 4 φ(1) ≈ 0.9679
        let one = expected_rv_error(&spec(1, 1, p, 4), 200_000).unwrap();
        assert!((one - 0.967_882_898_0).abs() < 0.03, "{one}");
        let coarse = expected_rv_error(&spec(1, 13, p, 4), 20_000).unwrap();
        let fine = expected_rv_error(&spec(1, 390, p, 4), 20_000).unwrap();
        assert!(fine < coarse);
        let flat = expected_rv_error(&spec(1, 23_400, GarchTruth::new(0.8, 0.0, 0.0), 4), 400).unwrap();
        assert!(flat < 0.05 * 0.8, "{flat}");
    }
}
