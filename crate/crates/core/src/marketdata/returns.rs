use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Within-day percent log returns of one ticker at one granularity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntradayReturns {
    pub ticker: String,
    pub date: NaiveDate,
    pub granularity: u32,
    pub returns: Vec<f64>,
}

/// `100 · ln(to / from)`.
#[inline]
pub fn log_return_pct<F: Scalar>(from: F, to: F) -> F {
    F::lit(100.0) * (to / from).ln()
}

/// Consecutive percent log returns of one day's (resampled) prices.
pub fn intraday_returns(ticker: &str, date: NaiveDate, granularity: u32, prices: &[f64]) -> Result<IntradayReturns> {
    if prices.len() < 2 {
        return Err(Error::Missing(format!("{ticker} {date}: fewer than 2 bars")));
    }
    let returns: Vec<f64> = prices.windows(2).map(|w| log_return_pct(w[0], w[1])).collect();
    if let Some(i) = returns.iter().position(|r| !r.is_finite()) {
        return Err(Error::NonFinite {
            context: format!("{ticker} {date} returns"),
            index: i,
        });
    }
    Ok(IntradayReturns {
        ticker: ticker.to_string(),
        date,
        granularity,
        returns,
    })
}

/// Sum of squared intraday returns.
pub fn realised_variance<F: Scalar>(returns: &[F]) -> Result<F> {
    if returns.is_empty() {
        return Err(Error::invalid("realised variance of an empty return vector"));
    }
    Ok(returns.iter().map(|&r| r * r).sum())
}

/// Close-to-close percent return; `None` when the previous close is unavailable.
pub fn daily_return(previous_close: Option<f64>, close: f64) -> Option<f64> {
    previous_close.map(|p| log_return_pct(p, close))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d() -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, 2).unwrap()
    }

    #[test]
    fn constant_price_gives_zero_returns() {
        let r = intraday_returns("X", d(), 5, &[100.0, 100.0, 100.0]).unwrap();
        assert_eq!(r.returns, vec![0.0, 0.0]);
    }

    #[test]
    fn up_and_down_one_percent() {
        let up = intraday_returns("X", d(), 5, &[100.0, 101.0]).unwrap();
        assert!((up.returns[0] - 0.995_033_085_316_808_3).abs() < 1e-12);
        let down = intraday_returns("X", d(), 5, &[100.0, 99.0]).unwrap();
        assert!((down.returns[0] + 1.005_033_585_350_144_1).abs() < 1e-12);
    }

    #[test]
    fn single_bar_day_is_missing() {
        assert!(matches!(intraday_returns("X", d(), 5, &[100.0]), Err(Error::Missing(_))));
    }

    #[test]
    fn rv_examples() {
        assert_eq!(realised_variance(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        // brute force: 1 + 4 + 0.25
        assert_eq!(realised_variance(&[1.0, -2.0, 0.5]).unwrap(), 5.25);
        assert_eq!(realised_variance(&[1.7_f64]).unwrap(), 1.7 * 1.7);
        assert!(realised_variance::<f64>(&[]).is_err());
        assert_eq!(realised_variance(&[1.0_f32, -2.0, 0.5]).unwrap(), 5.25_f32);
    }

    #[test]
    fn daily_return_examples() {
        assert_eq!(daily_return(Some(100.0), 100.0), Some(0.0));
        let r = daily_return(Some(100.0), 102.0).unwrap();
        assert!((r - 1.980_262_729_617_971).abs() < 1e-12);
        assert_eq!(daily_return(None, 102.0), None);
    }

    proptest! {
        #[test]
        fn rv_additive_under_concatenation(a in prop::collection::vec(-5.0f64..5.0, 1..40),
                                           b in prop::collection::vec(-5.0f64..5.0, 1..40)) {
            let joined: Vec<f64> = a.iter().chain(&b).copied().collect();
            let lhs = realised_variance(&joined).unwrap();
            let rhs = realised_variance(&a).unwrap() + realised_variance(&b).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(1.0));
        }

        #[test]
        fn rv_permutation_invariant(mut a in prop::collection::vec(-5.0f64..5.0, 1..60), seed in any::<u64>()) {
            let before = realised_variance(&a).unwrap();
            let n = a.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                a.swap(i, (s >> 33) as usize % (i + 1));
            }
            let after = realised_variance(&a).unwrap();
            prop_assert!((before - after).abs() <= 1e-12 * before.max(1.0));
        }
    }
}
