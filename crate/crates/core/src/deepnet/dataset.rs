//! Windowed (input, next-day RV) samples cut from a panel.

use std::ops::Range;

use super::network::WindowSpec;
use crate::error::{Error, Result};
use crate::marketdata::Panel;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample<F> {
    pub ticker: usize,
    /// Panel date index of the forecast target day.
    pub date: usize,
    /// Intraday returns of the preceding days, oldest first.
    pub window: Vec<F>,
    /// Realised variances of the same days, oldest first.
    pub rv_aux: Vec<F>,
    /// Realised variance of the target day, when observed.
    pub target: Option<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F> {
    pub spec: WindowSpec,
    pub samples: Vec<Sample<F>>,
    /// Candidate (ticker, date) pairs dropped for lack of a complete window
    /// (or of a target, when one was required).
    pub skipped: usize,
}

impl<F: Scalar> Dataset<F> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn input_len(&self) -> usize {
        self.spec.day_len * self.spec.receptive_field_days
    }

    pub fn target_mean(&self) -> Option<F> {
        let ts: Vec<F> = self.samples.iter().filter_map(|s| s.target).collect();
        (!ts.is_empty()).then(|| ts.iter().copied().sum::<F>() / F::from_usize_lossy(ts.len()))
    }
}

pub fn window_spec(panel: &Panel, granularity: u32, receptive_field_days: usize) -> Result<WindowSpec> {
    if receptive_field_days == 0 {
        return Err(Error::invalid("receptive field must be at least one day"));
    }
    if !panel.has_granularity(granularity) {
        return Err(Error::Missing(format!("panel has no {granularity}-minute returns")));
    }
    Ok(WindowSpec {
        granularity,
        receptive_field_days,
        day_len: panel.returns_per_day(granularity)?,
    })
}

/// The sample whose target is panel date `date` for `ticker`, or `None` when
/// any of the preceding window days is missing.
pub fn sample_at<F: Scalar>(panel: &Panel, spec: WindowSpec, ticker: usize, date: usize) -> Option<Sample<F>> {
    let rf = spec.receptive_field_days;
    if date < rf {
        return None;
    }
    let mut window = Vec::with_capacity(rf * spec.day_len);
    let mut rv_aux = Vec::with_capacity(rf);
    for d in date - rf..date {
        let cell = panel.cell(ticker, d)?;
        let r = cell.intraday.get(&spec.granularity)?;
        if r.len() != spec.day_len {
            return None;
        }
        window.extend(r.iter().map(|&v| F::lit(v)));
        rv_aux.push(F::lit(cell.rv));
    }
    Some(Sample {
        ticker,
        date,
        window,
        rv_aux,
        target: panel.cell(ticker, date).map(|c| F::lit(c.rv)),
    })
}

/// Samples for every ticker in `tickers` and target date in `dates`, ordered
/// by (date, ticker).
pub fn build_dataset<F: Scalar>(
    panel: &Panel,
    spec: WindowSpec,
    tickers: &[usize],
    dates: Range<usize>,
    require_target: bool,
) -> Result<Dataset<F>> {
    if let Some(&t) = tickers.iter().find(|&&t| t >= panel.n_tickers()) {
        return Err(Error::invalid(format!("ticker index {t} out of range")));
    }
    let dates = dates.start..dates.end.min(panel.n_dates());
    let mut samples = Vec::new();
    let mut skipped = 0;
    for date in dates {
        for &ticker in tickers {
            match sample_at(panel, spec, ticker, date) {
                Some(s) if !require_target || s.target.is_some() => samples.push(s),
                _ => skipped += 1,
            }
        }
    }
    Ok(Dataset { spec, samples, skipped })
}
