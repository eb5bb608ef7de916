//! Classical models rolled forward over a panel.

use crate::econometrics::{fit, forecast_path, ModelKind, VarianceModelFit};
use crate::error::{Error, Result};
use crate::marketdata::Panel;

/// Daily observations of one ticker: days with a close-to-close return.
#[derive(Debug, Clone, PartialEq)]
pub struct DailySeries {
    pub dates: Vec<usize>,
    pub returns: Vec<f64>,
    pub rv: Vec<f64>,
}

impl DailySeries {
    pub fn from_panel(panel: &Panel, ticker: usize) -> Self {
        let mut s = DailySeries {
            dates: Vec::new(),
            returns: Vec::new(),
            rv: Vec::new(),
        };
        for d in 0..panel.n_dates() {
            if let Some(cell) = panel.cell(ticker, d) {
                if let Some(r) = cell.daily_return {
                    s.dates.push(d);
                    s.returns.push(r);
                    s.rv.push(cell.rv);
                }
            }
        }
        s
    }

    /// Number of observations dated strictly before panel date `date`.
    pub fn count_before(&self, date: usize) -> usize {
        self.dates.partition_point(|&d| d < date)
    }
}

/// A model fitted on the training fold and its extended forecast path over
/// every observation of the ticker.
#[derive(Debug, Clone)]
pub struct ClassicalTrack {
    pub kind: ModelKind,
    pub fit: Option<VarianceModelFit<f64>>,
    pub series: DailySeries,
    /// Realised variance of every present panel day, for the martingale.
    present_rv: Vec<(usize, f64)>,
    /// `path[k]` forecasts observation `k` from observations `0..k`.
    path: Vec<f64>,
}

impl ClassicalTrack {
    /// Fits on observations dated at or before `train_end` (a panel date index).
    pub fn build(panel: &Panel, kind: ModelKind, ticker: usize, train_end: usize) -> Result<Self> {
        let series = DailySeries::from_panel(panel, ticker);
        let present_rv = (0..panel.n_dates())
            .filter_map(|d| panel.cell(ticker, d).map(|c| (d, c.rv)))
            .collect();
        if kind == ModelKind::Martingale {
            return Ok(ClassicalTrack {
                kind,
                fit: None,
                series,
                present_rv,
                path: Vec::new(),
            });
        }
        let n_train = series.count_before(train_end + 1);
        let aux = kind.needs_realised().then(|| &series.rv[..n_train]);
        let fitted = fit(kind, &series.returns[..n_train], aux)?;
        if !fitted.converged {
            log::warn!(
                "{kind} on {}: optimiser stopped with gradient norm {:.3e}",
                panel.tickers[ticker],
                fitted.grad_norm
            );
        }
        let aux_all = kind.needs_realised().then_some(series.rv.as_slice());
        let path = forecast_path(&fitted, &series.returns, aux_all)?;
        Ok(ClassicalTrack {
            kind,
            fit: Some(fitted),
            series,
            present_rv,
            path,
        })
    }

    /// Forecast for panel date `date` using only data dated before it.
    pub fn forecast(&self, date: usize) -> Result<f64> {
        if self.kind == ModelKind::Martingale {
            let k = self.present_rv.partition_point(|&(d, _)| d < date);
            return match k {
                0 => Err(Error::Missing("no earlier realised variance".into())),
                k => Ok(self.present_rv[k - 1].1.max(f64::MIN_POSITIVE)),
            };
        }
        Ok(self.path[self.series.count_before(date)])
    }

    /// Forecast for the day after the last panel date.
    pub fn forecast_next(&self) -> Result<f64> {
        if self.kind == ModelKind::Martingale {
            return self
                .present_rv
                .last()
                .map(|&(_, v)| v.max(f64::MIN_POSITIVE))
                .ok_or_else(|| Error::Missing("no realised variance".into()));
        }
        Ok(*self.path.last().expect("extended path is never empty"))
    }
}
