//! DeepVol training and prediction over panel folds.

use crate::deepnet::{build_dataset, predict_samples, sample_at, train, window_spec, Network, Sample, TrainConfig, TrainHistory};
use crate::error::{Error, Result};
use crate::marketdata::Panel;

pub struct TrainedNet {
    pub net: Network<f64>,
    pub history: TrainHistory,
    pub config: TrainConfig,
}

/// Trains on samples whose target date index lies in `..=train_end` for the
/// given tickers.
pub fn train_on_fold(panel: &Panel, tickers: &[usize], train_end: usize, config: &TrainConfig) -> Result<TrainedNet> {
    let spec = window_spec(panel, config.granularity, config.receptive_field_days)?;
    let data = build_dataset::<f64>(panel, spec, tickers, 0..train_end + 1, true)?;
    let (net, history) = train(&data, config)?;
    Ok(TrainedNet {
        net,
        history,
        config: config.clone(),
    })
}

/// Forecasts for `(ticker, date index)` targets; `None` where the window is
/// incomplete.
pub fn predict_targets(net: &Network<f64>, panel: &Panel, targets: &[(usize, usize)]) -> Result<Vec<Option<f64>>> {
    let spec = net.window.ok_or_else(|| Error::invalid("network carries no window specification"))?;
    let samples: Vec<Option<Sample<f64>>> = targets.iter().map(|&(t, d)| sample_at(panel, spec, t, d)).collect();
    let present: Vec<&Sample<f64>> = samples.iter().flatten().collect();
    let mut values = predict_samples(net, &present)?.into_iter();
    Ok(samples.iter().map(|s| s.as_ref().map(|_| values.next().expect("one value per sample"))).collect())
}

/// Forecast for the day after the panel's last date.
pub fn predict_next(net: &Network<f64>, panel: &Panel, ticker: usize) -> Result<f64> {
    predict_targets(net, panel, &[(ticker, panel.n_dates())])?
        .remove(0)
        .ok_or_else(|| Error::Missing(format!("incomplete window for {}", panel.tickers[ticker])))
}
