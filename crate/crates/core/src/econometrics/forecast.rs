//! Day-ahead variance forecasts from fitted parameters.

use super::fit::VarianceModelFit;
use super::model::ModelKind;
use super::recursion::extended_paths;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Runs the fitted recursion over `returns` (which may extend past the
/// estimation sample) with frozen parameters. Element `t` is the forecast of
/// σ²_t and uses observations `0..t` only; element `T` is the forecast for the
/// day after the last observation.
pub fn forecast_path<F: Scalar>(fit: &VarianceModelFit<F>, returns: &[F], realised: Option<&[F]>) -> Result<Vec<F>> {
    Ok(extended_paths(fit.kind, &fit.params, returns, realised, fit.backcast)?.variance)
}

/// Forecast for the day after the last observation.
pub fn forecast_one_step<F: Scalar>(fit: &VarianceModelFit<F>, returns: &[F], realised: Option<&[F]>) -> Result<F> {
    let path = forecast_path(fit, returns, realised)?;
    Ok(*path.last().expect("extended path is never empty"))
}

/// Random-walk forecast: tomorrow's variance is today's realised variance.
pub fn martingale_forecast<F: Scalar>(realised: &[F]) -> Result<F> {
    realised
        .last()
        .copied()
        .filter(|v| v.is_finite())
        .map(|v| v.max(F::min_positive_value()))
        .ok_or_else(|| Error::Missing(format!("{}: no realised variance to carry forward", ModelKind::Martingale)))
}
