//! Classical conditional-variance models.

pub mod fit;
pub mod forecast;
pub mod likelihood;
pub mod model;
pub mod optimize;
pub mod recursion;

pub use fit::{fit, fit_with, FitOptions, FitRecord, VarianceModelFit};
pub use forecast::{forecast_one_step, forecast_path, martingale_forecast};
pub use likelihood::negative_log_likelihood;
pub use model::{Backcast, ModelKind, ParamVector, RealisedEquation};
pub use optimize::{minimize, BfgsOptions, BfgsResult};
pub use recursion::{extended_paths, variance_path, FIGARCH_LAGS};
