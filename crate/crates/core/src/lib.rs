//! Day-ahead volatility forecasting from intraday bars.

pub mod deepnet;
pub mod econometrics;
pub mod error;
pub mod forecast;
pub mod harness;
pub mod marketdata;
pub mod metrics;
pub mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Net64 = deepnet::Network<f64>;
pub type Net32 = deepnet::Network<f32>;
pub type Params64 = econometrics::ParamVector<f64>;
pub type Params32 = econometrics::ParamVector<f32>;
pub type Fit64 = econometrics::VarianceModelFit<f64>;
pub type Fit32 = econometrics::VarianceModelFit<f32>;
