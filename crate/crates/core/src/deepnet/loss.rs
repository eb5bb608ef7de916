//! Training losses.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Qlike,
    Rmse,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Qlike => "qlike",
            LossKind::Rmse => "rmse",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "qlike" => Ok(LossKind::Qlike),
            "rmse" => Ok(LossKind::Rmse),
            other => Err(Error::invalid(format!("unknown loss '{other}' (expected qlike or rmse)"))),
        }
    }
}

/// ln ĥ + σ²/ĥ.
#[inline]
pub fn qlike_term<F: Scalar>(h: F, s2: F) -> F {
    h.ln() + s2 / h
}

impl LossKind {
    pub fn evaluate<F: Scalar>(&self, h: &[F], target: &[F]) -> Result<F> {
        if h.is_empty() || h.len() != target.len() {
            return Err(Error::Shape(format!("{} forecasts for {} targets", h.len(), target.len())));
        }
        let n = F::from_usize_lossy(h.len());
        match self {
            LossKind::Qlike => {
                if let Some(i) = h.iter().position(|&v| !(v > F::zero())) {
                    return Err(Error::invalid(format!("qlike needs positive forecasts (entry {i})")));
                }
                if target.iter().any(|&s| s < F::zero()) {
                    return Err(Error::invalid("qlike needs non-negative targets"));
                }
                Ok(h.iter().zip(target).map(|(&a, &b)| qlike_term(a, b)).sum::<F>() / n)
            }
            LossKind::Rmse => {
                let mse = h.iter().zip(target).map(|(&a, &b)| (b - a) * (b - a)).sum::<F>() / n;
                Ok(mse.sqrt())
            }
        }
    }

    /// ∂loss/∂ĥ_i.
    pub fn gradient<F: Scalar>(&self, h: &[F], target: &[F]) -> Vec<F> {
        let n = F::from_usize_lossy(h.len());
        match self {
            LossKind::Qlike => h.iter().zip(target).map(|(&a, &b)| (F::one() / a - b / (a * a)) / n).collect(),
            LossKind::Rmse => {
                let rmse = self.evaluate(h, target).unwrap_or_else(|_| F::zero());
                if rmse == F::zero() {
                    return vec![F::zero(); h.len()];
                }
                h.iter().zip(target).map(|(&a, &b)| (a - b) / (n * rmse)).collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert_eq!(LossKind::Qlike.evaluate(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), 1.0);
        let q = LossKind::Qlike.evaluate(&[2.0_f64], &[1.0]).unwrap();
        assert!((q - (2f64.ln() + 0.5)).abs() < 1e-15);
        assert_eq!(LossKind::Rmse.evaluate(&[1.5, 2.0], &[1.5, 2.0]).unwrap(), 0.0);
        assert!(LossKind::Qlike.evaluate(&[0.0], &[1.0]).is_err());
    }

    #[test]
    fn qlike_stationary_at_truth() {
        assert_eq!(LossKind::Qlike.gradient(&[1.7_f64], &[1.7]), vec![0.0]);
    }
}
