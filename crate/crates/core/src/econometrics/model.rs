use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{mean, mean_square, Scalar};

/// Classical variance models. Orders are `p` innovation lags and `q`
/// variance lags (for TARCH, `q` counts the negative-shock indicator lags).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelKind {
    Garch { p: usize, q: usize },
    Igarch { p: usize, q: usize },
    Figarch,
    Tarch { p: usize, q: usize },
    Aparch { p: usize, q: usize },
    Agarch { p: usize, q: usize },
    Egarch { p: usize, q: usize },
    Heavy,
    Martingale,
}

impl ModelKind {
    pub const ALL_DEFAULT: [ModelKind; 9] = [
        ModelKind::Martingale,
        ModelKind::Garch { p: 1, q: 1 },
        ModelKind::Igarch { p: 1, q: 1 },
        ModelKind::Figarch,
        ModelKind::Tarch { p: 1, q: 1 },
        ModelKind::Aparch { p: 1, q: 1 },
        ModelKind::Agarch { p: 1, q: 1 },
        ModelKind::Egarch { p: 1, q: 1 },
        ModelKind::Heavy,
    ];

    /// (p, q); FIGARCH and HEAVY are fixed at (1, 1), the martingale at (0, 0).
    pub fn orders(&self) -> (usize, usize) {
        match *self {
            ModelKind::Garch { p, q }
            | ModelKind::Igarch { p, q }
            | ModelKind::Tarch { p, q }
            | ModelKind::Aparch { p, q }
            | ModelKind::Agarch { p, q }
            | ModelKind::Egarch { p, q } => (p, q),
            ModelKind::Figarch | ModelKind::Heavy => (1, 1),
            ModelKind::Martingale => (0, 0),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Garch { .. } => "garch",
            ModelKind::Igarch { .. } => "igarch",
            ModelKind::Figarch => "figarch",
            ModelKind::Tarch { .. } => "tarch",
            ModelKind::Aparch { .. } => "aparch",
            ModelKind::Agarch { .. } => "agarch",
            ModelKind::Egarch { .. } => "egarch",
            ModelKind::Heavy => "heavy",
            ModelKind::Martingale => "martingale",
        }
    }

    pub fn needs_realised(&self) -> bool {
        matches!(self, ModelKind::Heavy | ModelKind::Martingale)
    }

    pub fn validate(&self) -> Result<()> {
        let (p, q) = self.orders();
        if !matches!(self, ModelKind::Martingale) && p < 1 {
            return Err(Error::invalid(format!("{}: p must be at least 1", self.name())));
        }
        if matches!(self, ModelKind::Igarch { .. }) && p + q < 1 {
            return Err(Error::invalid("igarch needs at least one coefficient"));
        }
        Ok(())
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Figarch | ModelKind::Heavy | ModelKind::Martingale => f.write_str(self.name()),
            _ => {
                let (p, q) = self.orders();
                if (p, q) == (1, 1) {
                    f.write_str(self.name())
                } else {
                    write!(f, "{}({p},{q})", self.name())
                }
            }
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    /// Accepts `garch`, `garch(2,1)`, `heavy`, ... (case-insensitive).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (name, orders) = match s.find('(') {
            Some(i) => {
                let inner = s[i + 1..]
                    .strip_suffix(')')
                    .ok_or_else(|| Error::invalid(format!("bad model spec `{s}`")))?;
                let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
                if parts.len() != 2 {
                    return Err(Error::invalid(format!("bad model orders in `{s}`")));
                }
                let p = parts[0].parse().map_err(|_| Error::invalid(format!("bad order in `{s}`")))?;
                let q = parts[1].parse().map_err(|_| Error::invalid(format!("bad order in `{s}`")))?;
                (&s[..i], Some((p, q)))
            }
            None => (s.as_str(), None),
        };
        let (p, q) = orders.unwrap_or((1, 1));
        let kind = match name {
            "garch" => ModelKind::Garch { p, q },
            "igarch" => ModelKind::Igarch { p, q },
            "tarch" => ModelKind::Tarch { p, q },
            "aparch" => ModelKind::Aparch { p, q },
            "agarch" => ModelKind::Agarch { p, q },
            "egarch" => ModelKind::Egarch { p, q },
            "figarch" | "heavy" | "martingale" if orders.is_some() && orders != Some((1, 1)) => {
                return Err(Error::invalid(format!("{name} has fixed orders")));
            }
            "figarch" => ModelKind::Figarch,
            "heavy" => ModelKind::Heavy,
            "martingale" => ModelKind::Martingale,
            _ => return Err(Error::invalid(format!("unknown model `{name}`"))),
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// Realised-measure line of HEAVY: μ_t = ω_R + α_R RM_{t-1} + β_R μ_{t-1}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealisedEquation<F> {
    pub omega: F,
    pub alpha: F,
    pub beta: F,
}

/// Parameters of any classical kind. The mean return is fixed at zero.
///
/// Field meaning by kind:
/// - `alpha`: innovation coefficients (length p). For FIGARCH the single
///   entry is α with φ = α + β, so `d → 0` recovers GARCH(1,1).
/// - `beta`: lagged-variance coefficients (length q); for TARCH these are the
///   coefficients on ε²·1[ε < 0].
/// - `gamma`: asymmetry terms of APARCH, AGARCH and EGARCH (length p).
/// - `delta`: APARCH power; `d`: FIGARCH fractional order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector<F> {
    pub omega: F,
    pub alpha: Vec<F>,
    pub beta: Vec<F>,
    #[serde(default)]
    pub gamma: Vec<F>,
    #[serde(default)]
    pub delta: Option<F>,
    #[serde(default)]
    pub d: Option<F>,
    #[serde(default)]
    pub realised: Option<RealisedEquation<F>>,
}

impl<F: Scalar> ParamVector<F> {
    pub fn garch(omega: F, alpha: F, beta: F) -> Self {
        ParamVector {
            omega,
            alpha: vec![alpha],
            beta: vec![beta],
            gamma: vec![],
            delta: None,
            d: None,
            realised: None,
        }
    }

    pub fn with_gamma(mut self, gamma: Vec<F>) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_delta(mut self, delta: F) -> Self {
        self.delta = Some(delta);
        self
    }

    pub fn with_d(mut self, d: F) -> Self {
        self.d = Some(d);
        self
    }

    pub fn heavy(omega: F, alpha: F, beta: F, omega_r: F, alpha_r: F, beta_r: F) -> Self {
        ParamVector {
            realised: Some(RealisedEquation {
                omega: omega_r,
                alpha: alpha_r,
                beta: beta_r,
            }),
            ..ParamVector::garch(omega, alpha, beta)
        }
    }

    /// Sum of α and β coefficients.
    pub fn persistence(&self) -> F {
        self.alpha.iter().chain(&self.beta).copied().sum()
    }

    /// Flat (name, value) list used for persistence and reporting.
    pub fn named(&self) -> Vec<(String, F)> {
        let mut out = vec![("omega".to_string(), self.omega)];
        out.extend(self.alpha.iter().enumerate().map(|(i, &a)| (format!("alpha{}", i + 1), a)));
        out.extend(self.beta.iter().enumerate().map(|(i, &b)| (format!("beta{}", i + 1), b)));
        out.extend(self.gamma.iter().enumerate().map(|(i, &g)| (format!("gamma{}", i + 1), g)));
        if let Some(delta) = self.delta {
            out.push(("delta".into(), delta));
        }
        if let Some(d) = self.d {
            out.push(("d".into(), d));
        }
        if let Some(r) = self.realised {
            out.push(("omega_r".into(), r.omega));
            out.push(("alpha_r".into(), r.alpha));
            out.push(("beta_r".into(), r.beta));
        }
        out
    }

    /// Checks lengths and the admissible region of `kind`.
    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        kind.validate()?;
        let (p, q) = kind.orders();
        let bad = |msg: String| Err(Error::Constraint(format!("{kind}: {msg}")));
        if matches!(kind, ModelKind::Martingale) {
            return Ok(());
        }
        if self.alpha.len() != p || self.beta.len() != q {
            return bad(format!("expected {p} alpha and {q} beta coefficients"));
        }
        let all: Vec<F> = self.named().into_iter().map(|(_, v)| v).collect();
        if all.iter().any(|v| !v.is_finite()) {
            return bad("non-finite parameter".into());
        }
        let nonneg = |xs: &[F]| xs.iter().all(|&x| x >= F::zero());
        let needs_gamma = matches!(kind, ModelKind::Aparch { .. } | ModelKind::Agarch { .. } | ModelKind::Egarch { .. });
        if needs_gamma && self.gamma.len() != p {
            return bad(format!("expected {p} gamma coefficients"));
        }
        match kind {
            ModelKind::Egarch { .. } => {}
            _ => {
                if self.omega < F::zero() || !nonneg(&self.alpha) || !nonneg(&self.beta) {
                    return bad("omega, alpha and beta must be non-negative".into());
                }
            }
        }
        match kind {
            ModelKind::Igarch { .. } => {
                let s = self.persistence();
                if (s - F::one()).abs() > F::lit(1e-10) {
                    return bad(format!("coefficients must sum to one, got {s}"));
                }
            }
            ModelKind::Figarch => {
                let d = self.d.ok_or_else(|| Error::Constraint("figarch: missing d".into()))?;
                if !(d > F::zero() && d < F::one()) {
                    return bad(format!("d must lie in (0, 1), got {d}"));
                }
                if self.persistence() >= F::one() {
                    return bad("alpha + beta must be below one".into());
                }
            }
            ModelKind::Aparch { .. } => {
                let delta = self.delta.ok_or_else(|| Error::Constraint("aparch: missing delta".into()))?;
                if delta <= F::zero() {
                    return bad("delta must be positive".into());
                }
                if self.gamma.iter().any(|g| g.abs() >= F::one()) {
                    return bad("|gamma| must be below one".into());
                }
            }
            ModelKind::Heavy => {
                let r = self
                    .realised
                    .ok_or_else(|| Error::Constraint("heavy: missing realised-measure equation".into()))?;
                if self.beta[0] >= F::one() {
                    return bad("beta must lie in [0, 1)".into());
                }
                if r.omega < F::zero() || r.alpha < F::zero() || r.beta < F::zero() {
                    return bad("omega_r, alpha_r, beta_r must be non-negative".into());
                }
                if r.alpha + r.beta >= F::one() {
                    return bad("alpha_r + beta_r must lie in [0, 1)".into());
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Pre-sample values standing in for unobserved lags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Backcast<F> {
    /// Used for σ²_{t≤0} and ε²_{t≤0}.
    pub variance: F,
    /// Used for RM_{t≤0} and μ_{t≤0} (HEAVY).
    pub realised: F,
}

impl<F: Scalar> Backcast<F> {
    pub fn fixed(variance: F) -> Self {
        Backcast {
            variance,
            realised: variance,
        }
    }

    /// Sample variance of the (zero-mean) returns and the mean realised measure.
    pub fn from_sample(returns: &[F], realised: Option<&[F]>) -> Self {
        let variance = mean_square(returns);
        Backcast {
            variance,
            realised: realised.map(mean).unwrap_or(variance),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        assert_eq!("garch".parse::<ModelKind>().unwrap(), ModelKind::Garch { p: 1, q: 1 });
        assert_eq!("EGARCH(2,1)".parse::<ModelKind>().unwrap(), ModelKind::Egarch { p: 2, q: 1 });
        assert_eq!(ModelKind::Egarch { p: 2, q: 1 }.to_string(), "egarch(2,1)");
        assert_eq!(ModelKind::Heavy.to_string(), "heavy");
        assert!("garch(0,1)".parse::<ModelKind>().is_err());
        assert!("heavy(2,2)".parse::<ModelKind>().is_err());
        assert!("arima".parse::<ModelKind>().is_err());
        for k in ModelKind::ALL_DEFAULT {
            assert_eq!(k.to_string().parse::<ModelKind>().unwrap(), k);
        }
    }

    #[test]
    fn constraint_checks() {
        let g = ModelKind::Garch { p: 1, q: 1 };
        assert!(ParamVector::garch(0.1, 0.1, 0.8).validate(g).is_ok());
        assert!(ParamVector::garch(0.1, -0.1, 0.8).validate(g).is_err());
        let ig = ModelKind::Igarch { p: 1, q: 1 };
        assert!(ParamVector::garch(0.1, 0.2, 0.8).validate(ig).is_ok());
        assert!(ParamVector::garch(0.1, 0.2, 0.7).validate(ig).is_err());
        let ap = ModelKind::Aparch { p: 1, q: 1 };
        assert!(ParamVector::garch(0.1, 0.1, 0.8).with_gamma(vec![0.3]).with_delta(1.5).validate(ap).is_ok());
        assert!(ParamVector::garch(0.1, 0.1, 0.8).with_gamma(vec![1.0]).with_delta(1.5).validate(ap).is_err());
        let eg = ModelKind::Egarch { p: 1, q: 1 };
        assert!(ParamVector::garch(-0.1, -0.1, 0.9).with_gamma(vec![-0.5]).validate(eg).is_ok());
        let hv = ModelKind::Heavy;
        assert!(ParamVector::heavy(0.1, 0.3, 0.6, 0.1, 0.4, 0.5).validate(hv).is_ok());
        assert!(ParamVector::heavy(0.1, 0.3, 0.6, 0.1, 0.5, 0.5).validate(hv).is_err());
        assert!(ParamVector::heavy(0.1, 0.3, 1.0, 0.1, 0.4, 0.5).validate(hv).is_err());
    }
}
