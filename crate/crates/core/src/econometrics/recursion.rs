//! Conditional-variance recursions for every classical kind.
//!
//! All recursions treat ε_t = r_t (zero mean). Lags reaching before the
//! sample use the [`Backcast`] values. Paths are computed one step past the
//! data: element `T` of an extended path is the day-ahead forecast and
//! depends on observations `0..T` only.

use super::model::{Backcast, ModelKind, ParamVector};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// ARCH(∞) truncation of the FIGARCH fractional filter.
pub const FIGARCH_LAGS: usize = 1000;

/// Extended paths (length T + 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Paths<F> {
    pub variance: Vec<F>,
    /// HEAVY realised-measure expectation μ_t.
    pub realised_mean: Option<Vec<F>>,
}

fn check<F: Scalar>(kind: ModelKind, v: F, index: usize) -> Result<F> {
    if v.is_finite() && v > F::zero() {
        Ok(v)
    } else {
        Err(Error::NonFinite {
            context: format!("{kind} variance recursion"),
            index,
        })
    }
}

/// `(1 - L)^d` binomial weights π_0..π_n.
pub fn fractional_weights<F: Scalar>(d: F, n: usize) -> Vec<F> {
    let mut pi = Vec::with_capacity(n + 1);
    pi.push(F::one());
    for k in 1..=n {
        let kf = F::from_usize_lossy(k);
        let prev = pi[k - 1];
        pi.push(prev * (kf - F::one() - d) / kf);
    }
    pi
}

/// FIGARCH ARCH weights λ_1..λ_n on ε²_{t-k} for the recursion
/// σ²_t = ω + β σ²_{t-1} + Σ λ_k ε²_{t-k}, with φ = α + β, so that
/// λ_1 = α + d and λ_k = φ π_{k-1} - π_k afterwards.
pub fn figarch_lambdas<F: Scalar>(alpha: F, beta: F, d: F, n: usize) -> Vec<F> {
    let pi = fractional_weights(d, n);
    let phi = alpha + beta;
    let mut lam: Vec<F> = (1..=n).map(|k| phi * pi[k - 1] - pi[k]).collect();
    if let Some(first) = lam.first_mut() {
        *first -= beta;
    }
    lam
}

/// Runs the recursion of `kind` over `returns`, returning T + 1 values.
pub fn extended_paths<F: Scalar>(
    kind: ModelKind,
    params: &ParamVector<F>,
    returns: &[F],
    realised: Option<&[F]>,
    backcast: Backcast<F>,
) -> Result<Paths<F>> {
    params.validate(kind)?;
    let (p, q) = kind.orders();
    if returns.len() <= p.max(q) {
        return Err(Error::invalid(format!(
            "{kind}: need more than {} observations, got {}",
            p.max(q),
            returns.len()
        )));
    }
    if let Some(i) = returns.iter().position(|r| !r.is_finite()) {
        return Err(Error::NonFinite {
            context: "returns".into(),
            index: i,
        });
    }
    if !(backcast.variance.is_finite() && backcast.variance > F::zero()) {
        return Err(Error::invalid("backcast variance must be positive"));
    }
    let n = returns.len();
    let s2 = backcast.variance;
    let eps2 = |t: isize| -> F {
        if t < 0 {
            s2
        } else {
            returns[t as usize] * returns[t as usize]
        }
    };
    let mut var: Vec<F> = Vec::with_capacity(n + 1);
    let mut realised_mean = None;

    match kind {
        ModelKind::Garch { .. } | ModelKind::Igarch { .. } => {
            for t in 0..=n {
                let ti = t as isize;
                let mut v = params.omega;
                for (i, &a) in params.alpha.iter().enumerate() {
                    v += a * eps2(ti - 1 - i as isize);
                }
                for (j, &b) in params.beta.iter().enumerate() {
                    let lag = ti - 1 - j as isize;
                    v += b * if lag < 0 { s2 } else { var[lag as usize] };
                }
                var.push(check(kind, v, t)?);
            }
        }
        ModelKind::Figarch => {
            let (a, b) = (params.alpha[0], params.beta[0]);
            let lambdas = figarch_lambdas(a, b, params.d.unwrap(), FIGARCH_LAGS);
            let lags = lambdas.len();
            let squared: Vec<F> = std::iter::repeat_n(s2, lags)
                .chain(returns.iter().map(|&r| r * r))
                .collect();
            for t in 0..=n {
                let prev = if t == 0 { s2 } else { var[t - 1] };
                // squared[lags + t - 1 - k] is ε²_{t-1-k}
                let window = &squared[t..lags + t];
                let arch: F = lambdas.iter().zip(window.iter().rev()).map(|(&l, &e)| l * e).sum();
                var.push(check(kind, params.omega + b * prev + arch, t)?);
            }
        }
        ModelKind::Tarch { .. } => {
            let half = s2 / F::lit(2.0);
            for t in 0..=n {
                let ti = t as isize;
                let mut v = params.omega;
                for (i, &a) in params.alpha.iter().enumerate() {
                    v += a * eps2(ti - 1 - i as isize);
                }
                for (j, &b) in params.beta.iter().enumerate() {
                    let lag = ti - 1 - j as isize;
                    let neg = if lag < 0 {
                        half
                    } else if returns[lag as usize] < F::zero() {
                        eps2(lag)
                    } else {
                        F::zero()
                    };
                    v += b * neg;
                }
                var.push(check(kind, v, t)?);
            }
        }
        ModelKind::Aparch { .. } => {
            let delta = params.delta.unwrap();
            let s = s2.sqrt();
            let s_delta = s.powf(delta);
            let two = F::lit(2.0);
            let mut powered: Vec<F> = Vec::with_capacity(n + 1);
            for t in 0..=n {
                let ti = t as isize;
                let mut v = params.omega;
                for (i, (&a, &g)) in params.alpha.iter().zip(&params.gamma).enumerate() {
                    let lag = ti - 1 - i as isize;
                    let impact = if lag < 0 {
                        s_delta * ((F::one() + g).powf(delta) + (F::one() - g).powf(delta)) / two
                    } else {
                        let e = returns[lag as usize];
                        (e.abs() - g * e).powf(delta)
                    };
                    v += a * impact;
                }
                for (j, &b) in params.beta.iter().enumerate() {
                    let lag = ti - 1 - j as isize;
                    v += b * if lag < 0 { s_delta } else { powered[lag as usize] };
                }
                let v = check(kind, v, t)?;
                powered.push(v);
                var.push(check(kind, v.powf(two / delta), t)?);
            }
        }
        ModelKind::Agarch { .. } => {
            for t in 0..=n {
                let ti = t as isize;
                let mut v = params.omega;
                for (i, (&a, &g)) in params.alpha.iter().zip(&params.gamma).enumerate() {
                    let lag = ti - 1 - i as isize;
                    let impact = if lag < 0 {
                        s2 + g * g
                    } else {
                        let shifted = returns[lag as usize] - g;
                        shifted * shifted
                    };
                    v += a * impact;
                }
                for (j, &b) in params.beta.iter().enumerate() {
                    let lag = ti - 1 - j as isize;
                    v += b * if lag < 0 { s2 } else { var[lag as usize] };
                }
                var.push(check(kind, v, t)?);
            }
        }
        ModelKind::Egarch { .. } => {
            let ln_s2 = s2.ln();
            let abs_backcast = s2.sqrt() * F::lit(std::f64::consts::FRAC_2_PI.sqrt());
            let mut log_var: Vec<F> = Vec::with_capacity(n + 1);
            for t in 0..=n {
                let ti = t as isize;
                let mut v = params.omega;
                for (i, (&a, &g)) in params.alpha.iter().zip(&params.gamma).enumerate() {
                    let lag = ti - 1 - i as isize;
                    let shock = if lag < 0 {
                        abs_backcast
                    } else {
                        let e = returns[lag as usize];
                        e.abs() + g * e
                    };
                    v += a * shock;
                }
                for (j, &b) in params.beta.iter().enumerate() {
                    let lag = ti - 1 - j as isize;
                    v += b * if lag < 0 { ln_s2 } else { log_var[lag as usize] };
                }
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        context: format!("{kind} log-variance recursion"),
                        index: t,
                    });
                }
                log_var.push(v);
                var.push(check(kind, v.exp(), t)?);
            }
        }
        ModelKind::Heavy => {
            let rm = realised.ok_or_else(|| Error::invalid("heavy needs the realised-variance series"))?;
            if rm.len() != n {
                return Err(Error::Shape(format!(
                    "heavy: {} realised values for {} returns",
                    rm.len(),
                    n
                )));
            }
            if let Some(i) = rm.iter().position(|x| !x.is_finite() || *x < F::zero()) {
                return Err(Error::NonFinite {
                    context: "realised variance".into(),
                    index: i,
                });
            }
            let r = params.realised.unwrap();
            let (omega, alpha, beta) = (params.omega, params.alpha[0], params.beta[0]);
            let mut mu = Vec::with_capacity(n + 1);
            for t in 0..=n {
                let (rm_prev, var_prev, mu_prev) = if t == 0 {
                    (backcast.realised, s2, backcast.realised)
                } else {
                    (rm[t - 1], var[t - 1], mu[t - 1])
                };
                var.push(check(kind, omega + alpha * rm_prev + beta * var_prev, t)?);
                mu.push(check(kind, r.omega + r.alpha * rm_prev + r.beta * mu_prev, t)?);
            }
            realised_mean = Some(mu);
        }
        ModelKind::Martingale => {
            let rm = realised.ok_or_else(|| Error::invalid("martingale needs the realised-variance series"))?;
            if rm.len() != n {
                return Err(Error::Shape("martingale: realised series length mismatch".into()));
            }
            var.push(check(kind, backcast.realised, 0)?);
            for t in 1..=n {
                var.push(check(kind, rm[t - 1].max(F::min_positive_value()), t)?);
            }
        }
    }
    Ok(Paths {
        variance: var,
        realised_mean,
    })
}

/// Fitted conditional variance σ²_1..σ²_T.
pub fn variance_path<F: Scalar>(
    kind: ModelKind,
    params: &ParamVector<F>,
    returns: &[F],
    realised: Option<&[F]>,
    backcast: Backcast<F>,
) -> Result<Vec<F>> {
    let mut paths = extended_paths(kind, params, returns, realised, backcast)?;
    paths.variance.pop();
    Ok(paths.variance)
}
