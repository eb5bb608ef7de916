//! Constrained quasi-maximum-likelihood fitting.
//!
//! Each kind is optimised over an unconstrained vector: positive quantities
//! through `exp`, unit-interval quantities and persistence budgets through the
//! logistic function, bounded asymmetries through a scaled `tanh`, and
//! coefficient shares through a softmax anchored at a zero logit.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::likelihood::negative_log_likelihood;
use super::model::{Backcast, ModelKind, ParamVector, RealisedEquation};
use super::optimize::{minimize, BfgsOptions};
use super::recursion::variance_path;
use crate::error::{Error, Result};
use crate::scalar::{logistic, logit, Scalar};

pub const MIN_OBSERVATIONS: usize = 100;
pub const FIT_SCHEMA: &str = "volcast_fit_v1";
const GAMMA_BOUND: f64 = 0.9999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceModelFit<F> {
    pub kind: ModelKind,
    pub params: ParamVector<F>,
    pub loglik: F,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: F,
    /// Fitted σ²_1..σ²_T.
    pub variance: Vec<F>,
    pub n_obs: usize,
    /// Pre-sample values taken from the estimation sample; reused when
    /// forecasting so forecasts never depend on later data.
    pub backcast: Backcast<F>,
    /// Mean negative log-likelihood after every accepted step of the winning start.
    #[serde(skip)]
    pub trace: Vec<F>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FitOptions {
    pub bfgs: BfgsOptions,
}

// --- transforms -----------------------------------------------------------

/// Softmax over `[0, logits...]`.
fn shares<F: Scalar>(logits: &[F]) -> Vec<F> {
    let m = logits.iter().copied().fold(F::zero(), F::max);
    let mut w: Vec<F> = std::iter::once(F::zero()).chain(logits.iter().copied()).map(|l| (l - m).exp()).collect();
    let total: F = w.iter().copied().sum();
    for v in w.iter_mut() {
        *v /= total;
    }
    w
}

fn share_logits<F: Scalar>(weights: &[F]) -> Vec<F> {
    let floor = F::lit(1e-8);
    let w0 = weights[0].max(floor);
    weights[1..].iter().map(|&w| (w.max(floor) / w0).ln()).collect()
}

fn clamp_unit<F: Scalar>(p: F) -> F {
    p.max(F::lit(1e-8)).min(F::lit(1.0 - 1e-8))
}

fn split<F: Scalar>(total: F, n: usize) -> Vec<F> {
    vec![total / F::from_usize_lossy(n.max(1)); n]
}

/// Unconstrained coordinates → parameters.
pub fn decode<F: Scalar>(kind: ModelKind, x: &[F]) -> ParamVector<F> {
    let (p, q) = kind.orders();
    let mut it = x.iter().copied();
    let mut next = || it.next().unwrap_or_else(F::nan);
    let empty = ParamVector {
        omega: F::nan(),
        alpha: vec![],
        beta: vec![],
        gamma: vec![],
        delta: None,
        d: None,
        realised: None,
    };
    match kind {
        ModelKind::Garch { .. } | ModelKind::Agarch { .. } => {
            let omega = next().exp();
            let persistence = logistic(next());
            let logits: Vec<F> = (1..p + q).map(|_| next()).collect();
            let coef: Vec<F> = shares(&logits).into_iter().map(|w| persistence * w).collect();
            let gamma = if matches!(kind, ModelKind::Agarch { .. }) {
                (0..p).map(|_| next()).collect()
            } else {
                vec![]
            };
            ParamVector {
                omega,
                alpha: coef[..p].to_vec(),
                beta: coef[p..].to_vec(),
                gamma,
                ..empty
            }
        }
        ModelKind::Igarch { .. } => {
            let omega = next().exp();
            let logits: Vec<F> = (1..p + q).map(|_| next()).collect();
            let mut coef = shares(&logits);
            let head: F = coef[..p + q - 1].iter().copied().sum();
            coef[p + q - 1] = F::one() - head;
            ParamVector {
                omega,
                alpha: coef[..p].to_vec(),
                beta: coef[p..].to_vec(),
                ..empty
            }
        }
        ModelKind::Figarch => {
            let omega = next().exp();
            let phi = logistic(next());
            let share = logistic(next());
            let d = logistic(next());
            ParamVector {
                omega,
                alpha: vec![phi * share],
                beta: vec![phi * (F::one() - share)],
                d: Some(d),
                ..empty
            }
        }
        ModelKind::Tarch { .. } => {
            let omega = next().exp();
            let alpha = (0..p).map(|_| next().exp()).collect();
            let beta = (0..q).map(|_| next().exp()).collect();
            ParamVector {
                omega,
                alpha,
                beta,
                ..empty
            }
        }
        ModelKind::Aparch { .. } => {
            let omega = next().exp();
            let alpha = (0..p).map(|_| next().exp()).collect();
            let beta = (0..q).map(|_| logistic(next())).collect();
            let gamma = (0..p).map(|_| F::lit(GAMMA_BOUND) * next().tanh()).collect();
            let delta = next().exp();
            ParamVector {
                omega,
                alpha,
                beta,
                gamma,
                delta: Some(delta),
                ..empty
            }
        }
        ModelKind::Egarch { .. } => {
            let omega = next();
            let alpha = (0..p).map(|_| next()).collect();
            let gamma = (0..p).map(|_| next()).collect();
            let beta = (0..q).map(|_| next().tanh()).collect();
            ParamVector {
                omega,
                alpha,
                beta,
                gamma,
                ..empty
            }
        }
        ModelKind::Heavy => {
            let omega = next().exp();
            let alpha = next().exp();
            let beta = logistic(next());
            let omega_r = next().exp();
            let persistence = logistic(next());
            let share = logistic(next());
            ParamVector {
                omega,
                alpha: vec![alpha],
                beta: vec![beta],
                realised: Some(RealisedEquation {
                    omega: omega_r,
                    alpha: persistence * share,
                    beta: persistence * (F::one() - share),
                }),
                ..empty
            }
        }
        ModelKind::Martingale => empty,
    }
}

/// Parameters → unconstrained coordinates (inverse of [`decode`] inside the
/// admissible region; boundary values are nudged inwards).
pub fn encode<F: Scalar>(kind: ModelKind, params: &ParamVector<F>) -> Vec<F> {
    let tiny = F::lit(1e-8);
    let ln_pos = |v: F| v.max(tiny).ln();
    let mut x = Vec::new();
    match kind {
        ModelKind::Garch { .. } | ModelKind::Agarch { .. } => {
            x.push(ln_pos(params.omega));
            let coef: Vec<F> = params.alpha.iter().chain(&params.beta).copied().collect();
            let total: F = coef.iter().copied().sum();
            x.push(logit(clamp_unit(total)));
            let w: Vec<F> = coef.iter().map(|&c| c.max(tiny) / total.max(tiny)).collect();
            x.extend(share_logits(&w));
            if matches!(kind, ModelKind::Agarch { .. }) {
                x.extend(params.gamma.iter().copied());
            }
        }
        ModelKind::Igarch { .. } => {
            x.push(ln_pos(params.omega));
            let coef: Vec<F> = params.alpha.iter().chain(&params.beta).copied().collect();
            x.extend(share_logits(&coef));
        }
        ModelKind::Figarch => {
            x.push(ln_pos(params.omega));
            let phi = params.alpha[0] + params.beta[0];
            x.push(logit(clamp_unit(phi)));
            x.push(logit(clamp_unit(params.alpha[0] / phi.max(tiny))));
            x.push(logit(clamp_unit(params.d.unwrap_or(F::lit(0.4)))));
        }
        ModelKind::Tarch { .. } => {
            x.push(ln_pos(params.omega));
            x.extend(params.alpha.iter().map(|&a| ln_pos(a)));
            x.extend(params.beta.iter().map(|&b| ln_pos(b)));
        }
        ModelKind::Aparch { .. } => {
            x.push(ln_pos(params.omega));
            x.extend(params.alpha.iter().map(|&a| ln_pos(a)));
            x.extend(params.beta.iter().map(|&b| logit(clamp_unit(b))));
            let bound = F::lit(GAMMA_BOUND);
            x.extend(params.gamma.iter().map(|&g| (g / bound).max(-F::one() + tiny).min(F::one() - tiny).atanh()));
            x.push(ln_pos(params.delta.unwrap_or(F::lit(2.0))));
        }
        ModelKind::Egarch { .. } => {
            x.push(params.omega);
            x.extend(params.alpha.iter().copied());
            x.extend(params.gamma.iter().copied());
            x.extend(params.beta.iter().map(|&b| b.max(-F::one() + tiny).min(F::one() - tiny).atanh()));
        }
        ModelKind::Heavy => {
            let r = params.realised.expect("heavy parameters carry the realised equation");
            x.push(ln_pos(params.omega));
            x.push(ln_pos(params.alpha[0]));
            x.push(logit(clamp_unit(params.beta[0])));
            x.push(ln_pos(r.omega));
            let total = r.alpha + r.beta;
            x.push(logit(clamp_unit(total)));
            x.push(logit(clamp_unit(r.alpha / total.max(tiny))));
        }
        ModelKind::Martingale => {}
    }
    x
}

/// Three starting points: variance-targeted, high-persistence, low-persistence.
pub fn starting_points<F: Scalar>(kind: ModelKind, backcast: Backcast<F>) -> Vec<ParamVector<F>> {
    let (p, q) = kind.orders();
    let s2 = backcast.variance;
    let rbar = backcast.realised;
    let profiles = [(0.10, 0.80), (0.05, 0.93), (0.20, 0.50)];
    profiles
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| {
            let (fa, fb) = (F::lit(a), F::lit(b));
            let (alpha, beta) = if q == 0 {
                (split(fa + fb, p), vec![])
            } else {
                (split(fa, p), split(fb, q))
            };
            let garch_like = ParamVector {
                omega: s2 * (F::one() - fa - fb),
                alpha,
                beta,
                gamma: vec![],
                delta: None,
                d: None,
                realised: None,
            };
            match kind {
                ModelKind::Garch { .. } => garch_like,
                ModelKind::Agarch { .. } => garch_like.with_gamma(vec![F::zero(); p]),
                ModelKind::Igarch { .. } => {
                    let total = fa + fb;
                    ParamVector {
                        omega: s2 * F::lit(0.05),
                        alpha: split(fa / total, p),
                        beta: if q == 0 { vec![] } else { split(fb / total, q) },
                        ..garch_like
                    }
                }
                ModelKind::Figarch => {
                    let (d, alpha, beta) = [(0.4, 0.1, 0.2), (0.6, 0.05, 0.1), (0.2, 0.2, 0.15)][i];
                    ParamVector::garch(s2 * F::lit(0.1), F::lit(alpha), F::lit(beta)).with_d(F::lit(d))
                }
                ModelKind::Tarch { .. } => {
                    let (alpha, ind) = [(0.2, 0.1), (0.1, 0.05), (0.4, 0.2)][i];
                    ParamVector {
                        omega: s2 * F::lit(1.0 - alpha - ind / 2.0),
                        alpha: split(F::lit(alpha), p),
                        beta: split(F::lit(ind), q),
                        ..garch_like
                    }
                }
                ModelKind::Aparch { .. } => {
                    let delta = F::lit([2.0, 1.5, 1.0][i]);
                    ParamVector {
                        omega: s2.sqrt().powf(delta) * (F::one() - fa - fb),
                        ..garch_like
                    }
                    .with_gamma(vec![F::lit(0.1); p])
                    .with_delta(delta)
                }
                ModelKind::Egarch { .. } => {
                    let (alpha, beta) = [(0.1, 0.9), (0.05, 0.97), (0.2, 0.7)][i];
                    let abs_mean = s2.sqrt() * F::lit(0.8);
                    let omega = F::lit(1.0 - beta) * s2.ln() - F::lit(alpha) * abs_mean;
                    ParamVector {
                        omega,
                        alpha: split(F::lit(alpha), p),
                        beta: split(F::lit(beta), q),
                        ..garch_like
                    }
                    .with_gamma(vec![F::lit(-0.1); p])
                }
                ModelKind::Heavy => {
                    let (alpha, beta, ar, br) = [(0.3, 0.6, 0.4, 0.5), (0.2, 0.75, 0.3, 0.65), (0.5, 0.3, 0.6, 0.2)][i];
                    let omega = (s2 * F::lit(1.0 - beta) - F::lit(alpha) * rbar).max(s2 * F::lit(0.01));
                    ParamVector::heavy(
                        omega,
                        F::lit(alpha),
                        F::lit(beta),
                        rbar * F::lit(1.0 - ar - br),
                        F::lit(ar),
                        F::lit(br),
                    )
                }
                ModelKind::Martingale => garch_like,
            }
        })
        .collect()
}

// --- fitting --------------------------------------------------------------

/// Per-observation negative log-likelihood in transformed coordinates;
/// infeasible points map to `+inf`.
pub fn transformed_objective<'a, F: Scalar>(
    kind: ModelKind,
    returns: &'a [F],
    realised: Option<&'a [F]>,
    backcast: Backcast<F>,
) -> impl FnMut(&[F]) -> F + 'a {
    let scale = F::one() / F::from_usize_lossy(returns.len().max(1));
    move |x: &[F]| {
        let params = decode(kind, x);
        match negative_log_likelihood(kind, &params, returns, realised, backcast) {
            Ok(v) if v.is_finite() => v * scale,
            _ => F::infinity(),
        }
    }
}

pub fn fit<F: Scalar>(kind: ModelKind, returns: &[F], realised: Option<&[F]>) -> Result<VarianceModelFit<F>> {
    fit_with(kind, returns, realised, &FitOptions::default())
}

pub fn fit_with<F: Scalar>(
    kind: ModelKind,
    returns: &[F],
    realised: Option<&[F]>,
    opts: &FitOptions,
) -> Result<VarianceModelFit<F>> {
    kind.validate()?;
    if matches!(kind, ModelKind::Martingale) {
        return Err(Error::invalid("the martingale baseline has no parameters to fit"));
    }
    if returns.len() < MIN_OBSERVATIONS {
        return Err(Error::invalid(format!(
            "{kind}: need at least {MIN_OBSERVATIONS} daily observations, got {}",
            returns.len()
        )));
    }
    let realised = if matches!(kind, ModelKind::Heavy) {
        let rm = realised.ok_or_else(|| Error::invalid("heavy needs the realised-variance series"))?;
        if rm.len() != returns.len() {
            return Err(Error::Shape("realised series must align with returns".into()));
        }
        Some(rm)
    } else {
        None
    };
    let backcast = Backcast::from_sample(returns, realised);

    let mut best: Option<(super::optimize::BfgsResult<F>, usize)> = None;
    for (i, start) in starting_points(kind, backcast).into_iter().enumerate() {
        let x0 = encode(kind, &start);
        let objective = transformed_objective(kind, returns, realised, backcast);
        let run = minimize(objective, x0, opts.bfgs);
        if !run.value.is_finite() {
            continue;
        }
        let better = match &best {
            None => true,
            Some((b, _)) => run.value < b.value,
        };
        if better {
            best = Some((run, i));
        }
    }
    let (run, _) = best.ok_or_else(|| Error::Constraint(format!("{kind}: every starting point is infeasible")))?;
    let params = decode(kind, &run.x);
    let nll = negative_log_likelihood(kind, &params, returns, realised, backcast)?;
    let variance = variance_path(kind, &params, returns, realised, backcast)?;
    Ok(VarianceModelFit {
        kind,
        params,
        loglik: -nll,
        converged: run.converged,
        iterations: run.iterations,
        grad_norm: run.grad_norm,
        variance,
        n_obs: returns.len(),
        backcast,
        trace: run.trace,
    })
}

// --- persistence ----------------------------------------------------------

/// On-disk form of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitRecord {
    pub schema: String,
    pub kind: ModelKind,
    pub label: String,
    pub params: BTreeMap<String, f64>,
    pub full_params: ParamVector<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub n_obs: usize,
    pub backcast: Backcast<f64>,
    pub ticker: Option<String>,
    /// First and last date of the estimation sample.
    pub sample_range: Option<(String, String)>,
}

impl FitRecord {
    pub fn from_fit<F: Scalar>(fit: &VarianceModelFit<F>, ticker: Option<String>, sample_range: Option<(String, String)>) -> Self {
        let to64 = |v: F| v.to_f64_lossy();
        let p = &fit.params;
        let full_params = ParamVector {
            omega: to64(p.omega),
            alpha: p.alpha.iter().map(|&v| to64(v)).collect(),
            beta: p.beta.iter().map(|&v| to64(v)).collect(),
            gamma: p.gamma.iter().map(|&v| to64(v)).collect(),
            delta: p.delta.map(to64),
            d: p.d.map(to64),
            realised: p.realised.map(|r| RealisedEquation {
                omega: to64(r.omega),
                alpha: to64(r.alpha),
                beta: to64(r.beta),
            }),
        };
        FitRecord {
            schema: FIT_SCHEMA.into(),
            kind: fit.kind,
            label: fit.kind.to_string(),
            params: full_params.named().into_iter().collect(),
            full_params,
            loglik: to64(fit.loglik),
            converged: fit.converged,
            iterations: fit.iterations,
            n_obs: fit.n_obs,
            backcast: Backcast {
                variance: to64(fit.backcast.variance),
                realised: to64(fit.backcast.realised),
            },
            ticker,
            sample_range,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let rec: FitRecord = serde_json::from_str(&text)?;
        if rec.schema != FIT_SCHEMA {
            return Err(Error::Schema {
                expected: FIT_SCHEMA.into(),
                found: rec.schema,
            });
        }
        Ok(rec)
    }
}
