use super::model::{Backcast, ModelKind, ParamVector};
use super::recursion::extended_paths;
use crate::error::Result;
use crate::scalar::Scalar;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Gaussian negative log-likelihood of one observation with variance `var`.
#[inline]
pub fn gaussian_nll_term<F: Scalar>(x2: F, var: F) -> F {
    F::lit(0.5) * (F::lit(LN_2PI) + var.ln() + x2 / var)
}

/// Gaussian quasi negative log-likelihood of the returns given the kind's
/// variance path. HEAVY adds the realised-measure line, scored as
/// √RM_t ~ N(0, μ_t), and both lines are fitted jointly.
pub fn negative_log_likelihood<F: Scalar>(
    kind: ModelKind,
    params: &ParamVector<F>,
    returns: &[F],
    realised: Option<&[F]>,
    backcast: Backcast<F>,
) -> Result<F> {
    let paths = extended_paths(kind, params, returns, realised, backcast)?;
    let mut nll: F = returns
        .iter()
        .zip(&paths.variance)
        .map(|(&r, &v)| gaussian_nll_term(r * r, v))
        .sum();
    if let (Some(mu), Some(rm)) = (&paths.realised_mean, realised) {
        nll += rm.iter().zip(mu).map(|(&x, &m)| gaussian_nll_term(x, m)).sum::<F>();
    }
    Ok(nll)
}
