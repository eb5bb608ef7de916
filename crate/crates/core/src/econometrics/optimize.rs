//! Minimal BFGS with central-difference gradients and a monotone
//! backtracking line search.

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Convergence when the Euclidean gradient norm drops below this.
    pub grad_tol: f64,
    /// Relative finite-difference step.
    pub fd_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            max_iter: 500,
            grad_tol: 1e-6,
            fd_step: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsResult<F> {
    pub x: Vec<F>,
    pub value: F,
    pub grad_norm: F,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every accepted step, starting with the initial value.
    pub trace: Vec<F>,
}

/// Central differences, falling back to one-sided steps next to an infeasible
/// (non-finite) point.
pub fn numerical_gradient<F: Scalar>(f: &mut impl FnMut(&[F]) -> F, x: &[F], fx: F, rel_step: f64) -> Vec<F> {
    let mut probe = x.to_vec();
    let mut g = vec![F::zero(); x.len()];
    for i in 0..x.len() {
        let h = F::lit(rel_step) * x[i].abs().max(F::one());
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        g[i] = match (up.is_finite(), down.is_finite()) {
            (true, true) => (up - down) / (h + h),
            (true, false) => (up - fx) / h,
            (false, true) => (fx - down) / h,
            (false, false) => F::zero(),
        };
    }
    g
}

fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn norm<F: Scalar>(a: &[F]) -> F {
    dot(a, a).sqrt()
}

/// Minimises `f` from `x0`. Infeasible points should evaluate to `+inf`.
pub fn minimize<F: Scalar>(mut f: impl FnMut(&[F]) -> F, x0: Vec<F>, opts: BfgsOptions) -> BfgsResult<F> {
    let n = x0.len();
    let mut x = x0;
    let mut fx = f(&x);
    let mut trace = vec![fx];
    if !fx.is_finite() || n == 0 {
        return BfgsResult {
            x,
            value: fx,
            grad_norm: F::infinity(),
            iterations: 0,
            converged: false,
            trace,
        };
    }
    let identity = |n: usize| {
        let mut h = vec![F::zero(); n * n];
        for i in 0..n {
            h[i * n + i] = F::one();
        }
        h
    };
    let mut hinv = identity(n);
    let mut g = numerical_gradient(&mut f, &x, fx, opts.fd_step);
    let tol = F::lit(opts.grad_tol);
    let mut converged = norm(&g) < tol;
    let mut iterations = 0;
    let mut fresh = true;

    while !converged && iterations < opts.max_iter {
        let mut dir: Vec<F> = (0..n)
            .map(|i| -(0..n).map(|j| hinv[i * n + j] * g[j]).sum::<F>())
            .collect();
        if dot(&dir, &g) >= F::zero() {
            hinv = identity(n);
            fresh = true;
            dir = g.iter().map(|&v| -v).collect();
        }
        let slope = dot(&dir, &g);
        let mut step = F::one();
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<F> = x.iter().zip(&dir).map(|(&xi, &di)| xi + step * di).collect();
            let ft = f(&trial);
            if ft.is_finite() && ft < fx && ft <= fx + F::lit(1e-4) * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step = step * F::lit(0.5);
        }
        let Some((x_new, f_new)) = accepted else {
            if fresh {
                break;
            }
            hinv = identity(n);
            fresh = true;
            continue;
        };
        let g_new = numerical_gradient(&mut f, &x_new, f_new, opts.fd_step);
        let s: Vec<F> = x_new.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let y: Vec<F> = g_new.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > F::lit(1e-12) * norm(&s) * norm(&y) {
            if fresh {
                let scale = sy / dot(&y, &y);
                for v in hinv.iter_mut() {
                    *v *= scale;
                }
            }
            // H ← (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ
            let rho = F::one() / sy;
            let hy: Vec<F> = (0..n).map(|i| (0..n).map(|j| hinv[i * n + j] * y[j]).sum()).collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    hinv[i * n + j] += rho * ((F::one() + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
                }
            }
            fresh = false;
        }
        x = x_new;
        fx = f_new;
        g = g_new;
        trace.push(fx);
        iterations += 1;
        converged = norm(&g) < tol;
    }
    BfgsResult {
        grad_norm: norm(&g),
        x,
        value: fx,
        iterations,
        converged,
        trace,
    }
}
