//! Gradient-descent update for the latent selection propensities.
//!
//! Minimizes, for one sequence,
//!   F(l) = -sum_k [(1 - w_k) ln(1 - Phi(l_k)) + w_k ln Phi(l_k)]
//!          + (l - mu)' Lambda^-1 (l - mu) / 2,
//! which is convex: both -ln Phi and -ln(1 - Phi) are convex and the prior
//! term is quadratic.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numeric::{log_norm_cdf, log_norm_sf, norm_hazard, norm_rev_hazard};

/// Objective value F(lambda).
pub fn lambda_objective(
    lambda: &DVector<f64>,
    w: &DVector<f64>,
    mu: &DVector<f64>,
    lambda_prior_inv: &DMatrix<f64>,
) -> f64 {
    let mut data_term = 0.0;
    for k in 0..lambda.len() {
        let l = lambda[k];
        let wk = w[k];
        if wk < 1.0 {
            data_term -= (1.0 - wk) * log_norm_sf(l);
        }
        if wk > 0.0 {
            data_term -= wk * log_norm_cdf(l);
        }
    }
    let centered = lambda - mu;
    data_term + 0.5 * (lambda_prior_inv * &centered).dot(&centered)
}

/// Analytic gradient of F: Lambda^-1 (l - mu) - s, with
/// s_k = -(1 - w_k) phi / (1 - Phi) + w_k phi / Phi.
pub fn lambda_gradient(
    lambda: &DVector<f64>,
    w: &DVector<f64>,
    mu: &DVector<f64>,
    lambda_prior_inv: &DMatrix<f64>,
) -> DVector<f64> {
    let centered = lambda - mu;
    let mut grad = lambda_prior_inv * centered;
    for k in 0..lambda.len() {
        let l = lambda[k];
        let wk = w[k];
        let s = -(1.0 - wk) * norm_hazard(l) + wk * norm_rev_hazard(l);
        grad[k] -= s;
    }
    grad
}

/// Descend from `start` with learning rate `kappa`, halving the step whenever
/// the objective fails to decrease, until the gradient norm drops below
/// `grad_tol` or `max_steps` is exhausted.
pub fn minimize_lambda(
    start: &DVector<f64>,
    w: &DVector<f64>,
    mu: &DVector<f64>,
    lambda_prior_inv: &DMatrix<f64>,
    kappa: f64,
    grad_tol: f64,
    max_steps: usize,
) -> Result<DVector<f64>> {
    if start.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "lambda iterate is non-finite".into(),
        ));
    }
    let mut lam = start.clone();
    let mut f = lambda_objective(&lam, w, mu, lambda_prior_inv);
    let mut step = kappa;
    for _ in 0..max_steps {
        let grad = lambda_gradient(&lam, w, mu, lambda_prior_inv);
        if grad.norm() < grad_tol {
            return Ok(lam);
        }
        let mut trial = step;
        loop {
            let cand = &lam - &grad * trial;
            let fc = lambda_objective(&cand, w, mu, lambda_prior_inv);
            if fc.is_finite() && fc <= f {
                lam = cand;
                f = fc;
                step = (trial * 1.1).min(kappa * 16.0);
                break;
            }
            trial *= 0.5;
            if trial < 1e-18 {
                return Err(Error::Optimization(format!(
                    "propensity descent stalled at |grad| = {:.3e}, F = {:.6e}",
                    grad.norm(),
                    f
                )));
            }
        }
    }
    Ok(lam)
}
