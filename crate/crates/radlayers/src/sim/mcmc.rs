//! Reference Gibbs sampler with Metropolis-Hastings propensity updates for a
//! single layer. It samples the exact model the EM optimizes, so it serves
//! both as a correctness oracle on tiny instances and as the timing baseline
//! for the EM comparison.

use std::time::{Duration, Instant};

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::prelude::*;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{Hyperparams, LayerDataset, MuPrior};
use crate::numeric::{log_norm_cdf, log_normal_pdf};

use super::rng::wishart_sample;

/// Sampler controls.
#[derive(Debug, Clone)]
pub struct McmcOptions {
    /// Post burn-in sweeps to keep (ignored when a time budget is set).
    pub sweeps: usize,
    pub burn_in: usize,
    /// Stop after this wall-clock budget, counting completed sweeps.
    pub time_budget: Option<Duration>,
    /// Initial random-walk step for the propensity updates.
    pub step0: f64,
    /// Adapt the step toward a 25-45% acceptance rate during burn-in.
    pub adapt: bool,
}

impl Default for McmcOptions {
    fn default() -> Self {
        McmcOptions {
            sweeps: 2000,
            burn_in: 500,
            time_budget: None,
            step0: 0.2,
            adapt: true,
        }
    }
}

/// Optional chain start; anything unset falls back to the default start.
/// Only zeta and lambda matter: the coefficient block is regenerated from
/// scratch on the first sweep.
#[derive(Debug, Clone, Default)]
pub struct McmcInit {
    pub zeta: Option<Vec<Vec<bool>>>,
    pub lambda: Option<Vec<DVector<f64>>>,
}

/// Posterior summaries and counters.
#[derive(Debug, Clone)]
pub struct McmcResult {
    /// Posterior inclusion frequency per sequence and gene.
    pub inclusion_mean: Vec<DVector<f64>>,
    pub beta_mean: DMatrix<f64>,
    pub sweeps_completed: usize,
    pub samples_kept: usize,
    pub elapsed: Duration,
    pub acceptance_rate: f64,
    pub jitter_retries: usize,
    pub final_step: f64,
}

fn sample_beta(
    data: &LayerDataset,
    delta_inv: &DMatrix<f64>,
    eta2: &DMatrix<f64>,
    rng: &mut impl Rng,
    jitter_retries: &mut usize,
) -> Result<DMatrix<f64>> {
    let g = data.g();
    let p = data.p();
    let dim = g * p;
    let mut prec = DMatrix::zeros(dim, dim);
    for k in 0..g {
        for kp in 0..g {
            let x = data.xtx[(k, kp)];
            for j in 0..p {
                for jp in 0..p {
                    prec[(k * p + j, kp * p + jp)] = x * delta_inv[(j, jp)];
                }
            }
        }
    }
    for k in 0..g {
        for j in 0..p {
            prec[(k * p + j, k * p + j)] += 1.0 / eta2[(k, j)];
        }
    }
    let rhs_mat = &data.xty * delta_inv;
    let mut rhs = DVector::zeros(dim);
    for k in 0..g {
        for j in 0..p {
            rhs[k * p + j] = rhs_mat[(k, j)];
        }
    }
    let mut attempt = 0;
    let chol = loop {
        match Cholesky::new(prec.clone()) {
            Some(c) => break c,
            None => {
                attempt += 1;
                *jitter_retries += 1;
                if attempt > 5 {
                    return Err(Error::Numerical(
                        "coefficient precision stayed non-SPD after jitter".into(),
                    ));
                }
                let bump = 1e-10 * prec.diagonal().amax().max(1.0) * 10f64.powi(attempt);
                for i in 0..dim {
                    prec[(i, i)] += bump;
                }
            }
        }
    };
    let mean = chol.solve(&rhs);
    let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    // solve L' u = z so that u ~ N(0, prec^-1)
    let u = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let flat = mean + u;
    Ok(DMatrix::from_fn(g, p, |k, j| flat[k * p + j]))
}

/// Gibbs sweep order: beta, nu^-2, Delta^-1, zeta, lambda (random-walk MH).
pub fn mcmc_baseline(
    data: &LayerDataset,
    hyper: &Hyperparams,
    mu: &MuPrior,
    opts: &McmcOptions,
    init: Option<McmcInit>,
    rng: &mut impl Rng,
) -> Result<McmcResult> {
    hyper.validate(data.g(), data.p())?;
    let g = data.g();
    let p = data.p();
    let n = data.n();
    let n_seq = data.n_sequences();
    let seq_of = data.sequence_of_column();
    let ranges = data.block_ranges();

    if opts.sweeps == 0 && opts.time_budget.is_none() {
        return Ok(McmcResult {
            inclusion_mean: vec![DVector::zeros(g); n_seq],
            beta_mean: DMatrix::zeros(g, p),
            sweeps_completed: 0,
            samples_kept: 0,
            elapsed: Duration::ZERO,
            acceptance_rate: 0.0,
            jitter_retries: 0,
            final_step: opts.step0,
        });
    }

    let lambda_prior_inv = Cholesky::new(hyper.lambda_prior.clone())
        .ok_or_else(|| Error::Numerical("lambda prior is not SPD".into()))?
        .inverse();

    let init = init.unwrap_or_default();
    let mut b;
    let mut zeta: Vec<Vec<bool>> = init
        .zeta
        .unwrap_or_else(|| vec![vec![true; g]; n_seq]);
    let mut lambda: Vec<DVector<f64>> = init
        .lambda
        .unwrap_or_else(|| mu.per_sequence.clone());
    let mut nu_inv2 = DMatrix::from_element(g, p, hyper.a1 / hyper.a2);
    let mut delta_inv = DMatrix::identity(p, p);

    let mut incl_sum = vec![DVector::zeros(g); n_seq];
    let mut beta_sum = DMatrix::zeros(g, p);
    let mut kept = 0usize;
    let mut proposals = 0usize;
    let mut accepts = 0usize;
    let mut window_proposals = 0usize;
    let mut window_accepts = 0usize;
    let mut step = opts.step0;
    let mut jitter_retries = 0usize;

    let total_target = if opts.time_budget.is_some() {
        usize::MAX
    } else {
        opts.burn_in.saturating_add(opts.sweeps)
    };

    let started = Instant::now();
    let mut sweeps_completed = 0usize;

    while sweeps_completed < total_target {
        if let Some(budget) = opts.time_budget {
            if started.elapsed() >= budget {
                break;
            }
        }

        // 1. beta | rest
        let eta2 = DMatrix::from_fn(g, p, |k, j| {
            let slab = zeta[seq_of[j]][k];
            let scale = if slab { hyper.v1 } else { hyper.v0 };
            scale / nu_inv2[(k, j)]
        });
        b = sample_beta(data, &delta_inv, &eta2, rng, &mut jitter_retries)?;

        // 2. nu^-2 | rest ~ Gamma(a1 + 1/2, a2 + beta^2 / (2 c))
        for k in 0..g {
            for j in 0..p {
                let c = if zeta[seq_of[j]][k] { hyper.v1 } else { hyper.v0 };
                let rate = hyper.a2 + b[(k, j)] * b[(k, j)] / (2.0 * c);
                let gamma = Gamma::new(hyper.a1 + 0.5, 1.0 / rate)
                    .map_err(|e| Error::Numerical(format!("gamma draw failed: {e}")))?;
                nu_inv2[(k, j)] = gamma.sample(rng);
            }
        }

        // 3. Delta^-1 | rest ~ Wishart(n + df, [Psi + R'R]^-1)
        let resid = data.y() - data.x() * &b;
        let mut s = &hyper.psi + resid.transpose() * &resid;
        s = (&s + s.transpose()) * 0.5;
        let mut attempt = 0;
        let s_inv = loop {
            match Cholesky::new(s.clone()) {
                Some(c) => break c.inverse(),
                None => {
                    attempt += 1;
                    jitter_retries += 1;
                    if attempt > 5 {
                        return Err(Error::Numerical("residual scale stayed non-SPD".into()));
                    }
                    for i in 0..p {
                        s[(i, i)] += 1e-8 * s.diagonal().amax();
                    }
                }
            }
        };
        delta_inv = wishart_sample(n as f64 + hyper.wishart_df, &s_inv, rng)?;
        delta_inv = (&delta_inv + delta_inv.transpose()) * 0.5;

        // 4. zeta | rest, per (sequence, gene) with slab/spike log masses
        for (m, range) in ranges.iter().enumerate() {
            for k in 0..g {
                let lam = lambda[m][k];
                let mut la = log_norm_cdf(lam);
                let mut lb = log_norm_cdf(-lam);
                for j in range.clone() {
                    let nu2 = 1.0 / nu_inv2[(k, j)];
                    la += log_normal_pdf(b[(k, j)], 0.0, hyper.v1 * nu2);
                    lb += log_normal_pdf(b[(k, j)], 0.0, hyper.v0 * nu2);
                }
                let w = 1.0 / (1.0 + (lb - la).exp());
                zeta[m][k] = rng.random::<f64>() < w;
            }
        }

        // 5. lambda | rest: single-site random-walk MH per sequence
        for m in 0..n_seq {
            let centered = &lambda[m] - &mu.per_sequence[m];
            let mut grad_cache = &lambda_prior_inv * centered;
            for k in 0..g {
                let old = lambda[m][k];
                let prop = old + step * rng.sample::<f64, _>(StandardNormal);
                let log_lik = |l: f64| {
                    if zeta[m][k] {
                        log_norm_cdf(l)
                    } else {
                        log_norm_cdf(-l)
                    }
                };
                let diff = prop - old;
                // quadratic-form change for a single-coordinate move
                let dquad = diff * grad_cache[k] + 0.5 * diff * diff * lambda_prior_inv[(k, k)];
                let log_accept = log_lik(prop) - log_lik(old) - dquad;
                proposals += 1;
                window_proposals += 1;
                if rng.random::<f64>().ln() < log_accept {
                    lambda[m][k] = prop;
                    accepts += 1;
                    window_accepts += 1;
                    for i in 0..g {
                        grad_cache[i] += lambda_prior_inv[(i, k)] * diff;
                    }
                }
            }
        }

        sweeps_completed += 1;

        if opts.adapt && sweeps_completed <= opts.burn_in && sweeps_completed % 50 == 0 {
            if window_proposals > 0 {
                let rate = window_accepts as f64 / window_proposals as f64;
                if rate < 0.25 {
                    step *= 0.8;
                } else if rate > 0.45 {
                    step *= 1.25;
                }
            }
            window_proposals = 0;
            window_accepts = 0;
        }

        if sweeps_completed > opts.burn_in {
            for m in 0..n_seq {
                for k in 0..g {
                    if zeta[m][k] {
                        incl_sum[m][k] += 1.0;
                    }
                }
            }
            beta_sum += &b;
            kept += 1;
        }
    }

    let elapsed = started.elapsed();
    let inclusion_mean = incl_sum
        .into_iter()
        .map(|v| if kept > 0 { v / kept as f64 } else { v })
        .collect();
    let beta_mean = if kept > 0 {
        beta_sum / kept as f64
    } else {
        beta_sum
    };
    Ok(McmcResult {
        inclusion_mean,
        beta_mean,
        sweeps_completed,
        samples_kept: kept,
        elapsed,
        acceptance_rate: if proposals > 0 {
            accepts as f64 / proposals as f64
        } else {
            0.0
        },
        jitter_retries,
        final_step: step,
    })
}
