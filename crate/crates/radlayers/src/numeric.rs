//! Small numerical helpers shared across modules: trapezoidal quadrature,
//! stable normal-distribution functions, log-sum-exp and sample quantiles.

/// Trapezoidal quadrature weights for `m` uniformly spaced points spanning `[lo, hi]`.
pub fn trapezoid_weights(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    assert!(m >= 2, "need at least two grid points");
    let dx = (hi - lo) / (m - 1) as f64;
    let mut w = vec![dx; m];
    w[0] = 0.5 * dx;
    w[m - 1] = 0.5 * dx;
    w
}

/// Trapezoidal integral of `values` sampled uniformly on `[lo, hi]`.
pub fn trapezoid_integral(lo: f64, hi: f64, values: &[f64]) -> f64 {
    let m = values.len();
    let dx = (hi - lo) / (m - 1) as f64;
    let interior: f64 = values[1..m - 1].iter().sum();
    dx * (0.5 * values[0] + interior + 0.5 * values[m - 1])
}

/// log(exp(a) + exp(b)) without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let hi = a.max(b);
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Log of the standard normal density.
pub fn log_norm_pdf(x: f64) -> f64 {
    -0.5 * x * x - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Log density of N(mean, var) at `x`.
pub fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let z = x - mean;
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * z * z / var
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Log of the standard normal CDF, stable far into the lower tail.
///
/// The bulk goes through erfc; below -8 the Mills-ratio continued fraction
/// 1/(t + 1/(t + 2/(t + ...))) carries the tail with full precision.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x > 8.0 {
        // 1 - Phi(x) is tiny; ln(1 - q) = ln1p(-q)
        let q = 0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2);
        (-q).ln_1p()
    } else if x >= -8.0 {
        (0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)).ln()
    } else {
        let t = -x;
        let mut f = t;
        for k in (1..=40u32).rev() {
            f = t + f64::from(k) / f;
        }
        log_norm_pdf(t) - f.ln()
    }
}

/// Log of 1 - Phi(x) (upper-tail), stable far into the upper tail.
pub fn log_norm_sf(x: f64) -> f64 {
    log_norm_cdf(-x)
}

/// Hazard phi(x) / (1 - Phi(x)).
pub fn norm_hazard(x: f64) -> f64 {
    (log_norm_pdf(x) - log_norm_sf(x)).exp()
}

/// Reverse hazard phi(x) / Phi(x).
pub fn norm_rev_hazard(x: f64) -> f64 {
    (log_norm_pdf(x) - log_norm_cdf(x)).exp()
}

/// Sample quantile with linear interpolation between order statistics
/// (the convention used by most statistical software for box summaries).
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n >= 1 && (0.0..=1.0).contains(&p));
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Interquartile range of a sample (type-7 quantiles).
pub fn interquartile_range(sample: &[f64]) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    quantile_type7(&sorted, 0.75) - quantile_type7(&sorted, 0.25)
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(sample: &[f64]) -> f64 {
    let n = sample.len();
    if n < 2 {
        return 0.0;
    }
    let mean = sample.iter().sum::<f64>() / n as f64;
    let ss: f64 = sample.iter().map(|x| (x - mean) * (x - mean)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Mean and sample standard deviation of a slice.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (mean, sample_sd(values))
}
