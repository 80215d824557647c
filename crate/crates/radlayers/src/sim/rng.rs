//! Seeded sampling utilities: replication substreams and the matrix-variate
//! draws the generators need.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};

/// Counter-based generator for replication `rep` of a run seeded by
/// `master_seed`. Streams are independent, so replications can run in any
/// order or in parallel and still reproduce bit-identically.
pub fn substream(master_seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(rep);
    rng
}

/// Lower Cholesky factor, with an SPD error message naming the caller's matrix.
pub fn cholesky_factor(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Cholesky::new(m.clone())
        .map(|c| c.l().into_owned())
        .ok_or_else(|| Error::Numerical(format!("{what} is not positive-definite")))
}

/// One N(0, sigma) draw of dimension matching the factor `l` (sigma = l l').
pub fn mvn_sample(l: &DMatrix<f64>, rng: &mut impl Rng) -> DVector<f64> {
    let z = DVector::from_fn(l.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal));
    l * z
}

/// n independent N(0, sigma) rows stacked into an n x p matrix.
pub fn mvn_rows(n: usize, l: &DMatrix<f64>, rng: &mut impl Rng) -> DMatrix<f64> {
    let p = l.nrows();
    let z = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    z * l.transpose()
}

/// Wishart(df, scale) draw via the Bartlett decomposition; requires df >= p.
pub fn wishart_sample(df: f64, scale: &DMatrix<f64>, rng: &mut impl Rng) -> Result<DMatrix<f64>> {
    let p = scale.nrows();
    if df < p as f64 {
        return Err(Error::InvalidInput(format!(
            "Wishart degrees of freedom {df} below dimension {p}"
        )));
    }
    let l = cholesky_factor(scale, "Wishart scale")?;
    let mut a = DMatrix::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(df - i as f64).map_err(|e| {
            Error::InvalidInput(format!("chi-squared parameter invalid: {e}"))
        })?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let la = &l * a;
    Ok(&la * la.transpose())
}

/// Inverse-Wishart(df, scale) draw: the inverse of a Wishart(df, scale^-1).
pub fn inverse_wishart_sample(
    df: f64,
    scale: &DMatrix<f64>,
    rng: &mut impl Rng,
) -> Result<DMatrix<f64>> {
    let scale_inv = Cholesky::new(scale.clone())
        .ok_or_else(|| Error::Numerical("inverse-Wishart scale is not SPD".into()))?
        .inverse();
    let w = wishart_sample(df, &scale_inv, rng)?;
    let mut inv = Cholesky::new(w.clone())
        .ok_or_else(|| Error::Numerical("Wishart draw lost positive definiteness".into()))?
        .inverse();
    inv = (&inv + inv.transpose()) * 0.5;
    Ok(inv)
}

/// Gamma(shape, rate) draw.
pub fn gamma_sample(shape: f64, rate: f64, rng: &mut impl Rng) -> f64 {
    let g = Gamma::new(shape, 1.0 / rate).expect("valid gamma parameters");
    g.sample(rng)
}

/// Double-exponential (Laplace) draw centered at zero with the given scale.
pub fn laplace_sample(scale: f64, rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.random_range(-0.5..0.5);
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}
