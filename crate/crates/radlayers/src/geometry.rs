//! Geometry of probability densities under the square-root transform.
//!
//! A density sampled on a uniform grid maps to a point on the unit Hilbert
//! sphere via h = sqrt(f). Distances, exponential/inverse-exponential maps,
//! the Karcher mean and tangent-space PCA all operate on that sphere, where
//! the intrinsic metric on densities reduces to the ordinary L2 metric.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::numeric::{trapezoid_integral, trapezoid_weights};

const MIN_GRID_POINTS: usize = 16;

/// Descriptor of a uniform sampling grid on a closed interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::InvalidInput(format!(
                "grid endpoints must be finite with lo < hi, got [{lo}, {hi}]"
            )));
        }
        if points < MIN_GRID_POINTS {
            return Err(Error::InvalidInput(format!(
                "grid needs at least {MIN_GRID_POINTS} points, got {points}"
            )));
        }
        Ok(Grid { lo, hi, points })
    }

    /// Grid abscissae, inclusive of both endpoints.
    pub fn xs(&self) -> Vec<f64> {
        let dx = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.lo + i as f64 * dx).collect()
    }

    fn weights(&self) -> Vec<f64> {
        trapezoid_weights(self.lo, self.hi, self.points)
    }

    fn check_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!(
                "grids differ: [{}, {}] x{} vs [{}, {}] x{}",
                self.lo, self.hi, self.points, other.lo, other.hi, other.points
            )));
        }
        Ok(())
    }
}

/// Weighted L2 inner product on the grid (trapezoidal rule).
fn inner(grid: &Grid, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let w = grid.weights();
    let mut acc = 0.0;
    for i in 0..grid.points {
        acc += w[i] * a[i] * b[i];
    }
    acc
}

/// A probability density sampled on a uniform grid; integrates to one.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    grid: Grid,
    values: DVector<f64>,
}

impl GridDensity {
    /// Build a density from non-negative samples; the values are rescaled so
    /// the trapezoidal integral is exactly one.
    pub fn new(lo: f64, hi: f64, values: Vec<f64>) -> Result<Self> {
        let grid = Grid::new(lo, hi, values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("density values must be finite".into()));
        }
        if values.iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidInput(
                "density values must be non-negative".into(),
            ));
        }
        let total = trapezoid_integral(lo, hi, &values);
        if total <= 0.0 {
            return Err(Error::Degenerate("density integrates to zero".into()));
        }
        let values = DVector::from_vec(values) / total;
        Ok(GridDensity { grid, values })
    }

    /// Uniform density on `[lo, hi]` with `points` samples.
    pub fn uniform(lo: f64, hi: f64, points: usize) -> Result<Self> {
        GridDensity::new(lo, hi, vec![1.0; points])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn integral(&self) -> f64 {
        trapezoid_integral(self.grid.lo, self.grid.hi, self.values.as_slice())
    }

    /// Square-root transform onto the unit sphere. The pointwise root is
    /// renormalized by its discrete norm to absorb quadrature error.
    pub fn to_srt(&self) -> SqrtDensity {
        let values = self.values.map(f64::sqrt);
        SqrtDensity::normalize(self.grid, values)
    }
}

/// A point on the unit Hilbert sphere: the square root of a density.
///
/// Values coming from exponential-map arithmetic may carry tiny negative
/// excursions from discretization; they are preserved here and only clipped
/// when converting back to a density.
#[derive(Debug, Clone, PartialEq)]
pub struct SqrtDensity {
    grid: Grid,
    values: DVector<f64>,
}

impl SqrtDensity {
    fn normalize(grid: Grid, values: DVector<f64>) -> SqrtDensity {
        let norm = inner(&grid, &values, &values).sqrt();
        SqrtDensity {
            grid,
            values: values / norm,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    /// Discrete L2 norm; one up to floating error by construction.
    pub fn norm(&self) -> f64 {
        inner(&self.grid, &self.values, &self.values).sqrt()
    }

    /// Inverse of the square-root transform: f = h^2, renormalized.
    /// Tiny negative excursions are clipped before squaring.
    pub fn to_density(&self) -> Result<GridDensity> {
        let vals: Vec<f64> = self
            .values
            .iter()
            .map(|v| {
                let c = v.max(0.0);
                c * c
            })
            .collect();
        GridDensity::new(self.grid.lo, self.grid.hi, vals)
    }

    /// Geodesic distance on the sphere: arccos of the inner product, with the
    /// argument clamped to [-1, 1] since quadrature can overshoot marginally.
    /// Near-identical points use the equivalent chordal form
    /// 2 asin(|h1 - h2| / 2), which avoids the precision cliff of acos at 1.
    pub fn distance(&self, other: &SqrtDensity) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        let ip = inner(&self.grid, &self.values, &other.values).clamp(-1.0, 1.0);
        if ip > 0.95 {
            let diff = &self.values - &other.values;
            let chord = inner(&self.grid, &diff, &diff).sqrt();
            Ok(2.0 * (0.5 * chord).min(1.0).asin())
        } else {
            Ok(ip.acos())
        }
    }

    /// Exponential map: walk from this point along tangent vector `v`.
    pub fn exp_map(&self, v: &TangentVector) -> Result<SqrtDensity> {
        self.grid.check_same(&v.base.grid)?;
        if (&v.base.values - &self.values).amax() > 1e-10 {
            return Err(Error::InvalidInput(
                "tangent vector is based at a different point".into(),
            ));
        }
        let len = v.norm();
        if len < 1e-12 {
            return Ok(self.clone());
        }
        let values = self.values.clone() * len.cos() + &v.values * (len.sin() / len);
        Ok(SqrtDensity::normalize(self.grid, values))
    }

    /// Inverse-exponential map: the tangent vector at this point that reaches
    /// `target` along the geodesic.
    pub fn log_map(&self, target: &SqrtDensity) -> Result<TangentVector> {
        self.grid.check_same(&target.grid)?;
        let theta = self.distance(target)?;
        if theta < 1e-12 {
            return Ok(TangentVector {
                base: self.clone(),
                values: DVector::zeros(self.grid.points),
            });
        }
        let scale = theta / theta.sin();
        let values = (&target.values - &self.values * theta.cos()) * scale;
        Ok(TangentVector {
            base: self.clone(),
            values,
        })
    }
}

/// A tangent vector at a point of the sphere: orthogonal to its base point.
#[derive(Debug, Clone)]
pub struct TangentVector {
    base: SqrtDensity,
    values: DVector<f64>,
}

impl TangentVector {
    /// Construct from raw values; enforces the tangency invariant.
    pub fn new(base: SqrtDensity, values: DVector<f64>) -> Result<Self> {
        if values.len() != base.grid.points {
            return Err(Error::GridMismatch(
                "tangent values must match the base grid".into(),
            ));
        }
        let ip = inner(&base.grid, &base.values, &values);
        if ip.abs() > 1e-6 {
            return Err(Error::InvalidInput(format!(
                "vector is not tangent at base: <base, v> = {ip:.3e}"
            )));
        }
        Ok(TangentVector { base, values })
    }

    pub fn base(&self) -> &SqrtDensity {
        &self.base
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        inner(&self.base.grid, &self.values, &self.values).sqrt()
    }

    pub fn scale(&self, factor: f64) -> TangentVector {
        TangentVector {
            base: self.base.clone(),
            values: &self.values * factor,
        }
    }

    /// Inner product with another tangent vector at the same base.
    pub fn dot(&self, other: &TangentVector) -> f64 {
        inner(&self.base.grid, &self.values, &other.values)
    }
}

/// Options for the Karcher-mean gradient descent.
#[derive(Debug, Clone, Copy)]
pub struct KarcherOptions {
    /// Stop when the tangent average has norm below this.
    pub eps1: f64,
    /// Step size applied to the tangent average.
    pub eps2: f64,
    pub max_iter: usize,
}

impl Default for KarcherOptions {
    fn default() -> Self {
        KarcherOptions {
            eps1: 1e-6,
            eps2: 0.5,
            max_iter: 200,
        }
    }
}

/// Result of the Karcher-mean iteration.
#[derive(Debug, Clone)]
pub struct KarcherMean {
    pub mean: SqrtDensity,
    pub converged: bool,
    pub iterations: usize,
}

/// Sample Karcher mean on the sphere by tangent-space gradient descent,
/// initialized at the renormalized extrinsic average.
pub fn karcher_mean(sample: &[SqrtDensity], opts: &KarcherOptions) -> Result<KarcherMean> {
    if sample.is_empty() {
        return Err(Error::InvalidInput("empty sample".into()));
    }
    if opts.eps1 <= 0.0 || opts.eps2 <= 0.0 {
        return Err(Error::InvalidInput("eps1 and eps2 must be positive".into()));
    }
    let grid = sample[0].grid;
    for h in sample.iter().skip(1) {
        grid.check_same(&h.grid)?;
    }

    let mut acc = DVector::zeros(grid.points);
    for h in sample {
        acc += &h.values;
    }
    let mut mean = SqrtDensity::normalize(grid, acc);

    for iter in 1..=opts.max_iter {
        let mut avg = DVector::zeros(grid.points);
        for h in sample {
            avg += mean.log_map(h)?.values;
        }
        avg /= sample.len() as f64;
        let step = TangentVector {
            base: mean.clone(),
            values: avg,
        };
        if step.norm() < opts.eps1 {
            return Ok(KarcherMean {
                mean,
                converged: true,
                iterations: iter,
            });
        }
        mean = mean.exp_map(&step.scale(opts.eps2))?;
    }
    Ok(KarcherMean {
        mean,
        converged: false,
        iterations: opts.max_iter,
    })
}

/// Principal-component model in the tangent space at the Karcher mean.
#[derive(Debug, Clone)]
pub struct PcaModel {
    mean: SqrtDensity,
    /// Retained directions, orthonormal under the grid-weighted inner product.
    basis: Vec<DVector<f64>>,
    /// All positive eigenvalues in non-increasing order (not just retained).
    eigenvalues: Vec<f64>,
    retained: usize,
    cum_var_target: f64,
    /// Set when the sample carries no tangent variance at all.
    zero_variance: bool,
}

impl PcaModel {
    pub fn mean(&self) -> &SqrtDensity {
        &self.mean
    }

    /// Number of retained components.
    pub fn retained(&self) -> usize {
        self.retained
    }

    pub fn cum_var_target(&self) -> f64 {
        self.cum_var_target
    }

    pub fn zero_variance(&self) -> bool {
        self.zero_variance
    }

    /// Eigenvalues of the tangent covariance, non-increasing.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Retained basis directions as tangent vectors at the mean.
    pub fn basis(&self) -> Result<Vec<TangentVector>> {
        self.basis
            .iter()
            .map(|b| {
                if self.zero_variance {
                    Ok(TangentVector {
                        base: self.mean.clone(),
                        values: b.clone(),
                    })
                } else {
                    TangentVector::new(self.mean.clone(), b.clone())
                }
            })
            .collect()
    }

    /// Fraction of total variance explained by each positive eigenvalue.
    pub fn explained_fractions(&self) -> Vec<f64> {
        let total: f64 = self.eigenvalues.iter().sum();
        if total <= 0.0 {
            return vec![0.0; self.eigenvalues.len()];
        }
        self.eigenvalues.iter().map(|e| e / total).collect()
    }

    /// PC scores of a sample: tangent projections onto the retained basis.
    /// Rows follow the sample order, columns the basis order.
    pub fn scores(&self, sample: &[SqrtDensity]) -> Result<DMatrix<f64>> {
        let grid = self.mean.grid;
        for h in sample {
            grid.check_same(&h.grid)?;
        }
        let w = grid.weights();
        let mut out = DMatrix::zeros(sample.len(), self.retained);
        for (i, h) in sample.iter().enumerate() {
            let v = self.mean.log_map(h)?;
            for (j, b) in self.basis.iter().enumerate() {
                let mut acc = 0.0;
                for t in 0..grid.points {
                    acc += w[t] * v.values[t] * b[t];
                }
                out[(i, j)] = acc;
            }
        }
        Ok(out)
    }
}

/// Tangent-space PCA of a density sample.
///
/// The sample covariance of the tangent projections is diagonalized through
/// its n x n Gram matrix; the minimal number of components reaching
/// `cum_var_target` cumulative explained variance is retained. Each basis
/// direction's sign is fixed so its largest-magnitude coordinate is positive.
pub fn fit_pca(
    sample: &[SqrtDensity],
    cum_var_target: f64,
    opts: &KarcherOptions,
) -> Result<PcaModel> {
    if sample.len() < 2 {
        return Err(Error::InvalidInput(
            "tangent PCA needs at least two sample densities".into(),
        ));
    }
    if !(cum_var_target > 0.0 && cum_var_target <= 1.0) {
        return Err(Error::InvalidInput(
            "cumulative variance target must lie in (0, 1]".into(),
        ));
    }
    let n = sample.len();
    let km = karcher_mean(sample, opts)?;
    let mean = km.mean;
    let grid = mean.grid;
    let w = grid.weights();
    let sqrt_w: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();

    // Rows of `proj`: tangent projections rescaled so Euclidean products equal
    // the grid-weighted inner product.
    let mut proj = DMatrix::zeros(n, grid.points);
    for (i, h) in sample.iter().enumerate() {
        let v = mean.log_map(h)?;
        for t in 0..grid.points {
            proj[(i, t)] = v.values[t] * sqrt_w[t];
        }
    }

    let gram = (&proj * proj.transpose()) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let eigenvalues: Vec<f64> = order
        .iter()
        .map(|&i| eig.eigenvalues[i].max(0.0))
        .collect();
    let total: f64 = eigenvalues.iter().sum();

    if total < 1e-18 {
        // Degenerate sample: all densities identical. One flagged component
        // with zero scores keeps downstream shapes consistent.
        return Ok(PcaModel {
            mean,
            basis: vec![DVector::zeros(grid.points)],
            eigenvalues: vec![0.0],
            retained: 1,
            cum_var_target,
            zero_variance: true,
        });
    }

    let mut retained = 0;
    let mut cum = 0.0;
    for ev in &eigenvalues {
        retained += 1;
        cum += ev;
        if cum / total >= cum_var_target {
            break;
        }
    }

    let mut basis = Vec::with_capacity(retained);
    let mut kept_eigs = Vec::with_capacity(retained);
    for &idx in order.iter().take(retained) {
        let lam = eig.eigenvalues[idx].max(0.0);
        if lam <= 0.0 {
            break;
        }
        let q = eig.eigenvectors.column(idx);
        // Map the Gram eigenvector back to grid space and undo the sqrt-weight
        // scaling so the direction is orthonormal under the weighted product.
        let mut dir: DVector<f64> = DVector::zeros(grid.points);
        for i in 0..n {
            for t in 0..grid.points {
                dir[t] += proj[(i, t)] * q[i];
            }
        }
        let denom = ((n as f64 - 1.0) * lam).sqrt();
        for t in 0..grid.points {
            dir[t] = dir[t] / denom / sqrt_w[t];
        }
        // Deterministic sign: largest-magnitude coordinate positive.
        let mut pivot = 0;
        for t in 1..grid.points {
            if dir[t].abs() > dir[pivot].abs() {
                pivot = t;
            }
        }
        if dir[pivot] < 0.0 {
            dir.neg_mut();
        }
        basis.push(dir);
        kept_eigs.push(lam);
    }
    let retained = basis.len();

    // Report the positive eigenvalue spectrum beyond the retained ones too.
    let spectrum: Vec<f64> = eigenvalues.iter().copied().filter(|e| *e > 0.0).collect();

    Ok(PcaModel {
        mean,
        basis,
        eigenvalues: if spectrum.is_empty() { kept_eigs } else { spectrum },
        retained,
        cum_var_target,
        zero_variance: false,
    })
}
