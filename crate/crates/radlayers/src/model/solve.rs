//! Coefficient update: solve the SPD system
//!   [(X'X) (x) Delta^-1 + diag(gamma_inv)] vec(B) = vec(X'Y Delta^-1)
//! without materializing the Kronecker product. Small systems go through a
//! dense Cholesky; larger ones use Jacobi-preconditioned conjugate gradients
//! warm-started from the previous EM iterate, with a dense fallback.

use nalgebra::{Cholesky, DMatrix};

use crate::error::{Error, Result};

const DENSE_LIMIT: usize = 64;

/// Matrices are laid out g x p; the implied vectorization is row-wise
/// (gene-major), matching vec(X B) = (X (x) I_p) vec(B).
pub(crate) struct BetaSystem<'a> {
    pub xtx: &'a DMatrix<f64>,
    pub delta_inv: &'a DMatrix<f64>,
    /// Entrywise prior precision d_k / nu2_kj, shaped g x p.
    pub gamma_inv: &'a DMatrix<f64>,
    /// X' Y Delta^-1, shaped g x p.
    pub rhs: &'a DMatrix<f64>,
}

impl BetaSystem<'_> {
    fn apply(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.xtx * (b * self.delta_inv) + self.gamma_inv.component_mul(b)
    }

    fn residual(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.rhs - self.apply(b)
    }

    pub fn residual_norm(&self, b: &DMatrix<f64>) -> f64 {
        self.residual(b).norm()
    }

    /// Solve for B; `warm` seeds the iterative path.
    pub fn solve(&self, warm: Option<&DMatrix<f64>>) -> Result<DMatrix<f64>> {
        let g = self.xtx.nrows();
        let p = self.delta_inv.nrows();
        let dim = g * p;
        if dim <= DENSE_LIMIT {
            return self.solve_dense();
        }
        let tol = 1e-12 * self.rhs.norm().max(1.0);
        if let Some(b) = self.solve_pcg(warm, tol) {
            return Ok(b);
        }
        self.solve_dense()
    }

    fn solve_dense(&self) -> Result<DMatrix<f64>> {
        let g = self.xtx.nrows();
        let p = self.delta_inv.nrows();
        let dim = g * p;
        let mut m = DMatrix::zeros(dim, dim);
        for k in 0..g {
            for kp in 0..g {
                let x = self.xtx[(k, kp)];
                for j in 0..p {
                    for jp in 0..p {
                        m[(k * p + j, kp * p + jp)] = x * self.delta_inv[(j, jp)];
                    }
                }
            }
        }
        for k in 0..g {
            for j in 0..p {
                m[(k * p + j, k * p + j)] += self.gamma_inv[(k, j)];
            }
        }
        let mut rhs_vec = nalgebra::DVector::zeros(dim);
        for k in 0..g {
            for j in 0..p {
                rhs_vec[k * p + j] = self.rhs[(k, j)];
            }
        }
        let chol = Cholesky::new(m).ok_or_else(|| {
            Error::Numerical("coefficient system lost positive definiteness".into())
        })?;
        let sol = chol.solve(&rhs_vec);
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "coefficient solve produced non-finite values".into(),
            ));
        }
        let mut b = DMatrix::zeros(g, p);
        for k in 0..g {
            for j in 0..p {
                b[(k, j)] = sol[k * p + j];
            }
        }
        Ok(b)
    }

    fn solve_pcg(&self, warm: Option<&DMatrix<f64>>, tol: f64) -> Option<DMatrix<f64>> {
        let g = self.xtx.nrows();
        let p = self.delta_inv.nrows();
        let dim = g * p;
        let precond = DMatrix::from_fn(g, p, |k, j| {
            1.0 / (self.xtx[(k, k)] * self.delta_inv[(j, j)] + self.gamma_inv[(k, j)])
        });

        let mut x = warm.cloned().unwrap_or_else(|| DMatrix::zeros(g, p));
        let mut r = self.residual(&x);
        if r.norm() <= tol {
            return Some(x);
        }
        let mut z = precond.component_mul(&r);
        let mut d = z.clone();
        let mut rz = r.dot(&z);
        let max_iter = 20 * dim;
        for _ in 0..max_iter {
            let ad = self.apply(&d);
            let dad = d.dot(&ad);
            if !(dad > 0.0) {
                return None;
            }
            let alpha = rz / dad;
            x += &d * alpha;
            r -= &ad * alpha;
            if r.norm() <= tol {
                if x.iter().any(|v| !v.is_finite()) {
                    return None;
                }
                return Some(x);
            }
            z = precond.component_mul(&r);
            let rz_new = r.dot(&z);
            let beta = rz_new / rz;
            rz = rz_new;
            d = z.clone() + &d * beta;
        }
        None
    }
}
