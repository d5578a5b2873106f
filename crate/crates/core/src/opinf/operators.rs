use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Average Kronecker columns `(i, j)` and `(j, i)` so that
/// `H (x ⊗ y) = H (y ⊗ x)`. `H (x ⊗ x)` is unchanged.
pub fn symmetrize_quadratic(h: &DMatrix<f64>) -> DMatrix<f64> {
    let d = h.nrows();
    assert_eq!(h.ncols(), d * d, "quadratic operator must be d × d²");
    let mut out = h.clone();
    for i in 0..d {
        for j in (i + 1)..d {
            let (p, q) = (i * d + j, j * d + i);
            for row in 0..d {
                let avg = 0.5 * (h[(row, p)] + h[(row, q)]);
                out[(row, p)] = avg;
                out[(row, q)] = avg;
            }
        }
    }
    out
}

/// The operator triple of `dx/dt = A x + H (x ⊗ x) + C`.
///
/// `H` is always stored symmetrized.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticOperators {
    a: DMatrix<f64>,
    h: DMatrix<f64>,
    c: DVector<f64>,
}

impl QuadraticOperators {
    /// Validate shapes and finiteness; `h` is symmetrized on the way in.
    pub fn new(a: DMatrix<f64>, h: DMatrix<f64>, c: DVector<f64>) -> Result<Self> {
        let d = a.nrows();
        if a.ncols() != d || h.nrows() != d || h.ncols() != d * d || c.len() != d {
            return Err(Error::dim(format!(
                "operators need A d×d, H d×d², C d; got A {:?}, H {:?}, C {}",
                a.shape(),
                h.shape(),
                c.len()
            )));
        }
        if a.iter().chain(h.iter()).chain(c.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("operator entries must be finite".into()));
        }
        let h = symmetrize_quadratic(&h);
        Ok(QuadraticOperators { a, h, c })
    }

    /// Shape-trusting constructor that skips the finiteness check, so
    /// non-finite parameters surface as a non-finite loss instead.
    pub(crate) fn new_unchecked(a: DMatrix<f64>, h: DMatrix<f64>, c: DVector<f64>) -> Self {
        let h = symmetrize_quadratic(&h);
        QuadraticOperators { a, h, c }
    }

    pub fn zeros(d: usize) -> Self {
        QuadraticOperators {
            a: DMatrix::zeros(d, d),
            h: DMatrix::zeros(d, d * d),
            c: DVector::zeros(d),
        }
    }

    /// Split a stacked `[A H C]` block of shape `d × (d + d² + 1)`.
    pub fn from_stacked(o: &DMatrix<f64>) -> Result<Self> {
        let d = o.nrows();
        if o.ncols() != d + d * d + 1 {
            return Err(Error::dim(format!(
                "stacked operator is {:?}, expected {d} × {}",
                o.shape(),
                d + d * d + 1
            )));
        }
        Self::new(
            o.columns(0, d).into_owned(),
            o.columns(d, d * d).into_owned(),
            o.column(d + d * d).into_owned(),
        )
    }

    pub fn stacked(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut o = DMatrix::zeros(d, d + d * d + 1);
        o.columns_mut(0, d).copy_from(&self.a);
        o.columns_mut(d, d * d).copy_from(&self.h);
        o.set_column(d + d * d, &self.c);
        o
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    /// `A x + H (x ⊗ x) + C`.
    pub fn rhs(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        let mut out = DVector::zeros(self.dim());
        self.rhs_into(x, &mut out);
        Ok(out)
    }

    /// Contraction form: `H (x ⊗ x) = Σ_i x_i H[:, i·d..(i+1)·d] x`, so the
    /// `d²` Kronecker vector is never formed. No dimension checks.
    pub fn rhs_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        let d = self.dim();
        out.copy_from(&self.c);
        out.gemv(1.0, &self.a, x, 1.0);
        for i in 0..d {
            let xi = x[i];
            if xi != 0.0 {
                out.gemv(xi, &self.h.columns(i * d, d), x, 1.0);
            }
        }
    }

    /// Same value as [`rhs`](Self::rhs) via the materialized `x ⊗ x`.
    pub fn rhs_kron(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        Ok(&self.a * x + &self.h * linalg::kron_vec(x, x) + &self.c)
    }

    /// `∂f/∂x = A + H (I ⊗ x + x ⊗ I)`; column `j` equals `A e_j + 2 H (x ⊗ e_j)`
    /// for the symmetrized `H`.
    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim();
        let mut jac = self.a.clone();
        for k in 0..d {
            let xk = x[k];
            if xk == 0.0 {
                continue;
            }
            // columns (k, j) for j = 0..d, i.e. H (e_k ⊗ e_j)
            let block = self.h.columns(k * d, d);
            jac.zip_apply(&block, |j, hb| *j += 2.0 * xk * hb);
        }
        jac
    }

    pub fn max_real_eigenvalue(&self) -> Result<f64> {
        linalg::max_real_eigenvalue(&self.a)
    }

    /// Frobenius norm of the stacked `[A H C]`.
    pub fn norm(&self) -> f64 {
        (self.a.norm_squared() + self.h.norm_squared() + self.c.norm_squared()).sqrt()
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::dim(format!(
                "state has {} entries, operators are {}-dimensional",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }
}
