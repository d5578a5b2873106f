//! Dense linear-algebra helpers shared by the reduction pipeline.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Kronecker product of two vectors, `(x ⊗ y)[i*d + j] = x[i] * y[j]`.
pub fn kron_vec(x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    let (m, n) = (x.len(), y.len());
    DVector::from_fn(m * n, |k, _| x[k / n] * y[k % n])
}

/// Column-wise Kronecker square of a `d × k` matrix, giving `d² × k`.
pub fn kron_square_columns(states: &DMatrix<f64>) -> DMatrix<f64> {
    let d = states.nrows();
    DMatrix::from_fn(d * d, states.ncols(), |row, col| {
        states[(row / d, col)] * states[(row % d, col)]
    })
}

/// Kronecker product of two matrices.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Thin SVD with singular values sorted in non-increasing order.
///
/// Ties keep their original relative order so the factorization is
/// reproducible.
#[derive(Debug, Clone)]
pub struct SortedSvd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v_t: DMatrix<f64>,
}

pub fn svd(matrix: &DMatrix<f64>, want_u: bool, want_v: bool) -> Result<SortedSvd> {
    let (nr, nc) = matrix.shape();
    let k = nr.min(nc);
    if k == 0 {
        return Ok(SortedSvd {
            u: DMatrix::zeros(nr, 0),
            singular_values: Vec::new(),
            v_t: DMatrix::zeros(0, nc),
        });
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("SVD input contains non-finite entries".into()));
    }
    let raw = nalgebra::linalg::SVD::try_new_unordered(matrix.clone(), want_u, want_v, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        raw.singular_values[b]
            .partial_cmp(&raw.singular_values[a])
            .expect("finite singular values")
    });

    let singular_values = order.iter().map(|&i| raw.singular_values[i]).collect();
    let u = match raw.u {
        Some(u) => DMatrix::from_fn(nr, k, |r, c| u[(r, order[c])]),
        None => DMatrix::zeros(nr, 0),
    };
    let v_t = match raw.v_t {
        Some(v_t) => DMatrix::from_fn(k, nc, |r, c| v_t[(order[r], c)]),
        None => DMatrix::zeros(0, nc),
    };
    Ok(SortedSvd {
        u,
        singular_values,
        v_t,
    })
}

/// Flip column signs so that each column's entry of largest magnitude is
/// positive (first index wins ties).
pub fn fix_column_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let mut best = 0usize;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if col.len() > 0 && col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Largest real part over the eigenvalues of a square matrix.
pub fn max_real_eigenvalue(a: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != a.ncols() {
        return Err(Error::dim("eigenvalues require a square matrix"));
    }
    if a.nrows() == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// `‖a − b‖_F / ‖a‖_F`, or the absolute norm when `a` is zero.
pub fn relative_frobenius(reference: &DMatrix<f64>, other: &DMatrix<f64>) -> f64 {
    let diff = (reference - other).norm();
    let base = reference.norm();
    if base == 0.0 {
        diff
    } else {
        diff / base
    }
}

/// Solve the continuous Lyapunov equation `Aᵀ P + P A = −Q` by vectorization.
///
/// Only meant for the small reduced dimensions this crate works with.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    let eye = DMatrix::<f64>::identity(d, d);
    let at = a.transpose();
    // vec(Aᵀ P) = (I ⊗ Aᵀ) vec(P), vec(P A) = (Aᵀ ⊗ I) vec(P) for column-major vec.
    let system = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = DVector::from_iterator(d * d, q.iter().map(|v| -v));
    let sol = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("Lyapunov system is singular".into()))?;
    let p = DMatrix::from_column_slice(d, d, sol.as_slice());
    Ok((&p + p.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_vec_ordering() {
        let x = DVector::from_vec(vec![1.0, 2.0]);
        let k = kron_vec(&x, &x);
        assert_eq!(k.as_slice(), &[1.0, 2.0, 2.0, 4.0]);
    }

    #[test]
    fn sorted_svd_reconstructs() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let s = svd(&m, true, true).unwrap();
        assert!(s.singular_values[0] >= s.singular_values[1]);
        let sigma = DMatrix::from_diagonal(&DVector::from_vec(s.singular_values.clone()));
        let back = &s.u * sigma * &s.v_t;
        assert!((back - m).norm() < 1e-12);
    }

    #[test]
    fn sign_convention() {
        let mut m = DMatrix::from_column_slice(3, 1, &[0.1, -0.9, 0.3]);
        fix_column_signs(&mut m);
        assert_eq!(m.as_slice(), &[-0.1, 0.9, -0.3]);
    }

    #[test]
    fn lyapunov_residual() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 3.0, 0.0, -2.0]);
        let q = DMatrix::identity(2, 2);
        let p = solve_lyapunov(&a, &q).unwrap();
        let res = a.transpose() * &p + &p * &a + &q;
        assert!(res.norm() < 1e-12);
        assert!(p.clone().cholesky().is_some());
    }
}
