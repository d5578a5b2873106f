use nalgebra::DMatrix;

use super::{QuadraticOperators, RegressionProblem, SolverConfig, TsvdRank};
use crate::error::{Error, Result};
use crate::linalg;

const RANK_TOL: f64 = 1e-12;

/// Count singular values above `1e-12 · σ_max`.
pub fn numerical_rank(singular_values: &[f64]) -> usize {
    let max = singular_values.first().copied().unwrap_or(0.0);
    if max <= 0.0 {
        return 0;
    }
    singular_values.iter().filter(|s| **s > RANK_TOL * max).count()
}

/// `target · D⁺_r̃` for the truncation order selected by `rank`.
pub(crate) fn truncated_solve(data: &DMatrix<f64>, target: &DMatrix<f64>, rank: TsvdRank) -> Result<DMatrix<f64>> {
    let svd = linalg::svd(data, true, true)?;
    let sv = &svd.singular_values;
    let achievable = numerical_rank(sv);
    let keep = match rank {
        TsvdRank::Full => achievable,
        TsvdRank::Fixed(k) => {
            if k > sv.len() {
                return Err(Error::invalid(format!(
                    "tsvd rank {k} exceeds min(rows, columns) = {}",
                    sv.len()
                )));
            }
            if k > achievable {
                return Err(Error::RankDeficient {
                    requested: k,
                    achievable,
                });
            }
            k
        }
        TsvdRank::Energy(theta) => {
            let total: f64 = sv.iter().map(|s| s * s).sum();
            let mut acc = 0.0;
            let mut k = sv.len();
            for (i, s) in sv.iter().enumerate() {
                acc += s * s;
                if acc >= theta * total {
                    k = i + 1;
                    break;
                }
            }
            k.min(achievable)
        }
    };

    // O = T · V_k · Σ_k⁻¹ · U_kᵀ
    let v_k = svd.v_t.rows(0, keep).transpose();
    let mut tv = target * v_k;
    for (j, mut col) in tv.column_iter_mut().enumerate() {
        col /= sv[j];
    }
    Ok(tv * svd.u.columns(0, keep).transpose())
}

/// Minimum-norm least squares with a rank-truncated pseudo-inverse of `D`.
///
/// `Ĥ` is symmetrized on return. With the full Kronecker square the rows
/// `(i, j)` and `(j, i)` of `D` coincide, so [`TsvdRank::Full`] means the
/// numerical rank rather than `r + r² + 1`.
pub fn solve_tsvd(p: &RegressionProblem, cfg: &SolverConfig) -> Result<QuadraticOperators> {
    let o = truncated_solve(p.data(), p.target(), cfg.tsvd_rank)?;
    QuadraticOperators::from_stacked(&o)
}
