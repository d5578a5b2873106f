use nalgebra::{DMatrix, DVector};

use super::tsvd::truncated_solve;
use super::{QuadraticOperators, RegressionProblem, SolverConfig, TsvdRank};
use crate::error::Result;

/// Ratio of smallest to largest squared Cholesky pivot below which the
/// normal equations are treated as singular.
const PIVOT_TOL: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct TikhonovFit {
    pub ops: QuadraticOperators,
    /// The regularized normal matrix was singular and the full-rank tsvd
    /// solution was returned instead.
    pub fell_back: bool,
}

/// Minimize `‖target − O D‖²_F + ‖O Γ‖²_F` with
/// `Γ = diag(√α_A I_r, √α_H I_r², √α_C)` through the SPD normal equations
/// `(D Dᵀ + Γ²) Oᵀ = D targetᵀ`.
pub fn solve_tikhonov(p: &RegressionProblem, cfg: &SolverConfig) -> Result<TikhonovFit> {
    let r = p.dim();
    let d = p.data();
    let m = d.nrows();
    let alpha = cfg.alpha;
    let gamma_sq = DVector::from_fn(m, |i, _| {
        if i < r {
            alpha.a
        } else if i < r + r * r {
            alpha.h
        } else {
            alpha.c
        }
    });

    let mut normal = d * d.transpose();
    for i in 0..m {
        normal[(i, i)] += gamma_sq[i];
    }
    let rhs = d * p.target().transpose();

    let solved = normal.clone().cholesky().and_then(|chol| {
        let pivots = chol.l_dirty().diagonal();
        let max = pivots.iter().fold(0.0f64, |a, v| a.max(v * v));
        let min = pivots.iter().fold(f64::INFINITY, |a, v| a.min(v * v));
        (max > 0.0 && min > PIVOT_TOL * max).then(|| chol.solve(&rhs))
    });

    match solved {
        Some(ot) => Ok(TikhonovFit {
            ops: QuadraticOperators::from_stacked(&ot.transpose())?,
            fell_back: false,
        }),
        None => {
            let o: DMatrix<f64> = truncated_solve(d, p.target(), TsvdRank::Full)?;
            Ok(TikhonovFit {
                ops: QuadraticOperators::from_stacked(&o)?,
                fell_back: true,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::opinf::{solve_tsvd, Penalty};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem(r: usize, cols: usize, seed: u64) -> RegressionProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let states = DMatrix::from_fn(r, cols, |_, _| rng.random_range(-1.0..1.0));
        let target = DMatrix::from_fn(r, cols, |_, _| rng.random_range(-1.0..1.0));
        RegressionProblem::from_states(&states, target, None).unwrap()
    }

    #[test]
    fn huge_alpha_shrinks_to_zero() {
        let p = problem(2, 30, 1);
        let alpha = 1e12;
        let fit = solve_tikhonov(&p, &SolverConfig::tikhonov(Penalty::uniform(alpha))).unwrap();
        assert!(!fit.fell_back);
        let bound = p.target().norm() * p.data().norm() / alpha;
        assert!(fit.ops.norm() <= bound, "{} > {bound}", fit.ops.norm());
    }

    #[test]
    fn zero_alpha_matches_tsvd_scalar() {
        // r = 1 has no duplicated Kronecker rows, so D Dᵀ is nonsingular
        let p = problem(1, 30, 2);
        let tik = solve_tikhonov(&p, &SolverConfig::tikhonov(Penalty::zero())).unwrap();
        assert!(!tik.fell_back);
        let tsvd = solve_tsvd(&p, &SolverConfig::tsvd(TsvdRank::Full)).unwrap();
        assert!(linalg::relative_frobenius(&tsvd.stacked(), &tik.ops.stacked()) < 1e-8);
    }

    #[test]
    fn zero_alpha_falls_back_when_singular() {
        let p = problem(3, 40, 3);
        let tik = solve_tikhonov(&p, &SolverConfig::tikhonov(Penalty::zero())).unwrap();
        assert!(tik.fell_back);
        let tsvd = solve_tsvd(&p, &SolverConfig::tsvd(TsvdRank::Full)).unwrap();
        assert!(linalg::relative_frobenius(&tsvd.stacked(), &tik.ops.stacked()) < 1e-8);
    }

    #[test]
    fn norm_non_increasing_in_alpha() {
        let p = problem(3, 25, 4);
        let mut last = f64::INFINITY;
        for alpha in [1e-8, 1e-6, 1e-4, 1e-2, 1.0, 1e2, 1e4] {
            let fit = solve_tikhonov(&p, &SolverConfig::tikhonov(Penalty::uniform(alpha))).unwrap();
            let n = fit.ops.norm();
            assert!(n <= last * (1.0 + 1e-10), "alpha {alpha}: {n} > {last}");
            last = n;
        }
    }

    #[test]
    fn quadratic_only_penalty_regularizes_duplicates() {
        let p = problem(3, 40, 5);
        let fit = solve_tikhonov(&p, &SolverConfig::tikhonov(Penalty::default())).unwrap();
        assert!(!fit.fell_back);
    }
}
