//! TR-BDF2: a trapezoidal stage to `t + γh` followed by BDF2, L-stable and
//! second order, with an embedded third-order error estimate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rom::{Dynamics, Trajectory};
use crate::snapshots::TimeGrid;

const GAMMA: f64 = 2.0 - std::f64::consts::SQRT_2;
const D: f64 = GAMMA / 2.0;
const W: f64 = std::f64::consts::SQRT_2 / 4.0;
/// `b − b̂` for the stage slopes `(f_n, f_{n+γ}, f_{n+1})`.
const E: [f64; 3] = [(4.0 * W - 1.0) / 3.0, -1.0 / 3.0, 2.0 * D / 3.0];
const NEWTON_ITERS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StiffOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for StiffOptions {
    fn default() -> Self {
        StiffOptions {
            rtol: 1e-6,
            atol: 1e-8,
            max_steps: 200_000,
        }
    }
}

fn weighted_rms(v: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>, o: &StiffOptions) -> f64 {
    let s: f64 = (0..v.len())
        .map(|i| {
            let sc = o.atol + o.rtol * a[i].abs().max(b[i].abs());
            (v[i] / sc).powi(2)
        })
        .sum();
    (s / v.len() as f64).sqrt()
}

/// Simplified Newton for `Y = base + dh f(Y)` with a fixed factorization of
/// `I − dh J`. Returns `None` when the iteration does not contract.
fn newton<F: Dynamics + ?Sized>(
    f: &F,
    lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    base: &DVector<f64>,
    dh: f64,
    guess: DVector<f64>,
    opts: &StiffOptions,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let mut y = guess;
    let mut fy = DVector::zeros(y.len());
    let mut last = f64::INFINITY;
    for _ in 0..NEWTON_ITERS {
        f.rhs_into(&y, &mut fy);
        let g = &y - base - &fy * dh;
        let delta = lu.solve(&g)?;
        y -= &delta;
        let size = weighted_rms(&delta, &y, base, opts);
        if !size.is_finite() {
            return None;
        }
        if size < 1e-3 {
            f.rhs_into(&y, &mut fy);
            return Some((y, fy));
        }
        if size > 2.0 * last {
            return None;
        }
        last = size;
    }
    None
}

/// Integrate `f` with adaptive TR-BDF2, stepping exactly onto every grid
/// instant. Step-size underflow and exhausted step budgets are errors
/// carrying the last accepted time.
pub fn integrate_stiff<F: Dynamics + ?Sized>(
    f: &F,
    x0: &DVector<f64>,
    grid: &TimeGrid,
    opts: &StiffOptions,
) -> Result<Trajectory> {
    let d = f.dim();
    if x0.len() != d {
        return Err(Error::dim(format!("initial state has {} entries, system is {d}-dimensional", x0.len())));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("initial state is not finite"));
    }
    let t_out = grid.as_slice();
    let mut values = DMatrix::zeros(d, t_out.len());
    values.set_column(0, x0);

    let mut y = x0.clone();
    let mut t = t_out[0];
    let mut f1 = DVector::zeros(d);
    f.rhs_into(&y, &mut f1);
    let eye = DMatrix::<f64>::identity(d, d);
    let f_scale = weighted_rms(&f1, &y, &y, opts);
    let mut h = if f_scale > 0.0 { (0.01 / f_scale).min(grid.min_spacing()) } else { grid.min_spacing() };
    let mut steps = 0usize;

    for j in 1..t_out.len() {
        let target = t_out[j];
        while t < target {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::Integrator {
                    t,
                    msg: format!("step budget of {} exhausted", opts.max_steps),
                });
            }
            let remaining = target - t;
            let last = h >= remaining * (1.0 - 1e-12);
            let step = if last { remaining } else { h };
            if step <= 1e-14 * t.abs().max(1.0) {
                return Err(Error::Integrator {
                    t,
                    msg: "step size underflow".into(),
                });
            }

            let jac = f.jacobian(&y);
            let lu = (&eye - &jac * (D * step)).lu();
            let base2 = &y + &f1 * (D * step);
            let stage2 = newton(f, &lu, &base2, D * step, &y + &f1 * (GAMMA * step), opts);
            let Some((y2, f2)) = stage2 else {
                h = step * 0.25;
                continue;
            };
            let base3 = &y + (&f1 + &f2) * (W * step);
            // extrapolate through (t, y) and (t + γh, y2)
            let guess = &y + (&y2 - &y) / GAMMA;
            let Some((y3, f3)) = newton(f, &lu, &base3, D * step, guess, opts) else {
                h = step * 0.25;
                continue;
            };

            let raw = (&f1 * E[0] + &f2 * E[1] + &f3 * E[2]) * step;
            let est = lu.solve(&raw).unwrap_or(raw);
            let err = weighted_rms(&est, &y, &y3, opts);
            if !err.is_finite() {
                h = step * 0.25;
                continue;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-1.0 / 3.0)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                t = if last { target } else { t + step };
                y = y3;
                f1 = f3;
                h = if last { h.max(step * factor) } else { step * factor };
            } else {
                h = step * factor.min(0.9);
            }
        }
        values.set_column(j, &y);
    }
    Trajectory::new(grid.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Linear(DMatrix<f64>);

    impl Dynamics for Linear {
        fn dim(&self) -> usize {
            self.0.nrows()
        }
        fn rhs_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
            out.gemv(1.0, &self.0, x, 0.0);
        }
        fn jacobian(&self, _: &DVector<f64>) -> DMatrix<f64> {
            self.0.clone()
        }
    }

    #[test]
    fn embedded_weights_are_third_order() {
        // b̂ = b − E must satisfy the order conditions Σ b̂ = 1, Σ b̂ c = 1/2, Σ b̂ c² = 1/3
        let b = [W, W, D];
        let c = [0.0, GAMMA, 1.0];
        let bh: Vec<f64> = (0..3).map(|i| b[i] - E[i]).collect();
        for (k, want) in [(0, 1.0), (1, 0.5), (2, 1.0 / 3.0)] {
            let s: f64 = (0..3).map(|i| bh[i] * c[i].powi(k)).sum();
            assert!((s - want).abs() < 1e-14, "order {k}: {s}");
        }
        assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn stiff_linear_system() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 1.0, -1000.0]);
        let grid = TimeGrid::uniform(0.0, 2.0, 21).unwrap();
        let x0 = DVector::from_vec(vec![1.0, 0.0]);
        let tr = integrate_stiff(&Linear(a.clone()), &x0, &grid, &StiffOptions::default()).unwrap();
        for (j, t) in grid.as_slice().iter().enumerate() {
            let exact = (a.clone() * *t).exp() * &x0;
            assert!((tr.values().column(j) - exact).amax() < 1e-4, "t = {t}");
        }
    }

    #[test]
    fn decay_accuracy_follows_tolerance() {
        let grid = TimeGrid::uniform(0.0, 1.0, 5).unwrap();
        let x0 = DVector::from_element(1, 1.0);
        let opts = StiffOptions {
            rtol: 1e-8,
            atol: 1e-10,
            ..Default::default()
        };
        let tr = integrate_stiff(&Linear(DMatrix::from_element(1, 1, -1.0)), &x0, &grid, &opts).unwrap();
        assert!((tr.values()[(0, 4)] - (-1f64).exp()).abs() < 1e-6);
    }
}
