//! Explicit time integration on a prescribed output grid.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Trajectory;
use crate::error::{Error, Result};
use crate::opinf::QuadraticOperators;
use crate::snapshots::TimeGrid;

/// States whose magnitude exceeds this are treated as diverged.
pub const DIVERGENCE_BOUND: f64 = 1e12;

/// An autonomous vector field `dx/dt = f(x)`.
pub trait Dynamics {
    fn dim(&self) -> usize;

    fn rhs_into(&self, x: &DVector<f64>, out: &mut DVector<f64>);

    /// `∂f/∂x`; central differences unless overridden.
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim();
        let mut jac = DMatrix::zeros(d, d);
        let mut fp = DVector::zeros(d);
        let mut fm = DVector::zeros(d);
        let mut xp = x.clone();
        for j in 0..d {
            let h = 1e-7 * x[j].abs().max(1.0);
            xp[j] = x[j] + h;
            self.rhs_into(&xp, &mut fp);
            xp[j] = x[j] - h;
            self.rhs_into(&xp, &mut fm);
            xp[j] = x[j];
            jac.set_column(j, &((&fp - &fm) / (2.0 * h)));
        }
        jac
    }
}

impl Dynamics for QuadraticOperators {
    fn dim(&self) -> usize {
        QuadraticOperators::dim(self)
    }

    fn rhs_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        QuadraticOperators::rhs_into(self, x, out)
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        QuadraticOperators::jacobian(self, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Rk45,
    Rk4Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorOptions {
    pub method: Method,
    /// Largest RK4 substep; the smallest grid spacing when unset.
    pub dt_max: Option<f64>,
    pub rtol: f64,
    pub atol: f64,
    /// Adaptive step budget over the whole grid.
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            method: Method::Rk45,
            dt_max: None,
            rtol: 1e-8,
            atol: 1e-10,
            max_steps: 2_000_000,
        }
    }
}

impl IntegratorOptions {
    pub fn rk4(dt_max: Option<f64>) -> Self {
        IntegratorOptions {
            method: Method::Rk4Fixed,
            dt_max,
            ..Default::default()
        }
    }

    pub fn rk45(rtol: f64, atol: f64) -> Self {
        IntegratorOptions {
            method: Method::Rk45,
            rtol,
            atol,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if let Some(h) = self.dt_max {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::invalid("dt_max must be positive"));
            }
        }
        if !(self.rtol > 0.0 && self.atol >= 0.0) {
            return Err(Error::invalid("tolerances must satisfy rtol > 0, atol ≥ 0"));
        }
        Ok(())
    }
}

fn blown_up(x: &DVector<f64>) -> bool {
    x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND)
}

struct Recorder {
    values: DMatrix<f64>,
    filled: usize,
}

impl Recorder {
    fn finish(mut self, grid: &TimeGrid, diverged: Option<(f64, String)>) -> Trajectory {
        let cols = self.values.ncols();
        for j in self.filled..cols {
            self.values.column_mut(j).fill(f64::NAN);
        }
        Trajectory::from_parts(grid.clone(), self.values, diverged)
    }
}

/// Integrate `f` from `x0` at `grid[0]`, returning states at every grid
/// instant. Divergence is flagged on the trajectory rather than returned as
/// an error; unreached columns are NaN.
pub fn integrate<F: Dynamics + ?Sized>(
    f: &F,
    x0: &DVector<f64>,
    grid: &TimeGrid,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    opts.validate()?;
    if x0.len() != f.dim() {
        return Err(Error::dim(format!(
            "initial state has {} entries, system is {}-dimensional",
            x0.len(),
            f.dim()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("initial state is not finite"));
    }
    let mut rec = Recorder {
        values: DMatrix::zeros(f.dim(), grid.len()),
        filled: 1,
    };
    rec.values.set_column(0, x0);
    let diverged = match opts.method {
        Method::Rk4Fixed => rk4_fixed(f, grid, opts.dt_max.unwrap_or(grid.min_spacing()), &mut rec),
        Method::Rk45 => dopri5(f, grid, opts, &mut rec),
    };
    Ok(rec.finish(grid, diverged))
}

fn rk4_fixed<F: Dynamics + ?Sized>(f: &F, grid: &TimeGrid, dt_max: f64, rec: &mut Recorder) -> Option<(f64, String)> {
    let d = f.dim();
    let t = grid.as_slice();
    let mut x: DVector<f64> = rec.values.column(0).into_owned();
    let (mut k1, mut k2, mut k3, mut k4) = (DVector::zeros(d), DVector::zeros(d), DVector::zeros(d), DVector::zeros(d));
    let mut tmp = DVector::zeros(d);
    for j in 1..t.len() {
        let span = t[j] - t[j - 1];
        // tolerate round-off when the spacing equals dt_max
        let n = ((span / dt_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let h = span / n as f64;
        for s in 0..n {
            f.rhs_into(&x, &mut k1);
            tmp.copy_from(&x);
            tmp.axpy(0.5 * h, &k1, 1.0);
            f.rhs_into(&tmp, &mut k2);
            tmp.copy_from(&x);
            tmp.axpy(0.5 * h, &k2, 1.0);
            f.rhs_into(&tmp, &mut k3);
            tmp.copy_from(&x);
            tmp.axpy(h, &k3, 1.0);
            f.rhs_into(&tmp, &mut k4);
            x.axpy(h / 6.0, &k1, 1.0);
            x.axpy(h / 3.0, &k2, 1.0);
            x.axpy(h / 3.0, &k3, 1.0);
            x.axpy(h / 6.0, &k4, 1.0);
            if blown_up(&x) {
                let at = t[j - 1] + (s + 1) as f64 * h;
                return Some((at, format!("state magnitude exceeded {DIVERGENCE_BOUND:e}")));
            }
        }
        rec.values.set_column(j, &x);
        rec.filled = j + 1;
    }
    None
}

// Dormand–Prince 5(4) tableau
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b − b̂
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Adaptive Dormand–Prince with steps clamped to land on every grid
/// instant, so outputs are exact step endpoints rather than interpolants.
fn dopri5<F: Dynamics + ?Sized>(
    f: &F,
    grid: &TimeGrid,
    opts: &IntegratorOptions,
    rec: &mut Recorder,
) -> Option<(f64, String)> {
    let d = f.dim();
    let t_out = grid.as_slice();
    let mut x: DVector<f64> = rec.values.column(0).into_owned();
    let mut t = t_out[0];
    let mut k1 = DVector::zeros(d);
    f.rhs_into(&x, &mut k1);
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) = (
        DVector::zeros(d),
        DVector::zeros(d),
        DVector::zeros(d),
        DVector::zeros(d),
        DVector::zeros(d),
        DVector::zeros(d),
    );
    let mut y = DVector::zeros(d);
    let mut tmp = DVector::zeros(d);

    // initial step from the scale of x and f (Hairer, Nørsett & Wanner)
    let sc = |v: f64| opts.atol + opts.rtol * v.abs();
    let d0 = (x.iter().map(|v| (v / sc(*v)).powi(2)).sum::<f64>() / d as f64).sqrt();
    let d1 = (k1.iter().zip(x.iter()).map(|(k, v)| (k / sc(*v)).powi(2)).sum::<f64>() / d as f64).sqrt();
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h = h.min(t_out[t_out.len() - 1] - t_out[0]);

    let mut steps = 0usize;
    for j in 1..t_out.len() {
        let target = t_out[j];
        while t < target {
            steps += 1;
            if steps > opts.max_steps {
                return Some((t, format!("adaptive step budget of {} exhausted", opts.max_steps)));
            }
            let remaining = target - t;
            let last = h >= remaining * (1.0 - 1e-12);
            let step = if last { remaining } else { h };
            if step <= 1e-14 * t.abs().max(1.0) {
                return Some((t, "adaptive step size underflow".into()));
            }

            tmp.copy_from(&x);
            tmp.axpy(step * A21, &k1, 1.0);
            f.rhs_into(&tmp, &mut k2);
            tmp.copy_from(&x);
            tmp.axpy(step * A31, &k1, 1.0);
            tmp.axpy(step * A32, &k2, 1.0);
            f.rhs_into(&tmp, &mut k3);
            tmp.copy_from(&x);
            tmp.axpy(step * A41, &k1, 1.0);
            tmp.axpy(step * A42, &k2, 1.0);
            tmp.axpy(step * A43, &k3, 1.0);
            f.rhs_into(&tmp, &mut k4);
            tmp.copy_from(&x);
            tmp.axpy(step * A51, &k1, 1.0);
            tmp.axpy(step * A52, &k2, 1.0);
            tmp.axpy(step * A53, &k3, 1.0);
            tmp.axpy(step * A54, &k4, 1.0);
            f.rhs_into(&tmp, &mut k5);
            tmp.copy_from(&x);
            tmp.axpy(step * A61, &k1, 1.0);
            tmp.axpy(step * A62, &k2, 1.0);
            tmp.axpy(step * A63, &k3, 1.0);
            tmp.axpy(step * A64, &k4, 1.0);
            tmp.axpy(step * A65, &k5, 1.0);
            f.rhs_into(&tmp, &mut k6);
            y.copy_from(&x);
            y.axpy(step * B1, &k1, 1.0);
            y.axpy(step * B3, &k3, 1.0);
            y.axpy(step * B4, &k4, 1.0);
            y.axpy(step * B5, &k5, 1.0);
            y.axpy(step * B6, &k6, 1.0);
            f.rhs_into(&y, &mut k7);

            let mut err = 0.0;
            for i in 0..d {
                let e = step * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let s = opts.atol + opts.rtol * x[i].abs().max(y[i].abs());
                err += (e / s).powi(2);
            }
            let err = (err / d as f64).sqrt();

            if !err.is_finite() {
                if blown_up(&y) {
                    return Some((t + step, format!("state magnitude exceeded {DIVERGENCE_BOUND:e}")));
                }
                h = step * 0.1;
                continue;
            }
            if err <= 1.0 {
                t = if last { target } else { t + step };
                std::mem::swap(&mut x, &mut y);
                std::mem::swap(&mut k1, &mut k7);
                if blown_up(&x) {
                    return Some((t, format!("state magnitude exceeded {DIVERGENCE_BOUND:e}")));
                }
                let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                // a clamped final step says nothing about the natural step size
                h = if last { h.max(step * grow) } else { step * grow };
            } else {
                h = step * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            }
        }
        rec.values.set_column(j, &x);
        rec.filled = j + 1;
    }
    None
}
