use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rom::Dynamics;

/// Two-field plug-flow reactor surrogate with state `[X; T]`.
///
/// ```text
/// ∂X/∂t = −u ∂X/∂z + s
/// c ∂T/∂t = −u ∂T/∂z + Λ ∂²T/∂z² + κ (T_cool − T) + ΔT_ad s
/// s = β (1 − X) σ(γ (T − T_ref))
/// ```
///
/// `c` lumps the bed heat capacity relative to the gas, so the thermal
/// front moves slower than the flow. The coefficients are synthetic: they
/// give a cold start that ignites, reaches high outlet conversion and
/// settles to a steady profile. Inflow is `X = 0`, `T = T_cool`; the outlet
/// has zero temperature gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReactorSurrogateConfig {
    pub n_cells: usize,
    pub length: f64,
    pub velocity: f64,
    /// Axial heat dispersion `Λ`.
    pub diffusion: f64,
    /// Wall cooling rate `κ`.
    pub cooling: f64,
    pub t_cool: f64,
    /// Source amplitude `β`.
    pub rate: f64,
    /// Ignition steepness `γ` of the logistic activation.
    pub steepness: f64,
    pub t_ref: f64,
    /// Adiabatic temperature rise `ΔT_ad` per unit conversion.
    pub heat_release: f64,
    /// Heat capacity ratio `c`.
    pub heat_capacity: f64,
}

impl Default for ReactorSurrogateConfig {
    fn default() -> Self {
        ReactorSurrogateConfig {
            n_cells: 200,
            length: 1.0,
            velocity: 1.0,
            diffusion: 0.005,
            cooling: 0.5,
            t_cool: 550.0,
            rate: 5.0,
            steepness: 0.03,
            t_ref: 630.0,
            heat_release: 300.0,
            heat_capacity: 8.0,
        }
    }
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl ReactorSurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_cells < 3 {
            return Err(Error::invalid("the reactor needs at least 3 cells per field"));
        }
        let all = [
            self.length,
            self.velocity,
            self.diffusion,
            self.cooling,
            self.t_cool,
            self.rate,
            self.steepness,
            self.t_ref,
            self.heat_release,
            self.heat_capacity,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("reactor coefficients must be finite"));
        }
        if !(self.length > 0.0 && self.velocity > 0.0 && self.cooling > 0.0 && self.heat_capacity > 0.0) {
            return Err(Error::invalid("length, velocity, cooling and heat capacity must be positive"));
        }
        if self.diffusion < 0.0 {
            return Err(Error::invalid("diffusion must be non-negative"));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n_cells as f64
    }

    /// Cold start: `X = 0`, `T = T_cool`.
    pub fn initial_state(&self) -> DVector<f64> {
        let n = self.n_cells;
        DVector::from_fn(2 * n, |i, _| if i < n { 0.0 } else { self.t_cool })
    }

    /// `s(X, T)`.
    pub fn source(&self, x: f64, t: f64) -> f64 {
        self.rate * (1.0 - x) * logistic(self.steepness * (t - self.t_ref))
    }
}

/// Finite-volume reactor surrogate.
#[derive(Debug, Clone)]
pub struct Reactor {
    cfg: ReactorSurrogateConfig,
}

impl Reactor {
    pub fn new(cfg: ReactorSurrogateConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Reactor { cfg })
    }

    pub fn config(&self) -> &ReactorSurrogateConfig {
        &self.cfg
    }
}

/// Right-hand side with the state checked for finiteness.
pub fn reactor_rhs(cfg: &ReactorSurrogateConfig, state: &DVector<f64>) -> Result<DVector<f64>> {
    cfg.validate()?;
    if state.len() != 2 * cfg.n_cells {
        return Err(Error::dim(format!(
            "reactor state has {} entries, expected {}",
            state.len(),
            2 * cfg.n_cells
        )));
    }
    if state.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("reactor state is not finite".into()));
    }
    let r = Reactor { cfg: cfg.clone() };
    let mut out = DVector::zeros(state.len());
    r.rhs_into(state, &mut out);
    Ok(out)
}

impl Dynamics for Reactor {
    fn dim(&self) -> usize {
        2 * self.cfg.n_cells
    }

    fn rhs_into(&self, y: &DVector<f64>, out: &mut DVector<f64>) {
        let c = &self.cfg;
        let n = c.n_cells;
        let h = c.spacing();
        let adv = c.velocity / h;
        let dif = c.diffusion / (h * h);
        for i in 0..n {
            let x = y[i];
            let t = y[n + i];
            let x_up = if i == 0 { 0.0 } else { y[i - 1] };
            let t_up = if i == 0 { c.t_cool } else { y[n + i - 1] };
            let t_down = if i + 1 == n { t } else { y[n + i + 1] };
            let s = c.source(x, t);
            out[i] = -adv * (x - x_up) + s;
            out[n + i] = (-adv * (t - t_up) + dif * (t_up - 2.0 * t + t_down) + c.cooling * (c.t_cool - t)
                + c.heat_release * s)
                / c.heat_capacity;
        }
    }

    fn jacobian(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let c = &self.cfg;
        let n = c.n_cells;
        let h = c.spacing();
        let adv = c.velocity / h;
        let dif = c.diffusion / (h * h);
        let inv_cap = 1.0 / c.heat_capacity;
        let mut j = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            let x = y[i];
            let t = y[n + i];
            let sig = logistic(c.steepness * (t - c.t_ref));
            let ds_dx = -c.rate * sig;
            let ds_dt = c.rate * (1.0 - x) * c.steepness * sig * (1.0 - sig);

            j[(i, i)] = -adv + ds_dx;
            j[(i, n + i)] = ds_dt;
            if i > 0 {
                j[(i, i - 1)] = adv;
            }

            let row = n + i;
            let mut diag = -adv - 2.0 * dif - c.cooling;
            if i > 0 {
                j[(row, n + i - 1)] = (adv + dif) * inv_cap;
            }
            if i + 1 < n {
                j[(row, n + i + 1)] = dif * inv_cap;
            } else {
                diag += dif;
            }
            j[(row, row)] = (diag + c.heat_release * ds_dt) * inv_cap;
            j[(row, i)] = c.heat_release * ds_dx * inv_cap;
        }
        j
    }
}
