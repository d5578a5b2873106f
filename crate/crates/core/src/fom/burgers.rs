use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opinf::QuadraticOperators;
use crate::rom::Dynamics;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialProfile {
    /// Linear interpolation of the boundary values plus `amplitude · sin(π z / L)`.
    Sine { amplitude: f64 },
    /// `high` for `z < position`, `low` beyond.
    Step { position: f64, high: f64, low: f64 },
}

/// Viscous Burgers' equation `u_t + (u²/2)_z = ν u_zz` on `n` equal cells
/// with Dirichlet data imposed through ghost values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BurgersConfig {
    pub n: usize,
    pub length: f64,
    pub nu: f64,
    pub left: f64,
    pub right: f64,
    pub initial: InitialProfile,
}

impl Default for BurgersConfig {
    fn default() -> Self {
        BurgersConfig {
            n: 64,
            length: 1.0,
            nu: 0.05,
            left: 0.0,
            right: 0.0,
            initial: InitialProfile::Sine { amplitude: 1.0 },
        }
    }
}

impl BurgersConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::invalid("Burgers needs at least 3 cells"));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::invalid("viscosity must be positive"));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::invalid("domain length must be positive"));
        }
        if !(self.left.is_finite() && self.right.is_finite()) {
            return Err(Error::invalid("boundary values must be finite"));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Cell-center coordinates.
    pub fn centers(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.n).map(|i| (i as f64 + 0.5) * h).collect()
    }

    pub fn initial_state(&self) -> DVector<f64> {
        let l = self.length;
        DVector::from_iterator(
            self.n,
            self.centers().into_iter().map(|z| match self.initial {
                InitialProfile::Sine { amplitude } => {
                    self.left + (self.right - self.left) * z / l + amplitude * (std::f64::consts::PI * z / l).sin()
                }
                InitialProfile::Step { position, high, low } => {
                    if z < position {
                        high
                    } else {
                        low
                    }
                }
            }),
        )
    }
}

/// The exact `(A, H, C)` of the semi-discretization: the diffusion stencil
/// in `A`, the central convection `−(x_{i+1}² − x_{i−1}²)/(4h)` on the
/// Kronecker diagonal of `H`, and boundary terms in `C`.
pub fn burgers_rhs_operators(cfg: &BurgersConfig) -> Result<QuadraticOperators> {
    cfg.validate()?;
    let n = cfg.n;
    let h = cfg.spacing();
    let diff = cfg.nu / (h * h);
    let conv = 1.0 / (4.0 * h);
    let mut a = DMatrix::zeros(n, n);
    let mut hq = DMatrix::zeros(n, n * n);
    let mut c = DVector::zeros(n);
    for i in 0..n {
        a[(i, i)] = -2.0 * diff;
        if i > 0 {
            a[(i, i - 1)] = diff;
            hq[(i, (i - 1) * n + (i - 1))] = conv;
        } else {
            c[i] += diff * cfg.left + conv * cfg.left * cfg.left;
        }
        if i + 1 < n {
            a[(i, i + 1)] = diff;
            hq[(i, (i + 1) * n + (i + 1))] = -conv;
        } else {
            c[i] += diff * cfg.right - conv * cfg.right * cfg.right;
        }
    }
    QuadraticOperators::new(a, hq, c)
}

/// Stencil evaluation of the same right-hand side, without the `n × n²`
/// quadratic operator.
#[derive(Debug, Clone)]
pub struct Burgers {
    cfg: BurgersConfig,
}

impl Burgers {
    pub fn new(cfg: BurgersConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Burgers { cfg })
    }

    pub fn config(&self) -> &BurgersConfig {
        &self.cfg
    }
}

impl Dynamics for Burgers {
    fn dim(&self) -> usize {
        self.cfg.n
    }

    fn rhs_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        let n = self.cfg.n;
        let h = self.cfg.spacing();
        let diff = self.cfg.nu / (h * h);
        let conv = 1.0 / (4.0 * h);
        for i in 0..n {
            let l = if i == 0 { self.cfg.left } else { x[i - 1] };
            let r = if i + 1 == n { self.cfg.right } else { x[i + 1] };
            out[i] = diff * (l - 2.0 * x[i] + r) - conv * (r * r - l * l);
        }
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.cfg.n;
        let h = self.cfg.spacing();
        let diff = self.cfg.nu / (h * h);
        let conv = 1.0 / (4.0 * h);
        let mut j = DMatrix::zeros(n, n);
        for i in 0..n {
            j[(i, i)] = -2.0 * diff;
            if i > 0 {
                j[(i, i - 1)] = diff + 2.0 * conv * x[i - 1];
            }
            if i + 1 < n {
                j[(i, i + 1)] = diff - 2.0 * conv * x[i + 1];
            }
        }
        j
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent per-cell loop with explicit ghost cells.
    fn oracle(cfg: &BurgersConfig, x: &[f64]) -> Vec<f64> {
        let n = cfg.n;
        let h = cfg.length / n as f64;
        let mut g = vec![cfg.left];
        g.extend_from_slice(x);
        g.push(cfg.right);
        (1..=n)
            .map(|k| cfg.nu * (g[k - 1] - 2.0 * g[k] + g[k + 1]) / (h * h) - (g[k + 1].powi(2) - g[k - 1].powi(2)) / (4.0 * h))
            .collect()
    }

    #[test]
    fn zero_data_zero_rhs() {
        let cfg = BurgersConfig { n: 8, ..Default::default() };
        let ops = burgers_rhs_operators(&cfg).unwrap();
        assert_eq!(ops.rhs(&DVector::zeros(8)).unwrap(), DVector::zeros(8));
    }

    #[test]
    fn constant_field_is_steady() {
        let cfg = BurgersConfig {
            n: 10,
            left: 0.7,
            right: 0.7,
            nu: 0.3,
            ..Default::default()
        };
        let ops = burgers_rhs_operators(&cfg).unwrap();
        let f = ops.rhs(&DVector::from_element(10, 0.7)).unwrap();
        assert!(f.amax() < 1e-10, "{f}");
    }

    #[test]
    fn operators_match_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = BurgersConfig {
            n: 8,
            left: 0.4,
            right: -0.2,
            ..Default::default()
        };
        let ops = burgers_rhs_operators(&cfg).unwrap();
        let stencil = Burgers::new(cfg.clone()).unwrap();
        for _ in 0..50 {
            let x: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let xv = DVector::from_vec(x.clone());
            let want = DVector::from_vec(oracle(&cfg, &x));
            let got = ops.rhs(&xv).unwrap();
            assert!((&got - &want).norm() <= 1e-12 * want.norm().max(1.0));
            let mut fast = DVector::zeros(8);
            stencil.rhs_into(&xv, &mut fast);
            assert!((&fast - &want).norm() <= 1e-12 * want.norm().max(1.0));
            assert!((stencil.jacobian(&xv) - ops.jacobian(&xv)).amax() < 1e-9);
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(BurgersConfig { n: 2, ..Default::default() }.validate().is_err());
        assert!(BurgersConfig { nu: 0.0, ..Default::default() }.validate().is_err());
    }
}
