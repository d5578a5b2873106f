//! Synthetic full-order models used to generate training data.

mod burgers;
mod reactor;
mod stiff;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rom::{integrate, Dynamics, IntegratorOptions};
use crate::snapshots::{blocks_from_sizes, SnapshotDataset, TimeGrid};

pub use burgers::{burgers_rhs_operators, Burgers, BurgersConfig, InitialProfile};
pub use reactor::{reactor_rhs, Reactor, ReactorSurrogateConfig};
pub use stiff::{integrate_stiff, StiffOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum FomConfig {
    Burgers(BurgersConfig),
    Reactor(ReactorSurrogateConfig),
}

impl FomConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            FomConfig::Burgers(c) => c.validate(),
            FomConfig::Reactor(c) => c.validate(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: FomConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn initial_state(&self) -> DVector<f64> {
        match self {
            FomConfig::Burgers(c) => c.initial_state(),
            FomConfig::Reactor(c) => c.initial_state(),
        }
    }

    /// The stiff solver for the reactor, explicit RK45 for Burgers.
    pub fn default_integrator(&self) -> FomIntegrator {
        match self {
            FomConfig::Burgers(_) => FomIntegrator::Rk45,
            FomConfig::Reactor(_) => FomIntegrator::TrBdf2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FomIntegrator {
    Rk45,
    TrBdf2,
}

/// Output sampling of a full-order run: `count` instants on `[0, end]`,
/// clustered near `t = 0` when `exponent > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sampling {
    pub end: f64,
    pub count: usize,
    pub exponent: f64,
}

impl Default for Sampling {
    /// The reactor start-up horizon.
    fn default() -> Self {
        Sampling {
            end: 15.0,
            count: 201,
            exponent: 2.0,
        }
    }
}

impl Sampling {
    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::stretched(0.0, self.end, self.count, self.exponent)
    }
}

fn run<F: Dynamics>(
    f: &F,
    x0: &DVector<f64>,
    grid: &TimeGrid,
    integrator: FomIntegrator,
    rtol: f64,
    atol: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let traj = match integrator {
        FomIntegrator::TrBdf2 => integrate_stiff(
            f,
            x0,
            grid,
            &StiffOptions {
                rtol,
                atol,
                ..Default::default()
            },
        )?,
        FomIntegrator::Rk45 => {
            let tr = integrate(f, x0, grid, &IntegratorOptions::rk45(rtol, atol))?;
            if let Some((t, msg)) = tr.diverged() {
                return Err(Error::Integrator { t, msg: msg.to_string() });
            }
            tr
        }
    };
    let states = traj.values().clone();
    let mut derivs = DMatrix::zeros(states.nrows(), states.ncols());
    let mut buf = DVector::zeros(states.nrows());
    for (j, col) in states.column_iter().enumerate() {
        f.rhs_into(&col.into_owned(), &mut buf);
        derivs.set_column(j, &buf);
    }
    Ok((states, derivs))
}

/// Integrate a full-order model over `grid` and store the states with the
/// exact right-hand side at every output instant as derivatives.
///
/// Tolerances are `rtol = 1e-6`, `atol = 1e-8`. Reactor runs are checked
/// afterwards for conversions outside `[−0.05, 1.05]`.
pub fn generate_dataset(cfg: &FomConfig, grid: &TimeGrid, integrator: FomIntegrator) -> Result<SnapshotDataset> {
    generate_dataset_with(cfg, grid, integrator, 1e-6, 1e-8)
}

pub fn generate_dataset_with(
    cfg: &FomConfig,
    grid: &TimeGrid,
    integrator: FomIntegrator,
    rtol: f64,
    atol: f64,
) -> Result<SnapshotDataset> {
    cfg.validate()?;
    let x0 = cfg.initial_state();
    match cfg {
        FomConfig::Burgers(c) => {
            let (states, derivs) = run(&Burgers::new(c.clone())?, &x0, grid, integrator, rtol, atol)?;
            SnapshotDataset::new(states, grid.clone(), Some(derivs), blocks_from_sizes(&[("u", c.n)]))
        }
        FomConfig::Reactor(c) => {
            let n = c.n_cells;
            let (states, derivs) = run(&Reactor::new(c.clone())?, &x0, grid, integrator, rtol, atol)?;
            let (lo, hi) = states.rows(0, n).iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                (a.min(*v), b.max(*v))
            });
            if lo < -0.05 || hi > 1.05 {
                return Err(Error::Numerical(format!(
                    "conversion left its physical range: min {lo:.4}, max {hi:.4}"
                )));
            }
            SnapshotDataset::new(states, grid.clone(), Some(derivs), blocks_from_sizes(&[("X", n), ("T", n)]))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_json_round_trip() {
        for cfg in [
            FomConfig::Burgers(BurgersConfig::default()),
            FomConfig::Reactor(ReactorSurrogateConfig::default()),
        ] {
            let text = serde_json::to_string(&cfg).unwrap();
            assert_eq!(serde_json::from_str::<FomConfig>(&text).unwrap(), cfg);
        }
        let partial: FomConfig = serde_json::from_str(r#"{"model": "reactor", "n_cells": 50}"#).unwrap();
        match partial {
            FomConfig::Reactor(c) => {
                assert_eq!(c.n_cells, 50);
                assert_eq!(c.t_cool, 550.0);
            }
            _ => panic!("wrong model"),
        }
    }

    #[test]
    fn burgers_decays_with_strong_viscosity() {
        let cfg = FomConfig::Burgers(BurgersConfig {
            n: 32,
            nu: 0.5,
            ..Default::default()
        });
        let grid = TimeGrid::uniform(0.0, 1.0, 21).unwrap();
        let ds = generate_dataset(&cfg, &grid, FomIntegrator::Rk45).unwrap();
        let first = ds.states().column(0).norm();
        let last = ds.states().column(20).norm();
        assert!(last.is_finite() && last < 0.1 * first);
        assert_eq!(ds.blocks()[0].name, "u");
    }

    #[test]
    fn stored_derivatives_are_the_rhs() {
        let c = BurgersConfig {
            n: 16,
            ..Default::default()
        };
        let ops = burgers_rhs_operators(&c).unwrap();
        let grid = TimeGrid::uniform(0.0, 0.5, 6).unwrap();
        for integrator in [FomIntegrator::Rk45, FomIntegrator::TrBdf2] {
            let ds = generate_dataset(&FomConfig::Burgers(c.clone()), &grid, integrator).unwrap();
            for j in 0..6 {
                let x = ds.states().column(j).into_owned();
                let f = ops.rhs(&x).unwrap();
                assert!((ds.derivatives().unwrap().column(j) - f).amax() < 1e-12 * ds.derivatives().unwrap().amax());
            }
        }
    }

    #[test]
    fn integrators_agree_on_burgers() {
        let cfg = FomConfig::Burgers(BurgersConfig {
            n: 24,
            ..Default::default()
        });
        let grid = TimeGrid::uniform(0.0, 0.5, 6).unwrap();
        let a = generate_dataset(&cfg, &grid, FomIntegrator::Rk45).unwrap();
        let b = generate_dataset(&cfg, &grid, FomIntegrator::TrBdf2).unwrap();
        assert!((a.states() - b.states()).amax() < 1e-4);
    }
}
