//! Operator Inference: regress reduced quadratic operators from projected
//! snapshot data.
//!
//! Three backends share one [`RegressionProblem`]:
//!
//! * [`solve_tsvd`]: `[Â Ĥ Ĉ] = Ẋ̂ D⁺` with a rank-truncated pseudo-inverse,
//! * [`solve_tikhonov`]: ridge regression with separate penalties on the
//!   linear, quadratic and constant blocks,
//! * [`solve_stable`]: gradient descent on a one-step RK4 rollout loss over a
//!   parameterization whose `Â` is Hurwitz by construction.

mod operators;
mod problem;
mod stable;
mod tikhonov;
mod tsvd;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use operators::{symmetrize_quadratic, QuadraticOperators};
pub use problem::{assemble_problem, residual, RegressionProblem};
pub use stable::{rollout_loss, rollout_loss_and_gradient, solve_stable, StableFit, StableParameterization};
pub use tikhonov::{solve_tikhonov, TikhonovFit};
pub use tsvd::{numerical_rank, solve_tsvd};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Tsvd,
    #[default]
    Tikhonov,
    StableGradient,
}

impl Backend {
    pub fn as_str(&self) -> &'static str {
        match self {
            Backend::Tsvd => "tsvd",
            Backend::Tikhonov => "tikhonov",
            Backend::StableGradient => "stable-gradient",
        }
    }
}

/// Truncation order for the pseudo-inverse of `D`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TsvdRank {
    /// Every singular value above `1e-12 · σ_max`.
    #[default]
    Full,
    Fixed(usize),
    /// Smallest rank whose squared singular values reach this energy fraction.
    Energy(f64),
}

/// Penalty weights for the `Â`, `Ĥ` and `Ĉ` blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Penalty {
    pub a: f64,
    pub h: f64,
    pub c: f64,
}

impl Default for Penalty {
    fn default() -> Self {
        Penalty { a: 0.0, h: 1e-4, c: 0.0 }
    }
}

impl Penalty {
    pub fn uniform(alpha: f64) -> Self {
        Penalty { a: alpha, h: alpha, c: alpha }
    }

    pub fn zero() -> Self {
        Self::uniform(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradientOptions {
    pub max_epochs: usize,
    /// Epochs without a relative loss improvement above `1e-6` before stopping.
    pub patience: usize,
    pub lr_min: f64,
    pub lr_max: f64,
    /// Epochs from the bottom to the top of one learning-rate triangle.
    pub half_cycle: usize,
    pub seed: u64,
    /// Floor added to the SPD factors `R` and `Q`.
    pub epsilon: f64,
}

impl Default for GradientOptions {
    fn default() -> Self {
        GradientOptions {
            max_epochs: 5000,
            patience: 500,
            lr_min: 1e-5,
            lr_max: 0.05,
            half_cycle: 250,
            seed: 0,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub backend: Backend,
    pub tsvd_rank: TsvdRank,
    pub alpha: Penalty,
    pub gradient: GradientOptions,
}

impl SolverConfig {
    pub fn tsvd(rank: TsvdRank) -> Self {
        SolverConfig {
            backend: Backend::Tsvd,
            tsvd_rank: rank,
            ..Default::default()
        }
    }

    pub fn tikhonov(alpha: Penalty) -> Self {
        SolverConfig {
            backend: Backend::Tikhonov,
            alpha,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.alpha;
        if [p.a, p.h, p.c].iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("regularization weights must be finite and ≥ 0"));
        }
        match self.tsvd_rank {
            TsvdRank::Fixed(0) => return Err(Error::invalid("tsvd rank must be positive")),
            TsvdRank::Energy(e) if !(e > 0.0 && e <= 1.0) => {
                return Err(Error::invalid("tsvd energy tolerance must lie in (0, 1]"))
            }
            _ => {}
        }
        let g = &self.gradient;
        if !(g.lr_min > 0.0 && g.lr_max >= g.lr_min) {
            return Err(Error::invalid("learning-rate bounds must satisfy 0 < lr_min ≤ lr_max"));
        }
        if !(g.epsilon > 0.0) {
            return Err(Error::invalid("stability floor epsilon must be positive"));
        }
        if g.half_cycle == 0 {
            return Err(Error::invalid("learning-rate half cycle must be positive"));
        }
        Ok(())
    }
}

/// Outcome of [`solve`], whichever backend ran.
#[derive(Debug, Clone)]
pub struct Fit {
    pub ops: QuadraticOperators,
    /// Backend that produced `ops` (Tikhonov may fall through to tsvd).
    pub backend: Backend,
    pub note: Option<String>,
    pub stable: Option<StableFit>,
}

/// Dispatch on `cfg.backend`.
pub fn solve(p: &RegressionProblem, cfg: &SolverConfig) -> Result<Fit> {
    cfg.validate()?;
    match cfg.backend {
        Backend::Tsvd => Ok(Fit {
            ops: solve_tsvd(p, cfg)?,
            backend: Backend::Tsvd,
            note: None,
            stable: None,
        }),
        Backend::Tikhonov => {
            let t = solve_tikhonov(p, cfg)?;
            Ok(Fit {
                ops: t.ops,
                backend: if t.fell_back { Backend::Tsvd } else { Backend::Tikhonov },
                note: t
                    .fell_back
                    .then(|| "normal equations singular; solved with full-rank tsvd".to_string()),
                stable: None,
            })
        }
        Backend::StableGradient => {
            let s = solve_stable(p, cfg, None)?;
            Ok(Fit {
                ops: s.ops.clone(),
                backend: Backend::StableGradient,
                note: s.diagnostic.clone(),
                stable: Some(s),
            })
        }
    }
}
