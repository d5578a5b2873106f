use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fom::{FomConfig, FomIntegrator, ReactorSurrogateConfig, Sampling};
use crate::opinf::SolverConfig;
use crate::pod::{BasisOptions, RankRule};
use crate::rom::IntegratorOptions;
use crate::snapshots::{DerivativeScheme, ScalingMode};

/// Environment variable under which relative output directories are placed.
pub const OUTPUT_ROOT_ENV: &str = "QLROM_OUTPUT_ROOT";

/// A full-order run to generate training data from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateSpec {
    pub fom: FomConfig,
    pub sampling: Sampling,
    /// Defaults to the stiff solver for the reactor and RK45 for Burgers.
    pub integrator: Option<FomIntegrator>,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for GenerateSpec {
    fn default() -> Self {
        GenerateSpec {
            fom: FomConfig::Reactor(ReactorSurrogateConfig::default()),
            sampling: Sampling::default(),
            integrator: None,
            rtol: 1e-6,
            atol: 1e-8,
        }
    }
}

impl GenerateSpec {
    pub fn integrator(&self) -> FomIntegrator {
        self.integrator.unwrap_or_else(|| self.fom.default_integrator())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetSource {
    Generate(GenerateSpec),
    /// An existing snapshot CSV and its layout descriptor.
    File { path: PathBuf, layout: PathBuf },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Generate(GenerateSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    pub integrator: IntegratorOptions,
    /// Emit the tidy `plot.csv`.
    pub plot: bool,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            integrator: IntegratorOptions::default(),
            plot: true,
        }
    }
}

/// Declarative description of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub dataset: DatasetSource,
    pub scaling: ScalingMode,
    pub derivatives: DerivativeScheme,
    pub basis: BasisOptions,
    pub solver: SolverConfig,
    pub evaluation: EvaluationConfig,
    pub output_dir: PathBuf,
    /// Seed for every random choice in the run.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            dataset: DatasetSource::default(),
            scaling: ScalingMode::MinMax,
            derivatives: DerivativeScheme::Auto,
            basis: BasisOptions::default(),
            solver: SolverConfig::default(),
            evaluation: EvaluationConfig::default(),
            output_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: PipelineConfig = serde_json::from_str(&text)?;
        Ok(cfg)
    }

    /// Reject invalid settings before any computation.
    pub fn validate(&self) -> Result<()> {
        match self.basis.rule {
            RankRule::Energy(theta) if !(theta > 0.0 && theta <= 1.0) => {
                return Err(Error::invalid(format!("energy threshold {theta} must lie in (0, 1]")));
            }
            RankRule::Fixed(0) => return Err(Error::invalid("basis rank must be positive")),
            _ => {}
        }
        if let Some((name, _)) = self.basis.block_ranks.iter().find(|(_, r)| **r == 0) {
            return Err(Error::invalid(format!("rank for block '{name}' must be positive")));
        }
        self.solver.validate()?;
        if let DatasetSource::Generate(g) = &self.dataset {
            g.fom.validate()?;
            if g.sampling.count < 2 || !(g.sampling.end > 0.0) || !(g.sampling.exponent > 0.0) {
                return Err(Error::invalid("sampling needs count ≥ 2, end > 0 and exponent > 0"));
            }
            if !(g.rtol > 0.0 && g.atol >= 0.0) {
                return Err(Error::invalid("generation tolerances must satisfy rtol > 0, atol ≥ 0"));
            }
        }
        Ok(())
    }

    /// The solver settings with the run seed applied.
    pub fn effective_solver(&self) -> SolverConfig {
        let mut s = self.solver.clone();
        s.gradient.seed = self.seed;
        s
    }

    /// `output_dir`, placed under `$QLROM_OUTPUT_ROOT` when it is relative
    /// and the variable is set.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.output_dir.is_relative() && !root.is_empty() => PathBuf::from(root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }
}
