use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use super::config::PipelineConfig;
use super::stages::{self, load_model};
use super::{exit, exit_code};
use crate::error::Result;
use crate::opinf::Backend;
use crate::pod::RankRule;
use crate::snapshots::ScalingMode;

/// Parse a kebab-case enum name through its serde representation.
fn kebab<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

/// `NAME=RANK` pairs from `--ranks`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankList(pub Vec<(String, usize)>);

fn parse_ranks(s: &str) -> std::result::Result<RankList, String> {
    s.split(',')
        .map(|item| {
            let (name, rank) = item
                .split_once('=')
                .ok_or_else(|| format!("expected NAME=RANK, got '{item}'"))?;
            let rank = rank.trim().parse::<usize>().map_err(|e| format!("rank for '{name}': {e}"))?;
            Ok((name.trim().to_string(), rank))
        })
        .collect::<std::result::Result<_, String>>()
        .map(RankList)
}

/// Quadratic reduced-order models learned from snapshot data.
#[derive(Debug, Parser)]
#[command(name = "qlrom", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Let values in the configuration file win over command-line flags.
    #[arg(long, global = true)]
    pub prefer_config: bool,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Energy threshold for the basis rank.
    #[arg(long, global = true)]
    pub theta: Option<f64>,
    /// Fixed per-block ranks, e.g. `X=2,T=5`.
    #[arg(long, global = true, value_parser = parse_ranks)]
    pub ranks: Option<RankList>,
    /// One basis for the stacked state instead of one per block.
    #[arg(long, global = true)]
    pub global: bool,
    /// tsvd, tikhonov or stable-gradient.
    #[arg(long, global = true, value_parser = kebab::<Backend>)]
    pub backend: Option<Backend>,
    /// Penalty on the quadratic operator.
    #[arg(long, global = true)]
    pub alpha_h: Option<f64>,
    /// none, min-max or mean-std.
    #[arg(long, global = true, value_parser = kebab::<ScalingMode>)]
    pub scaling: Option<ScalingMode>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Run the full-order model and write the training dataset.
    Generate,
    /// Learn a reduced model from a dataset.
    Fit {
        #[arg(long, requires = "layout")]
        dataset: Option<PathBuf>,
        #[arg(long, requires = "dataset")]
        layout: Option<PathBuf>,
    },
    /// Integrate the fitted model over the dataset's time grid.
    Simulate,
    /// Compare the reduced trajectory with the dataset.
    Evaluate,
    /// Collect the stage outputs into `report.json`.
    Report,
    /// All stages in sequence.
    Run,
}

impl GlobalArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(d) = &self.output_dir {
            cfg.output_dir = d.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.theta {
            cfg.basis.rule = RankRule::Energy(t);
        }
        if let Some(r) = &self.ranks {
            cfg.basis.block_ranks = r.0.iter().cloned().collect();
        }
        if self.global {
            cfg.basis.blockwise = false;
        }
        if let Some(b) = self.backend {
            cfg.solver.backend = b;
        }
        if let Some(a) = self.alpha_h {
            cfg.solver.alpha.h = a;
        }
        if let Some(s) = self.scaling {
            cfg.scaling = s;
        }
    }

    /// The effective configuration. Flags override the file unless
    /// `--prefer-config` is given, in which case they only fill in for a
    /// missing file.
    pub fn resolve(&self) -> Result<PipelineConfig> {
        match &self.config {
            Some(path) => {
                let mut cfg = PipelineConfig::load(path)?;
                if !self.prefer_config {
                    self.apply(&mut cfg);
                }
                Ok(cfg)
            }
            None => {
                let mut cfg = PipelineConfig::default();
                self.apply(&mut cfg);
                Ok(cfg)
            }
        }
    }
}

fn dataset_for(cfg: &PipelineConfig) -> Result<crate::snapshots::SnapshotDataset> {
    stages::load_dataset_for_fit(cfg, None)
}

/// Run one command; `Ok(true)` means the reduced model diverged.
fn dispatch(cli: &Cli) -> Result<bool> {
    let cfg = cli.global.resolve()?;
    cfg.validate()?;
    match &cli.command {
        Command::Generate => {
            stages::generate(&cfg)?;
            Ok(false)
        }
        Command::Fit { dataset, layout } => {
            let explicit = dataset.as_deref().zip(layout.as_deref());
            let ds = stages::load_dataset_for_fit(&cfg, explicit)?;
            stages::fit(&cfg, &ds)?;
            Ok(false)
        }
        Command::Simulate => {
            let model = load_model(&cfg)?;
            let (_, full, _) = stages::simulate(&cfg, &model, &dataset_for(&cfg)?)?;
            Ok(full.diverged().is_some())
        }
        Command::Evaluate => {
            let model = load_model(&cfg)?;
            Ok(stages::evaluate(&cfg, &model, &dataset_for(&cfg)?)?.diverged.is_some())
        }
        Command::Report => Ok(stages::report(&cfg)?.diverged.is_some()),
        Command::Run => Ok(stages::run_pipeline(&cfg)?.diverged.is_some()),
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::VALIDATION } else { exit::SUCCESS };
        }
    };
    match dispatch(&cli) {
        Ok(false) => exit::SUCCESS,
        Ok(true) => {
            eprintln!("error: reduced model diverged; artifacts were written");
            exit::NUMERICAL
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
