use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::config::{DatasetSource, GenerateSpec, PipelineConfig};
use crate::error::{Error, Result, StageExt};
use crate::fom::generate_dataset_with;
use crate::opinf::{assemble_problem, residual, solve};
use crate::pod::{compute_basis, project, projection_error, Spectrum};
use crate::rom::{simulate_rom, trajectory_error, RomMetadata, RomModel, Trajectory};
use crate::snapshots::{
    apply_scaling, estimate_derivatives, DerivativeScheme, fit_scaling, load_dataset, load_layout, save_dataset, save_layout, Layout,
    SnapshotDataset,
};

const DATASET: &str = "dataset.csv";
const LAYOUT: &str = "layout.json";
const GENERATE_JSON: &str = "generate.json";
const MODEL_DIR: &str = "model";
const FIT_JSON: &str = "fit.json";
const ROM_TRAJECTORY: &str = "rom_trajectory.csv";
const ROM_REDUCED: &str = "rom_reduced.csv";
const EVALUATION_JSON: &str = "evaluation.json";
const ERROR_CSV: &str = "error_per_time.csv";
const PLOT_CSV: &str = "plot.csv";
const REPORT_JSON: &str = "report.json";

/// JSON has no NaN or infinity.
fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateReport {
    pub fom_seconds: f64,
    pub states: usize,
    pub snapshots: usize,
    pub blocks: Layout,
    pub spec: GenerateSpec,
}

/// Run the full-order model and persist the dataset.
pub fn generate(cfg: &PipelineConfig) -> Result<(SnapshotDataset, GenerateReport)> {
    cfg.validate()?;
    let DatasetSource::Generate(spec) = &cfg.dataset else {
        return Err(Error::invalid("the configured dataset source is a file; nothing to generate"));
    };
    let out = cfg.resolved_output_dir();
    std::fs::create_dir_all(&out).stage("generate")?;
    let grid = spec.sampling.grid()?;
    let start = Instant::now();
    let ds = generate_dataset_with(&spec.fom, &grid, spec.integrator(), spec.rtol, spec.atol).stage("generate")?;
    let fom_seconds = start.elapsed().as_secs_f64();

    let layout = Layout::of(&ds);
    save_dataset(&ds, &out.join(DATASET)).stage("generate")?;
    save_layout(&layout, &out.join(LAYOUT)).stage("generate")?;
    let report = GenerateReport {
        fom_seconds,
        states: ds.dim(),
        snapshots: ds.snapshots(),
        blocks: layout,
        spec: spec.clone(),
    };
    write_json(&out.join(GENERATE_JSON), &report).stage("generate")?;
    Ok((ds, report))
}

/// The training dataset: an explicit path, the configured file, or the
/// output of a previous `generate` in the output directory.
pub fn load_dataset_for_fit(cfg: &PipelineConfig, explicit: Option<(&Path, &Path)>) -> Result<SnapshotDataset> {
    let (path, layout): (PathBuf, PathBuf) = match (explicit, &cfg.dataset) {
        (Some((p, l)), _) => (p.to_path_buf(), l.to_path_buf()),
        (None, DatasetSource::File { path, layout }) => (path.clone(), layout.clone()),
        (None, DatasetSource::Generate(_)) => {
            let out = cfg.resolved_output_dir();
            (out.join(DATASET), out.join(LAYOUT))
        }
    };
    let layout = load_layout(&layout).stage("load")?;
    load_dataset(&path, &layout).stage("load")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRank {
    pub name: String,
    pub rank: usize,
    /// Cumulative energy captured at `rank`.
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub backend: String,
    pub note: Option<String>,
    pub ranks: Vec<BlockRank>,
    pub total_rank: usize,
    pub projection_error: f64,
    pub regression_residual: Option<f64>,
    pub max_real_eig: Option<f64>,
    pub stable_loss: Option<f64>,
    pub stable_epochs: Option<usize>,
    pub fit_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub model: RomModel,
    pub report: FitReport,
    /// Scaled, projected training data.
    pub reduced: SnapshotDataset,
}

fn block_rank(s: &Spectrum) -> BlockRank {
    BlockRank {
        name: s.name.clone(),
        rank: s.rank,
        energy: s.energy()[s.rank - 1],
    }
}

/// scale → derivatives → basis → project → assemble → solve → persist.
pub fn fit(cfg: &PipelineConfig, ds: &SnapshotDataset) -> Result<FitOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let scaling = fit_scaling(ds, cfg.scaling);
    let scaled = apply_scaling(ds, &scaling).stage("scaling")?;
    // An explicit scheme replaces exact derivatives; `Auto` keeps them.
    let overwrite = cfg.derivatives != DerivativeScheme::Auto;
    let scaled = estimate_derivatives(&scaled, cfg.derivatives, overwrite).stage("derivatives")?;
    let basis = compute_basis(&scaled, &cfg.basis).stage("basis")?;
    let reduced = project(&scaled, &basis).stage("projection")?;
    let problem = assemble_problem(&reduced).stage("regression")?;
    let solver = cfg.effective_solver();
    let fitted = solve(&problem, &solver).stage("regression")?;
    let fit_seconds = start.elapsed().as_secs_f64();

    let report = FitReport {
        backend: fitted.backend.as_str().to_string(),
        note: fitted.note.clone(),
        ranks: basis.spectra().iter().map(block_rank).collect(),
        total_rank: basis.rank(),
        projection_error: projection_error(&scaled, &basis)?,
        regression_residual: finite(residual(&problem, &fitted.ops)?),
        max_real_eig: fitted.ops.max_real_eigenvalue().ok(),
        stable_loss: fitted.stable.as_ref().map(|s| s.loss),
        stable_epochs: fitted.stable.as_ref().map(|s| s.epochs),
        fit_seconds,
    };
    let metadata = RomMetadata {
        backend: report.backend.clone(),
        note: report.note.clone(),
        config: serde_json::to_value(cfg)?,
    };
    let model = RomModel::new(fitted.ops, basis, scaling, metadata)?;

    let out = cfg.resolved_output_dir();
    std::fs::create_dir_all(&out).stage("fit")?;
    model.save(&out.join(MODEL_DIR)).stage("fit")?;
    write_json(&out.join(FIT_JSON), &report).stage("fit")?;
    Ok(FitOutput { model, report, reduced })
}

/// Simulate the model from the dataset's initial state over its grid and
/// persist the trajectories. Returns (reduced, full, seconds).
pub fn simulate(cfg: &PipelineConfig, model: &RomModel, ds: &SnapshotDataset) -> Result<(Trajectory, Trajectory, f64)> {
    let x0 = ds.states().column(0).into_owned();
    let start = Instant::now();
    let (reduced, full) = simulate_rom(model, &x0, ds.grid(), &cfg.evaluation.integrator).stage("simulate")?;
    let seconds = start.elapsed().as_secs_f64();
    let out = cfg.resolved_output_dir();
    std::fs::create_dir_all(&out).stage("simulate")?;
    full.save(ds.blocks(), &out.join(ROM_TRAJECTORY)).stage("simulate")?;
    reduced.save(&model.basis().reduced_blocks(), &out.join(ROM_REDUCED)).stage("simulate")?;
    Ok((reduced, full, seconds))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub t: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Relative Frobenius error against the dataset; absent when not finite.
    pub overall: Option<f64>,
    pub per_block: Vec<(String, Option<f64>)>,
    pub per_time_csv: String,
    pub diverged: Option<Divergence>,
    pub rom_seconds: f64,
}

fn write_error_csv(path: &Path, t: &[f64], abs: &[f64], rel: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,abs_error,rel_error")?;
    for i in 0..t.len() {
        writeln!(w, "{:.16e},{:.16e},{:.16e}", t[i], abs[i], rel[i])?;
    }
    w.flush()?;
    Ok(())
}

/// Tidy `t,z,value,series` rows; `z` is the normalized cell position within
/// its block and `series` reads `<fom|rom>:<block>`.
fn write_plot_csv(path: &Path, ds: &SnapshotDataset, rom: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,z,value,series")?;
    let t = ds.grid().as_slice();
    for (label, m) in [("fom", ds.states()), ("rom", rom)] {
        for b in ds.blocks() {
            for (j, tj) in t.iter().enumerate() {
                for i in 0..b.len {
                    let z = (i as f64 + 0.5) / b.len as f64;
                    writeln!(w, "{:.16e},{:.16e},{:.16e},{}:{}", tj, z, m[(b.start + i, j)], label, b.name)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Simulate from the dataset's initial state and compare with the dataset.
pub fn evaluate(cfg: &PipelineConfig, model: &RomModel, ds: &SnapshotDataset) -> Result<EvalReport> {
    let (_, full, rom_seconds) = simulate(cfg, model, ds)?;
    let truth = Trajectory::new(ds.grid().clone(), ds.states().clone())?;
    let err = trajectory_error(&truth, &full, ds.blocks()).stage("evaluate")?;
    let out = cfg.resolved_output_dir();
    write_error_csv(&out.join(ERROR_CSV), ds.grid().as_slice(), &err.per_time_abs, &err.per_time_rel)
        .stage("evaluate")?;
    if cfg.evaluation.plot {
        write_plot_csv(&out.join(PLOT_CSV), ds, full.values()).stage("evaluate")?;
    }
    let report = EvalReport {
        overall: finite(err.overall),
        per_block: err.per_block.iter().map(|(n, v)| (n.clone(), finite(*v))).collect(),
        per_time_csv: ERROR_CSV.to_string(),
        diverged: full.diverged().map(|(t, r)| Divergence {
            t,
            reason: r.to_string(),
        }),
        rom_seconds,
    };
    write_json(&out.join(EVALUATION_JSON), &report).stage("evaluate")?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub fom_seconds: Option<f64>,
    pub fit_seconds: f64,
    pub rom_seconds: f64,
    /// `rom_seconds / fom_seconds`.
    pub rom_to_fom_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub backend: String,
    pub note: Option<String>,
    pub ranks: Vec<BlockRank>,
    pub total_rank: usize,
    pub projection_error: f64,
    pub regression_residual: Option<f64>,
    pub max_real_eig: Option<f64>,
    pub error_overall: Option<f64>,
    pub error_per_block: Vec<(String, Option<f64>)>,
    pub per_time_csv: String,
    pub diverged: Option<Divergence>,
    pub timings: Timings,
    pub config: PipelineConfig,
}

/// Assemble `report.json` from the persisted stage artifacts.
pub fn report(cfg: &PipelineConfig) -> Result<RunReport> {
    let out = cfg.resolved_output_dir();
    let fit: FitReport = read_json(&out.join(FIT_JSON)).stage("report")?;
    let eval: EvalReport = read_json(&out.join(EVALUATION_JSON)).stage("report")?;
    let generated = out.join(GENERATE_JSON);
    let fom_seconds = if generated.exists() {
        Some(read_json::<GenerateReport>(&generated).stage("report")?.fom_seconds)
    } else {
        None
    };
    let run = RunReport {
        backend: fit.backend,
        note: fit.note,
        ranks: fit.ranks,
        total_rank: fit.total_rank,
        projection_error: fit.projection_error,
        regression_residual: fit.regression_residual,
        max_real_eig: fit.max_real_eig,
        error_overall: eval.overall,
        error_per_block: eval.per_block,
        per_time_csv: eval.per_time_csv,
        diverged: eval.diverged,
        timings: Timings {
            fom_seconds,
            fit_seconds: fit.fit_seconds,
            rom_seconds: eval.rom_seconds,
            rom_to_fom_ratio: fom_seconds.filter(|f| *f > 0.0).map(|f| eval.rom_seconds / f),
        },
        config: cfg.clone(),
    };
    write_json(&out.join(REPORT_JSON), &run).stage("report")?;
    Ok(run)
}

/// Every stage in sequence within one process.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunReport> {
    cfg.validate()?;
    let ds = match &cfg.dataset {
        DatasetSource::Generate(_) => generate(cfg)?.0,
        DatasetSource::File { .. } => load_dataset_for_fit(cfg, None)?,
    };
    let fitted = fit(cfg, &ds)?;
    evaluate(cfg, &fitted.model, &ds)?;
    report(cfg)
}

/// Load the model persisted by a previous `fit`.
pub(crate) fn load_model(cfg: &PipelineConfig) -> Result<RomModel> {
    RomModel::load(&cfg.resolved_output_dir().join(MODEL_DIR)).stage("load")
}
