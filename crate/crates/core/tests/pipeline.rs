mod common;

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde_json::Value;

use qlrom::cli::{fit, generate, load_dataset_for_fit, run_pipeline, DatasetSource, GenerateSpec, PipelineConfig};
use qlrom::fom::{BurgersConfig, FomConfig, ReactorSurrogateConfig, Sampling};
use qlrom::opinf::Backend;
use qlrom::pod::RankRule;

use common::{compare_runs, read_table, rel_frobenius};

fn burgers_config(dir: &Path) -> PipelineConfig {
    PipelineConfig {
        dataset: DatasetSource::Generate(GenerateSpec {
            fom: FomConfig::Burgers(BurgersConfig {
                n: 48,
                ..Default::default()
            }),
            sampling: Sampling {
                end: 1.0,
                count: 81,
                exponent: 1.0,
            },
            ..Default::default()
        }),
        output_dir: dir.to_path_buf(),
        ..Default::default()
    }
}

fn small_reactor_config(dir: &Path) -> PipelineConfig {
    PipelineConfig {
        dataset: DatasetSource::Generate(GenerateSpec {
            fom: FomConfig::Reactor(ReactorSurrogateConfig {
                n_cells: 60,
                ..Default::default()
            }),
            sampling: Sampling {
                end: 15.0,
                count: 101,
                exponent: 2.0,
            },
            ..Default::default()
        }),
        output_dir: dir.to_path_buf(),
        ..Default::default()
    }
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

fn matrix(path: PathBuf) -> DMatrix<f64> {
    let text = std::fs::read_to_string(path).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn reactor_blocks_and_report_integrity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig {
        output_dir: dir.path().to_path_buf(),
        ..Default::default()
    };
    let report = run_pipeline(&cfg).unwrap();
    let out = dir.path();

    let layout = json(out.join("layout.json"));
    let blocks: Vec<(String, u64)> = layout["blocks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| (b["name"].as_str().unwrap().to_string(), b["rows"].as_u64().unwrap()))
        .collect();
    assert_eq!(blocks, vec![("X".to_string(), 200), ("T".to_string(), 200)]);

    // errors from the two CSVs
    let truth = read_table(&out.join("dataset.csv"));
    let rom = read_table(&out.join("rom_trajectory.csv"));
    assert!(close(report.error_overall.unwrap(), rel_frobenius(&truth.rows, &rom.rows, None)));
    for (name, value) in &report.error_per_block {
        let cols = truth.block_columns(name);
        assert!(close(value.unwrap(), rel_frobenius(&truth.rows, &rom.rows, Some(&cols))), "{name}");
    }
    let per_time = std::fs::read_to_string(out.join("error_per_time.csv")).unwrap();
    for (line, (a, b)) in per_time.lines().skip(1).zip(truth.rows.iter().zip(&rom.rows)) {
        let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        let abs = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(close(f[1], abs) && close(f[2], abs / norm));
    }

    // ranks and energies from the stored spectra
    let sidecar = json(out.join("model/basis.json"));
    let mut total = 0;
    for b in &report.ranks {
        let sv: Vec<f64> = sidecar["singular_values"][&b.name]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        let all: f64 = sv.iter().map(|s| s * s).sum();
        let kept: f64 = sv[..b.rank].iter().map(|s| s * s).sum();
        assert!(close(b.energy, kept / all));
        assert!(b.energy >= 0.999);
        assert_eq!(sidecar["block_ranks"][&b.name].as_u64().unwrap() as usize, b.rank);
        total += b.rank;
    }
    assert_eq!(report.total_rank, total);

    // spectrum summary from the stored operator
    let a = matrix(out.join("model/A.csv"));
    let eig = a.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    assert!(close(report.max_real_eig.unwrap(), eig));

    // projection error with the stored scaling and basis
    let v = matrix(out.join("model/basis.csv"));
    let scaling = &sidecar["scaling"]["blocks"];
    let scaled: Vec<Vec<f64>> = truth
        .rows
        .iter()
        .map(|row| {
            let mut out = Vec::with_capacity(row.len());
            let mut k = 0;
            for b in scaling.as_array().unwrap() {
                let (shift, scale) = (b["shift"].as_f64().unwrap(), b["scale"].as_f64().unwrap());
                for _ in 0..b["rows"].as_u64().unwrap() {
                    out.push((row[k] - shift) / scale);
                    k += 1;
                }
            }
            out
        })
        .collect();
    let x = DMatrix::from_fn(v.nrows(), scaled.len(), |i, j| scaled[j][i]);
    let proj = (&x - &v * (v.transpose() * &x)).norm() / x.norm();
    assert!((report.projection_error - proj).abs() <= 1e-12);

    // timings
    let t = &report.timings;
    assert!(close(t.rom_to_fom_ratio.unwrap(), t.rom_seconds / t.fom_seconds.unwrap()));
    let generated = json(out.join("generate.json"));
    assert_eq!(generated["fom_seconds"].as_f64(), t.fom_seconds);
    assert_eq!(json(out.join("report.json"))["config"], serde_json::to_value(&cfg).unwrap());
}

#[test]
fn staged_fit_matches_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = burgers_config(dir.path());
    let (in_memory, _) = generate(&cfg).unwrap();
    let direct = fit(&cfg, &in_memory).unwrap();
    let from_disk = load_dataset_for_fit(&cfg, None).unwrap();
    assert_eq!(from_disk, in_memory);
    let staged = fit(&cfg, &from_disk).unwrap();
    assert_eq!(staged.model.ops(), direct.model.ops());
    assert_eq!(staged.model.basis(), direct.model.basis());
    assert_eq!(staged.report.regression_residual, direct.report.regression_residual);
}

#[test]
fn stage_commands_match_run() {
    let staged = tempfile::tempdir().unwrap();
    let whole = tempfile::tempdir().unwrap();
    let dir = |d: &tempfile::TempDir| d.path().to_str().unwrap().to_string();
    for stage in ["generate", "fit", "evaluate", "report"] {
        let code = qlrom::cli::main_with_args(["qlrom", stage, "--output-dir", &dir(&staged)]);
        assert_eq!(code, 0, "{stage}");
    }
    assert_eq!(qlrom::cli::main_with_args(["qlrom", "run", "--output-dir", &dir(&whole)]), 0);
    for file in ["model/A.csv", "model/H.csv", "model/C.csv", "model/basis.csv", "rom_trajectory.csv", "plot.csv"] {
        assert_eq!(
            std::fs::read(staged.path().join(file)).unwrap(),
            std::fs::read(whole.path().join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn stable_backend_is_deterministic_and_certified() {
    let dir = tempfile::tempdir().unwrap();
    let first = tempfile::tempdir().unwrap();
    let mut cfg = burgers_config(&dir.path().join("run"));
    cfg.solver.backend = Backend::StableGradient;
    cfg.solver.gradient.max_epochs = 200;
    cfg.seed = 3;
    let report = run_pipeline(&cfg).unwrap();
    assert_eq!(report.backend, "stable-gradient");
    assert!(report.max_real_eig.unwrap() < 0.0);
    let copy = first.path().join("run");
    std::fs::rename(dir.path().join("run"), &copy).unwrap();
    run_pipeline(&cfg).unwrap();
    compare_runs(&copy, &dir.path().join("run")).unwrap();
}

#[test]
fn fixed_block_ranks() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_reactor_config(dir.path());
    cfg.basis.block_ranks = [("X".to_string(), 2), ("T".to_string(), 5)].into_iter().collect();
    let report = run_pipeline(&cfg).unwrap();
    assert_eq!(report.total_rank, 7);
    let ranks: Vec<(&str, usize)> = report.ranks.iter().map(|b| (b.name.as_str(), b.rank)).collect();
    assert_eq!(ranks, vec![("X", 2), ("T", 5)]);
}

#[test]
fn global_basis_on_reactor() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_reactor_config(dir.path());
    cfg.basis.blockwise = false;
    cfg.basis.rule = RankRule::Energy(0.9999);
    let report = run_pipeline(&cfg).unwrap();
    assert_eq!(report.ranks.len(), 1);
    assert_eq!(report.ranks[0].name, "pod");
    assert!(report.ranks[0].energy >= 0.9999);
}

#[test]
fn invalid_config_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let mut cfg = burgers_config(&out);
    cfg.basis.rule = RankRule::Energy(0.0);
    assert!(matches!(run_pipeline(&cfg), Err(qlrom::Error::Validation(_))));
    assert!(!out.exists());
}

#[test]
fn file_dataset_source() {
    let src = tempfile::tempdir().unwrap();
    let cfg = burgers_config(src.path());
    generate(&cfg).unwrap();
    let dst = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig {
        dataset: DatasetSource::File {
            path: src.path().join("dataset.csv"),
            layout: src.path().join("layout.json"),
        },
        output_dir: dst.path().to_path_buf(),
        ..Default::default()
    };
    let report = run_pipeline(&cfg).unwrap();
    assert!(report.timings.fom_seconds.is_none());
    assert!(report.error_overall.unwrap() < 0.05);
    assert!(!dst.path().join("dataset.csv").exists());
}
