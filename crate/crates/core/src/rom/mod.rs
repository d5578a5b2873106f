//! Forward simulation of quadratic models and reconstruction in physical
//! coordinates.

mod integrate;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opinf::QuadraticOperators;
use crate::pod::{load_basis, save_basis, PodBasis};
use crate::snapshots::{
    read_matrix_csv, save_dataset, write_matrix_csv, Block, ScalingTransform, SnapshotDataset, TimeGrid,
};

pub use integrate::{integrate, Dynamics, IntegratorOptions, Method, DIVERGENCE_BOUND};

/// States at every grid instant. A diverged trajectory records where it
/// stopped; later columns are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    values: DMatrix<f64>,
    diverged: Option<(f64, String)>,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, values: DMatrix<f64>) -> Result<Self> {
        if values.ncols() != grid.len() {
            return Err(Error::dim(format!(
                "trajectory has {} columns, grid has {} instants",
                values.ncols(),
                grid.len()
            )));
        }
        Ok(Trajectory {
            grid,
            values,
            diverged: None,
        })
    }

    pub(crate) fn from_parts(grid: TimeGrid, values: DMatrix<f64>, diverged: Option<(f64, String)>) -> Self {
        Trajectory { grid, values, diverged }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    /// Time and reason at which integration stopped, if it diverged.
    pub fn diverged(&self) -> Option<(f64, &str)> {
        self.diverged.as_ref().map(|(t, m)| (*t, m.as_str()))
    }

    pub fn into_dataset(self, blocks: Vec<Block>) -> Result<SnapshotDataset> {
        SnapshotDataset::new(self.values, self.grid, None, blocks)
    }

    /// Write in the snapshot CSV format.
    pub fn save(&self, blocks: &[Block], path: &Path) -> Result<()> {
        let ds = SnapshotDataset::new(self.values.clone(), self.grid.clone(), None, blocks.to_vec())?;
        save_dataset(&ds, path)
    }
}

/// Where a model came from: backend, dimensions and the configuration used.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RomMetadata {
    pub backend: String,
    pub note: Option<String>,
    #[serde(default)]
    pub config: serde_json::Value,
}

/// Reduced operators together with the basis and scaling needed to map
/// between full and reduced coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct RomModel {
    ops: QuadraticOperators,
    basis: PodBasis,
    scaling: ScalingTransform,
    pub metadata: RomMetadata,
}

impl RomModel {
    pub fn new(
        ops: QuadraticOperators,
        basis: PodBasis,
        scaling: ScalingTransform,
        metadata: RomMetadata,
    ) -> Result<Self> {
        if ops.dim() != basis.rank() {
            return Err(Error::dim(format!(
                "operators are {}-dimensional, basis rank is {}",
                ops.dim(),
                basis.rank()
            )));
        }
        if scaling.dim() != basis.full_dim() {
            return Err(Error::dim(format!(
                "scaling covers {} rows, basis has {}",
                scaling.dim(),
                basis.full_dim()
            )));
        }
        Ok(RomModel {
            ops,
            basis,
            scaling,
            metadata,
        })
    }

    pub fn ops(&self) -> &QuadraticOperators {
        &self.ops
    }

    pub fn basis(&self) -> &PodBasis {
        &self.basis
    }

    pub fn scaling(&self) -> &ScalingTransform {
        &self.scaling
    }

    /// `x̂ = Vᵀ scale(x)`.
    pub fn reduce(&self, x_full: &DVector<f64>) -> Result<DVector<f64>> {
        self.basis.project_vector(&self.scaling.apply_vector(x_full)?)
    }

    /// Lift by `V` and undo the scaling, column by column.
    pub fn reconstruct(&self, reduced: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.scaling.unapply_states(&self.basis.lift_matrix(reduced)?)
    }

    /// Persist to `dir`: `operator.json`, `A.csv`, `H.csv`, `C.csv`,
    /// `basis.csv` and `basis.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_matrix_csv(&dir.join("A.csv"), self.ops.a())?;
        write_matrix_csv(&dir.join("H.csv"), self.ops.h())?;
        write_matrix_csv(&dir.join("C.csv"), &DMatrix::from_column_slice(self.ops.dim(), 1, self.ops.c().as_slice()))?;
        save_basis(&self.basis, Some(&self.scaling), &dir.join("basis.csv"))?;
        let header = OperatorFile {
            dimension: self.ops.dim(),
            full_dimension: self.basis.full_dim(),
            max_real_eigenvalue: self.ops.max_real_eigenvalue().ok(),
            metadata: self.metadata.clone(),
        };
        std::fs::write(dir.join("operator.json"), serde_json::to_string_pretty(&header)? + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let header: OperatorFile = serde_json::from_str(&std::fs::read_to_string(dir.join("operator.json"))?)?;
        let a = read_matrix_csv(&dir.join("A.csv"))?;
        let h = read_matrix_csv(&dir.join("H.csv"))?;
        let c = read_matrix_csv(&dir.join("C.csv"))?;
        if c.ncols() != 1 {
            return Err(Error::dim("C.csv must hold a single column"));
        }
        let ops = QuadraticOperators::new(a, h, c.column(0).into_owned())?;
        if ops.dim() != header.dimension {
            return Err(Error::dim(format!(
                "operator.json declares dimension {}, matrices have {}",
                header.dimension,
                ops.dim()
            )));
        }
        let (basis, scaling) = load_basis(&dir.join("basis.csv"))?;
        let scaling = scaling.unwrap_or_else(|| ScalingTransform::identity(basis.full_blocks()));
        RomModel::new(ops, basis, scaling, header.metadata)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct OperatorFile {
    dimension: usize,
    full_dimension: usize,
    max_real_eigenvalue: Option<f64>,
    metadata: RomMetadata,
}

/// Integrate the reduced model from the reduction of `x0_full` and return
/// the reduced and the reconstructed full trajectories.
pub fn simulate_rom(
    model: &RomModel,
    x0_full: &DVector<f64>,
    grid: &TimeGrid,
    opts: &IntegratorOptions,
) -> Result<(Trajectory, Trajectory)> {
    let x0 = model.reduce(x0_full)?;
    let reduced = integrate(&model.ops, &x0, grid, opts)?;
    let full = Trajectory {
        grid: grid.clone(),
        values: model.reconstruct(reduced.values())?,
        diverged: reduced.diverged.clone(),
    };
    Ok((reduced, full))
}

/// Relative errors of an approximate trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryError {
    /// `‖truth − approx‖_F / ‖truth‖_F`.
    pub overall: f64,
    pub per_block: Vec<(String, f64)>,
    /// `‖truth_j − approx_j‖₂` per time instant.
    pub per_time_abs: Vec<f64>,
    /// `‖truth_j − approx_j‖₂ / ‖truth_j‖₂` per time instant.
    pub per_time_rel: Vec<f64>,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

/// Compare two trajectories on the same grid. NaN entries of a diverged
/// approximation propagate into the errors.
pub fn trajectory_error(truth: &Trajectory, approx: &Trajectory, blocks: &[Block]) -> Result<TrajectoryError> {
    if truth.grid != approx.grid {
        return Err(Error::dim("trajectories live on different grids"));
    }
    if truth.values.shape() != approx.values.shape() {
        return Err(Error::dim(format!(
            "trajectory shapes differ: {:?} vs {:?}",
            truth.values.shape(),
            approx.values.shape()
        )));
    }
    let covered: usize = blocks.iter().map(|b| b.len).sum();
    if covered != truth.dim() {
        return Err(Error::Layout(format!("blocks cover {covered} rows, trajectories have {}", truth.dim())));
    }
    let diff = &truth.values - &approx.values;
    let per_block = blocks
        .iter()
        .map(|b| {
            let num = diff.rows(b.start, b.len).norm();
            let den = truth.values.rows(b.start, b.len).norm();
            (b.name.clone(), ratio(num, den))
        })
        .collect();
    let per_time_abs: Vec<f64> = diff.column_iter().map(|c| c.norm()).collect();
    let per_time_rel = per_time_abs
        .iter()
        .zip(truth.values.column_iter())
        .map(|(e, c)| ratio(*e, c.norm()))
        .collect();
    Ok(TrajectoryError {
        overall: ratio(diff.norm(), truth.values.norm()),
        per_block,
        per_time_abs,
        per_time_rel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pod::{compute_basis, BasisOptions, RankRule};
    use crate::snapshots::{blocks_from_sizes, fit_scaling, ScalingMode};

    fn ops2() -> QuadraticOperators {
        QuadraticOperators::new(
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, -0.5, -2.0]),
            DMatrix::from_fn(2, 4, |i, j| 0.1 * (i + j) as f64),
            DVector::from_vec(vec![0.3, -0.1]),
        )
        .unwrap()
    }

    #[test]
    fn identity_basis_matches_integrate() {
        let blocks = blocks_from_sizes(&[("x", 2)]);
        let basis = PodBasis::from_matrix(DMatrix::identity(2, 2), vec![], blocks.clone()).unwrap();
        let model = RomModel::new(ops2(), basis, ScalingTransform::identity(&blocks), RomMetadata::default()).unwrap();
        let grid = TimeGrid::uniform(0.0, 2.0, 21).unwrap();
        let x0 = DVector::from_vec(vec![1.0, 1.0]);
        let opts = IntegratorOptions::default();
        let (red, full) = simulate_rom(&model, &x0, &grid, &opts).unwrap();
        let direct = integrate(&ops2(), &x0, &grid, &opts).unwrap();
        assert_eq!(red.values(), direct.values());
        assert!((full.values() - direct.values()).amax() < 1e-15);
    }

    #[test]
    fn steady_state_stays_put() {
        // Newton on the reduced rhs for x̂* with f(x̂*) = 0
        let ops = ops2();
        let mut x = DVector::zeros(2);
        for _ in 0..50 {
            let f = ops.rhs(&x).unwrap();
            x -= ops.jacobian(&x).lu().solve(&f).unwrap();
        }
        assert!(ops.rhs(&x).unwrap().norm() < 1e-13);
        let grid = TimeGrid::uniform(0.0, 5.0, 11).unwrap();
        let tr = integrate(&ops, &x, &grid, &IntegratorOptions::default()).unwrap();
        for c in tr.values().column_iter() {
            assert!((c - &x).norm() < 1e-9);
        }
    }

    #[test]
    fn error_metrics() {
        let grid = TimeGrid::uniform(0.0, 1.0, 3).unwrap();
        let blocks = blocks_from_sizes(&[("a", 1), ("b", 1)]);
        let truth = Trajectory::new(grid.clone(), DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 0.0, 0.0, 0.0])).unwrap();
        let same = trajectory_error(&truth, &truth, &blocks).unwrap();
        assert_eq!(same.overall, 0.0);
        let zero = Trajectory::new(grid.clone(), DMatrix::zeros(2, 3)).unwrap();
        let e = trajectory_error(&truth, &zero, &blocks).unwrap();
        assert_eq!(e.overall, 1.0);
        assert_eq!(e.per_block, vec![("a".to_string(), 1.0), ("b".to_string(), 0.0)]);
        assert_eq!(e.per_time_rel, vec![1.0, 1.0, 1.0]);
        let other = Trajectory::new(TimeGrid::uniform(0.0, 2.0, 3).unwrap(), DMatrix::zeros(2, 3)).unwrap();
        assert!(trajectory_error(&truth, &other, &blocks).is_err());
    }

    #[test]
    fn analytic_error_ratio() {
        let grid = TimeGrid::uniform(0.0, 1.0, 11).unwrap();
        let ops = QuadraticOperators::new(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
        )
        .unwrap();
        let approx = integrate(&ops, &DVector::from_element(1, 1.0), &grid, &IntegratorOptions::rk4(None)).unwrap();
        let exact: Vec<f64> = grid.as_slice().iter().map(|t| (-t).exp()).collect();
        let truth = Trajectory::new(grid, DMatrix::from_row_slice(1, 11, &exact)).unwrap();
        let blocks = blocks_from_sizes(&[("x", 1)]);
        let e = trajectory_error(&truth, &approx, &blocks).unwrap();
        let num: f64 = exact.iter().zip(approx.values().iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = exact.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!((e.overall - num / den).abs() < 1e-15);
    }

    #[test]
    fn model_round_trip_and_pointwise_lift() {
        let dir = tempfile::tempdir().unwrap();
        let grid = TimeGrid::uniform(0.0, 1.0, 12).unwrap();
        let x = DMatrix::from_fn(6, 12, |i, j| ((i + 1) as f64 * 0.3 * j as f64).sin() + 10.0 * (i / 3) as f64);
        let ds = SnapshotDataset::new(x, grid.clone(), None, blocks_from_sizes(&[("u", 3), ("v", 3)])).unwrap();
        let st = fit_scaling(&ds, ScalingMode::MinMax);
        let scaled = crate::snapshots::apply_scaling(&ds, &st).unwrap();
        let basis = compute_basis(&scaled, &BasisOptions::blockwise(RankRule::Fixed(2))).unwrap();
        let ops = QuadraticOperators::new(
            -DMatrix::<f64>::identity(4, 4),
            DMatrix::zeros(4, 16),
            DVector::from_element(4, 0.1),
        )
        .unwrap();
        let meta = RomMetadata {
            backend: "tikhonov".into(),
            note: None,
            config: serde_json::json!({"alpha": 1e-4}),
        };
        let model = RomModel::new(ops, basis, st, meta).unwrap();
        model.save(dir.path()).unwrap();
        let back = RomModel::load(dir.path()).unwrap();
        assert_eq!(back, model);

        let (red, full) = simulate_rom(&model, &ds.states().column(0).into_owned(), &grid, &IntegratorOptions::default())
            .unwrap();
        for j in 0..grid.len() {
            let lifted = model.basis().lift_vector(&red.values().column(j).into_owned()).unwrap();
            let col = model.scaling().unapply_states(&DMatrix::from_column_slice(6, 1, lifted.as_slice())).unwrap();
            assert!((col.column(0) - full.values().column(j)).amax() < 1e-12);
        }
    }
}
