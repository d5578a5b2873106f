use nalgebra::DMatrix;

use super::QuadraticOperators;
use crate::error::{Error, Result};
use crate::linalg;
use crate::snapshots::{SnapshotDataset, TimeGrid};

/// Least-squares data for `target ≈ [A H C] · D`, where
/// `D = [X̂; X̂ ⊗ X̂; 1ᵀ]` has `r + r² + 1` rows and one column per snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    data: DMatrix<f64>,
    target: DMatrix<f64>,
    grid: Option<TimeGrid>,
}

impl RegressionProblem {
    /// Build `D` from reduced states and pair it with reduced derivatives.
    pub fn from_states(
        states: &DMatrix<f64>,
        derivatives: DMatrix<f64>,
        grid: Option<TimeGrid>,
    ) -> Result<Self> {
        let (r, cols) = states.shape();
        if derivatives.shape() != (r, cols) {
            return Err(Error::dim(format!(
                "derivatives {:?} do not match states {:?}",
                derivatives.shape(),
                states.shape()
            )));
        }
        if let Some(g) = &grid {
            if g.len() != cols {
                return Err(Error::dim("grid length differs from the snapshot count"));
            }
        }
        let quad = linalg::kron_square_columns(states);
        let mut data = DMatrix::zeros(r + r * r + 1, cols);
        data.rows_mut(0, r).copy_from(states);
        data.rows_mut(r, r * r).copy_from(&quad);
        data.row_mut(r + r * r).fill(1.0);
        Ok(RegressionProblem {
            data,
            target: derivatives,
            grid,
        })
    }

    /// Reduced dimension `r`.
    pub fn dim(&self) -> usize {
        self.target.nrows()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn target(&self) -> &DMatrix<f64> {
        &self.target
    }

    pub fn grid(&self) -> Option<&TimeGrid> {
        self.grid.as_ref()
    }

    /// The reduced states `X̂` (first `r` rows of `D`).
    pub fn states(&self) -> DMatrix<f64> {
        self.data.rows(0, self.dim()).into_owned()
    }
}

/// Assemble `D` and the derivative target from a projected dataset.
pub fn assemble_problem(reduced: &SnapshotDataset) -> Result<RegressionProblem> {
    let derivatives = reduced
        .derivatives()
        .ok_or_else(|| Error::invalid("reduced dataset has no derivatives"))?
        .clone();
    RegressionProblem::from_states(reduced.states(), derivatives, Some(reduced.grid().clone()))
}

/// `‖target − [A H C] D‖_F / ‖target‖_F`; zero when both vanish.
pub fn residual(p: &RegressionProblem, ops: &QuadraticOperators) -> Result<f64> {
    if ops.dim() != p.dim() {
        return Err(Error::dim(format!(
            "operators are {}-dimensional, problem is {}",
            ops.dim(),
            p.dim()
        )));
    }
    let fit = ops.stacked() * p.data();
    let diff = (p.target() - fit).norm();
    let base = p.target().norm();
    Ok(if base == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff / base
    })
}
