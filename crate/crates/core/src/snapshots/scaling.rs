use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Block, SnapshotDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingMode {
    None,
    #[default]
    MinMax,
    MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockScaling {
    pub name: String,
    pub rows: usize,
    pub shift: f64,
    pub scale: f64,
}

/// Per-block affine map `x ↦ (x − shift) / scale`.
///
/// Derivatives are divided by `scale` and never shifted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingTransform {
    pub mode: ScalingMode,
    pub blocks: Vec<BlockScaling>,
}

impl ScalingTransform {
    /// Shift 0, scale 1 on every block.
    pub fn identity(blocks: &[Block]) -> Self {
        ScalingTransform {
            mode: ScalingMode::None,
            blocks: blocks
                .iter()
                .map(|b| BlockScaling {
                    name: b.name.clone(),
                    rows: b.len,
                    shift: 0.0,
                    scale: 1.0,
                })
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.rows).sum()
    }

    fn check(&self, blocks: &[Block]) -> Result<()> {
        let matches = self.blocks.len() == blocks.len()
            && self
                .blocks
                .iter()
                .zip(blocks)
                .all(|(s, b)| s.name == b.name && s.rows == b.len);
        if !matches {
            return Err(Error::Layout("scaling blocks do not match the dataset blocks".into()));
        }
        if let Some(b) = self.blocks.iter().find(|b| !(b.scale > 0.0) || !b.shift.is_finite()) {
            return Err(Error::invalid(format!("block '{}' has an invalid scale", b.name)));
        }
        Ok(())
    }

    fn row_params(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.blocks
            .iter()
            .flat_map(|b| std::iter::repeat((b.shift, b.scale)).take(b.rows))
    }

    /// Scale every column of a full-dimension state matrix.
    pub fn apply_states(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.map_rows(m, |v, shift, scale| (v - shift) / scale)
    }

    pub fn unapply_states(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.map_rows(m, |v, shift, scale| v * scale + shift)
    }

    pub fn apply_derivatives(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.map_rows(m, |v, _, scale| v / scale)
    }

    pub fn unapply_derivatives(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.map_rows(m, |v, _, scale| v * scale)
    }

    pub fn apply_vector(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let m = self.apply_states(&DMatrix::from_column_slice(x.len(), 1, x.as_slice()))?;
        Ok(m.column(0).into_owned())
    }

    fn map_rows(&self, m: &DMatrix<f64>, f: impl Fn(f64, f64, f64) -> f64) -> Result<DMatrix<f64>> {
        if m.nrows() != self.dim() {
            return Err(Error::dim(format!(
                "scaling covers {} rows, matrix has {}",
                self.dim(),
                m.nrows()
            )));
        }
        let params: Vec<(f64, f64)> = self.row_params().collect();
        Ok(DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
            let (shift, scale) = params[i];
            f(m[(i, j)], shift, scale)
        }))
    }
}

/// Fit per-block shift and scale. A constant block gets scale 1 and shift
/// equal to its value.
pub fn fit_scaling(ds: &SnapshotDataset, mode: ScalingMode) -> ScalingTransform {
    let blocks = ds
        .blocks()
        .iter()
        .map(|b| {
            let view = ds.states().rows(b.start, b.len);
            let (shift, scale) = match mode {
                ScalingMode::None => (0.0, 1.0),
                ScalingMode::MinMax => {
                    let lo = view.min();
                    let hi = view.max();
                    let range = hi - lo;
                    (lo, if range > 0.0 { range } else { 1.0 })
                }
                ScalingMode::MeanStd => {
                    let count = view.len() as f64;
                    let mean = view.sum() / count;
                    let var = view.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count;
                    let sd = var.sqrt();
                    (mean, if sd > 0.0 { sd } else { 1.0 })
                }
            };
            BlockScaling {
                name: b.name.clone(),
                rows: b.len,
                shift,
                scale,
            }
        })
        .collect();
    ScalingTransform { mode, blocks }
}

pub fn apply_scaling(ds: &SnapshotDataset, st: &ScalingTransform) -> Result<SnapshotDataset> {
    st.check(ds.blocks())?;
    let states = st.apply_states(ds.states())?;
    let derivatives = ds.derivatives().map(|d| st.apply_derivatives(d)).transpose()?;
    SnapshotDataset::new(states, ds.grid().clone(), derivatives, ds.blocks().to_vec())
}

pub fn unapply_scaling(ds: &SnapshotDataset, st: &ScalingTransform) -> Result<SnapshotDataset> {
    st.check(ds.blocks())?;
    let states = st.unapply_states(ds.states())?;
    let derivatives = ds.derivatives().map(|d| st.unapply_derivatives(d)).transpose()?;
    SnapshotDataset::new(states, ds.grid().clone(), derivatives, ds.blocks().to_vec())
}
