//! Snapshot data model: state trajectories on a time grid, partitioned into
//! named variable blocks.

mod derivatives;
mod io;
mod scaling;

use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use derivatives::{estimate_derivatives, DerivativeScheme};
pub use io::{
    derivative_path, load_dataset, load_layout, read_matrix_csv, save_dataset, save_layout, write_matrix_csv, Layout,
    LayoutBlock,
};
pub use scaling::{apply_scaling, fit_scaling, unapply_scaling, BlockScaling, ScalingMode, ScalingTransform};

/// Strictly increasing list of time instants (at least two).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeGrid(Vec<f64>);

impl TimeGrid {
    pub fn new(instants: Vec<f64>) -> Result<Self> {
        if instants.len() < 2 {
            return Err(Error::invalid(format!(
                "time grid needs at least 2 instants, got {}",
                instants.len()
            )));
        }
        if let Some(bad) = instants.iter().position(|t| !t.is_finite()) {
            return Err(Error::invalid(format!("time grid entry {bad} is not finite")));
        }
        if let Some(i) = instants.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "time grid not strictly increasing at index {}",
                i + 1
            )));
        }
        Ok(TimeGrid(instants))
    }

    /// `count` equally spaced instants covering `[start, end]`.
    pub fn uniform(start: f64, end: f64, count: usize) -> Result<Self> {
        Self::stretched(start, end, count, 1.0)
    }

    /// Instants `start + (end − start)·s^exponent` for `s` uniform on `[0, 1]`.
    ///
    /// Exponents above one cluster samples near `start`.
    pub fn stretched(start: f64, end: f64, count: usize, exponent: f64) -> Result<Self> {
        if count < 2 {
            return Err(Error::invalid("time grid needs at least 2 instants"));
        }
        if !(exponent > 0.0) {
            return Err(Error::invalid("grid stretch exponent must be positive"));
        }
        let last = (count - 1) as f64;
        let mut t: Vec<f64> = (0..count)
            .map(|i| start + (end - start) * (i as f64 / last).powf(exponent))
            .collect();
        t[count - 1] = end;
        Self::new(t)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.0[0]
    }

    pub fn end(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    pub fn min_spacing(&self) -> f64 {
        self.0
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }
}

impl TryFrom<Vec<f64>> for TimeGrid {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        TimeGrid::new(v)
    }
}

impl From<TimeGrid> for Vec<f64> {
    fn from(g: TimeGrid) -> Self {
        g.0
    }
}

/// A named, contiguous range of state rows (one physical variable).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

impl Block {
    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.len
    }
}

/// Lay out blocks back to back from `(name, rows)` pairs.
pub fn blocks_from_sizes<S: AsRef<str>>(sizes: &[(S, usize)]) -> Vec<Block> {
    let mut start = 0;
    sizes
        .iter()
        .map(|(name, len)| {
            let b = Block {
                name: name.as_ref().to_string(),
                start,
                len: *len,
            };
            start += len;
            b
        })
        .collect()
}

pub(crate) fn validate_blocks(blocks: &[Block], rows: usize) -> Result<()> {
    if blocks.is_empty() {
        return Err(Error::Layout("at least one block is required".into()));
    }
    let mut next = 0;
    for b in blocks {
        if b.len == 0 {
            return Err(Error::Layout(format!("block '{}' is empty", b.name)));
        }
        if b.start != next {
            return Err(Error::Layout(format!(
                "block '{}' starts at row {} but row {} is next",
                b.name, b.start, next
            )));
        }
        next += b.len;
    }
    if next != rows {
        return Err(Error::Layout(format!(
            "blocks cover {next} rows but the state has {rows}"
        )));
    }
    Ok(())
}

/// States `n × (k+1)` on a time grid, with optional derivatives of the same
/// shape and a block layout covering all rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotDataset {
    states: DMatrix<f64>,
    grid: TimeGrid,
    derivatives: Option<DMatrix<f64>>,
    blocks: Vec<Block>,
}

impl SnapshotDataset {
    pub fn new(
        states: DMatrix<f64>,
        grid: TimeGrid,
        derivatives: Option<DMatrix<f64>>,
        blocks: Vec<Block>,
    ) -> Result<Self> {
        if states.ncols() != grid.len() {
            return Err(Error::dim(format!(
                "states have {} columns but the grid has {} instants",
                states.ncols(),
                grid.len()
            )));
        }
        if let Some(d) = &derivatives {
            if d.shape() != states.shape() {
                return Err(Error::dim(format!(
                    "derivatives are {:?} but states are {:?}",
                    d.shape(),
                    states.shape()
                )));
            }
        }
        validate_blocks(&blocks, states.nrows())?;
        Ok(SnapshotDataset {
            states,
            grid,
            derivatives,
            blocks,
        })
    }

    /// Dataset with a single block spanning every row.
    pub fn single_block(
        name: &str,
        states: DMatrix<f64>,
        grid: TimeGrid,
        derivatives: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let blocks = blocks_from_sizes(&[(name, states.nrows())]);
        Self::new(states, grid, derivatives, blocks)
    }

    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn derivatives(&self) -> Option<&DMatrix<f64>> {
        self.derivatives.as_ref()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    /// State dimension `n`.
    pub fn dim(&self) -> usize {
        self.states.nrows()
    }

    /// Number of snapshots `k + 1`.
    pub fn snapshots(&self) -> usize {
        self.states.ncols()
    }

    pub fn with_derivatives(self, derivatives: Option<DMatrix<f64>>) -> Result<Self> {
        Self::new(self.states, self.grid, derivatives, self.blocks)
    }

    pub fn into_parts(self) -> (DMatrix<f64>, TimeGrid, Option<DMatrix<f64>>, Vec<Block>) {
        (self.states, self.grid, self.derivatives, self.blocks)
    }
}
