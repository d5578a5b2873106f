//! CSV snapshot files and JSON layout descriptors.
//!
//! A snapshot file has one row per time instant: the first column is the
//! time, the remaining columns are the state entries in block order. The
//! header reads `t,<block>:<row>,...`. Numbers are written with 17
//! significant digits so a save/load cycle is bit-exact. Exact derivatives
//! live next to the states in `<stem>.deriv.csv` with the same shape.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{blocks_from_sizes, Block, SnapshotDataset, TimeGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutBlock {
    pub name: String,
    pub rows: usize,
}

/// Block descriptor: `{"blocks": [{"name": "X", "rows": 200}, ...], "derivatives": true}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub blocks: Vec<LayoutBlock>,
    /// Whether a sibling `<stem>.deriv.csv` holds exact derivatives.
    #[serde(default)]
    pub derivatives: bool,
}

impl Layout {
    pub fn of(ds: &SnapshotDataset) -> Self {
        Layout {
            blocks: ds
                .blocks()
                .iter()
                .map(|b| LayoutBlock {
                    name: b.name.clone(),
                    rows: b.len,
                })
                .collect(),
            derivatives: ds.derivatives().is_some(),
        }
    }

    pub fn to_blocks(&self) -> Vec<Block> {
        let sizes: Vec<(&str, usize)> = self.blocks.iter().map(|b| (b.name.as_str(), b.rows)).collect();
        blocks_from_sizes(&sizes)
    }

    pub fn total_rows(&self) -> usize {
        self.blocks.iter().map(|b| b.rows).sum()
    }
}

pub fn load_layout(path: &Path) -> Result<Layout> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_layout(layout: &Layout, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(layout)? + "\n")?;
    Ok(())
}

/// `dir/name.csv` → `dir/name.deriv.csv`.
pub fn derivative_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.deriv.csv"))
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_error(path: &Path, row: usize, col: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        row,
        col,
        msg: msg.into(),
    }
}

/// Read a time column and an `n × (k+1)` matrix. Rows and columns in errors
/// are 1-based file positions.
fn read_table(path: &Path, expected_cols: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let file = File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);

    let header_len = reader
        .headers()
        .map_err(|e| parse_error(path, 1, 1, e.to_string()))?
        .len();
    if header_len != expected_cols + 1 {
        return Err(parse_error(
            path,
            1,
            header_len.min(expected_cols + 1) + 1,
            format!("header has {} columns, layout needs {}", header_len, expected_cols + 1),
        ));
    }

    let mut times = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| parse_error(path, row, 1, e.to_string()))?;
        if record.len() != expected_cols + 1 {
            return Err(parse_error(
                path,
                row,
                record.len().min(expected_cols + 1) + 1,
                format!("expected {} fields, found {}", expected_cols + 1, record.len()),
            ));
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_error(path, row, j + 1, format!("'{field}' is not a number")))?;
            if j == 0 {
                times.push(v);
            } else {
                values.push(v);
            }
        }
    }
    // values are row-major over time, i.e. column-major over the state matrix
    let m = DMatrix::from_column_slice(expected_cols, times.len(), &values);
    Ok((times, m))
}

fn write_table(path: &Path, grid: &TimeGrid, blocks: &[Block], m: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut header = String::from("t");
    for b in blocks {
        for i in 0..b.len {
            header.push_str(&format!(",{}:{}", b.name, i));
        }
    }
    writeln!(w, "{header}")?;
    for (j, t) in grid.as_slice().iter().enumerate() {
        let mut line = fmt_f64(*t);
        for v in m.column(j).iter() {
            line.push(',');
            line.push_str(&fmt_f64(*v));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Write a plain numeric matrix, one CSV line per matrix row, no header.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Read a matrix written by [`write_matrix_csv`]. Every line must have the
/// same number of fields.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let file = File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_error(path, i + 1, 1, e.to_string()))?;
        let width = *cols.get_or_insert(record.len());
        if record.len() != width {
            return Err(parse_error(
                path,
                i + 1,
                record.len().min(width) + 1,
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_error(path, i + 1, j + 1, format!("'{field}' is not a number")))?;
            values.push(v);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, cols.unwrap_or(0), &values))
}

/// Load a snapshot CSV (and its derivative sibling when the layout says so).
pub fn load_dataset(path: &Path, layout: &Layout) -> Result<SnapshotDataset> {
    if layout.blocks.is_empty() || layout.blocks.iter().any(|b| b.rows == 0) {
        return Err(Error::Layout("layout blocks must be non-empty".into()));
    }
    let n = layout.total_rows();
    let (times, states) = read_table(path, n)?;
    let grid = TimeGrid::new(times)?;
    let derivatives = if layout.derivatives {
        let dpath = derivative_path(path);
        let (dtimes, d) = read_table(&dpath, n)?;
        if dtimes.len() != grid.len() {
            return Err(Error::dim(format!(
                "{} has {} rows, states have {}",
                dpath.display(),
                dtimes.len(),
                grid.len()
            )));
        }
        if let Some(i) = dtimes.iter().zip(grid.as_slice()).position(|(a, b)| a != b) {
            return Err(parse_error(&dpath, i + 2, 1, "time does not match the state file"));
        }
        Some(d)
    } else {
        None
    };
    SnapshotDataset::new(states, grid, derivatives, layout.to_blocks())
}

/// Write states (and derivatives, if any) next to each other.
pub fn save_dataset(ds: &SnapshotDataset, path: &Path) -> Result<()> {
    write_table(path, ds.grid(), ds.blocks(), ds.states())?;
    if let Some(d) = ds.derivatives() {
        write_table(&derivative_path(path), ds.grid(), ds.blocks(), d)?;
    }
    Ok(())
}
