//! Independent helpers for the integration tests. Nothing here calls into the
//! library's numerics, so results computed with it can be used as oracles.
#![allow(dead_code)]

use std::path::Path;

/// A snapshot CSV parsed with plain string handling: header, times and one
/// row of state values per instant.
pub struct Table {
    pub header: Vec<String>,
    pub times: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_table(path: &Path) -> Table {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(str::to_string).collect();
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let mut vals = line.split(',').map(|f| f.trim().parse::<f64>().unwrap());
        times.push(vals.next().unwrap());
        rows.push(vals.collect());
    }
    Table { header, times, rows }
}

impl Table {
    /// Column indices (into a state row) whose header starts with `<block>:`.
    pub fn block_columns(&self, block: &str) -> Vec<usize> {
        let prefix = format!("{block}:");
        self.header[1..]
            .iter()
            .enumerate()
            .filter(|(_, h)| h.starts_with(&prefix))
            .map(|(i, _)| i)
            .collect()
    }
}

/// `‖a − b‖_F / ‖a‖_F` over the selected columns of every row.
pub fn rel_frobenius(a: &[Vec<f64>], b: &[Vec<f64>], cols: Option<&[usize]>) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (ra, rb) in a.iter().zip(b) {
        let idx: Vec<usize> = match cols {
            Some(c) => c.to_vec(),
            None => (0..ra.len()).collect(),
        };
        for i in idx {
            num += (ra[i] - rb[i]).powi(2);
            den += ra[i].powi(2);
        }
    }
    (num / den).sqrt()
}

/// Relative Frobenius difference of two flat matrices.
pub fn rel_diff(reference: &[f64], other: &[f64]) -> f64 {
    let num: f64 = reference.iter().zip(other).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = reference.iter().map(|a| a * a).sum();
    (num / den).sqrt()
}

const TIMING_KEYS: [&str; 5] = ["fom_seconds", "fit_seconds", "rom_seconds", "rom_to_fom_ratio", "timings"];

/// Drop wall-clock fields so runs can be compared exactly.
pub fn strip_timings(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(map) => {
            for k in TIMING_KEYS {
                map.remove(k);
            }
            map.values_mut().for_each(strip_timings);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(strip_timings),
        _ => {}
    }
}

/// Every file below `root`, relative to it, sorted.
pub fn files_under(root: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

/// Compare two output directories: CSV files byte for byte, JSON files with
/// timings removed. Returns the first mismatch.
pub fn compare_runs(a: &Path, b: &Path) -> Result<usize, String> {
    let fa = files_under(a);
    let fb = files_under(b);
    if fa != fb {
        return Err(format!("file sets differ: {fa:?} vs {fb:?}"));
    }
    for rel in &fa {
        let (pa, pb) = (a.join(rel), b.join(rel));
        if rel.extension().is_some_and(|e| e == "json") {
            let mut ja: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&pa).unwrap()).unwrap();
            let mut jb: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&pb).unwrap()).unwrap();
            strip_timings(&mut ja);
            strip_timings(&mut jb);
            if ja != jb {
                return Err(format!("{} differs", rel.display()));
            }
        } else if std::fs::read(&pa).unwrap() != std::fs::read(&pb).unwrap() {
            return Err(format!("{} differs", rel.display()));
        }
    }
    Ok(fa.len())
}
