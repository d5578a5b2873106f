use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::SnapshotDataset;
use crate::error::{Error, Result};

/// Finite-difference scheme for time derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeScheme {
    /// Three-point stencils everywhere: central in the interior, one-sided
    /// second order at both ends.
    Central2,
    Forward1,
    Backward1,
    /// Keep exact derivatives when present; otherwise `Central2` when the
    /// grid has at least three instants, `Forward1` when it has two.
    #[default]
    Auto,
}

/// Weights `w` with `p'(at) = Σ w_i f(nodes_i)` for the quadratic
/// interpolant through three nodes.
fn lagrange_weights(nodes: [f64; 3], at: f64) -> [f64; 3] {
    let [a, b, c] = nodes;
    [
        ((at - b) + (at - c)) / ((a - b) * (a - c)),
        ((at - a) + (at - c)) / ((b - a) * (b - c)),
        ((at - a) + (at - b)) / ((c - a) * (c - b)),
    ]
}

fn second_order(states: &DMatrix<f64>, t: &[f64]) -> DMatrix<f64> {
    let m = t.len();
    let mut out = DMatrix::zeros(states.nrows(), m);
    for j in 0..m {
        let base = j.saturating_sub(1).min(m - 3);
        let w = lagrange_weights([t[base], t[base + 1], t[base + 2]], t[j]);
        let col = states.column(base) * w[0] + states.column(base + 1) * w[1] + states.column(base + 2) * w[2];
        out.set_column(j, &col);
    }
    out
}

fn first_order(states: &DMatrix<f64>, t: &[f64], forward: bool) -> DMatrix<f64> {
    let m = t.len();
    let mut out = DMatrix::zeros(states.nrows(), m);
    for j in 0..m {
        let (lo, hi) = if (forward && j + 1 < m) || j == 0 { (j, j + 1) } else { (j - 1, j) };
        let col = (states.column(hi) - states.column(lo)) / (t[hi] - t[lo]);
        out.set_column(j, &col);
    }
    out
}

/// Populate `ds.derivatives` by finite differences.
///
/// Exact derivatives already in the dataset are kept by `Auto` and rejected
/// by explicit schemes unless `overwrite` is set.
pub fn estimate_derivatives(
    ds: &SnapshotDataset,
    scheme: DerivativeScheme,
    overwrite: bool,
) -> Result<SnapshotDataset> {
    if ds.derivatives().is_some() && !overwrite {
        if scheme == DerivativeScheme::Auto {
            return Ok(ds.clone());
        }
        return Err(Error::invalid(
            "dataset already holds derivatives; request overwrite to replace them",
        ));
    }
    let t = ds.grid().as_slice();
    let scheme = match scheme {
        DerivativeScheme::Auto if t.len() >= 3 => DerivativeScheme::Central2,
        DerivativeScheme::Auto => DerivativeScheme::Forward1,
        s => s,
    };
    let d = match scheme {
        DerivativeScheme::Central2 => {
            if t.len() < 3 {
                return Err(Error::invalid(format!(
                    "central differences need at least 3 instants, grid has {}",
                    t.len()
                )));
            }
            second_order(ds.states(), t)
        }
        DerivativeScheme::Forward1 => first_order(ds.states(), t, true),
        DerivativeScheme::Backward1 => first_order(ds.states(), t, false),
        DerivativeScheme::Auto => unreachable!(),
    };
    ds.clone().with_derivatives(Some(d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snapshots::TimeGrid;

    fn dataset(t: &[f64], f: impl Fn(f64) -> f64) -> SnapshotDataset {
        let grid = TimeGrid::new(t.to_vec()).unwrap();
        let states = DMatrix::from_fn(1, t.len(), |_, j| f(t[j]));
        SnapshotDataset::single_block("x", states, grid, None).unwrap()
    }

    fn uniform(h: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 * h).collect()
    }

    #[test]
    fn constant_gives_zero() {
        let ds = dataset(&[0.0, 0.3, 0.5, 1.7], |_| 4.0);
        let d = estimate_derivatives(&ds, DerivativeScheme::Auto, false).unwrap();
        assert!(d.derivatives().unwrap().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn quadratic_is_exact() {
        let t = uniform(0.1, 11);
        let ds = dataset(&t, |s| s * s);
        let d = estimate_derivatives(&ds, DerivativeScheme::Central2, false).unwrap();
        let dv = d.derivatives().unwrap();
        for (j, tj) in t.iter().enumerate() {
            assert!((dv[(0, j)] - 2.0 * tj).abs() <= 1e-10 * (1.0 + 2.0 * tj), "j={j}");
        }
        assert!((dv[(0, 5)] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn quadratic_exact_on_nonuniform_grid() {
        let t = [0.0, 0.1, 0.35, 0.4, 0.9, 1.0];
        let ds = dataset(&t, |s| 3.0 * s * s - s + 2.0);
        let d = estimate_derivatives(&ds, DerivativeScheme::Auto, false).unwrap();
        for (j, tj) in t.iter().enumerate() {
            assert!((d.derivatives().unwrap()[(0, j)] - (6.0 * tj - 1.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn exact_derivatives_kept_by_auto() {
        let ds = dataset(&[0.0, 1.0, 2.0], |s| s)
            .with_derivatives(Some(DMatrix::from_element(1, 3, 7.0)))
            .unwrap();
        let d = estimate_derivatives(&ds, DerivativeScheme::Auto, false).unwrap();
        assert_eq!(d.derivatives().unwrap()[(0, 0)], 7.0);
        assert!(estimate_derivatives(&ds, DerivativeScheme::Central2, false).is_err());
        let o = estimate_derivatives(&ds, DerivativeScheme::Central2, true).unwrap();
        assert!((o.derivatives().unwrap()[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn short_grid() {
        let ds = dataset(&[0.0, 0.5], |s| 2.0 * s);
        assert!(estimate_derivatives(&ds, DerivativeScheme::Central2, false).is_err());
        let d = estimate_derivatives(&ds, DerivativeScheme::Auto, false).unwrap();
        assert_eq!(d.derivatives().unwrap().as_slice(), &[2.0, 2.0]);
        let b = estimate_derivatives(&ds, DerivativeScheme::Backward1, false).unwrap();
        assert_eq!(b.derivatives().unwrap().as_slice(), &[2.0, 2.0]);
    }

    #[test]
    fn sine_converges_at_second_order() {
        let err = |h: f64| {
            let t = uniform(h, (2.0 / h).round() as usize + 1);
            let ds = dataset(&t, f64::sin);
            let d = estimate_derivatives(&ds, DerivativeScheme::Central2, false).unwrap();
            let dv = d.derivatives().unwrap();
            (1..t.len() - 1)
                .map(|j| (dv[(0, j)] - t[j].cos()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(0.1) / err(0.05);
        let order = ratio.log2();
        assert!((1.8..=2.2).contains(&order), "order {order}");
    }
}
