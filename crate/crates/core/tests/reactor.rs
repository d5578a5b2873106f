use std::sync::OnceLock;

use nalgebra::DVector;

use qlrom::fom::{generate_dataset, reactor_rhs, FomConfig, FomIntegrator, ReactorSurrogateConfig, Sampling};
use qlrom::SnapshotDataset;

fn dataset_for(cfg: &ReactorSurrogateConfig) -> SnapshotDataset {
    let grid = Sampling::default().grid().unwrap();
    generate_dataset(&FomConfig::Reactor(cfg.clone()), &grid, FomIntegrator::TrBdf2).unwrap()
}

fn default_run() -> &'static SnapshotDataset {
    static DS: OnceLock<SnapshotDataset> = OnceLock::new();
    DS.get_or_init(|| dataset_for(&ReactorSurrogateConfig::default()))
}

#[test]
fn conversion_stays_in_unit_interval() {
    let ds = default_run();
    let x = ds.states().rows(0, 200);
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
    assert!(lo >= -1e-6 && hi <= 1.0 + 1e-6, "X in [{lo}, {hi}]");
}

#[test]
fn start_up_ignites_and_settles() {
    let cfg = ReactorSurrogateConfig::default();
    let ds = default_run();
    let n = cfg.n_cells;
    let t = ds.grid().as_slice();
    let last = t.len() - 1;

    let max_t = |j: usize| ds.states().column(j).rows(n, n).max();
    let peak = (0..t.len()).map(max_t).fold(f64::NEG_INFINITY, f64::max);
    assert!(max_t(0) == cfg.t_cool);
    assert!(peak - cfg.t_cool > 100.0, "temperature excursion {}", peak - cfg.t_cool);
    assert!(max_t(last) <= peak);

    // the hot spot sits inside the bed
    let final_t = ds.states().column(last).rows(n, n).into_owned();
    let hot = final_t.imax();
    assert!(hot > n / 10 && hot < 9 * n / 10, "hot spot at cell {hot}");

    let outlet = ds.states()[(n - 1, last)];
    assert!(outlet > 0.8, "outlet conversion {outlet}");

    // steady state: the final slice moves < 0.1 % over the last 5 % of the horizon
    let j = t.iter().position(|v| *v >= 0.95 * t[last]).unwrap();
    let end = ds.states().column(last);
    let change = (end - ds.states().column(j)).norm() / end.norm();
    assert!(change < 1e-3, "relative change {change}");
}

#[test]
fn stored_derivatives_are_exact() {
    let cfg = ReactorSurrogateConfig::default();
    let ds = default_run();
    let d = ds.derivatives().unwrap();
    for j in 0..ds.snapshots() {
        let rhs = reactor_rhs(&cfg, &ds.states().column(j).into_owned()).unwrap();
        let diff = (&rhs - d.column(j)).norm();
        assert!(diff <= 1e-12 * rhs.norm().max(1.0), "column {j}: {diff}");
    }
}

#[test]
fn grid_refinement() {
    let coarse_cfg = ReactorSurrogateConfig::default();
    let fine_cfg = ReactorSurrogateConfig {
        n_cells: 2 * coarse_cfg.n_cells,
        ..coarse_cfg.clone()
    };
    let coarse = default_run();
    let fine = dataset_for(&fine_cfg);
    let n = coarse_cfg.n_cells;
    let last_c = coarse.states().column(coarse.snapshots() - 1).into_owned();
    let last_f = fine.states().column(fine.snapshots() - 1);
    // each coarse center lies midway between two fine centers
    let restricted = DVector::from_fn(2 * n, |i, _| {
        let (block, k) = (i / n, i % n);
        let base = block * 2 * n + 2 * k;
        0.5 * (last_f[base] + last_f[base + 1])
    });
    let rel = (&restricted - &last_c).norm() / last_c.norm();
    assert!(rel < 0.05, "refinement change {rel}");
}

#[test]
fn generation_is_deterministic() {
    let cfg = ReactorSurrogateConfig {
        n_cells: 40,
        ..Default::default()
    };
    assert_eq!(dataset_for(&cfg), dataset_for(&cfg));
}
