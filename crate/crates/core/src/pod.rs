//! Proper orthogonal decomposition bases.
//!
//! The basis is built from the left singular vectors of the (scaled)
//! snapshot matrix, either globally or independently per block. Blockwise
//! bases are block-diagonal: a block's columns are zero outside its rows.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::opinf::QuadraticOperators;
use crate::snapshots::{
    blocks_from_sizes, read_matrix_csv, write_matrix_csv, Block, LayoutBlock, ScalingTransform, SnapshotDataset,
};

/// Block name of a global (not block-diagonal) reduced state.
pub const GLOBAL_BLOCK: &str = "pod";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankRule {
    /// Smallest rank whose cumulative energy reaches the threshold.
    Energy(f64),
    Fixed(usize),
}

impl Default for RankRule {
    fn default() -> Self {
        RankRule::Energy(0.999)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BasisOptions {
    pub rule: RankRule,
    /// Per-block fixed ranks, overriding `rule` for the named blocks.
    pub block_ranks: BTreeMap<String, usize>,
    pub blockwise: bool,
    /// Subtract the row mean before the SVD. Projection still uses `Vᵀ x`.
    pub center: bool,
}

impl Default for BasisOptions {
    fn default() -> Self {
        BasisOptions {
            rule: RankRule::default(),
            block_ranks: BTreeMap::new(),
            blockwise: true,
            center: false,
        }
    }
}

impl BasisOptions {
    pub fn global(rule: RankRule) -> Self {
        BasisOptions {
            rule,
            blockwise: false,
            ..Default::default()
        }
    }

    pub fn blockwise(rule: RankRule) -> Self {
        BasisOptions {
            rule,
            ..Default::default()
        }
    }
}

/// Singular values of one SVD and the rank kept from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub name: String,
    pub singular_values: Vec<f64>,
    pub rank: usize,
}

impl Spectrum {
    pub fn energy(&self) -> Vec<f64> {
        cumulative_energy(&self.singular_values)
    }
}

/// Cumulative energy `Σ_{i≤r} σ_i² / Σ_i σ_i²` for `r = 1, 2, ...`.
pub fn cumulative_energy(singular_values: &[f64]) -> Vec<f64> {
    let total: f64 = singular_values.iter().map(|s| s * s).sum();
    let mut acc = 0.0;
    let mut out: Vec<f64> = singular_values
        .iter()
        .map(|s| {
            acc += s * s;
            if total > 0.0 {
                acc / total
            } else {
                1.0
            }
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    out
}

/// Minimal rank with cumulative energy `≥ θ`.
pub fn energy_rank(singular_values: &[f64], theta: f64) -> usize {
    let e = cumulative_energy(singular_values);
    e.iter().position(|v| *v >= theta).map_or(e.len(), |i| i + 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    v: DMatrix<f64>,
    spectra: Vec<Spectrum>,
    /// Full-space blocks of the snapshot data.
    blocks: Vec<Block>,
    blockwise: bool,
}

impl PodBasis {
    /// Wrap an orthonormal matrix as a global basis.
    pub fn from_matrix(v: DMatrix<f64>, singular_values: Vec<f64>, blocks: Vec<Block>) -> Result<Self> {
        let b = PodBasis {
            spectra: vec![Spectrum {
                name: GLOBAL_BLOCK.into(),
                singular_values,
                rank: v.ncols(),
            }],
            v,
            blocks,
            blockwise: false,
        };
        b.check()?;
        Ok(b)
    }

    fn check(&self) -> Result<()> {
        let n: usize = self.blocks.iter().map(|b| b.len).sum();
        if n != self.v.nrows() {
            return Err(Error::dim(format!(
                "basis has {} rows but its blocks cover {n}",
                self.v.nrows()
            )));
        }
        let dev = orthonormality_defect(&self.v);
        if dev > 1e-10 {
            return Err(Error::Numerical(format!("basis columns are not orthonormal (defect {dev:.3e})")));
        }
        Ok(())
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn full_dim(&self) -> usize {
        self.v.nrows()
    }

    pub fn rank(&self) -> usize {
        self.v.ncols()
    }

    pub fn is_blockwise(&self) -> bool {
        self.blockwise
    }

    pub fn spectra(&self) -> &[Spectrum] {
        &self.spectra
    }

    pub fn full_blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// `(block, r_b)` pairs for block-diagonal bases.
    pub fn block_ranks(&self) -> Option<Vec<(String, usize)>> {
        self.blockwise
            .then(|| self.spectra.iter().map(|s| (s.name.clone(), s.rank)).collect())
    }

    /// Singular values of the global SVD, or every block spectrum merged in
    /// non-increasing order.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.spectra.iter().flat_map(|s| s.singular_values.iter().copied()).collect();
        all.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
        all
    }

    /// Blocks of the reduced state: one per full block when blockwise,
    /// otherwise a single [`GLOBAL_BLOCK`].
    pub fn reduced_blocks(&self) -> Vec<Block> {
        let sizes: Vec<(&str, usize)> = self.spectra.iter().map(|s| (s.name.as_str(), s.rank)).collect();
        blocks_from_sizes(&sizes)
    }

    fn check_rows(&self, rows: usize) -> Result<()> {
        if rows != self.full_dim() {
            return Err(Error::dim(format!(
                "data has {rows} rows, basis has {}",
                self.full_dim()
            )));
        }
        Ok(())
    }

    pub fn project_matrix(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_rows(m.nrows())?;
        Ok(self.v.tr_mul(m))
    }

    pub fn lift_matrix(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if m.nrows() != self.rank() {
            return Err(Error::dim(format!("reduced data has {} rows, basis rank is {}", m.nrows(), self.rank())));
        }
        Ok(&self.v * m)
    }

    pub fn project_vector(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_rows(x.len())?;
        Ok(self.v.tr_mul(x))
    }

    pub fn lift_vector(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.rank() {
            return Err(Error::dim(format!("reduced state has {} entries, basis rank is {}", x.len(), self.rank())));
        }
        Ok(&self.v * x)
    }
}

/// `max |VᵀV − I|`.
pub fn orthonormality_defect(v: &DMatrix<f64>) -> f64 {
    let g = v.tr_mul(v);
    let r = g.nrows();
    (g - DMatrix::<f64>::identity(r, r)).amax()
}

fn select_rank(sv: &[f64], rule: RankRule, max_rank: usize, name: &str) -> Result<usize> {
    match rule {
        RankRule::Fixed(r) => {
            if r == 0 || r > max_rank {
                return Err(Error::invalid(format!(
                    "rank {r} for '{name}' must lie in [1, {max_rank}]"
                )));
            }
            Ok(r)
        }
        RankRule::Energy(theta) => {
            if !(theta > 0.0 && theta <= 1.0) {
                return Err(Error::invalid(format!("energy threshold {theta} must lie in (0, 1]")));
            }
            Ok(energy_rank(sv, theta).max(1))
        }
    }
}

fn leading_vectors(m: &DMatrix<f64>, center: bool, rule: RankRule, name: &str) -> Result<(DMatrix<f64>, Spectrum)> {
    let data = if center {
        let mut c = m.clone();
        for mut row in c.row_iter_mut() {
            let mean = row.mean();
            row.add_scalar_mut(-mean);
        }
        c
    } else {
        m.clone()
    };
    let max_rank = m.nrows().min(m.ncols());
    let svd = linalg::svd(&data, true, false)?;
    let rank = select_rank(&svd.singular_values, rule, max_rank, name)?;
    if svd.singular_values.get(rank - 1).is_none_or(|s| *s <= 0.0) {
        return Err(Error::RankDeficient {
            requested: rank,
            achievable: svd.singular_values.iter().filter(|s| **s > 0.0).count(),
        });
    }
    let mut u = svd.u.columns(0, rank).into_owned();
    linalg::fix_column_signs(&mut u);
    Ok((
        u,
        Spectrum {
            name: name.to_string(),
            singular_values: svd.singular_values,
            rank,
        },
    ))
}

/// Thin-SVD basis of the dataset states.
pub fn compute_basis(ds: &SnapshotDataset, opts: &BasisOptions) -> Result<PodBasis> {
    if ds.dim() == 0 || ds.snapshots() == 0 {
        return Err(Error::invalid("empty dataset"));
    }
    for name in opts.block_ranks.keys() {
        if !opts.blockwise || ds.block(name).is_none() {
            return Err(Error::invalid(format!("per-block rank given for unknown block '{name}'")));
        }
    }
    let n = ds.dim();
    if !opts.blockwise {
        let (v, spectrum) = leading_vectors(ds.states(), opts.center, opts.rule, GLOBAL_BLOCK)?;
        let basis = PodBasis {
            v,
            spectra: vec![spectrum],
            blocks: ds.blocks().to_vec(),
            blockwise: false,
        };
        basis.check()?;
        return Ok(basis);
    }

    let parts = ds
        .blocks()
        .iter()
        .map(|b| {
            let rule = opts.block_ranks.get(&b.name).map_or(opts.rule, |r| RankRule::Fixed(*r));
            let rows = ds.states().rows(b.start, b.len).into_owned();
            leading_vectors(&rows, opts.center, rule, &b.name)
        })
        .collect::<Result<Vec<_>>>()?;
    let r: usize = parts.iter().map(|(_, s)| s.rank).sum();
    let mut v = DMatrix::zeros(n, r);
    let mut col = 0;
    for (b, (u, s)) in ds.blocks().iter().zip(&parts) {
        v.view_mut((b.start, col), (b.len, s.rank)).copy_from(u);
        col += s.rank;
    }
    let basis = PodBasis {
        v,
        spectra: parts.into_iter().map(|(_, s)| s).collect(),
        blocks: ds.blocks().to_vec(),
        blockwise: true,
    };
    basis.check()?;
    Ok(basis)
}

/// `‖X − V Vᵀ X‖_F / ‖X‖_F`.
pub fn projection_error(ds: &SnapshotDataset, basis: &PodBasis) -> Result<f64> {
    let x = ds.states();
    let recon = basis.lift_matrix(&basis.project_matrix(x)?)?;
    let base = x.norm();
    Ok(if base == 0.0 { 0.0 } else { (x - recon).norm() / base })
}

/// Map states and derivatives by `Vᵀ`.
pub fn project(ds: &SnapshotDataset, basis: &PodBasis) -> Result<SnapshotDataset> {
    let states = basis.project_matrix(ds.states())?;
    let derivatives = ds.derivatives().map(|d| basis.project_matrix(d)).transpose()?;
    SnapshotDataset::new(states, ds.grid().clone(), derivatives, basis.reduced_blocks())
}

/// Map reduced states and derivatives by `V`.
pub fn lift(reduced: &SnapshotDataset, basis: &PodBasis) -> Result<SnapshotDataset> {
    let states = basis.lift_matrix(reduced.states())?;
    let derivatives = reduced.derivatives().map(|d| basis.lift_matrix(d)).transpose()?;
    SnapshotDataset::new(states, reduced.grid().clone(), derivatives, basis.full_blocks().to_vec())
}

/// Intrusive projection `Â = VᵀAV`, `Ĥ = VᵀH(V ⊗ V)`, `Ĉ = VᵀC`.
pub fn galerkin_rom(ops: &QuadraticOperators, basis: &PodBasis) -> Result<QuadraticOperators> {
    let n = ops.dim();
    if n != basis.full_dim() {
        return Err(Error::dim(format!(
            "operators are {n}-dimensional, basis has {} rows",
            basis.full_dim()
        )));
    }
    let v = basis.v();
    let r = v.ncols();
    let a = v.tr_mul(&(ops.a() * v));
    // H (v_i ⊗ v_j) = Σ_k V[k, i] · H_k v_j with H_k the k-th n × n column block
    let mut hv = DMatrix::zeros(n, r * r);
    for k in 0..n {
        let wk = ops.h().columns(k * n, n) * v;
        for i in 0..r {
            let vki = v[(k, i)];
            if vki != 0.0 {
                let mut dst = hv.columns_mut(i * r, r);
                dst += &wk * vki;
            }
        }
    }
    let h = v.tr_mul(&hv);
    let c = v.tr_mul(ops.c());
    QuadraticOperators::new(a, h, c)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum SpectrumFile {
    Global(Vec<f64>),
    Blocks(BTreeMap<String, Vec<f64>>),
}

/// JSON sidecar stored next to the basis CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct BasisSidecar {
    singular_values: SpectrumFile,
    block_ranks: Option<BTreeMap<String, usize>>,
    /// Full-space block order and sizes.
    layout: Vec<LayoutBlock>,
    scaling: Option<ScalingTransform>,
}

/// `dir/basis.csv` → `dir/basis.json`.
pub fn basis_sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Write `V` as CSV plus a JSON sidecar with spectra, block ranks and the
/// scaling the basis was computed under.
pub fn save_basis(basis: &PodBasis, scaling: Option<&ScalingTransform>, path: &Path) -> Result<()> {
    write_matrix_csv(path, basis.v())?;
    let singular_values = if basis.blockwise {
        SpectrumFile::Blocks(
            basis
                .spectra
                .iter()
                .map(|s| (s.name.clone(), s.singular_values.clone()))
                .collect(),
        )
    } else {
        SpectrumFile::Global(basis.spectra[0].singular_values.clone())
    };
    let sidecar = BasisSidecar {
        singular_values,
        block_ranks: basis.block_ranks().map(|v| v.into_iter().collect()),
        layout: basis
            .blocks
            .iter()
            .map(|b| LayoutBlock {
                name: b.name.clone(),
                rows: b.len,
            })
            .collect(),
        scaling: scaling.cloned(),
    };
    std::fs::write(basis_sidecar_path(path), serde_json::to_string_pretty(&sidecar)? + "\n")?;
    Ok(())
}

pub fn load_basis(path: &Path) -> Result<(PodBasis, Option<ScalingTransform>)> {
    let v = read_matrix_csv(path)?;
    let sidecar: BasisSidecar = serde_json::from_str(&std::fs::read_to_string(basis_sidecar_path(path))?)?;
    let sizes: Vec<(&str, usize)> = sidecar.layout.iter().map(|b| (b.name.as_str(), b.rows)).collect();
    let blocks = blocks_from_sizes(&sizes);
    let (spectra, blockwise) = match (sidecar.singular_values, sidecar.block_ranks) {
        (SpectrumFile::Global(sv), None) => (
            vec![Spectrum {
                name: GLOBAL_BLOCK.into(),
                singular_values: sv,
                rank: v.ncols(),
            }],
            false,
        ),
        (SpectrumFile::Blocks(mut svs), Some(ranks)) => {
            let spectra = blocks
                .iter()
                .map(|b| {
                    let rank = *ranks
                        .get(&b.name)
                        .ok_or_else(|| Error::Layout(format!("no rank stored for block '{}'", b.name)))?;
                    Ok(Spectrum {
                        name: b.name.clone(),
                        singular_values: svs.remove(&b.name).unwrap_or_default(),
                        rank,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (spectra, true)
        }
        _ => return Err(Error::Layout("basis sidecar mixes global and blockwise fields".into())),
    };
    let basis = PodBasis {
        v,
        spectra,
        blocks,
        blockwise,
    };
    if basis.spectra.iter().map(|s| s.rank).sum::<usize>() != basis.rank() {
        return Err(Error::dim("stored block ranks do not add up to the basis width"));
    }
    basis.check()?;
    Ok((basis, sidecar.scaling))
}
