//! Non-intrusive reduced-order modeling of quadratic-linear dynamical systems.
//!
//! The crate learns models of the form `dx/dt = A x + H (x ⊗ x) + C` from
//! time-domain snapshot data. The pipeline is
//!
//! 1. [`snapshots`]: load, scale and differentiate state trajectories,
//! 2. [`pod`]: compress them onto a proper orthogonal decomposition basis,
//! 3. [`opinf`]: regress reduced operators with truncated SVD, Tikhonov or a
//!    stability-constrained gradient solver,
//! 4. [`rom`]: simulate the reduced model and lift it back to full coordinates.
//!
//! [`fom`] provides synthetic full-order models (viscous Burgers, a two-field
//! reactor surrogate) that generate training data, and [`cli`] wires the
//! stages together behind the `qlrom` binary.

pub mod cli;
pub mod error;
pub mod fom;
pub mod linalg;
pub mod opinf;
pub mod pod;
pub mod rom;
pub mod snapshots;

pub use error::{Error, Result};
pub use opinf::{QuadraticOperators, RegressionProblem, SolverConfig};
pub use pod::PodBasis;
pub use rom::{RomModel, Trajectory};
pub use snapshots::{ScalingTransform, SnapshotDataset, TimeGrid};
