//! Pipeline orchestration: generate → fit → simulate → evaluate → report.
//!
//! Every stage reads its inputs from and writes its artifacts to one output
//! directory, so stages can run in separate processes:
//!
//! | stage     | artifacts                                                   |
//! |-----------|-------------------------------------------------------------|
//! | generate  | `dataset.csv`, `dataset.deriv.csv`, `layout.json`, `generate.json` |
//! | fit       | `model/` (operators, basis, scaling), `fit.json`            |
//! | simulate  | `rom_trajectory.csv`, `rom_reduced.csv`                     |
//! | evaluate  | `evaluation.json`, `error_per_time.csv`, `plot.csv`         |
//! | report    | `report.json`                                               |

mod args;
mod config;
mod stages;

pub use args::{main_with_args, Cli, Command};
pub use config::{DatasetSource, EvaluationConfig, GenerateSpec, PipelineConfig, OUTPUT_ROOT_ENV};
pub use stages::{
    evaluate, fit, generate, load_dataset_for_fit, report, run_pipeline, simulate, BlockRank, EvalReport, FitOutput,
    FitReport, GenerateReport, RunReport, Timings,
};

use crate::error::Error;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const VALIDATION: i32 = 2;
    pub const NUMERICAL: i32 = 3;
    pub const IO: i32 = 4;
}

/// Map an error to its exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err.root() {
        Error::Io(_) => exit::IO,
        Error::Numerical(_) | Error::RankDeficient { .. } | Error::Integrator { .. } => exit::NUMERICAL,
        Error::Parse { .. }
        | Error::Layout(_)
        | Error::Validation(_)
        | Error::Dimension(_)
        | Error::Json(_)
        | Error::Stage { .. } => exit::VALIDATION,
    }
}
