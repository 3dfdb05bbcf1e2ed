//! Scenario files, experiment commands and CSV export.

mod check;
mod config;
mod export;
pub mod oracles;
mod plan;
mod sweep;

use std::path::PathBuf;

use thiserror::Error;

use crate::optimizer::OptimizerError;
use crate::sim::SimError;

pub use check::{
    cmd_check, run_checks, CheckOptions, CheckOutcome, CheckReport, GradientEvaluator,
};
pub use config::{load_scenario, parse_scenario};
pub use export::{
    format_number, read_trajectory, write_coefficients, write_corridor, write_cost_summary,
    write_history, write_telemetry, write_trajectory, TelemetryPhase,
};
pub use plan::{
    cmd_plan, cmd_simulate, plan, PlanOptions, PlanOutcome, RetrievalMode, SimulateOptions,
    SimulateOutcome,
};
pub use sweep::{
    apply_parameter, cmd_sweep, parse_grid_axis, GridAxis, SweepOptions, SweepRow, SWEEP_PARAMETERS,
};

/// Successful run.
pub const EXIT_OK: i32 = 0;
/// A self-check failed, or an I/O problem occurred.
pub const EXIT_FAILURE: i32 = 1;
/// The scenario or command input could not be parsed or validated.
pub const EXIT_INVALID_INPUT: i32 = 2;
/// The optimizer or simulator failed.
pub const EXIT_OPTIMIZATION: i32 = 3;
/// The plan leaves the cable-length corridor, or the goal is out of reach.
pub const EXIT_CORRIDOR: i32 = 4;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{origin}: line {line}, column {column}{}: {message}", field.as_ref().map(|f| format!(" (field `{f}`)")).unwrap_or_default())]
    Parse {
        origin: String,
        line: usize,
        column: usize,
        field: Option<String>,
        message: String,
    },
    #[error("{origin}: invalid scenario: {message}")]
    Validation { origin: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Artifact { path: PathBuf, message: String },
    #[error("invalid parameter grid: {0}")]
    Grid(String),
    #[error("goal out of reach: {0}")]
    Unreachable(String),
    #[error("optimization failed: {0}")]
    Optimization(#[from] OptimizerError),
    #[error("simulation failed: {0}")]
    Simulation(#[from] SimError),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Parse { .. }
            | Self::Validation { .. }
            | Self::Artifact { .. }
            | Self::Grid(_) => EXIT_INVALID_INPUT,
            Self::Optimization(_) | Self::Simulation(_) => EXIT_OPTIMIZATION,
            Self::Unreachable(_) => EXIT_CORRIDOR,
            Self::Io { .. } | Self::Csv(_) => EXIT_FAILURE,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}
