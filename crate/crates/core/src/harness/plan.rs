//! `plan` and `simulate` commands.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use super::export::{
    read_trajectory, write_coefficients, write_corridor, write_cost_summary, write_history,
    write_telemetry, write_trajectory, TelemetryPhase,
};
use super::{HarnessError, EXIT_CORRIDOR, EXIT_OK};
use crate::optimizer::{self, FeasibilityAudit, OptimizationResult, OptimizerConfig};
use crate::scenario::{corridor_midpoint, Scenario};
use crate::sim::{simulate_pickup, simulate_retrieval, SimConfig, TelemetryLog};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const CORRIDOR_FILE: &str = "corridor.csv";
pub const COEFFICIENT_FILE: &str = "coefficients.csv";
pub const COST_FILE: &str = "cost.csv";
pub const HISTORY_FILE: &str = "history.csv";
pub const TELEMETRY_FILE: &str = "telemetry.csv";

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PlanOptions {
    pub optimizer: OptimizerConfig,
}

impl PlanOptions {
    /// Sample count of the dense re-check and of the exported profiles.
    pub fn dense_samples(&self, scenario: &Scenario) -> usize {
        scenario.limits.kappa * self.optimizer.dense_factor.max(1)
    }
}

#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub result: OptimizationResult,
    /// Dense re-check with the corridor always evaluated.
    pub dense: FeasibilityAudit,
    pub corridor_ok: bool,
    pub warnings: Vec<String>,
}

impl PlanOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.corridor_ok {
            EXIT_OK
        } else {
            EXIT_CORRIDOR
        }
    }

    pub fn summary(&self) -> Vec<String> {
        let r = &self.result;
        let b = &r.breakdown;
        let mut lines = vec![
            format!(
                "duration {:.4} s over {} segments, {} iterations ({})",
                r.trajectory.total_duration(),
                r.trajectory.segment_count(),
                r.iterations,
                r.termination
            ),
            format!("cost total {:.6e} (smoothness {:.6e}, time {:.4})", b.total, b.smoothness, b.time),
            format!(
                "dense check over {} samples: corridor violation {:.3e} m^2, corridor margin {:.4} m, worst violation {:.3e}",
                self.dense.samples,
                self.dense.cable,
                self.dense.corridor_margin,
                self.dense.max_violation()
            ),
            format!("corridor {}", if self.corridor_ok { "satisfied" } else { "VIOLATED" }),
        ];
        lines.extend(self.warnings.iter().map(|w| format!("warning: {w}")));
        lines
    }
}

/// Optimizes `scenario` and re-checks the corridor densely.
pub fn plan(scenario: &Scenario, opts: &PlanOptions) -> Result<PlanOutcome, HarnessError> {
    let warnings = scenario
        .validate()
        .map_err(|message| HarnessError::Validation {
            origin: "scenario".into(),
            message,
        })?;
    if !scenario.goal_within_reel() {
        return Err(HarnessError::Unreachable(format!(
            "goal {:?} needs more than the {:.3} m of cable on the reel",
            scenario.goal_position.as_slice(),
            scenario.winch.capacity
        )));
    }
    let result = optimizer::optimize(scenario, &opts.optimizer)?;
    let dense = optimizer::audit(
        &result.trajectory,
        scenario,
        opts.dense_samples(scenario),
        true,
    )?;
    let corridor_ok = dense.corridor_passes(opts.optimizer.feasibility_tolerance);
    Ok(PlanOutcome {
        result,
        dense,
        corridor_ok,
        warnings,
    })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, HarnessError> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| HarnessError::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

/// Plans and writes the trajectory, corridor, coefficient, cost and history
/// CSVs into `out`. The files are written even when the corridor check fails.
pub fn cmd_plan(
    scenario: &Scenario,
    opts: &PlanOptions,
    out: &Path,
) -> Result<PlanOutcome, HarnessError> {
    let outcome = plan(scenario, opts)?;
    ensure_dir(out)?;
    let traj = &outcome.result.trajectory;
    let samples = opts.dense_samples(scenario);
    write_trajectory(create(out, TRAJECTORY_FILE)?, traj, samples)?;
    write_corridor(create(out, CORRIDOR_FILE)?, traj, scenario, samples)?;
    write_coefficients(create(out, COEFFICIENT_FILE)?, traj)?;
    write_cost_summary(
        create(out, COST_FILE)?,
        &outcome.result.breakdown,
        &outcome.result.weights,
        &scenario.limits,
    )?;
    write_history(create(out, HISTORY_FILE)?, &outcome.result.history)?;
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetrievalMode {
    /// Pickup only.
    None,
    /// Pickup, then reel the droid in from the length released at the end of
    /// the plan.
    AfterPickup,
    /// Reel in from the middle of the corridor at the goal; no plan needed.
    Only,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOptions {
    pub sim: SimConfig,
    pub retrieval: RetrievalMode,
    /// Payload carried during retrieval (kg).
    pub attach_mass: f64,
    /// Trajectory artifact; defaults to `coefficients.csv` in the output directory.
    pub trajectory: Option<PathBuf>,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            retrieval: RetrievalMode::None,
            attach_mass: 0.0,
            trajectory: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SimulateOutcome {
    pub pickup: Option<TelemetryLog>,
    pub retrieval: Option<TelemetryLog>,
    /// Released length at the start of the retrieval (m).
    pub retrieval_start_length: Option<f64>,
}

impl SimulateOutcome {
    pub fn exit_code(&self) -> i32 {
        match &self.pickup {
            Some(log) if log.corridor_violations() > 0 => EXIT_CORRIDOR,
            _ => EXIT_OK,
        }
    }

    pub fn summary(&self) -> Vec<String> {
        let mut lines = Vec::new();
        if let Some(log) = &self.pickup {
            lines.push(format!(
                "pickup: {:.3} s, max tracking error {:.3e} m, corridor violations {} (worst {:.3e} m^2), peak tension {:.4e} N",
                log.duration(),
                log.max_tracking_error(),
                log.corridor_violations(),
                log.max_corridor_violation(),
                log.peak_tension()
            ));
        }
        if let Some(log) = &self.retrieval {
            lines.push(format!(
                "retrieval: {:.4} s from {:.4} m, peak tension {:.4e} N, max swing {:.4} rad",
                log.duration(),
                self.retrieval_start_length.unwrap_or(f64::NAN),
                log.peak_tension(),
                log.max_swing_angle()
            ));
        }
        lines
    }
}

/// Runs the closed-loop pickup along a planned trajectory and, optionally,
/// the passive retrieval; writes `telemetry.csv` into `out`.
pub fn cmd_simulate(
    scenario: &Scenario,
    opts: &SimulateOptions,
    out: &Path,
) -> Result<SimulateOutcome, HarnessError> {
    scenario
        .validate()
        .map_err(|message| HarnessError::Validation {
            origin: "scenario".into(),
            message,
        })?;
    let mut outcome = SimulateOutcome::default();
    let mut retrieval_length = None;
    if opts.retrieval != RetrievalMode::Only {
        let path = opts
            .trajectory
            .clone()
            .unwrap_or_else(|| out.join(COEFFICIENT_FILE));
        if !path.is_file() {
            return Err(HarnessError::Artifact {
                path,
                message: "trajectory artifact not found; run `plan` first or pass its path".into(),
            });
        }
        let planned = read_trajectory(&path)?;
        outcome.pickup = Some(simulate_pickup(scenario, &planned, &opts.sim)?);
        retrieval_length = Some(scenario.winch.length_at(planned.total_duration()));
    }
    if opts.retrieval != RetrievalMode::None {
        let start = retrieval_length.unwrap_or_else(|| {
            corridor_midpoint(&scenario.goal_position, &scenario.anchor, &scenario.cable)
        });
        let mut reel = scenario.clone();
        reel.winch.initial_length = start;
        outcome.retrieval = Some(simulate_retrieval(&reel, opts.attach_mass, &opts.sim)?);
        outcome.retrieval_start_length = Some(start);
    }

    ensure_dir(out)?;
    let mut phases = Vec::new();
    let mut offset = 0.0;
    if let Some(log) = &outcome.pickup {
        phases.push((TelemetryPhase::Pickup, log, 0.0));
        offset = log.duration() + opts.sim.dt;
    }
    if let Some(log) = &outcome.retrieval {
        phases.push((TelemetryPhase::Retrieval, log, offset));
    }
    write_telemetry(create(out, TELEMETRY_FILE)?, &phases)?;
    Ok(outcome)
}
