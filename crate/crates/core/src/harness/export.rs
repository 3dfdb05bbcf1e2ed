//! CSV writers and the trajectory artifact reader.
//!
//! Every numeric field is written with nine significant digits in Rust's
//! locale-independent scientific notation.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::HarnessError;
use crate::cable;
use crate::optimizer::{
    sample_times, CostBreakdown, IterationRecord, Limits, OptimizerError, PenaltyWeights,
};
use crate::scenario::Scenario;
use crate::sim::TelemetryLog;
use crate::trajectory::{UniformPolyTrajectory, COEFFS};

pub const TRAJECTORY_HEADER: [&str; 10] = ["t", "x", "y", "z", "vx", "vy", "vz", "ax", "ay", "az"];
pub const CORRIDOR_HEADER: [&str; 4] = ["t", "l_min", "l_now", "l_max"];
pub const COEFFICIENT_HEADER: [&str; 10] = [
    "segment", "axis", "c0", "c1", "c2", "c3", "c4", "c5", "dT", "N",
];
pub const COST_HEADER: [&str; 4] = ["term", "unweighted", "weight", "weighted"];
pub const HISTORY_HEADER: [&str; 12] = [
    "iteration",
    "round",
    "smoothness",
    "time",
    "velocity",
    "acceleration",
    "jerk",
    "thrust",
    "obstacle",
    "cable",
    "total",
    "gradient_norm",
];
pub const TELEMETRY_HEADER: [&str; 24] = [
    "phase",
    "t",
    "x",
    "y",
    "z",
    "vx",
    "vy",
    "vz",
    "ax",
    "ay",
    "az",
    "ref_x",
    "ref_y",
    "ref_z",
    "carrier_x",
    "carrier_y",
    "carrier_z",
    "l_min",
    "l_now",
    "l_max",
    "tension",
    "thrust",
    "swing_angle",
    "corridor_violation",
];

const AXES: [&str; 3] = ["x", "y", "z"];

pub fn format_number(x: f64) -> String {
    format!("{x:.8e}")
}

fn numbers<const K: usize>(values: [f64; K]) -> impl Iterator<Item = String> {
    values.into_iter().map(format_number)
}

/// Position, velocity and acceleration at `samples + 1` equally spaced times.
pub fn write_trajectory<W: Write>(
    out: W,
    traj: &UniformPolyTrajectory,
    samples: usize,
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for t in sample_times(0.0, traj.total_duration(), samples) {
        let p = traj.evaluate(t, 0).map_err(OptimizerError::from)?;
        let v = traj.evaluate(t, 1).map_err(OptimizerError::from)?;
        let a = traj.evaluate(t, 2).map_err(OptimizerError::from)?;
        w.write_record(numbers([t, p.x, p.y, p.z, v.x, v.y, v.z, a.x, a.y, a.z]))?;
    }
    w.flush()
        .map_err(|e| HarnessError::io("trajectory csv", e))?;
    Ok(())
}

/// Cable-length corridor along the plan at `samples + 1` equally spaced times.
pub fn write_corridor<W: Write>(
    out: W,
    traj: &UniformPolyTrajectory,
    scenario: &Scenario,
    samples: usize,
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CORRIDOR_HEADER)?;
    for t in sample_times(0.0, traj.total_duration(), samples) {
        let p = traj.evaluate(t, 0).map_err(OptimizerError::from)?;
        let b = cable::cable_bounds(
            &p,
            &scenario.anchor,
            scenario.winch.length_at(t),
            &scenario.cable,
        )
        .map_err(OptimizerError::from)?;
        w.write_record(numbers([t, b.l_min, b.l_now, b.l_max]))?;
    }
    w.flush().map_err(|e| HarnessError::io("corridor csv", e))?;
    Ok(())
}

/// The trajectory artifact: one row per segment and axis.
pub fn write_coefficients<W: Write>(
    out: W,
    traj: &UniformPolyTrajectory,
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COEFFICIENT_HEADER)?;
    let n = traj.segment_count();
    let c = traj.coefficients();
    for seg in 0..n {
        for (axis, name) in AXES.iter().enumerate() {
            let mut row = vec![seg.to_string(), (*name).to_string()];
            row.extend((0..COEFFS).map(|k| format_number(c[(COEFFS * seg + k, axis)])));
            row.push(format_number(traj.segment_duration()));
            row.push(n.to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()
        .map_err(|e| HarnessError::io("coefficient csv", e))?;
    Ok(())
}

/// Reads a trajectory artifact written by [`write_coefficients`].
pub fn read_trajectory(path: &Path) -> Result<UniformPolyTrajectory, HarnessError> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    parse_trajectory(file).map_err(|message| HarnessError::Artifact {
        path: path.to_path_buf(),
        message,
    })
}

fn parse_trajectory<R: Read>(input: R) -> Result<UniformPolyTrajectory, String> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().ne(COEFFICIENT_HEADER) {
        return Err(format!("expected header {}", COEFFICIENT_HEADER.join(",")));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| e.to_string())?;
        let line = i + 2;
        let segment: usize = record[0]
            .parse()
            .map_err(|_| format!("line {line}: bad segment index `{}`", &record[0]))?;
        let axis = AXES
            .iter()
            .position(|a| *a == &record[1])
            .ok_or_else(|| format!("line {line}: bad axis `{}`", &record[1]))?;
        let mut values = [0.0; COEFFS + 1];
        for (k, v) in values.iter_mut().enumerate() {
            *v = record[k + 2].parse().map_err(|_| {
                format!(
                    "line {line}: bad number in column {}",
                    COEFFICIENT_HEADER[k + 2]
                )
            })?;
        }
        let n: usize = record[9]
            .parse()
            .map_err(|_| format!("line {line}: bad segment count `{}`", &record[9]))?;
        rows.push((segment, axis, values, n));
    }
    let Some(&(_, _, first, n)) = rows.first() else {
        return Err("no coefficient rows".into());
    };
    let dt = first[COEFFS];
    if rows.len() != 3 * n {
        return Err(format!(
            "expected {} rows for {n} segments, found {}",
            3 * n,
            rows.len()
        ));
    }
    let mut coefficients = DMatrix::zeros(COEFFS * n, 3);
    let mut seen = vec![false; 3 * n];
    for (segment, axis, values, count) in rows {
        if count != n || values[COEFFS] != dt {
            return Err("segment count and duration must agree on every row".into());
        }
        if segment >= n || std::mem::replace(&mut seen[3 * segment + axis], true) {
            return Err(format!(
                "segment {segment} axis {} out of range or repeated",
                AXES[axis]
            ));
        }
        for k in 0..COEFFS {
            coefficients[(COEFFS * segment + k, axis)] = values[k];
        }
    }
    UniformPolyTrajectory::from_coefficients(coefficients, dt).map_err(|e| e.to_string())
}

/// Unweighted terms, their weights and the weighted summands.
pub fn write_cost_summary<W: Write>(
    out: W,
    breakdown: &CostBreakdown,
    weights: &PenaltyWeights,
    limits: &Limits,
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COST_HEADER)?;
    let weighted = breakdown.weighted_terms(limits, weights);
    let terms = [
        ("smoothness", breakdown.smoothness, 1.0),
        ("time", breakdown.time, limits.time_weight),
        ("velocity", breakdown.velocity, weights.velocity),
        ("acceleration", breakdown.acceleration, weights.dynamics),
        ("jerk", breakdown.jerk, weights.dynamics),
        ("thrust", breakdown.thrust, weights.thrust),
        ("obstacle", breakdown.obstacle, weights.obstacle),
        ("cable", breakdown.cable, weights.cable),
    ];
    for ((name, raw, weight), total) in terms.iter().zip(weighted) {
        w.write_record([
            name.to_string(),
            format_number(*raw),
            format_number(*weight),
            format_number(total),
        ])?;
    }
    w.write_record([
        "total".to_string(),
        String::new(),
        String::new(),
        format_number(breakdown.total),
    ])?;
    w.flush().map_err(|e| HarnessError::io("cost csv", e))?;
    Ok(())
}

/// Per-iteration cost terms of the optimizer.
pub fn write_history<W: Write>(out: W, history: &[IterationRecord]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HISTORY_HEADER)?;
    for r in history {
        let b = &r.breakdown;
        let mut row = vec![r.iteration.to_string(), r.round.to_string()];
        row.extend(numbers([
            b.smoothness,
            b.time,
            b.velocity,
            b.acceleration,
            b.jerk,
            b.thrust,
            b.obstacle,
            b.cable,
            b.total,
            r.gradient_norm,
        ]));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| HarnessError::io("history csv", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TelemetryPhase {
    Pickup,
    Retrieval,
}

impl TelemetryPhase {
    fn name(self) -> &'static str {
        match self {
            Self::Pickup => "pickup",
            Self::Retrieval => "retrieval",
        }
    }
}

/// Simulation telemetry; each phase is shifted by its time offset so the
/// timestamps keep increasing across phases.
pub fn write_telemetry<W: Write>(
    out: W,
    phases: &[(TelemetryPhase, &TelemetryLog, f64)],
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TELEMETRY_HEADER)?;
    for (phase, log, offset) in phases {
        for r in &log.records {
            let mut row = vec![phase.name().to_string()];
            row.extend(numbers([
                r.time + offset,
                r.position.x,
                r.position.y,
                r.position.z,
                r.velocity.x,
                r.velocity.y,
                r.velocity.z,
                r.acceleration.x,
                r.acceleration.y,
                r.acceleration.z,
                r.reference.x,
                r.reference.y,
                r.reference.z,
                r.carrier_position.x,
                r.carrier_position.y,
                r.carrier_position.z,
                r.l_min,
                r.l_now,
                r.l_max,
                r.tension,
                r.thrust,
                r.swing_angle,
                r.corridor_violation,
            ]));
            w.write_record(&row)?;
        }
    }
    w.flush()
        .map_err(|e| HarnessError::io("telemetry csv", e))?;
    Ok(())
}
