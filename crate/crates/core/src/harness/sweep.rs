//! Parameter sweeps over a scenario template.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use super::export::format_number;
use super::plan::{plan, PlanOptions};
use super::HarnessError;
use crate::optimizer::CostBreakdown;
use crate::scenario::Scenario;
use crate::sim::{simulate_pickup, SimConfig};

pub const SWEEP_FILE: &str = "sweep.csv";

/// Scenario fields a sweep may vary.
pub const SWEEP_PARAMETERS: [&str; 16] = [
    "goal_x_m",
    "goal_y_m",
    "goal_z_m",
    "payout_speed_m_per_s",
    "segments",
    "samples_per_trajectory",
    "v_max_m_per_s",
    "a_max_m_per_s2",
    "j_max_m_per_s3",
    "time_weight_per_s",
    "weight_velocity",
    "weight_dynamics",
    "weight_thrust",
    "weight_cable",
    "weight_obstacle",
    "droid_mass_kg",
];

/// One swept parameter and its values.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub name: String,
    pub values: Vec<f64>,
}

/// Parses `name=v1,v2,...` or the inclusive range `name=start:stop:step`.
pub fn parse_grid_axis(spec: &str) -> Result<GridAxis, HarnessError> {
    let grid = |m: String| HarnessError::Grid(format!("`{spec}`: {m}"));
    let (name, values) = spec
        .split_once('=')
        .ok_or_else(|| grid("expected name=values".into()))?;
    let name = name.trim();
    if !SWEEP_PARAMETERS.contains(&name) {
        return Err(grid(format!(
            "unknown parameter; choose from {}",
            SWEEP_PARAMETERS.join(", ")
        )));
    }
    let number = |s: &str| {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| grid(format!("`{s}` is not a finite number")))
    };
    let values = if values.contains(':') {
        let parts: Vec<&str> = values.split(':').collect();
        let [start, stop, step] = parts[..] else {
            return Err(grid("a range needs start:stop:step".into()));
        };
        let (start, stop, step) = (number(start)?, number(stop)?, number(step)?);
        if !(step > 0.0) || stop < start {
            return Err(grid("a range needs step > 0 and stop >= start".into()));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| start + step * i as f64).collect()
    } else {
        values
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(number)
            .collect::<Result<Vec<_>, _>>()?
    };
    if values.is_empty() {
        return Err(grid("no values".into()));
    }
    Ok(GridAxis {
        name: name.to_string(),
        values,
    })
}

/// Sets the named parameter on `scenario`.
pub fn apply_parameter(
    scenario: &mut Scenario,
    name: &str,
    value: f64,
) -> Result<(), HarnessError> {
    let count = |v: f64| {
        if v >= 1.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(HarnessError::Grid(format!(
                "{name} must be a positive integer, got {v}"
            )))
        }
    };
    let s = scenario;
    match name {
        "goal_x_m" => s.goal_position.x = value,
        "goal_y_m" => s.goal_position.y = value,
        "goal_z_m" => s.goal_position.z = value,
        "payout_speed_m_per_s" => s.winch.payout_speed = value,
        "segments" => s.segments = count(value)?,
        "samples_per_trajectory" => s.limits.kappa = count(value)?,
        "v_max_m_per_s" => s.limits.v_max = value,
        "a_max_m_per_s2" => s.limits.a_max = value,
        "j_max_m_per_s3" => s.limits.j_max = value,
        "time_weight_per_s" => s.limits.time_weight = value,
        "weight_velocity" => s.weights.velocity = value,
        "weight_dynamics" => s.weights.dynamics = value,
        "weight_thrust" => s.weights.thrust = value,
        "weight_cable" => s.weights.cable = value,
        "weight_obstacle" => s.weights.obstacle = value,
        "droid_mass_kg" => s.vehicles.droid_mass = value,
        _ => return Err(HarnessError::Grid(format!("unknown parameter `{name}`"))),
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepOptions {
    pub plan: PlanOptions,
    /// Also fly each successful plan in the simulator.
    pub simulate: Option<SimConfig>,
    /// Worker threads; `None` uses every core.
    pub jobs: Option<usize>,
}

/// Outcome of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub run: usize,
    pub parameters: Vec<f64>,
    pub success: bool,
    pub exit_code: i32,
    pub termination: Option<String>,
    pub iterations: Option<usize>,
    pub duration: Option<f64>,
    pub breakdown: Option<CostBreakdown>,
    pub max_violation: Option<f64>,
    /// Dense corridor violation (m²).
    pub corridor_violation: Option<f64>,
    /// Smallest dense corridor margin (m).
    pub corridor_margin: Option<f64>,
    pub max_tracking_error: Option<f64>,
    pub sim_corridor_violations: Option<usize>,
    pub peak_tension: Option<f64>,
    pub wall_time: f64,
    pub message: String,
}

fn cartesian(grid: &[GridAxis]) -> Vec<Vec<f64>> {
    grid.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect()
    })
}

fn run_point(
    template: &Scenario,
    grid: &[GridAxis],
    run: usize,
    values: Vec<f64>,
    opts: &SweepOptions,
) -> SweepRow {
    let clock = Instant::now();
    let mut row = SweepRow {
        run,
        parameters: values.clone(),
        success: false,
        exit_code: 0,
        termination: None,
        iterations: None,
        duration: None,
        breakdown: None,
        max_violation: None,
        corridor_violation: None,
        corridor_margin: None,
        max_tracking_error: None,
        sim_corridor_violations: None,
        peak_tension: None,
        wall_time: 0.0,
        message: String::new(),
    };
    let mut scenario = template.clone();
    let outcome = grid
        .iter()
        .zip(&values)
        .try_for_each(|(axis, v)| apply_parameter(&mut scenario, &axis.name, *v))
        .and_then(|()| plan(&scenario, &opts.plan));
    match outcome {
        Err(e) => {
            row.exit_code = e.exit_code();
            row.message = e.to_string();
        }
        Ok(out) => {
            let r = &out.result;
            row.exit_code = out.exit_code();
            row.success = out.corridor_ok;
            row.termination = Some(r.termination.to_string());
            row.iterations = Some(r.iterations);
            row.duration = Some(r.trajectory.total_duration());
            row.breakdown = Some(r.breakdown);
            row.max_violation = Some(out.dense.max_violation());
            row.corridor_violation = Some(out.dense.cable);
            row.corridor_margin = Some(out.dense.corridor_margin);
            if !out.corridor_ok {
                row.message = "dense corridor check failed".into();
            }
            if let Some(cfg) = &opts.simulate {
                match simulate_pickup(&scenario, &r.trajectory, cfg) {
                    Ok(log) => {
                        row.max_tracking_error = Some(log.max_tracking_error());
                        row.sim_corridor_violations = Some(log.corridor_violations());
                        row.peak_tension = Some(log.peak_tension());
                    }
                    Err(e) => {
                        row.success = false;
                        let e = HarnessError::from(e);
                        row.exit_code = e.exit_code();
                        row.message = e.to_string();
                    }
                }
            }
        }
    }
    row.wall_time = clock.elapsed().as_secs_f64();
    row
}

/// Plans every grid point (in parallel) and writes one row per point to
/// `sweep.csv` in `out`. Failed points are recorded, not fatal.
pub fn cmd_sweep(
    template: &Scenario,
    grid: &[GridAxis],
    opts: &SweepOptions,
    out: &Path,
) -> Result<Vec<SweepRow>, HarnessError> {
    if grid.is_empty() || grid.iter().any(|a| a.values.is_empty()) {
        return Err(HarnessError::Grid("the grid is empty".into()));
    }
    for (i, a) in grid.iter().enumerate() {
        if grid[..i].iter().any(|b| b.name == a.name) {
            return Err(HarnessError::Grid(format!(
                "parameter `{}` given twice",
                a.name
            )));
        }
        if !SWEEP_PARAMETERS.contains(&a.name.as_str()) {
            return Err(HarnessError::Grid(format!(
                "unknown parameter `{}`",
                a.name
            )));
        }
    }
    let points = cartesian(grid);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = opts.jobs {
        builder = builder.num_threads(jobs.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| HarnessError::Grid(format!("cannot start worker threads: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        points
            .into_par_iter()
            .enumerate()
            .map(|(run, values)| run_point(template, grid, run, values, opts))
            .collect()
    });

    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let path = out.join(SWEEP_FILE);
    let file = File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
    write_sweep(BufWriter::new(file), grid, &rows)?;
    Ok(rows)
}

fn write_sweep<W: Write>(out: W, grid: &[GridAxis], rows: &[SweepRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["run".to_string()];
    header.extend(grid.iter().map(|a| a.name.clone()));
    header.extend(
        [
            "success",
            "exit_code",
            "termination",
            "iterations",
            "duration_s",
            "smoothness",
            "time",
            "velocity",
            "acceleration",
            "jerk",
            "thrust",
            "obstacle",
            "cable",
            "total",
            "max_violation",
            "corridor_violation_m2",
            "corridor_margin_m",
            "max_tracking_error_m",
            "sim_corridor_violations",
            "peak_tension_n",
            "wall_time_s",
            "message",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;
    let num = |v: Option<f64>| v.map(format_number).unwrap_or_default();
    for r in rows {
        let mut rec = vec![r.run.to_string()];
        rec.extend(r.parameters.iter().map(|v| format_number(*v)));
        rec.push(r.success.to_string());
        rec.push(r.exit_code.to_string());
        rec.push(r.termination.clone().unwrap_or_default());
        rec.push(r.iterations.map(|n| n.to_string()).unwrap_or_default());
        rec.push(num(r.duration));
        let b = r.breakdown;
        for f in [
            |b: &CostBreakdown| b.smoothness,
            |b: &CostBreakdown| b.time,
            |b: &CostBreakdown| b.velocity,
            |b: &CostBreakdown| b.acceleration,
            |b: &CostBreakdown| b.jerk,
            |b: &CostBreakdown| b.thrust,
            |b: &CostBreakdown| b.obstacle,
            |b: &CostBreakdown| b.cable,
            |b: &CostBreakdown| b.total,
        ] {
            rec.push(num(b.as_ref().map(f)));
        }
        rec.push(num(r.max_violation));
        rec.push(num(r.corridor_violation));
        rec.push(num(r.corridor_margin));
        rec.push(num(r.max_tracking_error));
        rec.push(
            r.sim_corridor_violations
                .map(|n| n.to_string())
                .unwrap_or_default(),
        );
        rec.push(num(r.peak_tension));
        rec.push(num(Some(r.wall_time)));
        rec.push(r.message.clone());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| HarnessError::io("sweep csv", e))?;
    Ok(())
}
