//! Scenario files: TOML with SI unit suffixes on every physical key.
//!
//! ```toml
//! [scenario]
//! start_position_m = [0.0, 0.0, 0.0]
//! goal_position_m = [2.0, 0.0, 1.0]
//!
//! [cable]
//! unit_mass_g_per_m = 0.14
//! sag_limit_m = 0.1
//!
//! [winch]
//! payout_speed_m_per_s = 0.2
//! ```
//!
//! Every section other than `[scenario]` is optional, as is every key except
//! `start_position_m` and `goal_position_m`.

use std::path::Path;

use nalgebra::Vector3;
use serde::Deserialize;

use super::HarnessError;
use crate::cable::CableProperties;
use crate::optimizer::{Limits, ObstaclePlane, PenaltyWeights};
use crate::scenario::{corridor_midpoint, Scenario, VehicleParams, REFERENCE_ANCHOR};
use crate::trajectory::BoundaryState;
use crate::winch::WinchSchedule;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    scenario: ScenarioSection,
    #[serde(default)]
    cable: CableSection,
    #[serde(default)]
    winch: WinchSection,
    #[serde(default)]
    limits: LimitsSection,
    #[serde(default)]
    weights: WeightsSection,
    #[serde(default)]
    vehicles: VehiclesSection,
    #[serde(default)]
    obstacles: Vec<ObstacleSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioSection {
    start_position_m: [f64; 3],
    start_velocity_m_per_s: Option<[f64; 3]>,
    start_acceleration_m_per_s2: Option<[f64; 3]>,
    goal_position_m: [f64; 3],
    goal_velocity_m_per_s: Option<[f64; 3]>,
    anchor_position_m: Option<[f64; 3]>,
    segments: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CableSection {
    unit_mass_kg_per_m: Option<f64>,
    unit_mass_g_per_m: Option<f64>,
    gravity_m_per_s2: Option<f64>,
    sag_limit_m: Option<f64>,
    attachment_offset_m: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct WinchSection {
    initial_length_m: Option<f64>,
    payout_speed_m_per_s: Option<f64>,
    capacity_m: Option<f64>,
    stow_length_m: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LimitsSection {
    v_max_m_per_s: Option<f64>,
    a_max_m_per_s2: Option<f64>,
    j_max_m_per_s3: Option<f64>,
    thrust_min_m_per_s2: Option<f64>,
    thrust_max_m_per_s2: Option<f64>,
    samples_per_trajectory: Option<usize>,
    obstacle_margin_m: Option<f64>,
    time_weight_per_s: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsSection {
    velocity: Option<f64>,
    dynamics: Option<f64>,
    thrust: Option<f64>,
    cable: Option<f64>,
    obstacle: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct VehiclesSection {
    droid_mass_kg: Option<f64>,
    carrier_mass_kg: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObstacleSection {
    point_m: [f64; 3],
    normal: [f64; 3],
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text, &path.display().to_string())
}

/// Parses and validates scenario text; `origin` labels diagnostics.
pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario, HarnessError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| parse_error(text, origin, &e))?;
    let invalid = |message: String| HarnessError::Validation {
        origin: origin.to_string(),
        message,
    };
    let scenario = build(file).map_err(invalid)?;
    scenario.validate().map_err(invalid)?;
    Ok(scenario)
}

fn build(file: ScenarioFile) -> Result<Scenario, String> {
    let s = file.scenario;
    let start = BoundaryState {
        position: Vector3::from(s.start_position_m),
        velocity: Vector3::from(s.start_velocity_m_per_s.unwrap_or_default()),
        acceleration: Vector3::from(s.start_acceleration_m_per_s2.unwrap_or_default()),
        jerk: Vector3::zeros(),
    };
    let anchor = Vector3::from(s.anchor_position_m.unwrap_or(REFERENCE_ANCHOR));

    let c = file.cable;
    let defaults = CableProperties::default();
    let mass_per_length = match (c.unit_mass_kg_per_m, c.unit_mass_g_per_m) {
        (Some(_), Some(_)) => {
            return Err(
                "cable: give either unit_mass_kg_per_m or unit_mass_g_per_m, not both".into(),
            )
        }
        (Some(kg), None) => kg,
        (None, Some(g)) => g * 1e-3,
        (None, None) => defaults.mass_per_length,
    };
    let cable = CableProperties::new(
        mass_per_length,
        c.gravity_m_per_s2.unwrap_or(defaults.gravity),
        c.sag_limit_m.unwrap_or(defaults.sag_limit),
        c.attachment_offset_m.unwrap_or(defaults.attachment_offset),
    )
    .map_err(|e| format!("cable: {e}"))?;

    let w = file.winch;
    let reference = Scenario::reference_pickup(Vector3::zeros()).winch;
    let winch = WinchSchedule {
        initial_length: w
            .initial_length_m
            .unwrap_or_else(|| corridor_midpoint(&start.position, &anchor, &cable)),
        payout_speed: w.payout_speed_m_per_s.unwrap_or(reference.payout_speed),
        capacity: w.capacity_m.unwrap_or(reference.capacity),
        stow_length: w.stow_length_m.unwrap_or(reference.stow_length),
    };

    let l = file.limits;
    let ld = Limits::default();
    let limits = Limits {
        v_max: l.v_max_m_per_s.unwrap_or(ld.v_max),
        a_max: l.a_max_m_per_s2.unwrap_or(ld.a_max),
        j_max: l.j_max_m_per_s3.unwrap_or(ld.j_max),
        tau_min: l.thrust_min_m_per_s2.unwrap_or(ld.tau_min),
        tau_max: l.thrust_max_m_per_s2.unwrap_or(ld.tau_max),
        kappa: l.samples_per_trajectory.unwrap_or(ld.kappa),
        obstacle_margin: l.obstacle_margin_m.unwrap_or(ld.obstacle_margin),
        time_weight: l.time_weight_per_s.unwrap_or(ld.time_weight),
    };

    let wt = file.weights;
    let wd = PenaltyWeights::default();
    let weights = PenaltyWeights {
        velocity: wt.velocity.unwrap_or(wd.velocity),
        dynamics: wt.dynamics.unwrap_or(wd.dynamics),
        thrust: wt.thrust.unwrap_or(wd.thrust),
        cable: wt.cable.unwrap_or(wd.cable),
        obstacle: wt.obstacle.unwrap_or(wd.obstacle),
    };

    let v = file.vehicles;
    let vd = VehicleParams::default();
    let vehicles = VehicleParams {
        droid_mass: v.droid_mass_kg.unwrap_or(vd.droid_mass),
        payload_drone_mass: v.carrier_mass_kg.unwrap_or(vd.payload_drone_mass),
    };

    let obstacles = file
        .obstacles
        .iter()
        .enumerate()
        .map(|(i, o)| {
            ObstaclePlane::new(Vector3::from(o.point_m), Vector3::from(o.normal))
                .map_err(|e| format!("obstacles[{i}]: {e}"))
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(Scenario {
        start,
        goal_position: Vector3::from(s.goal_position_m),
        goal_velocity: Vector3::from(s.goal_velocity_m_per_s.unwrap_or_default()),
        anchor,
        obstacles,
        cable,
        winch,
        limits,
        weights,
        segments: s.segments.unwrap_or(6),
        vehicles,
    })
}

/// Locates a TOML error: line and column from the byte span, and the dotted
/// key on that line when there is one.
fn parse_error(text: &str, origin: &str, err: &toml::de::Error) -> HarnessError {
    let offset = err.span().map_or(0, |s| s.start).min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    let field = field_at(text, line);
    HarnessError::Parse {
        origin: origin.to_string(),
        line,
        column,
        field,
        message: err.message().trim().to_string(),
    }
}

fn field_at(text: &str, line: usize) -> Option<String> {
    let mut table = String::new();
    for (i, raw) in text.lines().enumerate() {
        let l = raw.trim();
        if l.starts_with('[') {
            table = l.trim_matches(|c| c == '[' || c == ']').trim().to_string();
        }
        if i + 1 == line {
            let key = l.split_once('=')?.0.trim();
            if key.is_empty() || key.starts_with('#') || key.starts_with('[') {
                return None;
            }
            return Some(if table.is_empty() {
                key.to_string()
            } else {
                format!("{table}.{key}")
            });
        }
    }
    None
}
