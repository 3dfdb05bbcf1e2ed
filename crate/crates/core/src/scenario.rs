//! A complete planning and simulation problem.

use nalgebra::Vector3;

use crate::cable::{self, CableProperties};
use crate::optimizer::{Limits, ObstaclePlane, PenaltyWeights};
use crate::trajectory::BoundaryState;
use crate::winch::WinchSchedule;

/// Masses used by the simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    pub droid_mass: f64,
    pub payload_drone_mass: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            droid_mass: 0.8,
            payload_drone_mass: 2.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub start: BoundaryState,
    pub goal_position: Vector3<f64>,
    pub goal_velocity: Vector3<f64>,
    /// Hover position of the payload drone's winch outlet.
    pub anchor: Vector3<f64>,
    pub obstacles: Vec<ObstaclePlane>,
    pub cable: CableProperties,
    pub winch: WinchSchedule,
    pub limits: Limits,
    pub weights: PenaltyWeights,
    pub segments: usize,
    pub vehicles: VehicleParams,
}

/// Hover position of the carrier in the reference pickup setup.
pub const REFERENCE_ANCHOR: [f64; 3] = [-2.0, 0.0, 2.5];

impl Scenario {
    /// The reference pickup: end droid at rest at the origin, carrier
    /// hovering at [`REFERENCE_ANCHOR`], 0.14 g/m tether with 0.1 m sag
    /// limit paid out at 0.2 m/s from the middle of the starting corridor.
    pub fn reference_pickup(goal: Vector3<f64>) -> Self {
        let start = BoundaryState::at_rest(Vector3::zeros());
        let anchor = Vector3::from(REFERENCE_ANCHOR);
        let cable = CableProperties::default();
        Self {
            start,
            goal_position: goal,
            goal_velocity: Vector3::zeros(),
            anchor,
            obstacles: Vec::new(),
            cable,
            winch: WinchSchedule {
                initial_length: corridor_midpoint(&start.position, &anchor, &cable),
                payout_speed: 0.2,
                capacity: 10.0,
                stow_length: 0.5,
            },
            limits: Limits::default(),
            weights: PenaltyWeights::default(),
            segments: 6,
            vehicles: VehicleParams::default(),
        }
    }

    /// Checks every component invariant. Returns soft warnings (e.g. a goal
    /// that cannot satisfy the corridor) on success.
    pub fn validate(&self) -> Result<Vec<String>, String> {
        let finite = |v: &Vector3<f64>| v.iter().all(|x| x.is_finite());
        if !self.start.is_finite() {
            return Err("start state must be finite".into());
        }
        if !finite(&self.goal_position) || !finite(&self.goal_velocity) || !finite(&self.anchor) {
            return Err("goal and anchor must be finite".into());
        }
        if self.segments == 0 {
            return Err("segment count must be at least 1".into());
        }
        self.limits.validate()?;
        self.weights.validate()?;
        for (i, o) in self.obstacles.iter().enumerate() {
            if ((o.normal.norm() - 1.0).abs()) > 1e-9 {
                return Err(format!("obstacle {i}: normal must be unit length"));
            }
        }
        CableProperties::new(
            self.cable.mass_per_length,
            self.cable.gravity,
            self.cable.sag_limit,
            self.cable.attachment_offset,
        )
        .map_err(|e| e.to_string())?;
        let w = &self.winch;
        if !(w.stow_length >= 0.0 && w.stow_length <= w.capacity) {
            return Err("winch: need 0 <= stow_length <= capacity".into());
        }
        if !(w.initial_length >= 0.0 && w.initial_length.is_finite() && w.payout_speed.is_finite())
        {
            return Err("winch: initial length and payout speed must be finite".into());
        }
        if !(self.vehicles.droid_mass > 0.0 && self.vehicles.payload_drone_mass > 0.0) {
            return Err("vehicle masses must be positive".into());
        }

        let mut warnings = Vec::new();
        if self.weights.cable > 0.0 {
            let goal = cable::attachment_point(&self.goal_position, &self.cable);
            let l_min = cable::min_length(&goal, &self.anchor);
            if l_min > w.capacity {
                warnings.push(format!(
                    "goal needs at least {l_min:.3} m of cable but the reel holds {:.3} m",
                    w.capacity
                ));
            }
            let start = cable::cable_bounds(
                &self.start.position,
                &self.anchor,
                w.initial_length,
                &self.cable,
            )
            .map_err(|e| e.to_string())?;
            if !start.satisfied() {
                warnings.push(format!(
                    "initial cable length {:.3} m outside the start corridor [{:.3}, {:.3}]",
                    w.initial_length, start.l_min, start.l_max
                ));
            }
        }
        Ok(warnings)
    }

    /// Whether the goal can be reached at all with the reel capacity.
    pub fn goal_within_reel(&self) -> bool {
        let goal = cable::attachment_point(&self.goal_position, &self.cable);
        cable::min_length(&goal, &self.anchor) <= self.winch.capacity
    }
}

/// Middle of the cable corridor for an end droid at `droid`; falls back to the
/// chord when the catenary solve fails.
pub fn corridor_midpoint(
    droid: &Vector3<f64>,
    anchor: &Vector3<f64>,
    props: &CableProperties,
) -> f64 {
    match cable::cable_bounds(droid, anchor, 0.0, props) {
        Ok(b) => 0.5 * (b.l_min + b.l_max),
        Err(_) => cable::min_length(&cable::attachment_point(droid, props), anchor),
    }
}
