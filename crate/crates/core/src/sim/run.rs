//! Closed-loop pickup tracking and passive retrieval runs.

use nalgebra::{Rotation3, Vector3};

use super::{
    attitude_from, flat_to_inputs, step, ControlInput, DroneParams, FlatState, RigidBodyState,
    SimError, SystemParams, SystemState, TetherForce, TetherModel,
};
use crate::cable;
use crate::scenario::Scenario;
use crate::trajectory::UniformPolyTrajectory;
use crate::winch::WinchState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    /// Record every `log_every`-th step (the last step is always recorded).
    pub log_every: usize,
    /// Position gain (1/s²).
    pub kp: f64,
    /// Velocity gain (1/s).
    pub kd: f64,
    /// Attitude error gain (1/s).
    pub attitude_gain: f64,
    pub tether: TetherModel,
    /// Squared-length corridor violation above which a sample is flagged (m²).
    pub corridor_tolerance: f64,
    /// Extra time simulated after the plan ends (s).
    pub hold_time: f64,
    /// Initial swing angle of the retrieval run (rad, about the y axis).
    pub retrieval_offset: f64,
    /// Keep the carrier fixed instead of flying it with a hover controller.
    pub carrier_pinned: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            log_every: 10,
            kp: 16.0,
            kd: 8.0,
            attitude_gain: 100.0,
            tether: TetherModel::default(),
            corridor_tolerance: 1e-3,
            hold_time: 0.0,
            retrieval_offset: 0.0,
            carrier_pinned: false,
        }
    }
}

impl SimConfig {
    fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt <= 0.05) {
            return Err(SimError::Invalid(format!(
                "dt must be in (0, 0.05], got {}",
                self.dt
            )));
        }
        if self.log_every == 0 {
            return Err(SimError::Invalid("log_every must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelemetryRecord {
    pub time: f64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    /// Planned position (the actual position for passive runs).
    pub reference: Vector3<f64>,
    pub carrier_position: Vector3<f64>,
    pub l_min: f64,
    pub l_max: f64,
    pub l_now: f64,
    pub tension: f64,
    /// End-droid collective thrust (N).
    pub thrust: f64,
    /// Angle of the droid below the carrier from the vertical (rad).
    pub swing_angle: f64,
    /// Squared-length corridor violation (m²).
    pub corridor_violation: f64,
}

impl TelemetryRecord {
    pub fn tracking_error(&self) -> f64 {
        (self.position - self.reference).norm()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TelemetryLog {
    pub records: Vec<TelemetryRecord>,
    /// Squared-violation threshold used for [`Self::corridor_violations`].
    pub corridor_tolerance: f64,
}

impl TelemetryLog {
    pub fn duration(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.time)
    }

    pub fn max_tracking_error(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.tracking_error())
            .fold(0.0, f64::max)
    }

    /// Number of records whose corridor violation exceeds the tolerance.
    pub fn corridor_violations(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.corridor_violation > self.corridor_tolerance)
            .count()
    }

    pub fn max_corridor_violation(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.corridor_violation)
            .fold(0.0, f64::max)
    }

    pub fn peak_tension(&self) -> f64 {
        self.records.iter().map(|r| r.tension).fold(0.0, f64::max)
    }

    pub fn max_swing_angle(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.swing_angle.abs())
            .fold(0.0, f64::max)
    }
}

/// Hover controller holding `body` at `target` against the tether force.
fn hover_control(
    body: &RigidBodyState,
    params: &DroneParams,
    target: &Vector3<f64>,
    tether: &Vector3<f64>,
    cfg: &SimConfig,
) -> Result<ControlInput, SimError> {
    let flat = FlatState {
        position: *target,
        velocity: Vector3::zeros(),
        acceleration: Vector3::zeros(),
        jerk: Vector3::zeros(),
        yaw: 0.0,
        yaw_rate: 0.0,
    };
    track(body, params, &flat, tether, cfg)
}

/// PD position tracking with acceleration and tether feedforward.
fn track(
    body: &RigidBodyState,
    params: &DroneParams,
    flat: &FlatState,
    tether: &Vector3<f64>,
    cfg: &SimConfig,
) -> Result<ControlInput, SimError> {
    let command = FlatState {
        acceleration: flat.acceleration
            + (flat.velocity - body.velocity) * cfg.kd
            + (flat.position - body.position) * cfg.kp,
        ..*flat
    };
    let desired = flat_to_inputs(&command, params, tether)?;
    let e = body.attitude.matrix().transpose() * desired.attitude.matrix();
    let error = 0.5
        * Vector3::new(
            e[(2, 1)] - e[(1, 2)],
            e[(0, 2)] - e[(2, 0)],
            e[(1, 0)] - e[(0, 1)],
        );
    let z_body = body.attitude * Vector3::z();
    let thrust_vec = desired.attitude * Vector3::z() * desired.thrust;
    Ok(ControlInput {
        thrust: thrust_vec.dot(&z_body).max(0.0),
        angular_velocity: desired.angular_velocity + error * cfg.attitude_gain,
    })
}

fn flat_at(traj: &UniformPolyTrajectory, t: f64) -> Result<FlatState, SimError> {
    let t = t.clamp(0.0, traj.total_duration());
    Ok(FlatState {
        position: traj.evaluate(t, 0)?,
        velocity: traj.evaluate(t, 1)?,
        acceleration: traj.evaluate(t, 2)?,
        jerk: traj.evaluate(t, 3)?,
        yaw: 0.0,
        yaw_rate: 0.0,
    })
}

fn system_params(
    scenario: &Scenario,
    droid_mass: f64,
    cfg: &SimConfig,
) -> Result<SystemParams, SimError> {
    Ok(SystemParams {
        carrier: DroneParams::new(scenario.vehicles.payload_drone_mass)?,
        droid: DroneParams::new(droid_mass)?,
        cable: scenario.cable,
        tether: TetherModel {
            damping_mass: droid_mass,
            ..cfg.tether
        },
        carrier_pinned: cfg.carrier_pinned,
    })
}

#[allow(clippy::too_many_arguments)]
fn record(
    state: &SystemState,
    params: &SystemParams,
    force: &TetherForce,
    acceleration: Vector3<f64>,
    reference: Vector3<f64>,
    thrust: f64,
) -> Result<TelemetryRecord, SimError> {
    let p = state.droid.position;
    let anchor = state.carrier.position;
    let bounds = cable::cable_bounds(&p, &anchor, state.winch.released_length, &params.cable)?;
    let below = anchor - cable::attachment_point(&p, &params.cable);
    Ok(TelemetryRecord {
        time: state.time,
        position: p,
        velocity: state.droid.velocity,
        acceleration,
        reference,
        carrier_position: anchor,
        l_min: bounds.l_min,
        l_max: bounds.l_max,
        l_now: bounds.l_now,
        tension: force.tension,
        thrust,
        swing_angle: (-below.x).atan2(below.z),
        corridor_violation: bounds.squared_violation(),
    })
}

/// Flies the end droid along `planned` with the carrier hovering at the
/// scenario anchor and the winch following the scenario schedule.
pub fn simulate_pickup(
    scenario: &Scenario,
    planned: &UniformPolyTrajectory,
    cfg: &SimConfig,
) -> Result<TelemetryLog, SimError> {
    cfg.validate()?;
    let params = system_params(scenario, scenario.vehicles.droid_mass, cfg)?;
    let mut state = SystemState {
        time: 0.0,
        carrier: RigidBodyState::at_rest(scenario.anchor),
        droid: RigidBodyState {
            velocity: scenario.start.velocity,
            ..RigidBodyState::at_rest(scenario.start.position)
        },
        winch: scenario.winch.state_at(0.0),
    };
    let initial = params.tether(&state)?;
    state.droid.attitude =
        flat_to_inputs(&flat_at(planned, 0.0)?, &params.droid, &initial.on_droid)?.attitude;
    state.carrier.attitude = hover_attitude(&params.carrier, &initial.on_anchor)?;

    let horizon = planned.total_duration() + cfg.hold_time.max(0.0);
    let steps = (horizon / cfg.dt).round() as usize;
    let mut log = TelemetryLog {
        records: Vec::with_capacity(steps / cfg.log_every + 2),
        corridor_tolerance: cfg.corridor_tolerance,
    };
    for k in 0..=steps {
        let t = state.time;
        let reference = flat_at(planned, t)?;
        let force = params.tether(&state)?;
        let droid_input = track(
            &state.droid,
            &params.droid,
            &reference,
            &force.on_droid,
            cfg,
        )?;
        let carrier_input = hover_control(
            &state.carrier,
            &params.carrier,
            &scenario.anchor,
            &force.on_anchor,
            cfg,
        )?;
        let accel = super::acceleration(
            &state.droid,
            &params.droid,
            droid_input.thrust,
            &force.on_droid,
        );
        if k.is_multiple_of(cfg.log_every) || k == steps {
            log.records.push(record(
                &state,
                &params,
                &force,
                accel,
                reference.position,
                droid_input.thrust,
            )?);
        }
        if k == steps {
            break;
        }
        // The schedule, not the integrated rate, defines the released length.
        state.winch.payout_speed = scenario.winch.rate_at(t);
        step(&mut state, &params, &carrier_input, &droid_input, cfg.dt)?;
        state.winch = scenario.winch.state_at(state.time);
    }
    Ok(log)
}

fn hover_attitude(params: &DroneParams, tether: &Vector3<f64>) -> Result<Rotation3<f64>, SimError> {
    let thrust = -params.mass * params.gravity - tether;
    let n = thrust.norm();
    if n < super::THRUST_EPSILON {
        return Err(SimError::DegenerateThrust(n));
    }
    Ok(attitude_from(&(thrust / n), 0.0))
}

/// Reels the unpowered end droid, carrying `attach_mass`, up to the stow
/// length at the scenario payout speed.
///
/// The droid starts hanging below the carrier with the cable stretched to
/// its static equilibrium and moving with the reel, tilted by
/// `cfg.retrieval_offset` from the vertical.
pub fn simulate_retrieval(
    scenario: &Scenario,
    attach_mass: f64,
    cfg: &SimConfig,
) -> Result<TelemetryLog, SimError> {
    cfg.validate()?;
    if !(attach_mass >= 0.0 && attach_mass.is_finite()) {
        return Err(SimError::Invalid(
            "attached mass must be non-negative".into(),
        ));
    }
    let w = &scenario.winch;
    let speed = -w.payout_speed.abs();
    if speed == 0.0 {
        return Err(SimError::Invalid(
            "retrieval needs a non-zero payout speed".into(),
        ));
    }
    if w.initial_length <= w.stow_length {
        return Err(SimError::Invalid(
            "released length is already at the stow length".into(),
        ));
    }
    let mass = scenario.vehicles.droid_mass + attach_mass;
    let params = system_params(scenario, mass, cfg)?;
    let stretch = mass * crate::GRAVITY / params.tether.stiffness;
    let radius = w.initial_length + stretch;
    let theta = cfg.retrieval_offset;
    let dir = Vector3::new(theta.sin(), 0.0, -theta.cos());
    let anchor = scenario.anchor;
    let droid_position =
        anchor + dir * radius - Vector3::new(0.0, 0.0, scenario.cable.attachment_offset);

    let mut state = SystemState {
        time: 0.0,
        carrier: RigidBodyState::at_rest(anchor),
        droid: RigidBodyState {
            velocity: -dir * speed.abs(),
            ..RigidBodyState::at_rest(droid_position)
        },
        winch: WinchState {
            released_length: w.initial_length,
            payout_speed: speed,
        },
    };
    let initial = params.tether(&state)?;
    state.carrier.attitude = hover_attitude(&params.carrier, &initial.on_anchor)?;

    let off = ControlInput {
        thrust: 0.0,
        angular_velocity: Vector3::zeros(),
    };
    let mut log = TelemetryLog {
        records: Vec::new(),
        corridor_tolerance: cfg.corridor_tolerance,
    };
    let mut k = 0usize;
    loop {
        let force = params.tether(&state)?;
        let accel = super::acceleration(&state.droid, &params.droid, 0.0, &force.on_droid);
        let done = state.winch.released_length <= w.stow_length + 1e-9 * w.stow_length.max(1.0);
        if k.is_multiple_of(cfg.log_every) || done {
            let position = state.droid.position;
            log.records
                .push(record(&state, &params, &force, accel, position, 0.0)?);
        }
        if done {
            break;
        }
        let carrier_input = hover_control(
            &state.carrier,
            &params.carrier,
            &anchor,
            &force.on_anchor,
            cfg,
        )?;
        step(&mut state, &params, &carrier_input, &off, cfg.dt)?;
        k += 1;
        let exact = w.initial_length + speed * k as f64 * cfg.dt;
        state.winch.released_length = exact.max(w.stow_length);
    }
    Ok(log)
}
