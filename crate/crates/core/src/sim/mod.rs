//! Point-mass simulation of the carrier drone, the end droid and the winch.
//!
//! Both vehicles are thrust-along-body-z point masses whose attitude follows
//! a commanded body rate. The tether is a catenary while slack and a stiff
//! one-sided spring once the released length is shorter than the chord.

mod run;

pub use run::{simulate_pickup, simulate_retrieval, SimConfig, TelemetryLog, TelemetryRecord};

use nalgebra::{Matrix3, Rotation3, Vector3};
use thiserror::Error;

use crate::cable::{self, CableError, CableProperties, PlanarConfiguration, DEGENERATE_SPAN};
use crate::trajectory::TrajectoryError;
use crate::winch::WinchState;
use crate::GRAVITY;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Cable(#[from] CableError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("thrust vector magnitude {0} N is too small to define an attitude")]
    DegenerateThrust(f64),
    #[error("simulation state became non-finite at t = {0} s")]
    Diverged(f64),
    #[error("invalid simulation input: {0}")]
    Invalid(String),
}

/// Thrust vectors shorter than this have no well-defined direction.
pub const THRUST_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DroneParams {
    pub mass: f64,
    /// Gravitational acceleration vector, normally `(0, 0, -9.81)`.
    pub gravity: Vector3<f64>,
}

impl DroneParams {
    pub fn new(mass: f64) -> Result<Self, SimError> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(SimError::Invalid(format!(
                "mass must be positive, got {mass}"
            )));
        }
        Ok(Self {
            mass,
            gravity: Vector3::new(0.0, 0.0, -GRAVITY),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBodyState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: Rotation3<f64>,
    /// Body-frame angular velocity (rad/s).
    pub angular_velocity: Vector3<f64>,
}

impl RigidBodyState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            attitude: Rotation3::identity(),
            angular_velocity: Vector3::zeros(),
        }
    }

    /// `|R^T R - I|` (max-abs entry).
    pub fn orthonormality_error(&self) -> f64 {
        let r = self.attitude.matrix();
        (r.transpose() * r - Matrix3::identity()).amax()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TetherRegime {
    /// Released length shorter than the chord; spring surrogate.
    Taut,
    /// Just slack; blend between the spring and the catenary.
    Blend,
    /// Slack catenary.
    Catenary,
    /// Slack with both ends on one vertical line.
    Vertical,
}

/// Forces the tether applies to the two vehicles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TetherForce {
    pub on_droid: Vector3<f64>,
    pub on_anchor: Vector3<f64>,
    /// Largest endpoint tension magnitude (N).
    pub tension: f64,
    pub regime: TetherRegime,
}

/// Stiff-spring surrogate for an inextensible taut cable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TetherModel {
    /// N/m
    pub stiffness: f64,
    /// Fraction of critical damping relative to `damping_mass`.
    pub damping_ratio: f64,
    /// Mass used to compute the critical damping coefficient (kg).
    pub damping_mass: f64,
    /// Width of the slack band over which the spring hands over to the catenary (m).
    pub blend: f64,
}

impl Default for TetherModel {
    fn default() -> Self {
        Self {
            stiffness: 5e3,
            damping_ratio: 1.0,
            damping_mass: 0.8,
            blend: 1e-3,
        }
    }
}

impl TetherModel {
    pub fn damping(&self) -> f64 {
        2.0 * self.damping_ratio * (self.stiffness * self.damping_mass).sqrt()
    }

    /// Tether forces given both end velocities (used for spring damping).
    pub fn force(
        &self,
        droid: &Vector3<f64>,
        droid_velocity: &Vector3<f64>,
        anchor: &Vector3<f64>,
        anchor_velocity: &Vector3<f64>,
        winch: &WinchState,
        props: &CableProperties,
    ) -> Result<TetherForce, CableError> {
        let attach = cable::attachment_point(droid, props);
        let mu = props.weight_per_length();
        let length = winch.released_length;
        let mut chord_vec = anchor - attach;
        chord_vec.y = 0.0;
        let chord = chord_vec.norm();
        let weight = Vector3::new(0.0, 0.0, -mu * length);
        if chord <= 0.0 {
            return Ok(finish(
                Vector3::zeros(),
                weight * 0.5,
                TetherRegime::Vertical,
            ));
        }
        let u = chord_vec / chord;
        let slack = length - chord;

        if slack <= 0.0 {
            let mut rel = anchor_velocity - droid_velocity;
            rel.y = 0.0;
            let stretch_rate = rel.dot(&u) - winch.payout_speed;
            let pull = (self.stiffness * -slack + self.damping() * stretch_rate).max(0.0);
            return Ok(finish(u * pull, -u * pull + weight, TetherRegime::Taut));
        }

        let cfg = PlanarConfiguration::between(&attach, anchor);
        if slack < self.blend {
            let s = slack / self.blend;
            let (d, a) = match slack_forces(&attach, anchor, cfg, chord + self.blend, props) {
                Ok((d, a, _)) => (d, a),
                Err(_) => fold_forces(&cfg, chord + self.blend, mu),
            };
            return Ok(finish(
                d * s,
                a * s + weight * (1.0 - s),
                TetherRegime::Blend,
            ));
        }
        let (d, a, regime) = match slack_forces(&attach, anchor, cfg, length, props) {
            Ok(f) => f,
            Err(_) => {
                let (d, a) = fold_forces(&cfg, length, mu);
                (d, a, TetherRegime::Vertical)
            }
        };
        Ok(finish(d, a, regime))
    }
}

fn finish(on_droid: Vector3<f64>, on_anchor: Vector3<f64>, regime: TetherRegime) -> TetherForce {
    TetherForce {
        on_droid,
        on_anchor,
        tension: on_droid.norm().max(on_anchor.norm()),
        regime,
    }
}

/// Endpoint forces of the slack catenary of length `length`.
fn slack_forces(
    droid: &Vector3<f64>,
    anchor: &Vector3<f64>,
    cfg: PlanarConfiguration,
    length: f64,
    props: &CableProperties,
) -> Result<(Vector3<f64>, Vector3<f64>, TetherRegime), CableError> {
    if cfg.span < DEGENERATE_SPAN {
        let (d, a) = fold_forces(&cfg, length, props.weight_per_length());
        return Ok((d, a, TetherRegime::Vertical));
    }
    let sol = cable::solve_catenary(&cfg, length, props)?.placed(droid, anchor);
    let dir = sol.placement.direction();
    let t0 = sol.vertex_tension;
    let slope_droid = (sol.x_droid / sol.scale).sinh();
    let slope_anchor = (sol.x_anchor / sol.scale).sinh();
    let on_droid = Vector3::new(dir * t0, 0.0, t0 * slope_droid);
    let on_anchor = Vector3::new(-dir * t0, 0.0, -t0 * slope_anchor);
    Ok((on_droid, on_anchor, TetherRegime::Catenary))
}

/// Slack cable folded between two vertically aligned ends: each end carries
/// the weight of the cable hanging below it.
fn fold_forces(cfg: &PlanarConfiguration, length: f64, mu: f64) -> (Vector3<f64>, Vector3<f64>) {
    let h = cfg.rise;
    let below_droid = 0.5 * (length - h).max(0.0);
    let below_anchor = (length - below_droid).max(0.0);
    (
        Vector3::new(0.0, 0.0, -mu * below_droid),
        Vector3::new(0.0, 0.0, -mu * below_anchor),
    )
}

/// Quasi-static tether forces (no spring damping).
pub fn tether_force(
    droid: &Vector3<f64>,
    anchor: &Vector3<f64>,
    winch: &WinchState,
    props: &CableProperties,
) -> Result<TetherForce, CableError> {
    let still = WinchState {
        payout_speed: 0.0,
        ..*winch
    };
    TetherModel::default().force(
        droid,
        &Vector3::zeros(),
        anchor,
        &Vector3::zeros(),
        &still,
        props,
    )
}

/// Flat-output derivatives at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub jerk: Vector3<f64>,
    pub yaw: f64,
    pub yaw_rate: f64,
}

/// Control inputs of a thrust-vectoring vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlInput {
    /// Collective thrust along body z (N).
    pub thrust: f64,
    /// Commanded body rate (rad/s).
    pub angular_velocity: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatInputs {
    pub thrust: f64,
    pub attitude: Rotation3<f64>,
    pub angular_velocity: Vector3<f64>,
}

impl FlatInputs {
    pub fn control(&self) -> ControlInput {
        ControlInput {
            thrust: self.thrust,
            angular_velocity: self.angular_velocity,
        }
    }
}

/// Attitude whose body z-axis is `z_body` and whose heading is `yaw`.
pub fn attitude_from(z_body: &Vector3<f64>, yaw: f64) -> Rotation3<f64> {
    let heading = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
    let mut y_body = z_body.cross(&heading);
    if y_body.norm() < 1e-9 {
        y_body = z_body.cross(&Vector3::x());
    }
    let y_body = y_body.normalize();
    let x_body = y_body.cross(z_body);
    Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x_body, y_body, *z_body]))
}

/// Recovers thrust, attitude and body rate that realise the flat state.
///
/// The thrust vector is `m (a - g) - F_tether`. The body rate neglects the
/// time derivative of the tether force.
pub fn flat_to_inputs(
    flat: &FlatState,
    params: &DroneParams,
    tether: &Vector3<f64>,
) -> Result<FlatInputs, SimError> {
    let thrust_vec = params.mass * (flat.acceleration - params.gravity) - tether;
    let f = thrust_vec.norm();
    if !(f >= THRUST_EPSILON) {
        return Err(SimError::DegenerateThrust(f));
    }
    let z_body = thrust_vec / f;
    let attitude = attitude_from(&z_body, flat.yaw);
    let x_body = attitude.matrix().column(0).into_owned();
    let y_body = attitude.matrix().column(1).into_owned();
    let dz = params.mass / f * (flat.jerk - z_body * z_body.dot(&flat.jerk));
    let angular_velocity =
        Vector3::new(-dz.dot(&y_body), dz.dot(&x_body), flat.yaw_rate * z_body.z);
    Ok(FlatInputs {
        thrust: f,
        attitude,
        angular_velocity,
    })
}

/// Carrier, end droid and winch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemState {
    pub time: f64,
    pub carrier: RigidBodyState,
    pub droid: RigidBodyState,
    pub winch: WinchState,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub carrier: DroneParams,
    pub droid: DroneParams,
    pub cable: CableProperties,
    pub tether: TetherModel,
    /// Hold the carrier in place instead of integrating it.
    pub carrier_pinned: bool,
}

impl SystemParams {
    pub fn tether(&self, s: &SystemState) -> Result<TetherForce, CableError> {
        self.tether.force(
            &s.droid.position,
            &s.droid.velocity,
            &s.carrier.position,
            &s.carrier.velocity,
            &s.winch,
            &self.cable,
        )
    }
}

/// Linear acceleration of a body under thrust, gravity and an external force.
pub fn acceleration(
    body: &RigidBodyState,
    params: &DroneParams,
    thrust: f64,
    external: &Vector3<f64>,
) -> Vector3<f64> {
    body.attitude * Vector3::z() * (thrust / params.mass) + params.gravity + external / params.mass
}

/// One semi-implicit Euler step. Returns the tether force used.
pub fn step(
    state: &mut SystemState,
    params: &SystemParams,
    carrier_input: &ControlInput,
    droid_input: &ControlInput,
    dt: f64,
) -> Result<TetherForce, SimError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimError::Invalid(format!(
            "time step must be positive, got {dt}"
        )));
    }
    let force = params.tether(state)?;
    advance(
        &mut state.droid,
        &params.droid,
        droid_input,
        &force.on_droid,
        dt,
    );
    if !params.carrier_pinned {
        advance(
            &mut state.carrier,
            &params.carrier,
            carrier_input,
            &force.on_anchor,
            dt,
        );
    }
    state.winch.advance(dt);
    state.time += dt;
    let finite = |b: &RigidBodyState| {
        b.position
            .iter()
            .chain(b.velocity.iter())
            .all(|v| v.is_finite())
    };
    if !finite(&state.droid) || !finite(&state.carrier) {
        return Err(SimError::Diverged(state.time));
    }
    Ok(force)
}

fn advance(
    body: &mut RigidBodyState,
    params: &DroneParams,
    input: &ControlInput,
    external: &Vector3<f64>,
    dt: f64,
) {
    let a = acceleration(body, params, input.thrust, external);
    body.velocity += a * dt;
    body.position += body.velocity * dt;
    body.angular_velocity = input.angular_velocity;
    body.attitude = orthonormalized(&(body.attitude * Rotation3::new(input.angular_velocity * dt)));
}

/// Gram-Schmidt on the columns, keeping the body z-axis direction.
fn orthonormalized(r: &Rotation3<f64>) -> Rotation3<f64> {
    let m = r.matrix();
    let z = m.column(2).normalize();
    let x = m.column(0) - z * z.dot(&m.column(0));
    let x = x.normalize();
    let y = z.cross(&x);
    Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn props() -> CableProperties {
        CableProperties::default()
    }

    #[test]
    fn hover_without_tether() {
        let params = DroneParams::new(0.8).unwrap();
        let flat = FlatState {
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            acceleration: Vector3::zeros(),
            jerk: Vector3::zeros(),
            yaw: 0.7,
            yaw_rate: 0.0,
        };
        let out = flat_to_inputs(&flat, &params, &Vector3::zeros()).unwrap();
        assert!((out.thrust - 0.8 * 9.81).abs() < 1e-12);
        let expected = Rotation3::from_axis_angle(&Vector3::z_axis(), 0.7);
        assert!((out.attitude.matrix() - expected.matrix()).amax() < 1e-12);
    }

    #[test]
    fn hover_with_vertical_tension() {
        let params = DroneParams::new(0.8).unwrap();
        let flat = FlatState {
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            acceleration: Vector3::zeros(),
            jerk: Vector3::zeros(),
            yaw: 0.0,
            yaw_rate: 0.0,
        };
        let out = flat_to_inputs(&flat, &params, &Vector3::new(0.0, 0.0, -3.0)).unwrap();
        assert!((out.thrust - (0.8 * 9.81 + 3.0)).abs() < 1e-12);
    }

    #[test]
    fn free_fall_is_degenerate() {
        let params = DroneParams::new(0.8).unwrap();
        let flat = FlatState {
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            acceleration: Vector3::new(0.0, 0.0, -9.81),
            jerk: Vector3::zeros(),
            yaw: 0.0,
            yaw_rate: 0.0,
        };
        assert!(matches!(
            flat_to_inputs(&flat, &params, &Vector3::zeros()),
            Err(SimError::DegenerateThrust(_))
        ));
    }

    #[test]
    fn slack_forces_balance_cable_weight() {
        let winch = WinchState {
            released_length: 6.0,
            payout_speed: 0.0,
        };
        let droid = Vector3::new(1.0, 0.0, 0.0);
        let anchor = Vector3::new(-1.0, 0.0, 2.0);
        let f = tether_force(&droid, &anchor, &winch, &props()).unwrap();
        assert_eq!(f.regime, TetherRegime::Catenary);
        let mu = props().weight_per_length();
        assert!((f.on_droid.z + f.on_anchor.z + mu * 6.0).abs() < 1e-12);
        assert!((f.on_droid.x + f.on_anchor.x).abs() < 1e-15);
        // droid pulled towards the anchor horizontally
        assert!(f.on_droid.x < 0.0);
    }

    #[test]
    fn symmetric_slack_horizontal_components_cancel() {
        let winch = WinchState {
            released_length: 2.5,
            payout_speed: 0.0,
        };
        let f = tether_force(
            &Vector3::zeros(),
            &Vector3::new(2.0, 0.0, 0.0),
            &winch,
            &props(),
        )
        .unwrap();
        assert!((f.on_droid.x + f.on_anchor.x).abs() < 1e-15);
        assert!((f.on_droid.z - f.on_anchor.z).abs() < 1e-12);
    }

    #[test]
    fn taut_spring_pulls_along_chord() {
        let winch = WinchState {
            released_length: 1.99,
            payout_speed: 0.0,
        };
        let f = tether_force(
            &Vector3::zeros(),
            &Vector3::new(0.0, 0.0, 2.0),
            &winch,
            &props(),
        )
        .unwrap();
        assert_eq!(f.regime, TetherRegime::Taut);
        assert!((f.on_droid - Vector3::new(0.0, 0.0, 50.0)).norm() < 1e-9);
        let mu = props().weight_per_length();
        assert!((f.on_anchor.z + 50.0 + mu * 1.99).abs() < 1e-9);
    }

    #[test]
    fn forces_continuous_across_regimes() {
        let anchor = Vector3::new(-2.0, 0.0, 2.5);
        let droid = Vector3::new(1.0, 0.0, 0.3);
        let chord = (3.0f64).hypot(2.2);
        let model = TetherModel::default();
        let at = |l: f64| {
            let w = WinchState {
                released_length: l,
                payout_speed: 0.0,
            };
            tether_force(&droid, &anchor, &w, &props()).unwrap()
        };
        let eps = 1e-9;
        for edge in [chord, chord + model.blend] {
            let (a, b) = (at(edge - eps), at(edge + eps));
            assert!((a.on_droid - b.on_droid).norm() < 1e-4, "{a:?} {b:?}");
            assert!((a.on_anchor - b.on_anchor).norm() < 1e-4, "{a:?} {b:?}");
        }
    }

    #[test]
    fn vertical_slack_folds() {
        let winch = WinchState {
            released_length: 3.0,
            payout_speed: 0.0,
        };
        let f = tether_force(
            &Vector3::zeros(),
            &Vector3::new(0.0, 0.0, 2.0),
            &winch,
            &props(),
        )
        .unwrap();
        assert_eq!(f.regime, TetherRegime::Vertical);
        let mu = props().weight_per_length();
        assert!((f.on_droid.z + 0.5 * mu).abs() < 1e-15);
        assert!((f.on_anchor.z + 2.5 * mu).abs() < 1e-15);
    }

    fn free_params() -> SystemParams {
        SystemParams {
            carrier: DroneParams::new(2.5).unwrap(),
            droid: DroneParams::new(0.8).unwrap(),
            cable: props(),
            tether: TetherModel::default(),
            carrier_pinned: true,
        }
    }

    #[test]
    fn free_fall_step() {
        let mut s = SystemState {
            time: 0.0,
            carrier: RigidBodyState::at_rest(Vector3::new(0.0, 0.0, 10.0)),
            droid: RigidBodyState::at_rest(Vector3::zeros()),
            winch: WinchState {
                released_length: 20.0,
                payout_speed: 0.0,
            },
        };
        let off = ControlInput {
            thrust: 0.0,
            angular_velocity: Vector3::zeros(),
        };
        let mut p = free_params();
        p.cable.mass_per_length = 1e-12;
        step(&mut s, &p, &off, &off, 1e-3).unwrap();
        assert!((s.droid.velocity.z + 9.81e-3).abs() < 1e-9);
        assert!((s.winch.released_length - 20.0).abs() < 1e-15);
    }

    #[test]
    fn hover_equilibrium_holds_position() {
        let p = free_params();
        let mut s = SystemState {
            time: 0.0,
            carrier: RigidBodyState::at_rest(Vector3::new(0.0, 0.0, 3.0)),
            droid: RigidBodyState::at_rest(Vector3::zeros()),
            winch: WinchState {
                released_length: 4.0,
                payout_speed: 0.0,
            },
        };
        let f = p.tether(&s).unwrap();
        let flat = FlatState {
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            acceleration: Vector3::zeros(),
            jerk: Vector3::zeros(),
            yaw: 0.0,
            yaw_rate: 0.0,
        };
        let inputs = flat_to_inputs(&flat, &p.droid, &f.on_droid).unwrap();
        s.droid.attitude = inputs.attitude;
        for _ in 0..100 {
            step(&mut s, &p, &inputs.control(), &inputs.control(), 1e-3).unwrap();
        }
        assert!(s.droid.position.norm() < 1e-12);
    }

    #[test]
    fn attitude_stays_orthonormal() {
        let mut body = RigidBodyState::at_rest(Vector3::zeros());
        let params = DroneParams::new(1.0).unwrap();
        let input = ControlInput {
            thrust: 9.81,
            angular_velocity: Vector3::new(0.3, -1.1, 2.0),
        };
        for _ in 0..100_000 {
            advance(&mut body, &params, &input, &Vector3::zeros(), 1e-3);
        }
        assert!(body.orthonormality_error() < 1e-8);
        assert!((body.attitude.matrix().determinant() - 1.0).abs() < 1e-9);
    }
}
