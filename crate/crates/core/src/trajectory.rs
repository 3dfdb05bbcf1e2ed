//! Uniform-duration minimum-jerk piecewise polynomial trajectories.
//!
//! A trajectory has `N` quintic segments of equal duration `dT`. Its
//! coefficients are the unique solution of a banded linear system built from
//! the start state (position, velocity, acceleration), the `N - 1`
//! intermediate waypoints, C⁴ continuity at every joint, and the terminal
//! position, velocity and (zero) acceleration. That solution is the
//! minimum-jerk interpolant, and because the map from waypoints to
//! coefficients is linear, cost gradients can be pulled back onto the
//! waypoints and the total duration with a single adjoint solve.

use nalgebra::{DMatrix, Vector3};
use thiserror::Error;

use crate::banded::BandedMatrix;

/// Order of the derivative whose squared norm is minimised (jerk).
pub const MIN_ORDER: usize = 3;
/// Coefficients per segment and axis.
pub const COEFFS: usize = 2 * MIN_ORDER;
/// Highest derivative order that is continuous at segment joints.
pub const CONTINUITY: usize = 2 * MIN_ORDER - 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("singular coefficient system: {0}")]
    SingularSystem(&'static str),
    #[error("time {t} s outside trajectory domain [0, {duration}]")]
    OutOfDomain { t: f64, duration: f64 },
    #[error("derivative order {0} exceeds the polynomial degree")]
    InvalidOrder(usize),
}

/// Kinematic state at the start of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    /// Carried for completeness; a minimum-jerk segment leaves the initial
    /// jerk free, so it is not imposed by [`UniformPolyTrajectory::construct`].
    pub jerk: Vector3<f64>,
}

impl BoundaryState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            acceleration: Vector3::zeros(),
            jerk: Vector3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.position, self.velocity, self.acceleration, self.jerk]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Flat outputs of the end droid: position and yaw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatOutput {
    pub position: Vector3<f64>,
    pub yaw: f64,
}

impl FlatOutput {
    pub fn new(position: Vector3<f64>, yaw: f64) -> Self {
        Self {
            position,
            yaw: wrap_angle(yaw),
        }
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(angle: f64) -> f64 {
    use std::f64::consts::PI;
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Values of `d^order/dt^order t^k` for k = 0..6.
#[inline]
pub fn basis(tau: f64, order: usize) -> [f64; COEFFS] {
    let mut out = [0.0; COEFFS];
    for (k, slot) in out.iter_mut().enumerate().skip(order) {
        let mut factor = 1.0;
        for m in 0..order {
            factor *= (k - m) as f64;
        }
        *slot = factor * tau.powi((k - order) as i32);
    }
    out
}

#[derive(Debug, Clone)]
pub struct UniformPolyTrajectory {
    segments: usize,
    segment_duration: f64,
    /// Row `6 i + k` holds the `t^k` coefficient of segment `i`, one column per axis.
    coefficients: DMatrix<f64>,
    system: BandedMatrix,
}

impl UniformPolyTrajectory {
    /// Builds the trajectory through `waypoints` (length `N - 1`) with total
    /// duration `duration`, ending at rest-acceleration with the given
    /// terminal position and velocity.
    pub fn construct(
        waypoints: &[Vector3<f64>],
        duration: f64,
        start: &BoundaryState,
        goal_position: &Vector3<f64>,
        goal_velocity: &Vector3<f64>,
    ) -> Result<Self, TrajectoryError> {
        let segments = waypoints.len() + 1;
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(TrajectoryError::SingularSystem("duration must be positive"));
        }
        let dt = duration / segments as f64;
        let mut system = coefficient_system(segments, dt);
        if !system.factorize() {
            return Err(TrajectoryError::SingularSystem("zero pivot"));
        }

        let n = COEFFS * segments;
        let mut rhs = DMatrix::zeros(n, 3);
        let mut put = |row: usize, v: &Vector3<f64>| {
            for axis in 0..3 {
                rhs[(row, axis)] = v[axis];
            }
        };
        put(0, &start.position);
        put(1, &start.velocity);
        put(2, &start.acceleration);
        for (i, q) in waypoints.iter().enumerate() {
            put(COEFFS * i + 5, q);
        }
        put(n - 3, goal_position);
        put(n - 2, goal_velocity);
        put(n - 1, &Vector3::zeros());
        system.solve(&mut rhs);

        Ok(Self {
            segments,
            segment_duration: dt,
            coefficients: rhs,
            system,
        })
    }

    /// Rebuilds a trajectory from a stored coefficient matrix (`6 N` rows,
    /// three columns).
    pub fn from_coefficients(
        coefficients: DMatrix<f64>,
        segment_duration: f64,
    ) -> Result<Self, TrajectoryError> {
        if !(segment_duration > 0.0 && segment_duration.is_finite()) {
            return Err(TrajectoryError::SingularSystem(
                "segment duration must be positive",
            ));
        }
        let rows = coefficients.nrows();
        if rows == 0 || !rows.is_multiple_of(COEFFS) || coefficients.ncols() != 3 {
            return Err(TrajectoryError::SingularSystem(
                "coefficient matrix must be 6N x 3",
            ));
        }
        let segments = rows / COEFFS;
        let mut system = coefficient_system(segments, segment_duration);
        if !system.factorize() {
            return Err(TrajectoryError::SingularSystem("zero pivot"));
        }
        Ok(Self {
            segments,
            segment_duration,
            coefficients,
            system,
        })
    }

    pub fn segment_count(&self) -> usize {
        self.segments
    }

    pub fn segment_duration(&self) -> f64 {
        self.segment_duration
    }

    /// `N * dT`.
    pub fn total_duration(&self) -> f64 {
        self.segments as f64 * self.segment_duration
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    /// Coefficients of segment `i`, ascending powers.
    pub fn segment_coefficients(&self, i: usize) -> [Vector3<f64>; COEFFS] {
        std::array::from_fn(|k| {
            let r = COEFFS * i + k;
            Vector3::new(
                self.coefficients[(r, 0)],
                self.coefficients[(r, 1)],
                self.coefficients[(r, 2)],
            )
        })
    }

    /// Derivative of segment `i` at local time `tau`, without domain checks.
    pub fn evaluate_segment(&self, i: usize, tau: f64, order: usize) -> Vector3<f64> {
        let beta = basis(tau, order);
        let base = COEFFS * i;
        let mut out = Vector3::zeros();
        for (k, b) in beta.iter().enumerate().skip(order) {
            for axis in 0..3 {
                out[axis] += b * self.coefficients[(base + k, axis)];
            }
        }
        out
    }

    /// Segment index and local time for global time `t`.
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let i = ((t / self.segment_duration).floor().max(0.0) as usize).min(self.segments - 1);
        (i, t - i as f64 * self.segment_duration)
    }

    pub fn evaluate(&self, t: f64, order: usize) -> Result<Vector3<f64>, TrajectoryError> {
        if order >= COEFFS {
            return Err(TrajectoryError::InvalidOrder(order));
        }
        let duration = self.total_duration();
        let slack = 1e-12 * duration.max(1.0);
        if !(t >= -slack && t <= duration + slack) {
            return Err(TrajectoryError::OutOfDomain { t, duration });
        }
        let (i, tau) = self.locate(t.clamp(0.0, duration));
        Ok(self.evaluate_segment(i, tau, order))
    }

    /// Positions at the `N - 1` interior joints.
    pub fn waypoints(&self) -> Vec<Vector3<f64>> {
        (0..self.segments - 1)
            .map(|i| self.evaluate_segment(i, self.segment_duration, 0))
            .collect()
    }

    /// Pulls a cost gradient back through the coefficient map.
    ///
    /// `dj_dc` is the partial derivative with respect to the coefficient matrix
    /// and `dj_ddt` the explicit partial with respect to the segment duration
    /// (coefficients held fixed). Returns the total derivatives with respect to
    /// the interior waypoints and the total duration.
    pub fn propagate_gradients(
        &self,
        dj_dc: &DMatrix<f64>,
        dj_ddt: f64,
    ) -> (Vec<Vector3<f64>>, f64) {
        let mut adjoint = dj_dc.clone();
        self.system.solve_transposed(&mut adjoint);

        let dj_dq = (0..self.segments - 1)
            .map(|i| {
                let r = COEFFS * i + 5;
                Vector3::new(adjoint[(r, 0)], adjoint[(r, 1)], adjoint[(r, 2)])
            })
            .collect();

        // d(M c)/d(dT) row by row: every row that evaluates segment i at its
        // end contributes the next-higher derivative there.
        let dt = self.segment_duration;
        let n = COEFFS * self.segments;
        let mut coupling = 0.0;
        let mut add = |row: usize, v: Vector3<f64>| {
            for axis in 0..3 {
                coupling += adjoint[(row, axis)] * v[axis];
            }
        };
        for i in 0..self.segments - 1 {
            let base = COEFFS * i;
            add(base + 3, self.evaluate_segment(i, dt, 4));
            add(base + 4, self.evaluate_segment(i, dt, 5));
            add(base + 5, self.evaluate_segment(i, dt, 1));
            add(base + 6, self.evaluate_segment(i, dt, 1));
            add(base + 7, self.evaluate_segment(i, dt, 2));
            add(base + 8, self.evaluate_segment(i, dt, 3));
        }
        let last = self.segments - 1;
        add(n - 3, self.evaluate_segment(last, dt, 1));
        add(n - 2, self.evaluate_segment(last, dt, 2));
        add(n - 1, self.evaluate_segment(last, dt, 3));

        let dj_dt = (dj_ddt - coupling) / self.segments as f64;
        (dj_dq, dj_dt)
    }
}

/// Banded coefficient matrix for `segments` quintic pieces of duration `dt`.
fn coefficient_system(segments: usize, dt: f64) -> BandedMatrix {
    let n = COEFFS * segments;
    let mut m = BandedMatrix::zeros(n, COEFFS, COEFFS);
    m.set(0, 0, 1.0);
    m.set(1, 1, 1.0);
    m.set(2, 2, 2.0);
    let row_at_end = |m: &mut BandedMatrix, row: usize, seg: usize, order: usize| {
        for (k, b) in basis(dt, order).iter().enumerate().skip(order) {
            m.set(row, COEFFS * seg + k, *b);
        }
    };
    for i in 0..segments - 1 {
        let base = COEFFS * i;
        let next = base + COEFFS;
        // jerk and snap continuity
        row_at_end(&mut m, base + 3, i, 3);
        m.set(base + 3, next + 3, -6.0);
        row_at_end(&mut m, base + 4, i, 4);
        m.set(base + 4, next + 4, -24.0);
        // waypoint
        row_at_end(&mut m, base + 5, i, 0);
        // position, velocity and acceleration continuity
        row_at_end(&mut m, base + 6, i, 0);
        m.set(base + 6, next, -1.0);
        row_at_end(&mut m, base + 7, i, 1);
        m.set(base + 7, next + 1, -1.0);
        row_at_end(&mut m, base + 8, i, 2);
        m.set(base + 8, next + 2, -2.0);
    }
    let last = segments - 1;
    row_at_end(&mut m, n - 3, last, 0);
    row_at_end(&mut m, n - 2, last, 1);
    row_at_end(&mut m, n - 1, last, 2);
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rest_to_rest(n: usize, goal: Vector3<f64>, duration: f64) -> UniformPolyTrajectory {
        let waypoints: Vec<_> = (1..n).map(|i| goal * (i as f64 / n as f64)).collect();
        UniformPolyTrajectory::construct(
            &waypoints,
            duration,
            &BoundaryState::at_rest(Vector3::zeros()),
            &goal,
            &Vector3::zeros(),
        )
        .unwrap()
    }

    #[test]
    fn single_segment_rest_to_rest_is_symmetric() {
        let traj = rest_to_rest(1, Vector3::new(1.0, 0.0, 0.0), 2.0);
        let mid = traj.evaluate(1.0, 0).unwrap();
        assert!((mid - Vector3::new(0.5, 0.0, 0.0)).norm() < 1e-12);
        assert_eq!(traj.evaluate(0.0, 0).unwrap(), Vector3::zeros());
    }

    #[test]
    fn durations() {
        let traj = rest_to_rest(4, Vector3::new(1.0, 2.0, 0.0), 2.0);
        assert_eq!(traj.segment_duration(), 0.5);
        assert_eq!(traj.total_duration(), 2.0);
        let traj = rest_to_rest(1, Vector3::new(1.0, 2.0, 0.0), 3.0);
        assert_eq!(traj.total_duration(), 3.0);
        let traj = rest_to_rest(9, Vector3::new(1.0, 2.0, 0.0), 2.7);
        assert!((traj.total_duration() - 2.7).abs() < 1e-12);
    }

    #[test]
    fn terminal_conditions() {
        let goal = Vector3::new(1.0, -2.0, 0.5);
        let goal_vel = Vector3::new(0.3, 0.0, -0.1);
        let start = BoundaryState {
            position: Vector3::new(0.1, 0.2, 0.3),
            velocity: Vector3::new(-0.5, 0.1, 0.0),
            acceleration: Vector3::new(0.0, 1.0, 0.2),
            jerk: Vector3::zeros(),
        };
        let q = [Vector3::new(0.5, 0.0, 0.0), Vector3::new(0.8, -1.0, 0.4)];
        let traj = UniformPolyTrajectory::construct(&q, 1.7, &start, &goal, &goal_vel).unwrap();
        let t = traj.total_duration();
        assert!((traj.evaluate(t, 0).unwrap() - goal).amax() < 1e-12);
        assert!((traj.evaluate(t, 1).unwrap() - goal_vel).amax() < 1e-12);
        assert!(traj.evaluate(t, 2).unwrap().amax() < 1e-12);
        assert!((traj.evaluate(0.0, 1).unwrap() - start.velocity).amax() < 1e-14);
        assert!((traj.evaluate(0.0, 2).unwrap() - start.acceleration).amax() < 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        let start = BoundaryState::at_rest(Vector3::zeros());
        let err =
            UniformPolyTrajectory::construct(&[], 0.0, &start, &Vector3::x(), &Vector3::zeros());
        assert!(matches!(err, Err(TrajectoryError::SingularSystem(_))));
        let traj = rest_to_rest(2, Vector3::x(), 1.0);
        assert!(matches!(
            traj.evaluate(1.1, 0),
            Err(TrajectoryError::OutOfDomain { .. })
        ));
        assert!(matches!(
            traj.evaluate(-0.1, 0),
            Err(TrajectoryError::OutOfDomain { .. })
        ));
        assert!(matches!(
            traj.evaluate(0.5, 6),
            Err(TrajectoryError::InvalidOrder(6))
        ));
    }

    #[test]
    fn time_only_cost_has_zero_waypoint_gradient() {
        let traj = rest_to_rest(3, Vector3::new(1.0, 1.0, 0.0), 2.0);
        let zero = DMatrix::zeros(COEFFS * 3, 3);
        let (dq, dt) = traj.propagate_gradients(&zero, 0.0);
        assert!(dq.iter().all(|g| g == &Vector3::zeros()));
        assert_eq!(dt, 0.0);
    }

    #[test]
    fn wrap_angle_range() {
        use std::f64::consts::PI;
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }
}
