//! Sampled penalty terms and their coefficient-space gradients.
//!
//! Every term returns its value together with a [`CoefficientGradient`]: the
//! partial derivative with respect to the trajectory coefficients and the
//! explicit partial with respect to the segment duration. The latter accounts
//! for sample times moving with `dT` while coefficients stay fixed.

use nalgebra::{DMatrix, Vector3};

use super::{Limits, ObstaclePlane};
use crate::cable::{self, CableError, CableProperties, PlanarConfiguration};
use crate::trajectory::{basis, UniformPolyTrajectory, COEFFS};
use crate::winch::WinchSchedule;
use crate::GRAVITY;

/// Step used for the central-difference gradient of the maximum cable length.
pub const MAX_LENGTH_FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientGradient {
    /// Same layout as [`UniformPolyTrajectory::coefficients`].
    pub coeffs: DMatrix<f64>,
    /// Explicit partial with respect to the segment duration.
    pub ddt: f64,
}

impl CoefficientGradient {
    pub fn zeros(traj: &UniformPolyTrajectory) -> Self {
        Self {
            coeffs: DMatrix::zeros(COEFFS * traj.segment_count(), 3),
            ddt: 0.0,
        }
    }

    /// Adds `weight * g . p^(order)(sample)`'s derivative.
    fn add(
        &mut self,
        traj: &UniformPolyTrajectory,
        s: &Sample,
        order: usize,
        g: &Vector3<f64>,
        weight: f64,
    ) {
        let beta = basis(s.tau, order);
        let base = COEFFS * s.segment;
        for (k, b) in beta.iter().enumerate().skip(order) {
            for axis in 0..3 {
                self.coeffs[(base + k, axis)] += weight * b * g[axis];
            }
        }
        let higher = traj.evaluate_segment(s.segment, s.tau, order + 1);
        self.ddt += weight * g.dot(&higher) * s.dtau_ddt;
    }

    /// Adds the explicit dependence of a term on absolute time.
    fn add_time(&mut self, s: &Sample, dterm_dt: f64, weight: f64) {
        self.ddt += weight * dterm_dt * s.dt_ddt;
    }
}

/// `kappa + 1` equally spaced times from `t0` to `tm`, endpoints exact.
pub fn sample_times(t0: f64, tm: f64, kappa: usize) -> Vec<f64> {
    let kappa = kappa.max(1);
    (0..=kappa)
        .map(|i| {
            if i == kappa {
                tm
            } else {
                t0 + (tm - t0) * i as f64 / kappa as f64
            }
        })
        .collect()
}

/// A sample point, located on a fixed segment so that derivatives with
/// respect to `dT` are well defined.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Sample {
    pub segment: usize,
    pub tau: f64,
    pub t: f64,
    pub dtau_ddt: f64,
    pub dt_ddt: f64,
}

pub(crate) fn samples(
    traj: &UniformPolyTrajectory,
    kappa: usize,
) -> impl Iterator<Item = Sample> + '_ {
    let kappa = kappa.max(1);
    let n = traj.segment_count();
    let dt = traj.segment_duration();
    (0..=kappa).map(move |i| {
        let segment = (i * n / kappa).min(n - 1);
        let offset = (i * n - segment * kappa) as f64 / kappa as f64;
        let global = (i * n) as f64 / kappa as f64;
        Sample {
            segment,
            tau: dt * offset,
            t: dt * global,
            dtau_ddt: offset,
            dt_ddt: global,
        }
    })
}

/// `max(x, 0)^3`.
#[inline]
pub fn cubic_hinge(x: f64) -> f64 {
    if x > 0.0 {
        x * x * x
    } else {
        0.0
    }
}

#[inline]
fn hinge_slope(x: f64) -> f64 {
    if x > 0.0 {
        3.0 * x * x
    } else {
        0.0
    }
}

/// Integral of the squared jerk over the whole trajectory, in closed form.
pub fn smoothness_cost(traj: &UniformPolyTrajectory) -> (f64, CoefficientGradient) {
    let t = traj.segment_duration();
    let (t2, t3, t4, t5) = (t * t, t * t * t, t.powi(4), t.powi(5));
    let c = traj.coefficients();
    let mut grad = CoefficientGradient::zeros(traj);
    let mut cost = 0.0;
    for i in 0..traj.segment_count() {
        let r = COEFFS * i;
        for axis in 0..3 {
            let (c3, c4, c5) = (c[(r + 3, axis)], c[(r + 4, axis)], c[(r + 5, axis)]);
            cost += 36.0 * c3 * c3 * t
                + 144.0 * c3 * c4 * t2
                + 240.0 * c3 * c5 * t3
                + 192.0 * c4 * c4 * t3
                + 720.0 * c4 * c5 * t4
                + 720.0 * c5 * c5 * t5;
            grad.coeffs[(r + 3, axis)] += 72.0 * c3 * t + 144.0 * c4 * t2 + 240.0 * c5 * t3;
            grad.coeffs[(r + 4, axis)] += 144.0 * c3 * t2 + 384.0 * c4 * t3 + 720.0 * c5 * t4;
            grad.coeffs[(r + 5, axis)] += 240.0 * c3 * t3 + 720.0 * c4 * t4 + 1440.0 * c5 * t5;
            grad.ddt += 36.0 * c3 * c3
                + 288.0 * c3 * c4 * t
                + 720.0 * c3 * c5 * t2
                + 576.0 * c4 * c4 * t2
                + 2880.0 * c4 * c5 * t3
                + 3600.0 * c5 * c5 * t4;
        }
    }
    (cost, grad)
}

/// Unweighted velocity, acceleration and jerk hinge sums.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FeasibilityTerms {
    pub velocity: f64,
    pub acceleration: f64,
    pub jerk: f64,
}

/// Cubic hinges on squared speed, acceleration and jerk. The gradient is of
/// `w_v * velocity + w_d * (acceleration + jerk)`.
pub(crate) fn accumulate_feasibility(
    traj: &UniformPolyTrajectory,
    limits: &Limits,
    w_v: f64,
    w_d: f64,
    grad: &mut CoefficientGradient,
) -> FeasibilityTerms {
    let mut terms = FeasibilityTerms::default();
    let bounds = [
        (1, limits.v_max, w_v),
        (2, limits.a_max, w_d),
        (3, limits.j_max, w_d),
    ];
    for s in samples(traj, limits.kappa) {
        for &(order, bound, weight) in &bounds {
            let d = traj.evaluate_segment(s.segment, s.tau, order);
            let h = d.norm_squared() - bound * bound;
            if h <= 0.0 {
                continue;
            }
            match order {
                1 => terms.velocity += cubic_hinge(h),
                2 => terms.acceleration += cubic_hinge(h),
                _ => terms.jerk += cubic_hinge(h),
            }
            if weight != 0.0 {
                grad.add(traj, &s, order, &(d * (2.0 * hinge_slope(h))), weight);
            }
        }
    }
    terms
}

pub fn feasibility_penalty(
    traj: &UniformPolyTrajectory,
    limits: &Limits,
) -> (FeasibilityTerms, CoefficientGradient) {
    let mut grad = CoefficientGradient::zeros(traj);
    let terms = accumulate_feasibility(traj, limits, 1.0, 1.0, &mut grad);
    (terms, grad)
}

/// Two-sided cubic hinge on the squared thrust acceleration `|p'' + g z|^2`.
pub(crate) fn accumulate_thrust(
    traj: &UniformPolyTrajectory,
    limits: &Limits,
    weight: f64,
    grad: &mut CoefficientGradient,
) -> f64 {
    let lo = limits.tau_min * limits.tau_min;
    let hi = limits.tau_max * limits.tau_max;
    let mut total = 0.0;
    for s in samples(traj, limits.kappa) {
        let thrust = traj.evaluate_segment(s.segment, s.tau, 2) + Vector3::new(0.0, 0.0, GRAVITY);
        let n2 = thrust.norm_squared();
        let under = lo - n2;
        let over = n2 - hi;
        total += cubic_hinge(under) + cubic_hinge(over);
        let slope = hinge_slope(over) - hinge_slope(under);
        if slope != 0.0 && weight != 0.0 {
            grad.add(traj, &s, 2, &(thrust * (2.0 * slope)), weight);
        }
    }
    total
}

pub fn thrust_penalty(traj: &UniformPolyTrajectory, limits: &Limits) -> (f64, CoefficientGradient) {
    let mut grad = CoefficientGradient::zeros(traj);
    let value = accumulate_thrust(traj, limits, 1.0, &mut grad);
    (value, grad)
}

/// Signed distance from `p` to the plane, positive on the free side.
pub fn signed_distance(plane: &ObstaclePlane, p: &Vector3<f64>) -> f64 {
    (p - plane.point).dot(&plane.normal)
}

pub(crate) fn accumulate_obstacles(
    traj: &UniformPolyTrajectory,
    obstacles: &[ObstaclePlane],
    margin: f64,
    kappa: usize,
    weight: f64,
    grad: &mut CoefficientGradient,
) -> f64 {
    if obstacles.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for s in samples(traj, kappa) {
        let p = traj.evaluate_segment(s.segment, s.tau, 0);
        for plane in obstacles {
            let h = margin - signed_distance(plane, &p);
            if h > 0.0 {
                total += cubic_hinge(h);
                if weight != 0.0 {
                    grad.add(traj, &s, 0, &(plane.normal * -hinge_slope(h)), weight);
                }
            }
        }
    }
    total
}

pub fn obstacle_penalty(
    traj: &UniformPolyTrajectory,
    obstacles: &[ObstaclePlane],
    margin: f64,
    kappa: usize,
) -> (f64, CoefficientGradient) {
    let mut grad = CoefficientGradient::zeros(traj);
    let value = accumulate_obstacles(traj, obstacles, margin, kappa, 1.0, &mut grad);
    (value, grad)
}

/// Maximum cable length for an end droid at `droid` and its x-z gradient
/// by central differences.
pub fn max_length_with_gradient(
    droid: &Vector3<f64>,
    anchor: &Vector3<f64>,
    props: &CableProperties,
) -> Result<(f64, Vector3<f64>), CableError> {
    let at = |p: Vector3<f64>| {
        let attach = cable::attachment_point(&p, props);
        cable::max_length(&PlanarConfiguration::between(&attach, anchor), props)
    };
    let value = at(*droid)?;
    let h = MAX_LENGTH_FD_STEP;
    let mut g = Vector3::zeros();
    for axis in [0, 2] {
        let mut e = Vector3::zeros();
        e[axis] = h;
        g[axis] = (at(droid + e)? - at(droid - e)?) / (2.0 * h);
    }
    Ok((value, g))
}

/// Corridor hinges `max(L_min^2 - L_now^2, 0)^3 + max(L_now^2 - L_max^2, 0)^3`
/// with the anchor hovering at a fixed position.
pub(crate) fn accumulate_cable(
    traj: &UniformPolyTrajectory,
    anchor: &Vector3<f64>,
    winch: &WinchSchedule,
    props: &CableProperties,
    kappa: usize,
    weight: f64,
    grad: &mut CoefficientGradient,
) -> Result<f64, CableError> {
    let mut total = 0.0;
    for s in samples(traj, kappa) {
        let p = traj.evaluate_segment(s.segment, s.tau, 0);
        let attach = cable::attachment_point(&p, props);
        let l_now = winch.length_at(s.t);
        let rate = winch.rate_at(s.t);
        let now2 = l_now * l_now;

        let delta = attach - anchor;
        let min2 = delta.x * delta.x + delta.z * delta.z;
        let taut = min2 - now2;
        if taut > 0.0 {
            total += cubic_hinge(taut);
            if weight != 0.0 {
                let slope = hinge_slope(taut);
                let g = Vector3::new(2.0 * delta.x, 0.0, 2.0 * delta.z) * slope;
                grad.add(traj, &s, 0, &g, weight);
                grad.add_time(&s, -2.0 * l_now * rate * slope, weight);
            }
        }

        // L_max is never below the chord.
        if now2 <= min2 {
            continue;
        }
        let l_max = cable::max_length(&PlanarConfiguration::between(&attach, anchor), props)?;
        let loose = now2 - l_max * l_max;
        if loose > 0.0 {
            total += cubic_hinge(loose);
            if weight != 0.0 {
                let slope = hinge_slope(loose);
                let (l_max, dl) = max_length_with_gradient(&p, anchor, props)?;
                grad.add(traj, &s, 0, &(dl * (-2.0 * l_max * slope)), weight);
                grad.add_time(&s, 2.0 * l_now * rate * slope, weight);
            }
        }
    }
    Ok(total)
}

pub fn cable_penalty(
    traj: &UniformPolyTrajectory,
    anchor: &Vector3<f64>,
    winch: &WinchSchedule,
    props: &CableProperties,
    kappa: usize,
) -> Result<(f64, CoefficientGradient), CableError> {
    let mut grad = CoefficientGradient::zeros(traj);
    let value = accumulate_cable(traj, anchor, winch, props, kappa, 1.0, &mut grad)?;
    Ok((value, grad))
}
