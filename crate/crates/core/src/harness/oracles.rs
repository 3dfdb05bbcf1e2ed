//! Reference computations that share no code with the solvers they check:
//! quadrature, bisection, a dense linear solve and finite differences.

use nalgebra::{DMatrix, Vector3};

use crate::cable::{CatenarySolution, PlanarConfiguration};
use crate::trajectory::{BoundaryState, COEFFS};

/// Composite Simpson rule with `intervals` (rounded up to even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals.max(2).next_multiple_of(2);
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n)
        .map(|i| f(a + h * i as f64) * if i % 2 == 1 { 4.0 } else { 2.0 })
        .sum();
    (f(a) + inner + f(b)) * h / 3.0
}

/// Root of `f` in `[lo, hi]` by bisection; `None` without a sign change.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> Option<f64> {
    let mut f_lo = f(lo);
    if f_lo == 0.0 {
        return Some(lo);
    }
    if f_lo.signum() == f(hi).signum() {
        return None;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Some(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Arc length of a solved catenary by integrating `sqrt(1 + z'(x)^2)`.
pub fn catenary_length_by_quadrature(sol: &CatenarySolution, intervals: usize) -> f64 {
    let a = sol.scale;
    simpson(
        |x| {
            let slope = (x / a).sinh();
            (1.0 + slope * slope).sqrt()
        },
        sol.x_droid,
        sol.x_anchor,
        intervals,
    )
}

/// Residuals of the endpoint equations, each relative to `max(1, length)`:
/// the span, the rise `a (cosh(x_B/a) - cosh(x_A/a)) = H` and the length
/// `a (sinh(x_B/a) - sinh(x_A/a)) = L`.
pub fn catenary_residuals(
    sol: &CatenarySolution,
    cfg: &PlanarConfiguration,
    length: f64,
) -> [f64; 3] {
    let a = sol.scale;
    let (xa, xb) = (sol.x_droid / a, sol.x_anchor / a);
    let scale = length.max(1.0);
    [
        ((sol.x_anchor - sol.x_droid) - cfg.span).abs() / scale,
        (a * (xb.cosh() - xa.cosh()) - cfg.rise).abs() / scale,
        (a * (xb.sinh() - xa.sinh()) - length).abs() / scale,
    ]
}

/// Longest cable for a level span whose midpoint sags by `sag`: bisection on
/// `a (cosh(span / 2a) - 1) = sag`, then `L = 2 a sinh(span / 2a)`.
pub fn level_max_length(span: f64, sag: f64) -> Option<f64> {
    if sag == 0.0 {
        return Some(span);
    }
    let half = 0.5 * span;
    let depth = |a: f64| a * ((half / a).cosh() - 1.0) - sag;
    // The sag falls monotonically as a grows.
    let mut lo = half / 700.0;
    while !depth(lo).is_finite() {
        lo *= 2.0;
    }
    let mut hi = half;
    while depth(hi) > 0.0 {
        hi *= 2.0;
    }
    let a = bisect(depth, lo, hi)?;
    Some(2.0 * a * (half / a).sinh())
}

/// Coefficients of the minimum-jerk piecewise quintic, from a dense solve of
/// every boundary, interpolation and continuity condition.
///
/// Rows `6 i + k` hold the `t^k` coefficients of segment `i`.
pub fn dense_trajectory_coefficients(
    waypoints: &[Vector3<f64>],
    duration: f64,
    start: &BoundaryState,
    goal_position: &Vector3<f64>,
    goal_velocity: &Vector3<f64>,
) -> Option<DMatrix<f64>> {
    let n = waypoints.len() + 1;
    let dt = duration / n as f64;
    let size = COEFFS * n;
    let mut a = DMatrix::zeros(size, size);
    let mut b = DMatrix::zeros(size, 3);
    // Derivative `order` of the monomial t^k at t.
    let monomial = |k: usize, order: usize, t: f64| -> f64 {
        if k < order {
            return 0.0;
        }
        let falling: f64 = (0..order).map(|m| (k - m) as f64).product();
        falling * t.powi((k - order) as i32)
    };
    let mut row = 0;
    let set_rhs = |b: &mut DMatrix<f64>, row: usize, v: &Vector3<f64>| {
        for axis in 0..3 {
            b[(row, axis)] = v[axis];
        }
    };

    for (order, v) in [start.position, start.velocity, start.acceleration]
        .iter()
        .enumerate()
    {
        for k in 0..COEFFS {
            a[(row, k)] = monomial(k, order, 0.0);
        }
        set_rhs(&mut b, row, v);
        row += 1;
    }
    for (i, q) in waypoints.iter().enumerate() {
        for k in 0..COEFFS {
            a[(row, COEFFS * i + k)] = monomial(k, 0, dt);
        }
        set_rhs(&mut b, row, q);
        row += 1;
        for order in 0..COEFFS - 1 {
            for k in 0..COEFFS {
                a[(row, COEFFS * i + k)] = monomial(k, order, dt);
                a[(row, COEFFS * (i + 1) + k)] = -monomial(k, order, 0.0);
            }
            row += 1;
        }
    }
    let last = COEFFS * (n - 1);
    for (order, v) in [*goal_position, *goal_velocity, Vector3::zeros()]
        .iter()
        .enumerate()
    {
        for k in 0..COEFFS {
            a[(row, last + k)] = monomial(k, order, dt);
        }
        set_rhs(&mut b, row, v);
        row += 1;
    }
    debug_assert_eq!(row, size);
    a.lu().solve(&b)
}

/// Central difference `(f(x + h) - f(x - h)) / 2h`.
pub fn central_difference<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}
