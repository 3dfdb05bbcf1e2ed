//! Piecewise-quintic trajectories against a dense solve, finite differences
//! and a direct energy comparison.

use nalgebra::{DMatrix, SymmetricEigen, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tetherplan::harness::oracles::{central_difference, dense_trajectory_coefficients, simpson};
use tetherplan::optimizer::smoothness_cost;
use tetherplan::trajectory::{basis, BoundaryState, UniformPolyTrajectory, COEFFS};

fn random_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vector3<f64> {
    Vector3::new(
        rng.gen_range(-scale..scale),
        rng.gen_range(-scale..scale),
        rng.gen_range(-scale..scale),
    )
}

struct Instance {
    q: Vec<Vector3<f64>>,
    duration: f64,
    start: BoundaryState,
    goal: Vector3<f64>,
    goal_velocity: Vector3<f64>,
}

impl Instance {
    fn random(rng: &mut ChaCha8Rng, segments: usize) -> Self {
        Self {
            q: (1..segments).map(|_| random_vec(rng, 3.0)).collect(),
            duration: segments as f64 * rng.gen_range(0.25..1.5),
            start: BoundaryState {
                position: random_vec(rng, 1.0),
                velocity: random_vec(rng, 1.0),
                acceleration: random_vec(rng, 1.0),
                jerk: Vector3::zeros(),
            },
            goal: random_vec(rng, 3.0),
            goal_velocity: random_vec(rng, 1.0),
        }
    }

    fn build(&self) -> UniformPolyTrajectory {
        UniformPolyTrajectory::construct(
            &self.q,
            self.duration,
            &self.start,
            &self.goal,
            &self.goal_velocity,
        )
        .unwrap()
    }
}

#[test]
fn banded_construction_matches_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let n = rng.gen_range(1..=8);
        let inst = Instance::random(&mut rng, n);
        let dense = dense_trajectory_coefficients(
            &inst.q,
            inst.duration,
            &inst.start,
            &inst.goal,
            &inst.goal_velocity,
        )
        .unwrap();
        let err = (inst.build().coefficients() - dense).amax();
        assert!(err < 1e-9, "N = {n}: {err:.3e}");
    }
}

#[test]
fn three_segment_example_matches_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut inst = Instance::random(&mut rng, 3);
    inst.duration = 3.0;
    let dense = dense_trajectory_coefficients(
        &inst.q,
        inst.duration,
        &inst.start,
        &inst.goal,
        &inst.goal_velocity,
    )
    .unwrap();
    assert!((inst.build().coefficients() - dense).amax() < 1e-9);
}

#[test]
fn boundary_values_and_joint_continuity() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let n = rng.gen_range(2..=8);
        let inst = Instance::random(&mut rng, n);
        let traj = inst.build();
        let t = traj.total_duration();
        assert_eq!(traj.evaluate(0.0, 0).unwrap(), inst.start.position);
        assert!(
            (traj.evaluate(t, 0).unwrap() - inst.goal).amax()
                < 1e-12 * inst.goal.amax().max(1.0) * 10.0
        );
        assert!((traj.evaluate(t, 1).unwrap() - inst.goal_velocity).amax() < 1e-12 * 10.0);
        let dt = traj.segment_duration();
        for (i, q) in inst.q.iter().enumerate() {
            assert!((traj.evaluate_segment(i, dt, 0) - q).amax() < 1e-9);
            for order in 0..=4 {
                let left = traj.evaluate_segment(i, dt, order);
                let right = traj.evaluate_segment(i + 1, 0.0, order);
                assert!(
                    (left - right).amax() < 1e-10 * left.amax().max(1.0),
                    "joint {i} order {order}"
                );
            }
        }
    }
}

#[test]
fn duration_bookkeeping() {
    let inst = |n: usize, t: f64| Instance {
        q: vec![Vector3::zeros(); n - 1],
        duration: t,
        start: BoundaryState::at_rest(Vector3::zeros()),
        goal: Vector3::x(),
        goal_velocity: Vector3::zeros(),
    };
    assert_eq!(inst(4, 2.0).build().total_duration(), 2.0);
    assert_eq!(inst(1, 3.0).build().total_duration(), 3.0);
    let t = inst(9, 2.7).build().total_duration();
    assert!((t - 2.7).abs() < 1e-12);
}

/// `J = |p(T/2)|^2` on three segments, where `T/2` falls mid-way through the
/// second segment.
#[test]
fn midpoint_cost_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..10 {
        let inst = Instance::random(&mut rng, 3);
        let cost = |q: &[Vector3<f64>], t: f64| {
            let traj = UniformPolyTrajectory::construct(
                q,
                t,
                &inst.start,
                &inst.goal,
                &inst.goal_velocity,
            )
            .unwrap();
            traj.evaluate(0.5 * t, 0).unwrap().norm_squared()
        };
        let traj = inst.build();
        let dt = traj.segment_duration();
        let tau = 0.5 * dt;
        let p = traj.evaluate_segment(1, tau, 0);
        let v = traj.evaluate_segment(1, tau, 1);
        let mut dj_dc = DMatrix::zeros(COEFFS * 3, 3);
        for (k, b) in basis(tau, 0).iter().enumerate() {
            for axis in 0..3 {
                dj_dc[(COEFFS + k, axis)] = 2.0 * p[axis] * b;
            }
        }
        // tau = T/2 - dT = dT/2
        let (dq, dt_total) = traj.propagate_gradients(&dj_dc, 2.0 * p.dot(&v) * 0.5);

        let mut pairs = Vec::new();
        for i in 0..inst.q.len() {
            for axis in 0..3 {
                let numeric = central_difference(
                    |x| {
                        let mut q = inst.q.clone();
                        q[i][axis] = x;
                        cost(&q, inst.duration)
                    },
                    inst.q[i][axis],
                    1e-6,
                );
                pairs.push((dq[i][axis], numeric));
            }
        }
        pairs.push((
            dt_total,
            central_difference(|t| cost(&inst.q, t), inst.duration, 1e-6),
        ));
        let scale = pairs.iter().fold(1e-12f64, |m, (_, f)| m.max(f.abs()));
        for (a, f) in pairs {
            assert!((a - f).abs() / scale < 1e-4, "{a} vs {f}");
        }
    }
}

#[test]
fn duration_only_cost_has_no_waypoint_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let traj = Instance::random(&mut rng, 5).build();
    let zero = DMatrix::zeros(COEFFS * 5, 3);
    let (dq, dt) = traj.propagate_gradients(&zero, 5.0);
    assert!(dq.iter().all(|g| *g == Vector3::zeros()));
    assert!((dt - 1.0).abs() < 1e-15);
}

/// Smoothness gradient vanishes once the waypoints of a straight rest-to-rest
/// move sit on the single-quintic profile.
#[test]
fn collinear_min_jerk_waypoints_are_stationary() {
    let n = 4;
    let t = 2.0;
    let d = Vector3::new(1.5, -0.5, 0.25);
    let s = |x: f64| 10.0 * x.powi(3) - 15.0 * x.powi(4) + 6.0 * x.powi(5);
    let q: Vec<_> = (1..n).map(|i| d * s(i as f64 / n as f64)).collect();
    let start = BoundaryState::at_rest(Vector3::zeros());
    let traj = UniformPolyTrajectory::construct(&q, t, &start, &d, &Vector3::zeros()).unwrap();
    let (cost, grad) = smoothness_cost(&traj);
    let (dq, _) = traj.propagate_gradients(&grad.coeffs, grad.ddt);
    let scale = cost / d.norm();
    for g in dq {
        assert!(g.norm() < 1e-9 * scale, "{g:?}");
    }
    assert!((cost - 720.0 * d.norm_squared() / t.powi(5)).abs() < 1e-9 * cost);
}

/// Coefficient perturbations that keep every interpolation and boundary
/// condition and C2 continuity never lower the jerk energy.
#[test]
fn construction_minimizes_jerk_energy_among_admissible_perturbations() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for n in [1usize, 2, 3, 5] {
        let inst = Instance::random(&mut rng, n);
        let traj = inst.build();
        let dt = traj.segment_duration();
        let cols = COEFFS * n;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let row = |segment: usize, tau: f64, order: usize, sign: f64, into: &mut Vec<f64>| {
            for (k, b) in basis(tau, order).iter().enumerate() {
                into[COEFFS * segment + k] += sign * b;
            }
        };
        for order in 0..3 {
            let mut r = vec![0.0; cols];
            row(0, 0.0, order, 1.0, &mut r);
            rows.push(r);
            let mut r = vec![0.0; cols];
            row(n - 1, dt, order, 1.0, &mut r);
            rows.push(r);
        }
        for i in 0..n - 1 {
            for (segment, tau) in [(i, dt), (i + 1, 0.0)] {
                let mut r = vec![0.0; cols];
                row(segment, tau, 0, 1.0, &mut r);
                rows.push(r);
            }
            for order in 1..3 {
                let mut r = vec![0.0; cols];
                row(i, dt, order, 1.0, &mut r);
                row(i + 1, 0.0, order, -1.0, &mut r);
                rows.push(r);
            }
        }
        let a = DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]);
        let eig = SymmetricEigen::new(a.transpose() * &a);
        let top = eig.eigenvalues.amax();
        let null: Vec<usize> = (0..cols)
            .filter(|&j| eig.eigenvalues[j] < 1e-12 * top)
            .collect();
        assert_eq!(null.len(), 2 * n - 2, "N = {n}");

        let (base, _) = smoothness_cost(&traj);
        for _ in 0..10 {
            let mut delta = DMatrix::zeros(cols, 3);
            for &j in &null {
                for axis in 0..3 {
                    let w = rng.gen_range(-1.0..1.0) * 0.1;
                    delta
                        .column_mut(axis)
                        .axpy(w, &eig.eigenvectors.column(j), 1.0);
                }
            }
            for eps in [1.0, -1.0, 1e-3, -1e-3] {
                let moved = UniformPolyTrajectory::from_coefficients(
                    traj.coefficients() + &delta * eps,
                    dt,
                )
                .unwrap();
                let (cost, _) = smoothness_cost(&moved);
                assert!(cost >= base * (1.0 - 1e-12), "N = {n}: {cost} < {base}");
            }
        }
    }
}

#[test]
fn single_segment_rest_to_rest_midpoint() {
    let start = BoundaryState::at_rest(Vector3::zeros());
    let traj = UniformPolyTrajectory::construct(&[], 2.0, &start, &Vector3::x(), &Vector3::zeros())
        .unwrap();
    let mid = traj.evaluate(1.0, 0).unwrap();
    assert!((mid - Vector3::new(0.5, 0.0, 0.0)).amax() < 1e-14);
}

#[test]
fn jerk_energy_matches_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let traj = Instance::random(&mut rng, 4).build();
    let (cost, _) = smoothness_cost(&traj);
    let reference = simpson(
        |t| {
            traj.evaluate(t.min(traj.total_duration()), 3)
                .unwrap()
                .norm_squared()
        },
        0.0,
        traj.total_duration(),
        40_000,
    );
    assert!(
        (cost - reference).abs() / reference < 1e-8,
        "{cost} vs {reference}"
    );
}

fn instance_strategy() -> impl Strategy<Value = u64> {
    any::<u64>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn construction_is_linear_in_boundary_data(seed in instance_strategy(), alpha in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=6);
        let a = Instance::random(&mut rng, n);
        let mut b = Instance::random(&mut rng, n);
        b.duration = a.duration;
        let mix = |x: &Vector3<f64>, y: &Vector3<f64>| x * alpha + y;
        let combined = Instance {
            q: a.q.iter().zip(&b.q).map(|(x, y)| mix(x, y)).collect(),
            duration: a.duration,
            start: BoundaryState {
                position: mix(&a.start.position, &b.start.position),
                velocity: mix(&a.start.velocity, &b.start.velocity),
                acceleration: mix(&a.start.acceleration, &b.start.acceleration),
                jerk: Vector3::zeros(),
            },
            goal: mix(&a.goal, &b.goal),
            goal_velocity: mix(&a.goal_velocity, &b.goal_velocity),
        };
        let expected = a.build().coefficients() * alpha + b.build().coefficients();
        let got = combined.build();
        let scale = expected.amax().max(1.0);
        prop_assert!((got.coefficients() - expected).amax() < 1e-9 * scale);
    }

    #[test]
    fn evaluation_agrees_with_segment_lookup(seed in instance_strategy(), f in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=6);
        let traj = Instance::random(&mut rng, n).build();
        let t = f * traj.total_duration();
        let (segment, tau) = traj.locate(t);
        prop_assert!(segment < n);
        prop_assert!(tau >= -1e-12 && tau <= traj.segment_duration() * (1.0 + 1e-12));
        let direct = traj.evaluate_segment(segment, tau, 0);
        prop_assert_eq!(traj.evaluate(t, 0).unwrap(), direct);
    }
}
