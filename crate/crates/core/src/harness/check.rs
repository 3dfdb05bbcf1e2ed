//! `check`: runs the oracle suites at small scale and reports pass/fail.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::oracles::{
    catenary_length_by_quadrature, catenary_residuals, central_difference,
    dense_trajectory_coefficients, level_max_length,
};
use super::{EXIT_FAILURE, EXIT_OK};
use crate::cable::{self, CableProperties, PlanarConfiguration};
use crate::optimizer::{self, cubic_hinge, total_cost, CostEvaluation, OptimizerError};
use crate::scenario::Scenario;
use crate::trajectory::{BoundaryState, UniformPolyTrajectory, CONTINUITY};

/// Objective with gradient, as checked by the gradient suite.
pub type GradientEvaluator =
    fn(&UniformPolyTrajectory, &Scenario) -> Result<CostEvaluation, OptimizerError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckOptions {
    pub seed: u64,
    /// Randomized instances per suite.
    pub instances: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            instances: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed error, in the units of `tolerance`.
    pub worst: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckReport {
    pub outcomes: Vec<CheckOutcome>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            EXIT_OK
        } else {
            EXIT_FAILURE
        }
    }

    /// One aligned line per check.
    pub fn table(&self) -> Vec<String> {
        let width = self
            .outcomes
            .iter()
            .map(|o| o.name.len())
            .max()
            .unwrap_or(0);
        self.outcomes
            .iter()
            .map(|o| {
                format!(
                    "{:<width$}  {}  worst {:.3e} (tol {:.1e}) {}",
                    o.name,
                    if o.passed { "PASS" } else { "FAIL" },
                    o.worst,
                    o.tolerance,
                    o.detail
                )
            })
            .collect()
    }
}

fn outcome(name: &'static str, worst: f64, tolerance: f64, detail: String) -> CheckOutcome {
    CheckOutcome {
        name,
        passed: worst <= tolerance,
        worst,
        tolerance,
        detail,
    }
}

fn failed(name: &'static str, tolerance: f64, detail: String) -> CheckOutcome {
    CheckOutcome {
        name,
        passed: false,
        worst: f64::INFINITY,
        tolerance,
        detail,
    }
}

fn default_evaluator(
    traj: &UniformPolyTrajectory,
    s: &Scenario,
) -> Result<CostEvaluation, OptimizerError> {
    total_cost(traj, s, &s.weights, &s.limits)
}

/// Runs every suite with the library objective.
pub fn cmd_check(scenario: &Scenario, opts: &CheckOptions) -> CheckReport {
    run_checks(scenario, opts, default_evaluator)
}

/// Runs every suite, checking `evaluator` in the gradient suite.
pub fn run_checks(
    scenario: &Scenario,
    opts: &CheckOptions,
    evaluator: GradientEvaluator,
) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n = opts.instances.max(1);
    CheckReport {
        outcomes: vec![
            catenary_quadrature(&mut rng, n, &scenario.cable),
            catenary_endpoints(&mut rng, n, &scenario.cable),
            level_max_length_check(&mut rng, n, &scenario.cable),
            taut_limit(&scenario.cable),
            dense_solve(&mut rng, n),
            joint_continuity(&mut rng, n),
            hinge_identities(),
            gradients(&mut rng, n.min(10), scenario, evaluator),
        ],
    }
}

fn random_configuration(rng: &mut ChaCha8Rng) -> (PlanarConfiguration, f64) {
    let span = rng.gen_range(0.1..5.0);
    let rise = rng.gen_range(-2.0..2.0);
    let cfg = PlanarConfiguration { span, rise };
    // (chord, chord + 3]
    let length = cfg.chord_length() + 3.0 * (1.0 - rng.gen::<f64>());
    (cfg, length)
}

fn catenary_quadrature(rng: &mut ChaCha8Rng, n: usize, props: &CableProperties) -> CheckOutcome {
    const NAME: &str = "catenary arc length vs quadrature";
    let mut worst = 0.0f64;
    for _ in 0..n {
        let (cfg, length) = random_configuration(rng);
        match cable::solve_catenary(&cfg, length, props) {
            Ok(sol) => {
                let q = catenary_length_by_quadrature(&sol, 4096);
                worst = worst.max((q - sol.length).abs() / sol.length);
            }
            Err(e) => {
                return failed(
                    NAME,
                    1e-6,
                    format!("span {} rise {} length {}: {e}", cfg.span, cfg.rise, length),
                )
            }
        }
    }
    outcome(NAME, worst, 1e-6, format!("{n} instances"))
}

fn catenary_endpoints(rng: &mut ChaCha8Rng, n: usize, props: &CableProperties) -> CheckOutcome {
    const NAME: &str = "catenary endpoint residuals";
    let mut worst = 0.0f64;
    for _ in 0..n {
        let (cfg, length) = random_configuration(rng);
        match cable::solve_catenary(&cfg, length, props) {
            Ok(sol) => {
                worst = catenary_residuals(&sol, &cfg, length)
                    .into_iter()
                    .fold(worst, f64::max);
            }
            Err(e) => return failed(NAME, 1e-9, e.to_string()),
        }
    }
    outcome(NAME, worst, 1e-9, format!("{n} instances"))
}

fn level_max_length_check(rng: &mut ChaCha8Rng, n: usize, props: &CableProperties) -> CheckOutcome {
    const NAME: &str = "level max length vs bisection";
    let mut worst = 0.0f64;
    for _ in 0..n {
        let span = rng.gen_range(0.1..5.0);
        let sag = rng.gen_range(0.0..1.0);
        let p = CableProperties {
            sag_limit: sag,
            ..*props
        };
        let cfg = PlanarConfiguration { span, rise: 0.0 };
        let (Ok(l), Some(reference)) = (cable::max_length(&cfg, &p), level_max_length(span, sag))
        else {
            return failed(NAME, 1e-9, format!("span {span} sag {sag}: no solution"));
        };
        worst = worst.max((l - reference).abs() / reference);
    }
    outcome(NAME, worst, 1e-9, format!("{n} instances"))
}

/// Sag below the chord shrinks monotonically to zero as the cable shortens
/// towards the chord.
fn taut_limit(props: &CableProperties) -> CheckOutcome {
    const NAME: &str = "taut-limit sag";
    let mut worst = 0.0f64;
    for (span, rise) in [(2.0, 0.0), (2.0, 1.0), (1.0, -1.5)] {
        let cfg = PlanarConfiguration { span, rise };
        let chord = cfg.chord_length();
        let mut previous = f64::INFINITY;
        for k in 0..10 {
            let length = chord + 0.1f64.powi(k);
            let sag = match cable::solve_catenary(&cfg, length, props) {
                Ok(sol) => sol.max_sag_below_chord(),
                Err(e) => return failed(NAME, 1e-3, e.to_string()),
            };
            if sag >= previous {
                return failed(
                    NAME,
                    1e-3,
                    format!("sag grew from {previous} to {sag} at step {k}"),
                );
            }
            previous = sag;
        }
        worst = worst.max(previous);
    }
    outcome(
        NAME,
        worst,
        1e-3,
        "final sag after 10 shortening steps".into(),
    )
}

fn random_trajectory_input(
    rng: &mut ChaCha8Rng,
) -> (
    Vec<Vector3<f64>>,
    f64,
    BoundaryState,
    Vector3<f64>,
    Vector3<f64>,
) {
    let mut v = |s: f64| {
        Vector3::new(
            rng.gen_range(-s..s),
            rng.gen_range(-s..s),
            rng.gen_range(-s..s),
        )
    };
    let segments = (v(1.0).x.abs() * 8.0) as usize + 1;
    let q = (1..segments).map(|_| v(3.0)).collect();
    let start = BoundaryState {
        position: v(1.0),
        velocity: v(1.0),
        acceleration: v(1.0),
        jerk: Vector3::zeros(),
    };
    let duration = segments as f64 * (0.25 + v(1.0).x.abs() * 1.25);
    (q, duration, start, v(3.0), v(1.0))
}

fn dense_solve(rng: &mut ChaCha8Rng, n: usize) -> CheckOutcome {
    const NAME: &str = "trajectory vs dense solve";
    let mut worst = 0.0f64;
    for _ in 0..n {
        let (q, t, start, goal, goal_v) = random_trajectory_input(rng);
        let Ok(traj) = UniformPolyTrajectory::construct(&q, t, &start, &goal, &goal_v) else {
            return failed(NAME, 1e-9, "construction failed".into());
        };
        let Some(dense) = dense_trajectory_coefficients(&q, t, &start, &goal, &goal_v) else {
            return failed(NAME, 1e-9, "dense system singular".into());
        };
        worst = worst.max((traj.coefficients() - dense).amax());
    }
    outcome(NAME, worst, 1e-9, format!("{n} instances, N <= 8"))
}

fn joint_continuity(rng: &mut ChaCha8Rng, n: usize) -> CheckOutcome {
    const NAME: &str = "joint continuity and interpolation";
    let mut worst = 0.0f64;
    for _ in 0..n {
        let (q, t, start, goal, goal_v) = random_trajectory_input(rng);
        let Ok(traj) = UniformPolyTrajectory::construct(&q, t, &start, &goal, &goal_v) else {
            return failed(NAME, 1e-10, "construction failed".into());
        };
        let dt = traj.segment_duration();
        for (i, qi) in q.iter().enumerate() {
            worst = worst.max((traj.evaluate_segment(i, dt, 0) - qi).amax());
            for order in 0..=CONTINUITY {
                let left = traj.evaluate_segment(i, dt, order);
                let right = traj.evaluate_segment(i + 1, 0.0, order);
                worst = worst.max((left - right).amax() / left.amax().max(1.0));
            }
        }
    }
    outcome(NAME, worst, 1e-10, format!("orders 0..={CONTINUITY}"))
}

fn hinge_identities() -> CheckOutcome {
    const NAME: &str = "cubic hinge identities";
    let mut worst = 0.0f64;
    for (x, expected) in [
        (1.0, 1.0),
        (2.0, 8.0),
        (0.2, 0.008),
        (0.0, 0.0),
        (-1.0, 0.0),
    ] {
        worst = worst.max((cubic_hinge(x) - expected).abs());
    }
    // one-sided slopes approach zero at the kink from both sides
    for h in [1e-2, 1e-3, 1e-4] {
        let right = (cubic_hinge(h) - cubic_hinge(0.0)) / h;
        let left = (cubic_hinge(0.0) - cubic_hinge(-h)) / h;
        worst = worst.max((right - h * h).abs()).max(left.abs());
    }
    outcome(NAME, worst, 1e-12, "1, 8, 0.008 and a smooth kink".into())
}

fn gradients(
    rng: &mut ChaCha8Rng,
    n: usize,
    scenario: &Scenario,
    evaluator: GradientEvaluator,
) -> CheckOutcome {
    const NAME: &str = "objective gradient vs central differences";
    const STEP: f64 = 1e-6;
    const TOL: f64 = 1e-4;
    let mut s = scenario.clone();
    s.segments = 4;
    let base = optimizer::initial_waypoints(&s);
    let t0 = optimizer::initial_duration(&s, 0.1);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let q: Vec<Vector3<f64>> = base
            .iter()
            .map(|w| {
                w + Vector3::new(
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(-0.3..0.3),
                )
            })
            .collect();
        let t = t0 * rng.gen_range(0.6..1.4);
        let value = |q: &[Vector3<f64>], t: f64| -> Result<f64, String> {
            let traj = UniformPolyTrajectory::construct(
                q,
                t,
                &s.start,
                &s.goal_position,
                &s.goal_velocity,
            )
            .map_err(|e| e.to_string())?;
            Ok(evaluator(&traj, &s)
                .map_err(|e| e.to_string())?
                .breakdown
                .total)
        };
        let eval = match UniformPolyTrajectory::construct(
            &q,
            t,
            &s.start,
            &s.goal_position,
            &s.goal_velocity,
        )
        .map_err(OptimizerError::from)
        .and_then(|traj| evaluator(&traj, &s))
        {
            Ok(e) => e,
            Err(e) => return failed(NAME, TOL, e.to_string()),
        };
        let mut pairs = Vec::new();
        let mut error = None;
        for i in 0..q.len() {
            for axis in 0..3 {
                let numeric = central_difference(
                    |x| {
                        let mut p = q.clone();
                        p[i][axis] = x;
                        value(&p, t).unwrap_or_else(|e| {
                            error = Some(e);
                            f64::NAN
                        })
                    },
                    q[i][axis],
                    STEP,
                );
                pairs.push((eval.d_waypoints[i][axis], numeric));
            }
        }
        let numeric = central_difference(
            |x| {
                value(&q, x).unwrap_or_else(|e| {
                    error = Some(e);
                    f64::NAN
                })
            },
            t,
            STEP,
        );
        pairs.push((eval.d_duration, numeric));
        if let Some(e) = error {
            return failed(NAME, TOL, e);
        }
        let scale = pairs.iter().fold(1e-12f64, |m, (_, f)| m.max(f.abs()));
        let err = pairs.iter().fold(0.0f64, |m, (a, f)| m.max((a - f).abs()));
        let rel = err / scale;
        worst = if rel.is_nan() {
            f64::INFINITY
        } else {
            worst.max(rel)
        };
    }
    outcome(
        NAME,
        worst,
        TOL,
        format!("{n} instances, kappa {}", s.limits.kappa),
    )
}
