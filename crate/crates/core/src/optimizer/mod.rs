//! Penalty-based trajectory optimisation for the end droid.
//!
//! The objective is the jerk integral plus `rho * T` plus weighted cubic
//! hinge penalties sampled along the trajectory. Decision variables are the
//! interior waypoints and (unless frozen) the total duration, optimised with
//! L-BFGS.

pub mod cost;
pub mod lbfgs;

use nalgebra::{DVector, Vector3};
use thiserror::Error;

use crate::cable::{self, CableError};
use crate::scenario::Scenario;
use crate::trajectory::{TrajectoryError, UniformPolyTrajectory};
use crate::GRAVITY;

pub use cost::{
    cable_penalty, cubic_hinge, feasibility_penalty, obstacle_penalty, sample_times,
    signed_distance, smoothness_cost, thrust_penalty, CoefficientGradient, FeasibilityTerms,
};
pub use lbfgs::{LbfgsParams, LbfgsStatus};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizerError {
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Cable(#[from] CableError),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("initial guess has non-finite cost")]
    NonFiniteCost,
}

/// Kinematic and dynamic limits plus sampling and time-cost settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Limits {
    pub v_max: f64,
    pub a_max: f64,
    pub j_max: f64,
    /// Lower bound on the thrust acceleration magnitude (m/s²).
    pub tau_min: f64,
    /// Upper bound on the thrust acceleration magnitude (m/s²).
    pub tau_max: f64,
    /// Samples per trajectory for every penalty sum.
    pub kappa: usize,
    /// Required clearance from obstacle planes (m).
    pub obstacle_margin: f64,
    /// Weight of the total duration in the objective.
    pub time_weight: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            v_max: 2.0,
            a_max: 6.0,
            j_max: 30.0,
            tau_min: 2.0,
            tau_max: 20.0,
            kappa: 32,
            obstacle_margin: 0.3,
            time_weight: 20.0,
        }
    }
}

impl Limits {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("v_max", self.v_max),
            ("a_max", self.a_max),
            ("j_max", self.j_max),
            ("tau_min", self.tau_min),
            ("tau_max", self.tau_max),
            ("obstacle_margin", self.obstacle_margin),
            ("time_weight", self.time_weight),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("limits: {name} must be positive, got {v}"));
            }
        }
        if self.tau_min >= self.tau_max {
            return Err("limits: tau_min must be below tau_max".into());
        }
        if self.kappa < 2 {
            return Err("limits: kappa must be at least 2".into());
        }
        Ok(())
    }
}

/// Weights of the penalty terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyWeights {
    pub velocity: f64,
    /// Acceleration and jerk hinges.
    pub dynamics: f64,
    pub thrust: f64,
    pub cable: f64,
    pub obstacle: f64,
}

impl Default for PenaltyWeights {
    fn default() -> Self {
        Self {
            velocity: 1e4,
            dynamics: 1e4,
            thrust: 1e4,
            cable: 1e5,
            obstacle: 1e5,
        }
    }
}

impl PenaltyWeights {
    pub fn validate(&self) -> Result<(), String> {
        let all = [
            ("velocity", self.velocity),
            ("dynamics", self.dynamics),
            ("thrust", self.thrust),
            ("cable", self.cable),
            ("obstacle", self.obstacle),
        ];
        for (name, w) in all {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(format!("weights: {name} must be non-negative, got {w}"));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            velocity: self.velocity * factor,
            dynamics: self.dynamics * factor,
            thrust: self.thrust * factor,
            cable: self.cable * factor,
            obstacle: self.obstacle * factor,
        }
    }
}

/// Half-space obstacle boundary `(x - point) . normal = 0`; `normal` points
/// into free space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstaclePlane {
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
}

impl ObstaclePlane {
    /// Normalises `normal`.
    pub fn new(point: Vector3<f64>, normal: Vector3<f64>) -> Result<Self, String> {
        let n = normal.norm();
        if !(n > 0.0 && n.is_finite()) || !point.iter().all(|x| x.is_finite()) {
            return Err("obstacle plane needs a finite point and a non-zero normal".into());
        }
        Ok(Self {
            point,
            normal: normal / n,
        })
    }
}

/// Unweighted cost terms and the weighted total.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CostBreakdown {
    pub smoothness: f64,
    /// Total duration `T`.
    pub time: f64,
    pub velocity: f64,
    pub acceleration: f64,
    pub jerk: f64,
    pub thrust: f64,
    pub obstacle: f64,
    pub cable: f64,
    pub total: f64,
}

impl CostBreakdown {
    /// The individual summands of `total`.
    pub fn weighted_terms(&self, limits: &Limits, w: &PenaltyWeights) -> [f64; 8] {
        [
            self.smoothness,
            limits.time_weight * self.time,
            w.velocity * self.velocity,
            w.dynamics * self.acceleration,
            w.dynamics * self.jerk,
            w.thrust * self.thrust,
            w.obstacle * self.obstacle,
            w.cable * self.cable,
        ]
    }

    pub fn penalties_zero(&self) -> bool {
        [
            self.velocity,
            self.acceleration,
            self.jerk,
            self.thrust,
            self.obstacle,
            self.cable,
        ]
        .iter()
        .all(|&p| p == 0.0)
    }
}

/// Objective value with its gradient on the decision variables.
#[derive(Debug, Clone, PartialEq)]
pub struct CostEvaluation {
    pub breakdown: CostBreakdown,
    pub d_waypoints: Vec<Vector3<f64>>,
    pub d_duration: f64,
}

/// Full objective for `traj` under `scenario` with the given weights.
pub fn total_cost(
    traj: &UniformPolyTrajectory,
    scenario: &Scenario,
    weights: &PenaltyWeights,
    limits: &Limits,
) -> Result<CostEvaluation, OptimizerError> {
    let (smoothness, mut grad) = smoothness_cost(traj);
    let feas =
        cost::accumulate_feasibility(traj, limits, weights.velocity, weights.dynamics, &mut grad);
    let thrust = cost::accumulate_thrust(traj, limits, weights.thrust, &mut grad);
    let obstacle = cost::accumulate_obstacles(
        traj,
        &scenario.obstacles,
        limits.obstacle_margin,
        limits.kappa,
        weights.obstacle,
        &mut grad,
    );
    let cable = if weights.cable > 0.0 {
        cost::accumulate_cable(
            traj,
            &scenario.anchor,
            &scenario.winch,
            &scenario.cable,
            limits.kappa,
            weights.cable,
            &mut grad,
        )?
    } else {
        0.0
    };

    let mut breakdown = CostBreakdown {
        smoothness,
        time: traj.total_duration(),
        velocity: feas.velocity,
        acceleration: feas.acceleration,
        jerk: feas.jerk,
        thrust,
        obstacle,
        cable,
        total: 0.0,
    };
    breakdown.total = breakdown.weighted_terms(limits, weights).iter().sum();
    let (d_waypoints, d_duration) = traj.propagate_gradients(&grad.coeffs, grad.ddt);
    Ok(CostEvaluation {
        breakdown,
        d_waypoints,
        d_duration: d_duration + limits.time_weight,
    })
}

/// Worst constraint violations over a sampled trajectory, each in the units
/// of its hinge argument (squared units for norms and cable lengths, metres
/// for obstacles).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FeasibilityAudit {
    pub samples: usize,
    pub velocity: f64,
    pub acceleration: f64,
    pub jerk: f64,
    pub thrust: f64,
    pub obstacle: f64,
    pub cable: f64,
    /// Smallest corridor margin `min(L_now - L_min, L_max - L_now)` (m).
    pub corridor_margin: f64,
}

impl FeasibilityAudit {
    pub fn max_violation(&self) -> f64 {
        [
            self.velocity,
            self.acceleration,
            self.jerk,
            self.thrust,
            self.obstacle,
            self.cable,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_violation() < tolerance
    }

    pub fn corridor_passes(&self, tolerance: f64) -> bool {
        self.cable < tolerance
    }
}

/// Re-checks every constraint at `samples + 1` equally spaced times.
pub fn audit(
    traj: &UniformPolyTrajectory,
    scenario: &Scenario,
    samples: usize,
    check_cable: bool,
) -> Result<FeasibilityAudit, OptimizerError> {
    let limits = &scenario.limits;
    let mut out = FeasibilityAudit {
        samples,
        corridor_margin: f64::INFINITY,
        ..FeasibilityAudit::default()
    };
    let g = Vector3::new(0.0, 0.0, GRAVITY);
    for t in sample_times(0.0, traj.total_duration(), samples) {
        let p = traj.evaluate(t, 0)?;
        let v = traj.evaluate(t, 1)?;
        let a = traj.evaluate(t, 2)?;
        let j = traj.evaluate(t, 3)?;
        out.velocity = out.velocity.max(v.norm_squared() - limits.v_max.powi(2));
        out.acceleration = out
            .acceleration
            .max(a.norm_squared() - limits.a_max.powi(2));
        out.jerk = out.jerk.max(j.norm_squared() - limits.j_max.powi(2));
        let tau2 = (a + g).norm_squared();
        out.thrust = out
            .thrust
            .max(limits.tau_min.powi(2) - tau2)
            .max(tau2 - limits.tau_max.powi(2));
        for plane in &scenario.obstacles {
            out.obstacle = out
                .obstacle
                .max(limits.obstacle_margin - signed_distance(plane, &p));
        }
        if check_cable {
            let b = cable::cable_bounds(
                &p,
                &scenario.anchor,
                scenario.winch.length_at(t),
                &scenario.cable,
            )?;
            out.cable = out.cable.max(b.squared_violation());
            out.corridor_margin = out.corridor_margin.min(b.margin());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub lbfgs: LbfgsParams,
    /// Freeze the total duration at this value instead of optimising it.
    pub fixed_duration: Option<f64>,
    /// Starting duration; derived from the scenario when absent.
    pub initial_duration: Option<f64>,
    /// Lower bound of the duration reparameterisation (s).
    pub min_duration: f64,
    /// Dense re-check uses `kappa * dense_factor` samples.
    pub dense_factor: usize,
    /// Largest accepted dense violation.
    pub feasibility_tolerance: f64,
    /// How many refinement rounds may follow the first solve.
    pub max_escalations: usize,
    /// Factor applied to the weight of a term violated at the sample points.
    pub escalation_factor: f64,
    /// Upper bound on the sample count reached by refinement, as a multiple
    /// of the configured `kappa`.
    pub max_kappa_factor: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lbfgs: LbfgsParams::default(),
            fixed_duration: None,
            initial_duration: None,
            min_duration: 0.1,
            dense_factor: 10,
            feasibility_tolerance: 1e-3,
            max_escalations: 8,
            escalation_factor: 10.0,
            max_kappa_factor: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    /// Relative cost decrease fell below the stall threshold.
    Stalled,
    MaxIterations,
    LineSearchFailure,
}

impl From<LbfgsStatus> for Termination {
    fn from(s: LbfgsStatus) -> Self {
        match s {
            LbfgsStatus::Converged => Self::Converged,
            LbfgsStatus::Stalled => Self::Stalled,
            LbfgsStatus::MaxIterations => Self::MaxIterations,
            LbfgsStatus::LineSearchFailed => Self::LineSearchFailure,
        }
    }
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Converged => "converged",
            Self::Stalled => "stalled",
            Self::MaxIterations => "max_iterations",
            Self::LineSearchFailure => "line_search_failure",
        };
        f.write_str(s)
    }
}

/// One accepted quasi-Newton step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    /// Counts across escalation rounds.
    pub iteration: usize,
    pub round: usize,
    pub breakdown: CostBreakdown,
    pub gradient_norm: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub trajectory: UniformPolyTrajectory,
    pub breakdown: CostBreakdown,
    /// Weights in force at the end (after escalation).
    pub weights: PenaltyWeights,
    /// Sample count in force at the end (after refinement).
    pub kappa: usize,
    pub iterations: usize,
    pub termination: Termination,
    pub history: Vec<IterationRecord>,
    /// Dense re-check of the final trajectory.
    pub audit: FeasibilityAudit,
}

impl OptimizationResult {
    /// Whether every constraint holds on the dense re-check.
    pub fn feasible(&self, tolerance: f64) -> bool {
        self.audit.passes(tolerance)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn softplus_inverse(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Minimum-jerk timing law `10 s^3 - 15 s^4 + 6 s^5`.
fn min_jerk_fraction(s: f64) -> f64 {
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

/// Straight-line waypoints with minimum-jerk spacing.
pub fn initial_waypoints(scenario: &Scenario) -> Vec<Vector3<f64>> {
    let start = scenario.start.position;
    let delta = scenario.goal_position - start;
    let n = scenario.segments;
    (1..n)
        .map(|i| start + delta * min_jerk_fraction(i as f64 / n as f64))
        .collect()
}

/// Starting duration: the time at which the winch schedule reaches the middle
/// of the goal corridor, or a kinematic estimate when that is unavailable.
pub fn initial_duration(scenario: &Scenario, min_duration: f64) -> f64 {
    let dist = (scenario.goal_position - scenario.start.position).norm();
    let limits = &scenario.limits;
    let kinematic = (1.875 * dist / limits.v_max).max((5.77 * dist / limits.a_max).sqrt());
    let mut duration = kinematic.max(1.0);
    let w = &scenario.winch;
    if scenario.weights.cable > 0.0 && w.payout_speed != 0.0 {
        if let Ok(b) = cable::cable_bounds(
            &scenario.goal_position,
            &scenario.anchor,
            0.0,
            &scenario.cable,
        ) {
            let target = 0.5 * (b.l_min + b.l_max);
            let t = (target - w.initial_length) / w.payout_speed;
            if t > 0.0 && t.is_finite() {
                duration = t;
            }
        }
    }
    duration.max(2.0 * min_duration)
}

struct Problem<'a> {
    scenario: &'a Scenario,
    weights: PenaltyWeights,
    limits: Limits,
    config: &'a OptimizerConfig,
    fixed: Option<f64>,
    interior: usize,
}

impl Problem<'_> {
    fn unpack(&self, x: &DVector<f64>) -> (Vec<Vector3<f64>>, f64) {
        let q = (0..self.interior)
            .map(|i| Vector3::new(x[3 * i], x[3 * i + 1], x[3 * i + 2]))
            .collect();
        let duration = match self.fixed {
            Some(t) => t,
            None => self.config.min_duration + softplus(x[3 * self.interior]),
        };
        (q, duration)
    }

    fn pack(&self, q: &[Vector3<f64>], duration: f64) -> DVector<f64> {
        let extra = usize::from(self.fixed.is_none());
        let mut x = DVector::zeros(3 * self.interior + extra);
        for (i, w) in q.iter().enumerate() {
            x.fixed_rows_mut::<3>(3 * i).copy_from(w);
        }
        if self.fixed.is_none() {
            x[3 * self.interior] =
                softplus_inverse((duration - self.config.min_duration).max(1e-9));
        }
        x
    }

    fn build(&self, x: &DVector<f64>) -> Result<UniformPolyTrajectory, OptimizerError> {
        let (q, duration) = self.unpack(x);
        let s = self.scenario;
        Ok(UniformPolyTrajectory::construct(
            &q,
            duration,
            &s.start,
            &s.goal_position,
            &s.goal_velocity,
        )?)
    }

    fn evaluate(
        &self,
        x: &DVector<f64>,
    ) -> Result<(f64, DVector<f64>, CostBreakdown), OptimizerError> {
        let traj = self.build(x)?;
        let eval = total_cost(&traj, self.scenario, &self.weights, &self.limits)?;
        let mut g = DVector::zeros(x.len());
        for (i, d) in eval.d_waypoints.iter().enumerate() {
            g.fixed_rows_mut::<3>(3 * i).copy_from(d);
        }
        if self.fixed.is_none() {
            g[3 * self.interior] = eval.d_duration * sigmoid(x[3 * self.interior]);
        }
        Ok((eval.breakdown.total, g, eval.breakdown))
    }
}

/// Plans a trajectory for `scenario`.
///
/// After each solve the trajectory is re-checked at `dense_factor` times the
/// configured sampling density. While a constraint is violated by more than
/// the tolerance, the solve is warm-started from the previous optimum with
/// the weights of terms violated at the sample points raised, and the sample
/// count doubled when the violation lies between samples.
pub fn optimize(
    scenario: &Scenario,
    config: &OptimizerConfig,
) -> Result<OptimizationResult, OptimizerError> {
    scenario
        .limits
        .validate()
        .map_err(OptimizerError::Invalid)?;
    scenario
        .weights
        .validate()
        .map_err(OptimizerError::Invalid)?;
    if scenario.segments == 0 {
        return Err(OptimizerError::Invalid(
            "segment count must be at least 1".into(),
        ));
    }
    if let Some(t) = config.fixed_duration {
        if !(t > 0.0 && t.is_finite()) {
            return Err(OptimizerError::Invalid(
                "fixed duration must be positive".into(),
            ));
        }
    }
    if !(config.min_duration > 0.0) {
        return Err(OptimizerError::Invalid(
            "minimum duration must be positive".into(),
        ));
    }

    let mut problem = Problem {
        scenario,
        weights: scenario.weights,
        limits: scenario.limits,
        config,
        fixed: config.fixed_duration,
        interior: scenario.segments - 1,
    };
    let duration = config
        .fixed_duration
        .or(config.initial_duration)
        .unwrap_or_else(|| initial_duration(scenario, config.min_duration))
        .max(config.min_duration * (1.0 + 1e-6));
    let mut x = problem.pack(&initial_waypoints(scenario), duration);
    let check_cable = scenario.weights.cable > 0.0;
    let dense = scenario.limits.kappa * config.dense_factor.max(1);

    let mut history = Vec::new();
    let mut iterations = 0;
    let mut round = 0;
    loop {
        let (f0, ..) = problem.evaluate(&x)?;
        if !f0.is_finite() {
            return Err(OptimizerError::NonFiniteCost);
        }
        let offset = iterations;
        let outcome = lbfgs::minimize(
            |x| problem.evaluate(x),
            x.clone(),
            &config.lbfgs,
            |it, _, _, g, b: &CostBreakdown| {
                history.push(IterationRecord {
                    iteration: offset + it,
                    round,
                    breakdown: *b,
                    gradient_norm: g.norm(),
                });
            },
        )?;
        iterations += outcome.iterations;
        x = outcome.x;
        let trajectory = problem.build(&x)?;
        let audit = audit(&trajectory, scenario, dense, check_cable)?;

        let tol = config.feasibility_tolerance;
        let mut refined = false;
        if round < config.max_escalations && !audit.passes(tol) {
            let sampled = self::audit(&trajectory, scenario, problem.limits.kappa, check_cable)?;
            let f = config.escalation_factor;
            let w = &mut problem.weights;
            let mut raise = |weight: &mut f64, violation: f64| {
                if violation >= 0.5 * tol && *weight > 0.0 {
                    *weight *= f;
                    refined = true;
                }
            };
            raise(&mut w.velocity, sampled.velocity);
            raise(&mut w.dynamics, sampled.acceleration.max(sampled.jerk));
            raise(&mut w.thrust, sampled.thrust);
            raise(&mut w.obstacle, sampled.obstacle);
            raise(&mut w.cable, sampled.cable);
            let cap = scenario.limits.kappa * config.max_kappa_factor.max(1);
            if problem.limits.kappa * 2 <= cap {
                problem.limits.kappa *= 2;
                refined = true;
            }
        }
        if !refined {
            return Ok(OptimizationResult {
                trajectory,
                breakdown: outcome.extra,
                weights: problem.weights,
                kappa: problem.limits.kappa,
                iterations,
                termination: outcome.status.into(),
                history,
                audit,
            });
        }
        round += 1;
    }
}
