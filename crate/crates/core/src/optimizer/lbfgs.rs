//! Limited-memory BFGS with a weak-Wolfe bisection line search.

use std::collections::VecDeque;

use nalgebra::DVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsParams {
    /// Number of correction pairs kept.
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when `|g|_inf / max(1, |x|_inf)` falls below this.
    pub gradient_tolerance: f64,
    /// Window (iterations) for the relative-decrease test; 0 disables it.
    pub past: usize,
    /// Stop when the cost decreased by less than `delta * max(1, |f|)` over `past` iterations.
    pub delta: f64,
    pub max_line_search: usize,
    /// Armijo coefficient.
    pub sufficient_decrease: f64,
    /// Weak Wolfe curvature coefficient.
    pub curvature: f64,
}

impl Default for LbfgsParams {
    fn default() -> Self {
        Self {
            memory: 8,
            max_iterations: 500,
            gradient_tolerance: 1e-5,
            past: 3,
            delta: 1e-12,
            max_line_search: 64,
            sufficient_decrease: 1e-4,
            curvature: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsStatus {
    /// Scaled gradient norm below tolerance.
    Converged,
    /// Relative cost decrease below `delta` over the last `past` iterations.
    Stalled,
    MaxIterations,
    /// No step satisfying the Wolfe conditions was found; the last accepted
    /// iterate is returned.
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome<X> {
    pub x: DVector<f64>,
    pub value: f64,
    pub gradient: DVector<f64>,
    pub extra: X,
    pub iterations: usize,
    pub status: LbfgsStatus,
}

/// Minimises `objective`, which returns the value, the gradient and an extra
/// payload carried along with the accepted iterate. `on_iteration` is called
/// after every accepted step with the iteration number and the new iterate.
///
/// Evaluations that return a non-finite value are treated as failed Armijo
/// tests and shrink the step.
pub fn minimize<X, E, F, C>(
    mut objective: F,
    x0: DVector<f64>,
    params: &LbfgsParams,
    mut on_iteration: C,
) -> Result<LbfgsOutcome<X>, E>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>, X), E>,
    C: FnMut(usize, &DVector<f64>, f64, &DVector<f64>, &X),
{
    let mut x = x0;
    let (mut fx, mut g, mut extra) = objective(&x)?;
    let mut history: VecDeque<(DVector<f64>, DVector<f64>, f64)> =
        VecDeque::with_capacity(params.memory);
    let mut past_values: VecDeque<f64> = VecDeque::new();

    let converged = |x: &DVector<f64>, g: &DVector<f64>| {
        g.amax() / x.amax().max(1.0) < params.gradient_tolerance
    };
    if !fx.is_finite() || converged(&x, &g) {
        return Ok(LbfgsOutcome {
            x,
            value: fx,
            gradient: g,
            extra,
            iterations: 0,
            status: LbfgsStatus::Converged,
        });
    }

    let mut step = 1.0 / g.norm().max(f64::MIN_POSITIVE);
    let mut iteration = 0;
    loop {
        let direction = -two_loop(&g, &history);
        let slope = g.dot(&direction);
        let (direction, slope) = if slope < 0.0 {
            (direction, slope)
        } else {
            // Curvature information went bad; restart from steepest descent.
            history.clear();
            let d = -&g;
            let s = g.dot(&d);
            step = 1.0 / g.norm();
            (d, s)
        };

        let mut lo = 0.0;
        let mut hi = f64::INFINITY;
        let mut accepted = None;
        for _ in 0..params.max_line_search {
            let trial = &x + &direction * step;
            let (ft, gt, xt) = objective(&trial)?;
            if !ft.is_finite() || ft > fx + params.sufficient_decrease * step * slope {
                hi = step;
            } else if gt.dot(&direction) < params.curvature * slope {
                lo = step;
            } else {
                accepted = Some((trial, ft, gt, xt));
                break;
            }
            step = if hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                2.0 * step
            };
            if hi - lo < f64::EPSILON * lo.max(f64::MIN_POSITIVE) {
                break;
            }
        }
        let Some((x_new, f_new, g_new, extra_new)) = accepted else {
            return Ok(LbfgsOutcome {
                x,
                value: fx,
                gradient: g,
                extra,
                iterations: iteration,
                status: LbfgsStatus::LineSearchFailed,
            });
        };

        iteration += 1;
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        x = x_new;
        fx = f_new;
        g = g_new;
        extra = extra_new;
        on_iteration(iteration, &x, fx, &g, &extra);

        if sy > f64::EPSILON * y.norm_squared() {
            if history.len() == params.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }

        if converged(&x, &g) {
            return Ok(done(x, fx, g, extra, iteration, LbfgsStatus::Converged));
        }
        if params.past > 0 {
            if past_values.len() == params.past {
                let old = past_values.pop_front().unwrap_or(fx);
                if (old - fx) < params.delta * fx.abs().max(1.0) {
                    return Ok(done(x, fx, g, extra, iteration, LbfgsStatus::Stalled));
                }
            }
            past_values.push_back(fx);
        }
        if iteration >= params.max_iterations {
            return Ok(done(x, fx, g, extra, iteration, LbfgsStatus::MaxIterations));
        }
        step = 1.0;
    }
}

fn done<X>(
    x: DVector<f64>,
    value: f64,
    gradient: DVector<f64>,
    extra: X,
    iterations: usize,
    status: LbfgsStatus,
) -> LbfgsOutcome<X> {
    LbfgsOutcome {
        x,
        value,
        gradient,
        extra,
        iterations,
        status,
    }
}

/// Inverse-Hessian approximation applied to `g`.
fn two_loop(
    g: &DVector<f64>,
    history: &VecDeque<(DVector<f64>, DVector<f64>, f64)>,
) -> DVector<f64> {
    let mut q = g.clone();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * s.dot(&q);
        q.axpy(-a, y, 1.0);
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        q *= s.dot(y) / y.norm_squared();
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * y.dot(&q);
        q.axpy(a - b, s, 1.0);
    }
    q
}
