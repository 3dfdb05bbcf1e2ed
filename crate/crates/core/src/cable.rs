//! Planar catenary statics for the tether between the payload drone (anchor)
//! and the end droid.
//!
//! All shapes are expressed in a vertex-origin frame where the cable follows
//! `z(x) = a (cosh(x / a) - 1)`, with `a = T0 / mu` the catenary scale. The
//! end-droid attachment sits at abscissa `x_droid` and the anchor at
//! `x_anchor = x_droid + span`. A [`Placement`] maps that frame back to the
//! world x-z plane.

use nalgebra::Vector3;
use thiserror::Error;

/// Horizontal spans below this are treated as a vertical cable.
pub const DEGENERATE_SPAN: f64 = 1e-6;

const MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CableError {
    #[error("cable length {length} m does not exceed the chord {chord} m")]
    LengthTooShort { length: f64, chord: f64 },
    #[error("catenary root finder did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("abscissa {x} m lies outside the cable span [{x_droid}, {x_anchor}]")]
    OutOfDomain { x: f64, x_droid: f64, x_anchor: f64 },
    #[error("horizontal span {0} m is too small to identify a catenary")]
    DegenerateSpan(f64),
    #[error("invalid cable configuration: {0}")]
    Invalid(&'static str),
}

/// Physical parameters of the tether.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CableProperties {
    /// kg/m
    pub mass_per_length: f64,
    /// m/s², magnitude
    pub gravity: f64,
    /// Allowed depth of the catenary vertex below the lower attachment point (m).
    pub sag_limit: f64,
    /// Vertical protrusion of the attachment point above the end-droid body (m).
    pub attachment_offset: f64,
}

impl CableProperties {
    pub fn new(
        mass_per_length: f64,
        gravity: f64,
        sag_limit: f64,
        attachment_offset: f64,
    ) -> Result<Self, CableError> {
        if !(mass_per_length > 0.0 && mass_per_length.is_finite()) {
            return Err(CableError::Invalid("mass_per_length must be positive"));
        }
        if !(gravity > 0.0 && gravity.is_finite()) {
            return Err(CableError::Invalid("gravity must be positive"));
        }
        if !(sag_limit >= 0.0 && sag_limit.is_finite()) {
            return Err(CableError::Invalid("sag_limit must be non-negative"));
        }
        if !attachment_offset.is_finite() {
            return Err(CableError::Invalid("attachment_offset must be finite"));
        }
        Ok(Self {
            mass_per_length,
            gravity,
            sag_limit,
            attachment_offset,
        })
    }

    /// Weight per unit length `mu` in N/m.
    pub fn weight_per_length(&self) -> f64 {
        self.mass_per_length * self.gravity
    }
}

impl Default for CableProperties {
    /// Kevlar tether used in the reference experiments: 0.14 g/m, 0.1 m sag.
    fn default() -> Self {
        Self {
            mass_per_length: 1.4e-4,
            gravity: 9.81,
            sag_limit: 0.1,
            attachment_offset: 0.0,
        }
    }
}

/// Relative placement of the two attachment points in the cable plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarConfiguration {
    /// Horizontal separation `p >= 0` (m).
    pub span: f64,
    /// Height of the anchor above the end-droid attachment `H` (m).
    pub rise: f64,
}

impl PlanarConfiguration {
    pub fn new(span: f64, rise: f64) -> Result<Self, CableError> {
        if !(span >= 0.0 && span.is_finite() && rise.is_finite()) {
            return Err(CableError::Invalid("span must be finite and non-negative"));
        }
        if span.hypot(rise) <= 0.0 {
            return Err(CableError::Invalid("attachment points coincide"));
        }
        Ok(Self { span, rise })
    }

    /// Configuration seen from an end-droid attachment point towards the anchor.
    /// Only the x and z coordinates are used.
    pub fn between(droid: &Vector3<f64>, anchor: &Vector3<f64>) -> Self {
        Self {
            span: (anchor.x - droid.x).abs(),
            rise: anchor.z - droid.z,
        }
    }

    pub fn chord_length(&self) -> f64 {
        chord_length(self)
    }
}

pub fn chord_length(cfg: &PlanarConfiguration) -> f64 {
    cfg.span.hypot(cfg.rise)
}

/// Straight-line distance between the two points projected onto the x-z plane.
pub fn min_length(droid: &Vector3<f64>, anchor: &Vector3<f64>) -> f64 {
    (droid.x - anchor.x).hypot(droid.z - anchor.z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CableState {
    /// Vertex outside the span: the cable rises monotonically towards the anchor.
    Taut,
    /// Vertex strictly between the attachment points.
    Slack,
}

/// World x-z coordinates of both attachment points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub droid: [f64; 2],
    pub anchor: [f64; 2],
}

impl Placement {
    /// Horizontal direction (+1 or -1) from the droid towards the anchor.
    pub fn direction(&self) -> f64 {
        if self.anchor[0] >= self.droid[0] {
            1.0
        } else {
            -1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatenarySolution {
    /// Catenary scale `a = T0 / mu` (m).
    pub scale: f64,
    /// Tension at the vertex (N).
    pub vertex_tension: f64,
    pub x_droid: f64,
    pub x_anchor: f64,
    pub state: CableState,
    /// Arc length between the attachment points (m).
    pub length: f64,
    pub placement: Placement,
}

impl CatenarySolution {
    fn new(scale: f64, x_droid: f64, span: f64, rise: f64, props: &CableProperties) -> Self {
        let x_anchor = x_droid + span;
        let length = scale * ((x_anchor / scale).sinh() - (x_droid / scale).sinh());
        let state = if x_droid < 0.0 && x_anchor > 0.0 {
            CableState::Slack
        } else {
            CableState::Taut
        };
        Self {
            scale,
            vertex_tension: props.weight_per_length() * scale,
            x_droid,
            x_anchor,
            state,
            length,
            placement: Placement {
                droid: [0.0, 0.0],
                anchor: [span, rise],
            },
        }
    }

    /// Re-anchors the solution in the world x-z plane.
    pub fn placed(mut self, droid: &Vector3<f64>, anchor: &Vector3<f64>) -> Self {
        self.placement = Placement {
            droid: [droid.x, droid.z],
            anchor: [anchor.x, anchor.z],
        };
        self
    }

    /// Height above the vertex at abscissa `x`.
    pub fn height_at(&self, x: f64) -> f64 {
        let h = (0.5 * x / self.scale).sinh();
        2.0 * self.scale * h * h
    }

    /// `tan(theta) = sinh(x / a)`.
    pub fn slope_at(&self, x: f64) -> f64 {
        (x / self.scale).sinh()
    }

    /// Horizontal span `x_anchor - x_droid`.
    pub fn span(&self) -> f64 {
        self.x_anchor - self.x_droid
    }

    /// Height of the anchor above the droid attachment.
    pub fn rise(&self) -> f64 {
        self.height_at(self.x_anchor) - self.height_at(self.x_droid)
    }

    /// Depth of the vertex below the lower attachment point; zero when taut.
    pub fn vertex_depth(&self) -> f64 {
        match self.state {
            CableState::Slack => self
                .height_at(self.x_droid)
                .min(self.height_at(self.x_anchor)),
            CableState::Taut => 0.0,
        }
    }

    /// Largest vertical distance between the chord and the cable.
    pub fn max_sag_below_chord(&self) -> f64 {
        let span = self.span();
        let rise = self.rise();
        // The tangent is parallel to the chord at the deepest point.
        let x = (self.scale * (rise / span).asinh()).clamp(self.x_droid, self.x_anchor);
        let chord_z = self.height_at(self.x_droid) + (x - self.x_droid) * rise / span;
        (chord_z - self.height_at(x)).max(0.0)
    }

    pub fn tension_at(&self, x: f64) -> Result<f64, CableError> {
        tension_at(self, x)
    }
}

/// Solves for the catenary of length `length` between the two attachment
/// points of `cfg`.
pub fn solve_catenary(
    cfg: &PlanarConfiguration,
    length: f64,
    props: &CableProperties,
) -> Result<CatenarySolution, CableError> {
    let chord = cfg.chord_length();
    if !(length > chord) {
        return Err(CableError::LengthTooShort { length, chord });
    }
    if cfg.span < DEGENERATE_SPAN {
        return Err(CableError::DegenerateSpan(cfg.span));
    }
    let (span, rise) = (cfg.span, cfg.rise);
    // sqrt(L^2 - H^2) = 2a sinh(span / 2a); with u = span / 2a this reads
    // sinh(u) / u = 1 + excess.
    let level = ((length - rise) * (length + rise)).sqrt();
    let excess = (length - chord) * (length + chord) / (span * (level + span));
    let u = solve_sinhc_excess(excess)?;
    let scale = span / (2.0 * u);
    let mid = scale * (rise / length).atanh();
    Ok(CatenarySolution::new(
        scale,
        mid - 0.5 * span,
        span,
        rise,
        props,
    ))
}

/// Arc length of the catenary through both attachment points whose vertex lies
/// exactly `sag_limit` below the lower one.
pub fn max_length(cfg: &PlanarConfiguration, props: &CableProperties) -> Result<f64, CableError> {
    let depth = props.sag_limit;
    let rise = cfg.rise.abs();
    if cfg.span < DEGENERATE_SPAN {
        return Ok(rise + depth);
    }
    match sag_limited_scale(cfg.span, rise, depth)? {
        None => Ok(cfg.chord_length()),
        Some(scale) => {
            let near = (depth * (2.0 * scale + depth)).sqrt();
            let far = ((depth + rise) * (2.0 * scale + depth + rise)).sqrt();
            Ok((near + far).max(cfg.chord_length()))
        }
    }
}

/// The catenary realising [`max_length`]. `None` for the degenerate vertical
/// configuration and for the zero-sag level case, where the cable is the chord.
pub fn max_length_solution(
    cfg: &PlanarConfiguration,
    props: &CableProperties,
) -> Result<Option<CatenarySolution>, CableError> {
    if cfg.span < DEGENERATE_SPAN {
        return Ok(None);
    }
    let depth = props.sag_limit;
    let rise = cfg.rise.abs();
    let Some(scale) = sag_limited_scale(cfg.span, rise, depth)? else {
        return Ok(None);
    };
    let lower = -scale * acosh1p(depth / scale);
    let x_droid = if cfg.rise >= 0.0 {
        lower
    } else {
        -(lower + cfg.span)
    };
    Ok(Some(CatenarySolution::new(
        scale, x_droid, cfg.span, cfg.rise, props,
    )))
}

/// `T0 cosh(x / a)`, the tension magnitude at abscissa `x`.
pub fn tension_at(sol: &CatenarySolution, x: f64) -> Result<f64, CableError> {
    let slack = 1e-9 * (1.0 + sol.x_droid.abs() + sol.x_anchor.abs());
    if x < sol.x_droid - slack || x > sol.x_anchor + slack {
        return Err(CableError::OutOfDomain {
            x,
            x_droid: sol.x_droid,
            x_anchor: sol.x_anchor,
        });
    }
    Ok(sol.vertex_tension * (x / sol.scale).cosh())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CableBounds {
    pub l_min: f64,
    pub l_max: f64,
    pub l_now: f64,
}

impl CableBounds {
    pub fn satisfied(&self) -> bool {
        self.l_min <= self.l_now && self.l_now <= self.l_max
    }

    /// Signed distance to the nearest bound; negative when violated.
    pub fn margin(&self) -> f64 {
        (self.l_now - self.l_min).min(self.l_max - self.l_now)
    }

    /// Corridor violation measured in squared length (m²), zero when satisfied.
    pub fn squared_violation(&self) -> f64 {
        let l2 = self.l_now * self.l_now;
        (self.l_min * self.l_min - l2)
            .max(l2 - self.l_max * self.l_max)
            .max(0.0)
    }
}

/// Feasible released-length corridor for an end droid at `droid` hanging from
/// `anchor`. The attachment offset is applied to the droid position.
pub fn cable_bounds(
    droid: &Vector3<f64>,
    anchor: &Vector3<f64>,
    l_now: f64,
    props: &CableProperties,
) -> Result<CableBounds, CableError> {
    let attach = attachment_point(droid, props);
    let cfg = PlanarConfiguration::between(&attach, anchor);
    Ok(CableBounds {
        l_min: min_length(&attach, anchor),
        l_max: max_length(&cfg, props)?,
        l_now,
    })
}

pub fn attachment_point(droid: &Vector3<f64>, props: &CableProperties) -> Vector3<f64> {
    droid + Vector3::new(0.0, 0.0, props.attachment_offset)
}

/// `n` points along the cable in world x-z coordinates, droid end first.
pub fn sample_shape(sol: &CatenarySolution, n: usize) -> Vec<[f64; 2]> {
    let n = n.max(2);
    let dir = sol.placement.direction();
    let base = sol.height_at(sol.x_droid);
    let [x0, z0] = sol.placement.droid;
    (0..n)
        .map(|k| {
            if k == 0 {
                return sol.placement.droid;
            }
            if k == n - 1 {
                return sol.placement.anchor;
            }
            let x = sol.x_droid + sol.span() * k as f64 / (n - 1) as f64;
            [x0 + dir * (x - sol.x_droid), z0 + sol.height_at(x) - base]
        })
        .collect()
}

/// `acosh(1 + x)` without cancellation for small `x`.
fn acosh1p(x: f64) -> f64 {
    (x + (x * (2.0 + x)).sqrt()).ln_1p()
}

/// Solves `sinh(u) / u - 1 = excess` for `u > 0`.
fn solve_sinhc_excess(excess: f64) -> Result<f64, CableError> {
    if !(excess > 0.0) || !excess.is_finite() {
        return Err(CableError::Invalid("non-positive length excess"));
    }
    fn sinhc_m1(u: f64) -> f64 {
        if u < 0.1 {
            let u2 = u * u;
            u2 / 6.0 * (1.0 + u2 / 20.0 * (1.0 + u2 / 42.0 * (1.0 + u2 / 72.0)))
        } else {
            u.sinh() / u - 1.0
        }
    }
    fn sinhc_prime(u: f64) -> f64 {
        if u < 0.1 {
            let u2 = u * u;
            u / 3.0 * (1.0 + u2 / 10.0 * (1.0 + u2 / 28.0 * (1.0 + u2 / 54.0)))
        } else {
            (u * u.cosh() - u.sinh()) / (u * u)
        }
    }

    let f = |u: f64| sinhc_m1(u) - excess;
    let mut lo = 0.0;
    let mut hi = 1.0;
    while f(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e3 {
            return Err(CableError::NoConvergence(0));
        }
    }
    let guess = if excess < 1.0 {
        (6.0 * excess).sqrt()
    } else {
        0.5 * (lo + hi)
    };
    newton_bracketed(f, sinhc_prime, guess, lo, hi, false)
}

/// Catenary scale for a vertex `depth` below the lower point and the higher
/// point `rise` above it. `None` when the only solution is the straight chord.
fn sag_limited_scale(span: f64, rise: f64, depth: f64) -> Result<Option<f64>, CableError> {
    if depth <= 0.0 && rise <= 0.0 {
        return Ok(None);
    }
    let half_width = |scale: f64, c: f64| scale * acosh1p(c / scale);
    let half_width_ds = |scale: f64, c: f64| {
        if c <= 0.0 {
            return 0.0;
        }
        let x = c / scale;
        scale * (acosh1p(x) - (x / (2.0 + x)).sqrt())
    };
    // Work in s = ln(a): the residual is monotone and well scaled.
    let f = |s: f64| {
        let a = s.exp();
        half_width(a, depth) + half_width(a, depth + rise) - span
    };
    let df = |s: f64| {
        let a = s.exp();
        half_width_ds(a, depth) + half_width_ds(a, depth + rise)
    };
    let guess = {
        let c = depth.max(1e-12);
        ((span * span) / (8.0 * c)).max(1e-12).ln()
    };
    let (mut lo, mut hi) = (guess, guess);
    let mut expansions = 0;
    while f(lo) > 0.0 {
        lo -= 2.0;
        expansions += 1;
        if expansions > MAX_ITERATIONS {
            return Err(CableError::NoConvergence(expansions));
        }
    }
    while f(hi) < 0.0 {
        hi += 2.0;
        expansions += 1;
        if expansions > MAX_ITERATIONS {
            return Err(CableError::NoConvergence(expansions));
        }
    }
    let s = newton_bracketed(f, df, guess.clamp(lo, hi), lo, hi, true)?;
    Ok(Some(s.exp()))
}

/// Newton iteration safeguarded by a sign-changing bracket `[lo, hi]` with
/// `f(lo) <= 0 <= f(hi)`. Falls back to bisection whenever the Newton step
/// leaves the bracket.
fn newton_bracketed(
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    guess: f64,
    mut lo: f64,
    mut hi: f64,
    absolute: bool,
) -> Result<f64, CableError> {
    let mut x = guess;
    for _ in 0..MAX_ITERATIONS {
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = df(x);
        let mut next = x - fx / d;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        let step = (next - x).abs();
        let scale = if absolute { 1.0 } else { x.abs() };
        x = next;
        if step <= 4.0 * f64::EPSILON * scale || hi - lo <= 4.0 * f64::EPSILON * scale {
            return Ok(x);
        }
    }
    Err(CableError::NoConvergence(MAX_ITERATIONS))
}
