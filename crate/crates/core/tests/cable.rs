//! Catenary statics against independent root finders and quadrature.

use nalgebra::Vector3;
use proptest::prelude::*;
use tetherplan::cable::{
    self, cable_bounds, max_length, max_length_solution, sample_shape, solve_catenary,
    CableProperties, CableState, PlanarConfiguration,
};
use tetherplan::harness::oracles::{
    bisect, catenary_length_by_quadrature, catenary_residuals, level_max_length,
};

fn props(sag: f64) -> CableProperties {
    CableProperties {
        sag_limit: sag,
        ..CableProperties::default()
    }
}

/// Longest cable whose vertex sits `sag` below the lower end, found by
/// bisection on the scale `a` so that the two vertex-to-end spans add up to
/// the horizontal separation.
fn sag_limited_length(span: f64, rise: f64, sag: f64) -> f64 {
    let (near, far) = (sag, sag + rise.abs());
    let reach = |a: f64, h: f64| a * (1.0 + h / a).acosh();
    let a = bisect(|a| reach(a, near) + reach(a, far) - span, 1e-6, 1e6).unwrap();
    a * (reach(a, near) / a).sinh() + a * (reach(a, far) / a).sinh()
}

#[test]
fn level_span_scale_matches_bisection_and_quadrature() {
    let p = props(0.1);
    let cfg = PlanarConfiguration::new(2.0, 0.0).unwrap();
    let sol = solve_catenary(&cfg, 2.5, &p).unwrap();
    let a = bisect(|a| 2.0 * a * (1.0 / a).sinh() - 2.5, 0.05, 100.0).unwrap();
    assert!((sol.scale - a).abs() / a < 1e-9, "{} vs {a}", sol.scale);
    let q = catenary_length_by_quadrature(&sol, 10_000);
    assert!((q - 2.5).abs() / 2.5 < 1e-6);
    assert_eq!(sol.state, CableState::Slack);
    assert!((sol.x_droid + sol.x_anchor).abs() < 1e-12);
}

#[test]
fn inclined_span_satisfies_endpoint_equations() {
    let cfg = PlanarConfiguration::new(2.0, 1.0).unwrap();
    let sol = solve_catenary(&cfg, 2.4, &props(0.1)).unwrap();
    for r in catenary_residuals(&sol, &cfg, 2.4) {
        assert!(r < 1e-9, "residual {r}");
    }
}

#[test]
fn nearly_taut_cable_degenerates_to_chord() {
    let cfg = PlanarConfiguration::new(2.0, 0.0).unwrap();
    let sol = solve_catenary(&cfg, 2.0000001, &props(0.1)).unwrap();
    assert!(sol.max_sag_below_chord() < 1e-3);
    assert!(sol.scale > 100.0);
}

#[test]
fn level_max_length_matches_symmetric_oracle() {
    let cfg = PlanarConfiguration::new(2.0, 0.0).unwrap();
    let l = max_length(&cfg, &props(0.1)).unwrap();
    let reference = level_max_length(2.0, 0.1).unwrap();
    assert!((l - reference).abs() < 1e-9, "{l} vs {reference}");
    let sol = max_length_solution(&cfg, &props(0.1)).unwrap().unwrap();
    let q = catenary_length_by_quadrature(&sol, 10_000);
    assert!((q - l).abs() / l < 1e-6);
}

#[test]
fn vertex_tension_and_endpoint_force_balance() {
    let p = props(0.1);
    let mu = p.weight_per_length();
    let cfg = PlanarConfiguration::new(2.0, 0.0).unwrap();
    let sol = solve_catenary(&cfg, 2.5, &p).unwrap();
    assert!((sol.tension_at(0.0).unwrap() - sol.vertex_tension).abs() < 1e-15);
    let unit_slope = sol.scale * 1f64.asinh();
    let t = sol.tension_at(unit_slope).unwrap();
    assert!((t - sol.vertex_tension * 2f64.sqrt()).abs() < 1e-12 * t);

    // Vertical components of the endpoint tensions carry the cable weight.
    let t_b = sol.tension_at(sol.x_anchor).unwrap();
    let t_a = sol.tension_at(sol.x_droid).unwrap();
    let sin_b = sol.slope_at(sol.x_anchor).atan().sin();
    let sin_a = -sol.slope_at(sol.x_droid).atan().sin();
    let balance = t_b * sin_b + t_a * sin_a;
    assert!(
        (balance - mu * 2.5).abs() < 1e-12,
        "{balance} vs {}",
        mu * 2.5
    );
}

#[test]
fn corridor_bounds_examples() {
    let p = props(0.1);
    let droid = Vector3::new(2.0, 0.0, 0.0);
    let anchor = Vector3::new(0.0, 0.0, 2.5);
    let b = cable_bounds(&droid, &anchor, 3.3, &p).unwrap();
    assert!((b.l_min - 10.25f64.sqrt()).abs() < 1e-12);
    let l_max = sag_limited_length(2.0, 2.5, 0.1);
    assert!((b.l_max - l_max).abs() < 1e-9, "{} vs {l_max}", b.l_max);
    assert_eq!(b.satisfied(), b.l_min <= 3.3 && 3.3 <= l_max);

    let below = cable_bounds(
        &Vector3::new(1.0, 0.0, 0.5),
        &Vector3::new(1.0, 0.0, 2.5),
        2.05,
        &p,
    )
    .unwrap();
    assert!((below.l_min - 2.0).abs() < 1e-12);
    assert!((below.l_max - 2.1).abs() < 1e-12);
    assert!(below.satisfied());

    let taut = cable_bounds(&Vector3::new(3.0, 0.0, 0.0), &Vector3::zeros(), 2.9, &p).unwrap();
    assert!(!taut.satisfied());
    assert!(taut.squared_violation() > 0.0);
}

#[test]
fn sampled_shape_converges_to_arc_length() {
    let cfg = PlanarConfiguration::new(3.0, -1.2).unwrap();
    let sol = solve_catenary(&cfg, 4.1, &props(0.1)).unwrap();
    let pts = sample_shape(&sol, 10_000);
    let polyline: f64 = pts
        .windows(2)
        .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
        .sum();
    assert!((polyline - sol.length).abs() / sol.length < 1e-5);
    assert_eq!(sample_shape(&sol, 2).len(), 2);
}

fn slack_instance() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.1f64..5.0, -2.0f64..2.0, 1e-3f64..3.0)
        .prop_map(|(span, rise, extra)| (span, rise, span.hypot(rise) + extra))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn solution_reproduces_geometry((span, rise, length) in slack_instance()) {
        let cfg = PlanarConfiguration::new(span, rise).unwrap();
        let sol = solve_catenary(&cfg, length, &props(0.1)).unwrap();
        for r in catenary_residuals(&sol, &cfg, length) {
            prop_assert!(r < 1e-9);
        }
        prop_assert!((sol.span() - span).abs() < 1e-9 * length.max(1.0));
        prop_assert!(sol.max_sag_below_chord() >= 0.0);
    }

    #[test]
    fn horizontal_tension_is_constant((span, rise, length) in slack_instance(), f in 0.0f64..1.0) {
        let cfg = PlanarConfiguration::new(span, rise).unwrap();
        let sol = solve_catenary(&cfg, length, &props(0.1)).unwrap();
        let x = sol.x_droid + f * sol.span();
        let t = sol.tension_at(x).unwrap();
        let horizontal = t * sol.slope_at(x).atan().cos();
        prop_assert!((horizontal - sol.vertex_tension).abs() <= 1e-10 * t);
    }

    #[test]
    fn max_length_grows_with_sag_limit(span in 0.1f64..5.0, rise in -2.0f64..2.0, d in 0.0f64..1.0, dd in 1e-3f64..0.5) {
        let cfg = PlanarConfiguration::new(span, rise).unwrap();
        let short = max_length(&cfg, &props(d)).unwrap();
        let long = max_length(&cfg, &props(d + dd)).unwrap();
        prop_assert!(short >= cfg.chord_length() - 1e-12);
        prop_assert!(long > short);
    }

    #[test]
    fn max_length_matches_independent_oracle(span in 0.1f64..5.0, rise in -2.0f64..2.0, d in 1e-3f64..1.0) {
        let cfg = PlanarConfiguration::new(span, rise).unwrap();
        let l = max_length(&cfg, &props(d)).unwrap();
        let reference = sag_limited_length(span, rise, d);
        prop_assert!((l - reference).abs() <= 1e-8 * reference, "{} vs {}", l, reference);
    }

    #[test]
    fn corridor_flag_matches_interval(x in -4.0f64..4.0, z in -2.0f64..2.0, l in 0.0f64..8.0) {
        let droid = Vector3::new(x, 0.3, z);
        let anchor = Vector3::new(-2.0, 0.0, 2.5);
        let b = cable_bounds(&droid, &anchor, l, &props(0.1)).unwrap();
        prop_assert!(b.l_min <= b.l_max + 1e-12);
        prop_assert_eq!(b.satisfied(), b.l_min <= l && l <= b.l_max);
        prop_assert_eq!(b.squared_violation() == 0.0, b.satisfied());
        prop_assert!((b.l_min - cable::min_length(&droid, &anchor)).abs() < 1e-15);
    }
}
