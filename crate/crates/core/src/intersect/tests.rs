use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI, SQRT_2};
use std::sync::Arc;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::chart_metric::{Euclidean, FlatTorus, SphereChart};
use crate::geodesic_flow::{integrate_geodesic, GeodesicSegment};
use crate::linalg::{unit, vector, Matrix};
use crate::tubular::TubularChart;

fn closed_curve<F: Fn(f64) -> Vector>(f: F, m: usize) -> CurveDiscrete {
    let params: Vec<f64> = (0..m).map(|i| 2.0 * PI * i as f64 / (m - 1) as f64).collect();
    let nodes = params.iter().map(|&u| f(u)).collect();
    CurveDiscrete::new(nodes, params, true).unwrap()
}

fn lemniscate(m: usize) -> CurveDiscrete {
    closed_curve(
        |u| {
            let d = 1.0 + u.sin().powi(2);
            vector(&[u.cos() / d, u.sin() * u.cos() / d])
        },
        m,
    )
}

fn circle(m: usize, phase: f64) -> CurveDiscrete {
    closed_curve(|u| vector(&[(u + phase).cos(), (u + phase).sin()]), m)
}

/// Random closed curve with a few decaying Fourier modes.
fn fourier_curve(seed: u64, m: usize) -> CurveDiscrete {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coef: Vec<[f64; 4]> = (1..=4).map(|_| [0; 4].map(|_| rng.gen_range(-1.0..1.0))).collect();
    closed_curve(
        move |u| {
            let mut x = vector(&[0.0, 0.0]);
            for (k, c) in coef.iter().enumerate() {
                let kf = (k + 1) as f64;
                let (s, co) = (kf * u).sin_cos();
                x[0] += (c[0] * co + c[1] * s) / kf;
                x[1] += (c[2] * co + c[3] * s) / kf;
            }
            x
        },
        m,
    )
}

/// Great circle with unit normal `n` in sphere-chart coordinates, longitude
/// unwrapped so the curve closes up to one period.
fn great_circle(n: Vector3<f64>, m: usize) -> CurveDiscrete {
    let e1 = Vector3::new(0.0, 1.0, 0.0);
    let e2 = n.cross(&e1).normalize();
    let raw: Vec<Vector> = (0..m)
        .map(|i| {
            let u = 2.0 * PI * i as f64 / (m - 1) as f64;
            let x = e1 * u.cos() + e2 * u.sin();
            vector(&[x.z.acos(), x.y.atan2(x.x)])
        })
        .collect();
    let mut nodes = vec![raw[0].clone()];
    for w in raw.windows(2) {
        let prev = nodes.last().unwrap().clone();
        let mut d = w[1][1] - w[0][1];
        d -= 2.0 * PI * (d / (2.0 * PI)).round();
        nodes.push(vector(&[w[1][0], prev[1] + d]));
    }
    let params = (0..m).map(|i| 2.0 * PI * i as f64 / (m - 1) as f64).collect();
    CurveDiscrete::new(nodes, params, true).unwrap()
}

fn euclid(dim: usize) -> Arc<dyn MetricField> {
    Arc::new(Euclidean::new(dim, 10.0).unwrap())
}

#[test]
fn lemniscate_has_one_double_point_at_origin() {
    let c = lemniscate(4000);
    let r = double_points(&c, euclid(2).as_ref(), 1e-2).unwrap();
    assert_eq!(r.events.len(), 1, "{:?}", r.events);
    let e = &r.events[0];
    assert!(e.point.iter().all(|x| x.abs() < 1e-8), "{:?}", e.point);
    assert!((e.param_a - FRAC_PI_2).abs() < 1e-8 && (e.param_b - 3.0 * FRAC_PI_2).abs() < 1e-8);
    assert!((e.angle - FRAC_PI_2).abs() < 1e-6);
    assert!(r.clearance.is_none());
}

#[test]
fn circle_has_no_double_points() {
    let r = double_points(&circle(2000, 0.0), euclid(2).as_ref(), 1e-2).unwrap();
    assert!(r.events.is_empty());
    // points a quarter turn apart are sqrt 2 apart
    let c = r.clearance.unwrap();
    assert!((c - SQRT_2).abs() < 1e-3, "{c}");
}

#[test]
fn hashed_scan_matches_exhaustive_on_random_curves() {
    let field = euclid(2);
    for seed in 0..20 {
        let c = fourier_curve(seed, 6000);
        let mut counts = Vec::new();
        for tol in [1e-2, 5e-3] {
            let fast = double_points_with(&c, field.as_ref(), tol, Scan::Hashed).unwrap();
            let slow = double_points_with(&c, field.as_ref(), tol, Scan::Exhaustive).unwrap();
            assert_eq!(fast.events.len(), slow.events.len(), "seed {seed} tol {tol}");
            for (a, b) in fast.events.iter().zip(&slow.events) {
                assert!((a.param_a - b.param_a).abs() < 1e-9 && (a.param_b - b.param_b).abs() < 1e-9, "seed {seed}");
            }
            counts.push(fast.events.len());
        }
        assert_eq!(counts[0], counts[1], "seed {seed}: count changed under tolerance halving");
    }
}

#[test]
fn spacing_must_be_below_tolerance() {
    let err = double_points(&circle(50, 0.0), euclid(2).as_ref(), 1e-2).unwrap_err();
    assert!(matches!(err, Error::BoundViolation(_)), "{err:?}");
}

#[test]
fn orthogonal_great_circles_cross_twice_at_right_angles() {
    let sphere = SphereChart::new(0.3).unwrap();
    let a = great_circle(Vector3::new(1.0, 0.0, 1.0).normalize(), 20000);
    let b = great_circle(Vector3::new(-1.0, 0.0, 1.0).normalize(), 20000);
    let r = pairwise_intersections(&a, &b, &sphere, 1e-3).unwrap();
    assert_eq!(r.events.len(), 2, "{:?}", r.events);
    for e in &r.events {
        assert!((e.angle - FRAC_PI_2).abs() < 1e-6, "{}", e.angle);
        // crossings at (0, +-1, 0): colatitude pi/2, longitude +-pi/2
        assert!((e.point[0] - FRAC_PI_2).abs() < 1e-6);
        assert!(((e.point[1] - FRAC_PI_2).abs() < 1e-6) || ((e.point[1] - 3.0 * FRAC_PI_2).abs() < 1e-6), "{:?}", e.point);
    }
}

#[test]
fn parallel_torus_circles_are_disjoint() {
    let torus = FlatTorus::new(vec![1.0, 1.0]).unwrap();
    let line = |h: f64| {
        let params: Vec<f64> = (0..2001).map(|i| i as f64 / 2000.0).collect();
        let nodes = params.iter().map(|&u| vector(&[u, h])).collect();
        CurveDiscrete::new(nodes, params, true).unwrap()
    };
    let r = pairwise_intersections(&line(0.2), &line(0.6), &torus, 1e-3).unwrap();
    assert!(r.events.is_empty());
    assert!((r.clearance.unwrap() - 0.4).abs() < 1e-12);
}

#[test]
fn shifted_parametrization_is_equivalent() {
    let err = pairwise_intersections(&circle(2000, 0.0), &circle(2000, 0.37), euclid(2).as_ref(), 1e-2).unwrap_err();
    assert!(matches!(err, Error::GeometricallyEquivalent { .. }), "{err:?}");
}

#[test]
fn tangential_contact_is_refused() {
    // two circles of radius 1 touching at (1, 0)
    let a = circle(4000, 0.0);
    let b = closed_curve(|u| vector(&[2.0 + (u + PI).cos(), (u + PI).sin()]), 4000);
    let err = pairwise_intersections(&a, &b, euclid(2).as_ref(), 1e-2).unwrap_err();
    assert!(matches!(err, Error::NonTransversalContact { .. }), "{err:?}");
}

fn line_through_angle_audit(vs: &[Vector], ws: &[Vector]) -> f64 {
    let to3 = |v: &Vector| Vector3::new(v[0], v[1], v[2]);
    let mut worst = f64::INFINITY;
    for j in 0..vs.len() {
        for k in j + 1..vs.len() {
            let nj = to3(&vs[j]).cross(&to3(&ws[j]));
            let nk = to3(&vs[k]).cross(&to3(&ws[k]));
            let line = nj.cross(&nk);
            assert!(line.norm() > 1e-6, "planes {j} and {k} coincide");
            for v in vs {
                let c = line.normalize().dot(&to3(v).normalize()).abs();
                worst = worst.min(c.min(1.0).acos());
            }
        }
    }
    worst
}

#[test]
fn plane_seeds_in_three_dimensions_avoid_the_directions() {
    let vs = vec![unit(3, 0), unit(3, 1), unit(3, 2)];
    let ws = choose_plane_seeds(&Vector::zeros(3), &vs, euclid(3).as_ref(), 3).unwrap();
    for (v, w) in vs.iter().zip(&ws) {
        assert!(v.dot(w).abs() < 1e-12);
        assert!((w.norm() - 1.0).abs() < 1e-12);
    }
    assert!(line_through_angle_audit(&vs, &ws) > ANGLE_FLOOR);
}

#[test]
fn plane_seeds_in_four_dimensions_meet_only_at_p() {
    let vs = vec![unit(4, 0), unit(4, 1)];
    let ws = choose_plane_seeds(&Vector::zeros(4), &vs, euclid(4).as_ref(), 4).unwrap();
    let m = Matrix::from_columns(&[vs[0].clone(), ws[0].clone(), vs[1].clone(), ws[1].clone()]);
    assert!(m.determinant().abs() > 1e-3);
    // the direct-sum choice passes the same test
    let m = Matrix::from_columns(&[vs[0].clone(), unit(4, 2), vs[1].clone(), unit(4, 3)]);
    assert!((m.determinant().abs() - 1.0).abs() < 1e-12);
}

#[test]
fn plane_seeds_need_three_dimensions() {
    let err = choose_plane_seeds(&Vector::zeros(2), &[unit(2, 0), unit(2, 1)], euclid(2).as_ref(), 2).unwrap_err();
    assert!(matches!(err, Error::DimensionTooLow { dim: 2, .. }));
}

#[test]
fn plane_seeds_reject_parallel_directions() {
    let vs = vec![unit(3, 0), -unit(3, 0)];
    assert!(choose_plane_seeds(&Vector::zeros(3), &vs, euclid(3).as_ref(), 3).is_err());
}

/// Closed-form `(s*, t*, t)` for displaced straight lines in R^3.
fn line_oracle(vj: &Vector, wj: &Vector, vk: &Vector, wk: &Vector, s_j: f64) -> (f64, f64, f64) {
    let m = Matrix::from_columns(&[vj.clone(), -vk, -wk]);
    let sol = m.lu().solve(&(-wj * s_j)).unwrap();
    (sol[2], sol[1], sol[0])
}

fn chart(v: &Vector, w: &Vector) -> TubularChart {
    TubularChart::build(euclid(3), &Vector::zeros(3), v, w, 1.0, 0.14).unwrap()
}

#[test]
fn forbidden_offsets_match_line_intersection() {
    let (vj, wj) = (unit(3, 0), unit(3, 1));
    let vk = vector(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0]);
    let wk = unit(3, 2);
    let fo = forbidden_offsets(&chart(&vj, &wj), &chart(&vk, &wk), 0.05).unwrap();
    let got = fo.at(0.01).unwrap();
    let want = line_oracle(&vj, &wj, &vk, &wk, 0.01);
    assert!(got.0.abs() < 1e-9 && want.0.abs() < 1e-12);
    assert!((got.1 - 0.01 * SQRT_2).abs() < 1e-9 && (got.2 - 0.01).abs() < 1e-9, "{got:?}");

    // a generic pair
    let vk = vector(&[1.0, 1.0, 1.0]).normalize();
    let (a, b) = (vector(&[1.0, -1.0, 0.0]).normalize(), vector(&[1.0, 1.0, -2.0]).normalize());
    let wk = a * 0.7f64.cos() + b * 0.7f64.sin();
    let fo = forbidden_offsets(&chart(&vj, &wj), &chart(&vk, &wk), 0.05).unwrap();
    for s_j in [0.003, 0.01, 0.02, 0.05] {
        let got = fo.at(s_j).unwrap();
        let want = line_oracle(&vj, &wj, &vk, &wk, s_j);
        assert!((got.0 - want.0).abs() < 1e-9, "{got:?} vs {want:?}");
        assert!((got.1 - want.1).abs() < 1e-9 && (got.2 - want.2).abs() < 1e-9);
    }
    let zero = fo.at(0.0).unwrap();
    assert!(zero.0.abs() < 1e-12 && zero.1.abs() < 1e-12 && zero.2.abs() < 1e-12);
}

#[test]
fn intersection_curve_is_monotone_on_the_j_side() {
    let pts = trace_plane_intersection(
        &chart(&unit(3, 0), &unit(3, 1)),
        &chart(&vector(&[1.0, 1.0, 1.0]).normalize(), &vector(&[1.0, -1.0, 0.0]).normalize()),
        0.1,
    )
    .unwrap();
    assert_eq!(pts.len(), 41);
    assert!(pts.windows(2).all(|w| w[1].x_jk > w[0].x_jk) || pts.windows(2).all(|w| w[1].x_jk < w[0].x_jk));
}

#[test]
fn coincident_planes_have_no_intersection_curve() {
    let err = forbidden_offsets(&chart(&unit(3, 0), &unit(3, 1)), &chart(&unit(3, 1), &unit(3, 0)), 0.05).unwrap_err();
    assert!(matches!(err, Error::NoIntersectionCurve), "{err:?}");
}

fn axis_segments(field: &Arc<dyn MetricField>, dirs: &[Vector]) -> Vec<GeodesicSegment> {
    dirs.iter().map(|v| integrate_geodesic(field.as_ref(), &Vector::zeros(3), v, (-2.0, 2.0), 0.005).unwrap()).collect()
}

#[test]
fn two_lines_are_pushed_apart() {
    let field = euclid(3);
    let segs = axis_segments(&field, &[unit(3, 0), vector(&[1.0, 1.0, 0.0]).normalize()]);
    let opts = DisentangleOptions { nodes: 4001, residual_nodes: 401, ..Default::default() };
    let r = disentangle_with(field, &Vector::zeros(3), &segs, 1.0, 0.14, 0.05, &opts).unwrap();
    assert!(r.clearance > 0.0);
    assert_eq!(r.post_check_events, 0);
}

#[test]
fn three_axes_are_pushed_apart() {
    let field = euclid(3);
    let dirs = [unit(3, 0), unit(3, 1), unit(3, 2)];
    let segs = axis_segments(&field, &dirs);
    let s_budget = 0.05;
    let r = disentangle(field.clone(), &Vector::zeros(3), &segs, 1.0, 0.14, s_budget).unwrap();
    assert!(r.clearance > 10.0 * r.node_spacing, "clearance {} spacing {}", r.clearance, r.node_spacing);
    assert_eq!(r.post_check_events, 0);
    assert!(r.offsets.iter().all(|&s| s > 0.0 && s < s_budget));
    let margin = s_budget.min(r.delta) / 72.0;
    for j in 0..3 {
        for k in 0..3 {
            assert_eq!(r.forbidden[j][k].is_some(), j != k);
            if let Some(star) = r.forbidden[j][k] {
                assert!((r.offsets[k] - star).abs() >= margin * (1.0 - 1e-12) || j > k);
            }
        }
    }
    // tails unchanged
    let eta = 1.0;
    for (trace, v) in r.traces.iter().zip(&dirs) {
        for (x, &t) in trace.nodes.iter().zip(&trace.params) {
            if t.abs() >= eta + 4.0 * 0.14 {
                assert!((x - v * t).amax() < 1e-12, "t = {t}");
            }
        }
    }
    // the metric is the base wherever no alpha is positive
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut outside = 0;
    for _ in 0..10_000 {
        let x = Vector::from_fn(3, |_, _| rng.gen_range(-1.8..1.8));
        let mut inside = false;
        for fam in &r.families {
            if let Some(l) = fam.locate_alpha(&x, 0.0).unwrap() {
                inside |= l.alpha > 0.0;
            }
        }
        if !inside {
            outside += 1;
            assert_eq!(r.metric.eval(&x), Matrix::identity(3, 3));
        }
    }
    assert!(outside > 9000);
}

#[test]
fn disentangle_needs_three_dimensions() {
    let field = euclid(2);
    let segs: Vec<GeodesicSegment> = [unit(2, 0), unit(2, 1)]
        .iter()
        .map(|v| integrate_geodesic(field.as_ref(), &Vector::zeros(2), v, (-2.0, 2.0), 0.005).unwrap())
        .collect();
    let err = disentangle(field, &Vector::zeros(2), &segs, 1.0, 0.14, 0.05).unwrap_err();
    assert!(matches!(err, Error::DimensionTooLow { .. }));
}

/// Figure-eight in the plane z = 0 of R^3 made of two straight strokes through
/// the origin joined by 270 degree arcs; unit speed.
fn bowtie(a: f64, m: usize) -> (CurveDiscrete, [f64; 2]) {
    let r = SQRT_2 * a;
    let line = 2.0 * SQRT_2 * a;
    let arc = 1.5 * PI * r;
    let total = 2.0 * (line + arc);
    let d1 = vector(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0]);
    let d2 = vector(&[-FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0]);
    let point = |u: f64| -> Vector {
        let u = u.rem_euclid(total);
        // arc from `start` with initial heading angle `h0`, turning clockwise
        // for `turn = 1` and counterclockwise for `turn = -1`
        let arc_at = |start: Vector, h0: f64, turn: f64, l: f64| -> Vector {
            let centre = &start + vector(&[h0.sin(), -h0.cos(), 0.0]) * (r * turn);
            let phi = h0 + turn * (FRAC_PI_2 - l / r);
            centre + vector(&[phi.cos(), phi.sin(), 0.0]) * r
        };
        if u < line {
            vector(&[-a, -a, 0.0]) + &d1 * u
        } else if u < line + arc {
            arc_at(vector(&[a, a, 0.0]), PI / 4.0, 1.0, u - line)
        } else if u < 2.0 * line + arc {
            vector(&[a, -a, 0.0]) + &d2 * (u - line - arc)
        } else {
            arc_at(vector(&[-a, a, 0.0]), 3.0 * PI / 4.0, -1.0, u - 2.0 * line - arc)
        }
    };
    let params: Vec<f64> = (0..m).map(|i| total * i as f64 / (m - 1) as f64).collect();
    let nodes = params.iter().map(|&u| point(u)).collect();
    (CurveDiscrete::new(nodes, params, true).unwrap(), [line / 2.0, 1.5 * line + arc])
}

#[test]
fn self_crossing_is_resolved() {
    let field = euclid(3);
    let (c, centres) = bowtie(2.0, 40001);
    let tol = 2e-3;
    let before = double_points(&c, field.as_ref(), tol).unwrap();
    assert_eq!(before.events.len(), 1);
    let e = &before.events[0];
    assert!((e.param_a - centres[0]).abs() < 1e-8 && (e.param_b - centres[1]).abs() < 1e-8);

    let track = Track::new(&c);
    let segs: Vec<GeodesicSegment> = centres
        .iter()
        .map(|&u| integrate_geodesic(field.as_ref(), &Vector::zeros(3), &track.eval(u).1.normalize(), (-2.0, 2.0), 0.005).unwrap())
        .collect();
    let opts = DisentangleOptions { nodes: 2001, residual_nodes: 401, ..Default::default() };
    let r = disentangle_with(field.clone(), &Vector::zeros(3), &segs, 1.0, 0.14, 0.05, &opts).unwrap();
    let mut after = c.clone();
    for (j, &u) in centres.iter().enumerate() {
        after = splice_displaced(&after, u, &r.families[j], r.offsets[j]).unwrap();
    }
    let report = double_points(&after, &r.metric, tol).unwrap();
    assert!(report.events.is_empty(), "{:?}", report.events);
    assert!(report.clearance.unwrap() > 0.0);
}
