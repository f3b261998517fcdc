use std::f64::consts::PI;
use std::sync::Arc;

use super::*;
use crate::chart_metric::{EllipsoidChart, FlatTorus, SphereChart};
use crate::linalg::{max_abs_diff, unit, vector};

fn ellipsoid() -> EllipsoidChart {
    EllipsoidChart::new(1.0, 1.1, 1.3).unwrap()
}

/// Perimeter of the ellipse with semi-axes `p, q` by the trapezoid rule,
/// which is spectrally accurate for periodic integrands.
fn ellipse_perimeter(p: f64, q: f64) -> f64 {
    let m = 20_000;
    let h = 2.0 * PI / m as f64;
    (0..m).map(|k| (p * p * (k as f64 * h).sin().powi(2) + q * q * (k as f64 * h).cos().powi(2)).sqrt()).sum::<f64>() * h
}

/// The principal section orthogonal to `axis`, refined to a closed geodesic.
fn equator(e: &EllipsoidChart, axis: usize) -> ClosedGeodesic {
    let mut pts = e.principal_section(axis, DEFAULT_LOOP_NODES);
    let lattice = &pts[DEFAULT_LOOP_NODES] - &pts[0];
    pts.pop();
    refine_closed_geodesic(e, pts, &lattice, 20).unwrap().0
}

#[test]
fn flat_torus_loops_have_period_length() {
    let torus = FlatTorus::new(vec![2.0, 3.0]).unwrap();
    let found = find_closed_geodesics(&torus, &[1, 0], 4, 1).unwrap();
    assert!(found.failures.is_empty(), "{:?}", found.failures);
    assert_eq!(found.geodesics.len(), 4);
    for cg in &found.geodesics {
        assert!((cg.length - 2.0).abs() < 1e-9, "{}", cg.length);
        assert!(cg.residual() <= 1e-6 && cg.closure_gap <= 1e-6);
        assert!(cg.prime);
    }
    for energies in &found.energies {
        assert!(energies.windows(2).all(|w| w[1] <= w[0]), "descent not monotone");
    }
}

#[test]
fn doubled_class_is_an_iterate() {
    let torus = FlatTorus::new(vec![2.0, 3.0]).unwrap();
    let found = find_closed_geodesics(&torus, &[2, 0], 2, 5).unwrap();
    for cg in &found.geodesics {
        assert!((cg.length - 4.0).abs() < 1e-9);
        assert_eq!(cg.multiplicity, 2);
        assert!(!cg.prime);
    }
}

#[test]
fn search_rejects_bad_classes() {
    let torus = FlatTorus::new(vec![2.0, 3.0]).unwrap();
    assert!(matches!(find_closed_geodesics(&torus, &[0, 0], 1, 0), Err(Error::Config(_))));
    assert!(matches!(find_closed_geodesics(&ellipsoid(), &[1, 0], 1, 0), Err(Error::Config(_))));
}

#[test]
fn dedup_is_idempotent() {
    let torus = FlatTorus::new(vec![2.0, 3.0]).unwrap();
    let mut list = find_closed_geodesics(&torus, &[1, 0], 3, 2).unwrap().geodesics;
    let copy = list[0].clone();
    // the same loop started half way round
    let (x0, v0) = copy.start();
    let shifted = close_geodesic(&torus, &(x0 + v0 * 1.0), v0, 2.0, &copy.lattice, 256).unwrap();
    list.push(copy);
    list.push(shifted);
    let once = dedup_geodesics(&torus, list);
    assert_eq!(once.len(), 3);
    let twice = dedup_geodesics(&torus, once.clone());
    assert_eq!(twice.len(), once.len());
    for (a, b) in once.iter().zip(&twice) {
        assert_eq!(a.length, b.length);
        assert_eq!(a.start(), b.start());
    }
}

#[test]
fn ellipsoid_equators_match_quadrature() {
    let e = ellipsoid();
    let [a, b, c] = e.axes();
    let want = [ellipse_perimeter(b, c), ellipse_perimeter(a, c), ellipse_perimeter(a, b)];
    for axis in 0..3 {
        let cg = equator(&e, axis);
        assert!((cg.length - want[axis]).abs() < 1e-4, "axis {axis}: {} vs {}", cg.length, want[axis]);
        assert!(cg.residual() <= 1e-6);
    }
}

#[test]
fn flat_loop_is_degenerate() {
    let torus = FlatTorus::new(vec![2.0, 3.0]).unwrap();
    let cg = close_geodesic(&torus, &vector(&[0.3, 0.4]), &unit(2, 0), 2.0, &vector(&[2.0, 0.0]), 64).unwrap();
    let pd = linearized_poincare(&torus, &cg).unwrap();
    let want = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
    assert!(max_abs_diff(&pd.monodromy, &want) < 1e-12);
    assert!(!pd.nondegenerate);
}

#[test]
fn great_circle_monodromy_is_identity() {
    let sphere = SphereChart::new(0.2).unwrap();
    let cg = close_geodesic(&sphere, &vector(&[PI / 2.0, 0.0]), &unit(2, 1), 2.0 * PI, &vector(&[0.0, 2.0 * PI]), 512).unwrap();
    assert!((cg.length - 2.0 * PI).abs() < 1e-9);
    let pd = linearized_poincare(&sphere, &cg).unwrap();
    assert!(max_abs_diff(&pd.monodromy, &Matrix::identity(2, 2)) < 1e-6, "{}", pd.monodromy);
    assert!(!pd.nondegenerate);
}

#[test]
fn shortest_equator_monodromy_matches_return_map() {
    let e = ellipsoid();
    let cg = equator(&e, 2);
    let pd = linearized_poincare(&e, &cg).unwrap();
    assert!(pd.nondegenerate, "{:?}", pd.eigenvalues);
    assert!((pd.determinant - 1.0).abs() < 1e-5);
    let fd = return_map_fd(&e, &cg, 200, 1e-5, 3).unwrap();
    assert!(max_abs_diff(&fd, &pd.monodromy) < 1e-3, "{fd} vs {}", pd.monodromy);
    // spectrum closed under inversion and conjugation
    for l in &pd.eigenvalues {
        let inv = Complex::new(1.0, 0.0) / l.conj();
        assert!(pd.eigenvalues.iter().any(|m| (m - inv).norm() < 1e-4));
    }
    // the doubled loop has the squared monodromy
    let twice = linearized_poincare(&e, &cg.iterate(&e, 2).unwrap()).unwrap();
    assert!(max_abs_diff(&twice.monodromy, &(&pd.monodromy * &pd.monodromy)) < 1e-4);
}

#[test]
fn torus_audit_is_all_degenerate() {
    let torus = FlatTorus::new(vec![2.0, 3.0]).unwrap();
    let loops = vec![
        close_geodesic(&torus, &vector(&[0.0, 0.5]), &unit(2, 0), 2.0, &vector(&[2.0, 0.0]), 64).unwrap(),
        close_geodesic(&torus, &vector(&[0.5, 0.0]), &unit(2, 1), 3.0, &vector(&[0.0, 3.0]), 64).unwrap(),
    ];
    let report = bumpy_audit(&torus, 4.5, &loops).unwrap();
    assert_eq!(report.classes, 2);
    // (1,0) and its double, and (0,1)
    assert_eq!(report.entries.len(), 3);
    assert!(report.entries.iter().all(|e| !e.nondegenerate));
    assert!(!report.all_nondegenerate);
}

#[test]
fn ellipsoid_audit_below_second_equator_has_one_class() {
    let e = ellipsoid();
    let eqs: Vec<ClosedGeodesic> = (0..3).map(|k| equator(&e, k)).collect();
    let mut lengths: Vec<f64> = eqs.iter().map(|c| c.length).collect();
    lengths.sort_by(f64::total_cmp);
    let report = bumpy_audit(&e, 0.5 * (lengths[0] + lengths[1]), &eqs).unwrap();
    assert_eq!(report.classes, 1);
    assert!(report.entries[0].nondegenerate);
}

fn torus_cross() -> (Arc<dyn MetricField>, Vec<ClosedGeodesic>) {
    let torus: Arc<dyn MetricField> = Arc::new(FlatTorus::new(vec![2.0, 2.5, 3.5]).unwrap());
    let o = Vector::zeros(3);
    let loops = vec![
        close_geodesic(torus.as_ref(), &o, &unit(3, 0), 2.0, &vector(&[2.0, 0.0, 0.0]), 256).unwrap(),
        close_geodesic(torus.as_ref(), &o, &unit(3, 1), 2.5, &vector(&[0.0, 2.5, 0.0]), 256).unwrap(),
    ];
    (torus, loops)
}

#[test]
fn pipeline_separates_crossing_loops() {
    let (torus, loops) = torus_cross();
    let r = theorem1_pipeline(torus.clone(), &loops, 3.0, 0.3, 0.04, 0.018).unwrap();
    assert_eq!(r.audited, 2);
    assert!(r.before_events >= 1);
    assert_eq!(r.dip.len(), 1);
    assert_eq!(r.after_events, 0);
    assert!(r.after_clearance > 0.0);
    assert!(r.max_length_change <= 1e-6, "{}", r.max_length_change);

    // unchanged outside the ball of radius 2 eta around the crossing
    let metric = r.metric.as_ref().unwrap();
    let p = Vector::from_vec(r.dip[0].point.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..2000 {
        let x = Vector::from_fn(3, |i, _| rng.gen_range(0.0..[2.0, 2.5, 3.5][i]));
        if torus.domain().chart_distance(&x, &p) > 2.0 * r.eta {
            assert_eq!(metric.eval(&x), torus.eval(&x));
        }
    }

    // same classes, same lengths
    let before = bumpy_audit(torus.as_ref(), 3.0, &loops).unwrap();
    assert_eq!(before.classes, 2);
    for (b, a) in r.lengths_before.iter().zip(&r.lengths_after) {
        assert!((b - a).abs() <= 1e-6);
    }
}

#[test]
fn pipeline_without_crossings_is_identity() {
    let torus: Arc<dyn MetricField> = Arc::new(FlatTorus::new(vec![2.0, 2.5, 3.5]).unwrap());
    let loops = vec![
        close_geodesic(torus.as_ref(), &Vector::zeros(3), &unit(3, 0), 2.0, &vector(&[2.0, 0.0, 0.0]), 256).unwrap(),
        close_geodesic(torus.as_ref(), &vector(&[0.0, 1.0, 1.0]), &unit(3, 0), 2.0, &vector(&[2.0, 0.0, 0.0]), 256).unwrap(),
    ];
    let r = theorem1_pipeline(torus, &loops, 3.0, 0.3, 0.04, 0.018).unwrap();
    assert_eq!(r.before_events, 0);
    assert!(r.dip.is_empty());
    assert!(r.metric.unwrap().parts().is_empty());
}

#[test]
fn pipeline_on_a_surface_needs_three_dimensions() {
    let e: Arc<dyn MetricField> = Arc::new(ellipsoid());
    let eqs: Vec<ClosedGeodesic> = (0..3).map(|k| equator(&ellipsoid(), k)).collect();
    let err = theorem1_pipeline(e, &eqs, 8.0, 0.3, 0.04, 0.01).unwrap_err();
    assert!(matches!(err, Error::DimensionTooLow { .. }), "{err:?}");
}
