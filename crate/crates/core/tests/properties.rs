use std::sync::Arc;

use geoperturb::bump_perturb::{make_cutoffs, smoothstep, PerturbationFamily};
use geoperturb::chart_metric::{Euclidean, FlatTorus, MetricField};
use geoperturb::harness::fmt_f64;
use geoperturb::linalg::{unit, Vector};
use geoperturb::tubular::TubularChart;
use proptest::prelude::*;

proptest! {
    #[test]
    fn smoothstep_is_a_monotone_unit_ramp(a in -0.5f64..1.5, b in -0.5f64..1.5) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!((0.0..=1.0).contains(&smoothstep(lo)));
        prop_assert!(smoothstep(lo) <= smoothstep(hi));
    }

    #[test]
    fn profile_is_flat_then_decays(eta in 0.5f64..2.0, k in 0.1f64..0.9, t in -4.0f64..4.0) {
        let eps = k * eta / 7.0;
        let c = make_cutoffs(0.1, eta, eps, 0.4 * eps).unwrap();
        if t.abs() <= eta + 2.0 * eps {
            prop_assert_eq!(c.profile_shape(t), 1.0);
        }
        if t.abs() >= eta + 4.0 * eps {
            prop_assert_eq!(c.profile_shape(t), 0.0);
        }
        prop_assert!(c.profile_shape_deriv(t) * t <= 0.0);
    }

    #[test]
    fn alpha_lives_in_the_shell(eta in 0.5f64..2.0, t in -5.0f64..5.0, r in 0.0f64..0.2) {
        let eps = 0.1 * eta;
        let c = make_cutoffs(0.1, eta, eps, 0.04 * eta).unwrap();
        let a = c.alpha(t, r);
        prop_assert!((0.0..=1.0).contains(&a));
        if t.abs() <= eta || t.abs() >= eta + 6.0 * eps || r >= 2.0 * c.delta {
            prop_assert_eq!(a, 0.0);
        }
    }

    #[test]
    fn torus_reduction_is_idempotent(x in prop::collection::vec(-20.0f64..20.0, 3)) {
        let t = FlatTorus::new(vec![2.0, 2.5, 3.5]).unwrap();
        let d = t.domain();
        let once = d.reduce(&Vector::from_vec(x.clone())).unwrap();
        prop_assert!(d.contains(&once));
        prop_assert_eq!(d.reduce(&once).unwrap(), once.clone());
        prop_assert!(d.chart_distance(&once, &Vector::from_vec(x)) < 1e-9);
    }

    #[test]
    fn floats_round_trip(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        let back: f64 = fmt_f64(v).parse().unwrap();
        prop_assert!(back == v || (v == 0.0 && back == 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn perturbed_metric_is_untouched_far_from_the_segment(x in prop::collection::vec(-3.0f64..3.0, 3)) {
        let field: Arc<dyn MetricField> = Arc::new(Euclidean::new(3, 5.0).unwrap());
        let p = Vector::zeros(3);
        let chart = TubularChart::build(field.clone(), &p, &unit(3, 0), &unit(3, 1), 1.0, 0.14).unwrap();
        let fam = PerturbationFamily::new(chart, make_cutoffs(0.1, 1.0, 0.14, 0.05).unwrap(), 1e-4).unwrap();
        let x = Vector::from_vec(x);
        // outside the cylinder of radius eps around [-2 eta, 2 eta] x {0}
        let off_axis = (x[1] * x[1] + x[2] * x[2]).sqrt();
        prop_assume!(off_axis >= 0.14 || x[0].abs() >= 2.0);
        prop_assert_eq!(fam.metric_at(1e-4, &x).unwrap(), field.eval(&x));
    }
}
