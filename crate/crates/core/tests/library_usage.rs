use std::sync::Arc;

use geoperturb::bump_perturb::{make_cutoffs, PerturbationFamily, PerturbedMetric};
use geoperturb::chart_metric::{Euclidean, MetricField};
use geoperturb::geodesic_flow::geodesic_residual;
use geoperturb::linalg::{unit, Vector};
use geoperturb::tubular::TubularChart;

#[test]
fn displaced_segment_is_a_geodesic_of_the_new_metric_only() -> geoperturb::Result<()> {
    let field: Arc<dyn MetricField> = Arc::new(Euclidean::new(3, 5.0)?);
    let chart = TubularChart::build(field.clone(), &Vector::zeros(3), &unit(3, 0), &unit(3, 1), 1.0, 0.14)?;
    let family = Arc::new(PerturbationFamily::new(chart, make_cutoffs(0.1, 1.0, 0.14, 0.05)?, 1e-4)?);
    let moved = family.displaced_geodesic(1e-4, 400)?;
    let g_s = PerturbedMetric::new(family.clone(), 1e-4)?;
    assert!(geodesic_residual(&g_s, &moved.curve)? < 1e-4);
    assert!(geodesic_residual(field.as_ref(), &moved.curve)? > 1e-2);
    Ok(())
}
