//! Convex combinations of metrics in geodesic parallel form keep the `t`-lines
//! geodesic. Checked numerically on a grid.

use serde::Serialize;

use crate::chart_metric::{christoffel_from_derivatives, metric_derivatives_fd, ChartDomain, ClosureMetric, FdOrder};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

const FORM_TOL: f64 = 1e-10;
const PASS_TOL: f64 = 1e-6;
const FD_STEP: f64 = 1e-4;

/// Sample points `(t, x_1, ...)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityGrid {
    pub points: Vec<Vector>,
}

impl ConvexityGrid {
    /// Tensor grid with `per_axis` points on each axis of `[lower, upper]`.
    pub fn tensor(lower: &[f64], upper: &[f64], per_axis: usize) -> Self {
        let n = lower.len();
        let per = per_axis.max(2);
        let total = per.pow(n as u32);
        let points = (0..total)
            .map(|mut k| {
                Vector::from_fn(n, |i, _| {
                    let j = k % per;
                    k /= per;
                    lower[i] + (upper[i] - lower[i]) * j as f64 / (per - 1) as f64
                })
            })
            .collect();
        Self { points }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityReport {
    pub max_residual: f64,
    pub worst_point: Vec<f64>,
    pub points: usize,
    pub pass: bool,
}

fn form_defect(g: &Matrix) -> f64 {
    let n = g.nrows();
    let mut d = (g[(0, 0)] - 1.0).abs();
    for i in 1..n {
        d = d.max(g[(0, i)].abs()).max(g[(i, 0)].abs());
    }
    d
}

/// Residual of the `t`-lines under `alpha g0 + (1 - alpha) g1`, after checking
/// that both metrics are in parallel form (`dt^2` block, no cross terms).
pub fn parallel_convexity_check<G0, G1, A>(g0: G0, g1: G1, alpha: A, grid: &ConvexityGrid) -> Result<ConvexityReport>
where
    G0: Fn(&Vector) -> Matrix + Send + Sync + 'static,
    G1: Fn(&Vector) -> Matrix + Send + Sync + 'static,
    A: Fn(&Vector) -> f64 + Send + Sync + 'static,
{
    for x in &grid.points {
        for g in [g0(x), g1(x)] {
            let defect = form_defect(&g);
            if defect > FORM_TOL {
                return Err(Error::NotParallelForm { point: x.iter().cloned().collect(), defect });
            }
        }
    }
    parallel_convexity_residual(g0, g1, alpha, grid)
}

/// The same residual without the form check.
pub fn parallel_convexity_residual<G0, G1, A>(g0: G0, g1: G1, alpha: A, grid: &ConvexityGrid) -> Result<ConvexityReport>
where
    G0: Fn(&Vector) -> Matrix + Send + Sync + 'static,
    G1: Fn(&Vector) -> Matrix + Send + Sync + 'static,
    A: Fn(&Vector) -> f64 + Send + Sync + 'static,
{
    let Some(first) = grid.points.first() else {
        return Err(Error::Config("empty convexity grid".into()));
    };
    let n = first.len();
    let domain = ChartDomain::new(vec![-1e6; n], vec![1e6; n], vec![None; n])?;
    let mixed = ClosureMetric::new(domain, move |x| {
        let a = alpha(x);
        g0(x) * a + g1(x) * (1.0 - a)
    });
    let e0 = Vector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 });
    let mut report = ConvexityReport { max_residual: 0.0, worst_point: first.iter().cloned().collect(), points: 0, pass: true };
    for x in &grid.points {
        let g = crate::chart_metric::MetricField::eval(&mixed, x);
        let dg = metric_derivatives_fd(&mixed, x, FD_STEP, FdOrder::Fourth)?;
        let gamma = christoffel_from_derivatives(x, &g, &dg)?;
        let r = gamma.contract(&e0, &e0).norm();
        if r > report.max_residual {
            report.max_residual = r;
            report.worst_point = x.iter().cloned().collect();
        }
        report.points += 1;
    }
    report.pass = report.max_residual <= PASS_TOL;
    Ok(report)
}
