//! Detection, per-point disentangling and re-detection for a list of closed
//! geodesics, following the bookkeeping of the genericity argument.

use std::sync::Arc;

use serde::Serialize;

use super::ClosedGeodesic;
use crate::bump_perturb::PerturbedMetric;
use crate::chart_metric::{curve_length, CurveDiscrete, MetricField};
use crate::error::{Error, Result};
use crate::geodesic_flow::{default_step, integrate_geodesic};
use crate::intersect::{
    disentangle_with, double_points, pairwise_intersections, splice_displaced, CompositeMetric, DisentangleOptions, Track,
};
use crate::linalg::Vector;

const MAX_ETA_HALVINGS: usize = 6;
/// Events closer than this (chart distance) are the same point.
const SAME_POINT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    /// Nodes per loop used for detection after resampling.
    pub nodes: usize,
    pub disentangle: DisentangleOptions,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self { nodes: 4096, disentangle: DisentangleOptions { nodes: 4001, residual_nodes: 401, ..Default::default() } }
    }
}

/// A double or intersection point with the loops and parameters through it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DipPoint {
    pub point: Vec<f64>,
    /// `(loop index, parameter)`.
    pub passes: Vec<(usize, f64)>,
    pub offsets: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub audited: usize,
    pub before_events: usize,
    pub dip: Vec<DipPoint>,
    pub eta: f64,
    pub eps: f64,
    pub eta_halvings: usize,
    pub after_events: usize,
    /// Smallest distance between distinct loops, or between far-apart pieces of one loop.
    pub after_clearance: f64,
    pub lengths_before: Vec<f64>,
    pub lengths_after: Vec<f64>,
    pub max_length_change: f64,
    #[serde(skip)]
    pub metric: Option<CompositeMetric>,
    #[serde(skip)]
    pub loops_after: Vec<CurveDiscrete>,
}

fn detect_all<M: MetricField + ?Sized>(field: &M, loops: &[CurveDiscrete], tol: f64) -> Result<(Vec<(Vec<f64>, Vec<(usize, f64)>)>, f64)> {
    let mut events = Vec::new();
    let mut clearance = f64::INFINITY;
    for (i, c) in loops.iter().enumerate() {
        let r = double_points(c, field, tol)?;
        if let Some(cl) = r.clearance {
            clearance = clearance.min(cl);
        }
        for e in r.events {
            events.push((e.point, vec![(i, e.param_a), (i, e.param_b)]));
        }
    }
    for i in 0..loops.len() {
        for j in i + 1..loops.len() {
            let r = match pairwise_intersections(&loops[i], &loops[j], field, tol) {
                Ok(r) => r,
                // the same geometric class appears twice; nothing to separate
                Err(Error::GeometricallyEquivalent { .. }) => continue,
                Err(e) => return Err(e),
            };
            if let Some(cl) = r.clearance {
                clearance = clearance.min(cl);
            }
            for e in r.events {
                events.push((e.point, vec![(i, e.param_a), (j, e.param_b)]));
            }
        }
    }
    Ok((events, clearance))
}

fn merge_points<M: MetricField + ?Sized>(field: &M, events: Vec<(Vec<f64>, Vec<(usize, f64)>)>) -> Vec<DipPoint> {
    let dom = field.domain();
    let mut out: Vec<DipPoint> = Vec::new();
    for (point, passes) in events {
        let p = Vector::from_vec(point.clone());
        let slot = out.iter_mut().find(|d| dom.chart_distance(&Vector::from_vec(d.point.clone()), &p) < SAME_POINT);
        let slot = match slot {
            Some(s) => s,
            None => {
                out.push(DipPoint { point, passes: Vec::new(), offsets: Vec::new() });
                out.last_mut().unwrap()
            }
        };
        for (l, u) in passes {
            if !slot.passes.iter().any(|&(l2, u2)| l2 == l && (u2 - u).abs() < SAME_POINT) {
                slot.passes.push((l, u));
            }
        }
    }
    out
}

pub fn theorem1_pipeline(
    field: Arc<dyn MetricField>,
    loops: &[ClosedGeodesic],
    a: f64,
    eta: f64,
    eps: f64,
    s_budget: f64,
) -> Result<PipelineReport> {
    theorem1_pipeline_with(field, loops, a, eta, eps, s_budget, &PipelineOptions::default())
}

/// Separates all double points and mutual intersections of the given closed
/// geodesics of length at most `a` by local perturbations in disjoint balls
/// `B_p(2 eta)`, and re-audits the result.
pub fn theorem1_pipeline_with(
    field: Arc<dyn MetricField>,
    loops: &[ClosedGeodesic],
    a: f64,
    eta: f64,
    eps: f64,
    s_budget: f64,
    opts: &PipelineOptions,
) -> Result<PipelineReport> {
    let dom = field.domain().clone();
    let audited: Vec<ClosedGeodesic> =
        loops.iter().filter(|c| c.length <= a * (1.0 + 1e-12)).map(|c| c.resample(field.as_ref(), opts.nodes)).collect::<Result<_>>()?;
    let curves: Vec<CurveDiscrete> = audited.iter().map(|c| c.curve().clone()).collect();
    let spacing = curves.iter().map(|c| c.max_spacing()).fold(0.0, f64::max);
    let tol = 2.0 * spacing;
    let lengths_before: Vec<f64> = curves.iter().map(|c| curve_length(field.as_ref(), c).map(|m| m.length)).collect::<Result<_>>()?;

    let (events, _) = detect_all(field.as_ref(), &curves, tol)?;
    let before_events = events.len();
    let mut dip = merge_points(field.as_ref(), events);

    let (mut eta, mut eps) = (eta, eps);
    let mut halvings = 0;
    let far_apart = |eta: f64| {
        dip.iter().enumerate().all(|(i, p)| {
            dip.iter()
                .skip(i + 1)
                .all(|q| dom.chart_distance(&Vector::from_vec(p.point.clone()), &Vector::from_vec(q.point.clone())) > 4.0 * eta)
        })
    };
    while !far_apart(eta) {
        halvings += 1;
        if halvings > MAX_ETA_HALVINGS {
            return Err(Error::BallOverlapUnresolvable { halvings: MAX_ETA_HALVINGS });
        }
        eta *= 0.5;
        eps *= 0.5;
    }

    let mut parts: Vec<PerturbedMetric> = Vec::new();
    let mut after = curves.clone();
    for d in dip.iter_mut() {
        let p = Vector::from_vec(d.point.clone());
        let mut segments = Vec::with_capacity(d.passes.len());
        for &(l, u) in &d.passes {
            let (_, v) = Track::new(&curves[l]).eval(u);
            let g = field.eval(&p);
            let v = &v / crate::linalg::norm(&g, &v);
            segments.push(integrate_geodesic(field.as_ref(), &p, &v, (-2.0 * eta, 2.0 * eta), default_step(eta))?);
        }
        let r = disentangle_with(field.clone(), &p, &segments, eta, eps, s_budget, &opts.disentangle)?;
        for (j, &(l, u)) in d.passes.iter().enumerate() {
            after[l] = splice_displaced(&after[l], u, &r.families[j], r.offsets[j])?;
        }
        d.offsets = r.offsets.clone();
        parts.extend(r.metric.parts().iter().cloned());
    }
    let metric = CompositeMetric::new(field.clone(), parts);

    let (after_events, after_clearance) = detect_all(&metric, &after, tol)?;
    let lengths_after: Vec<f64> = after.iter().map(|c| curve_length(&metric, c).map(|m| m.length)).collect::<Result<_>>()?;
    let max_length_change = lengths_before.iter().zip(&lengths_after).map(|(b, a)| (b - a).abs()).fold(0.0, f64::max);
    Ok(PipelineReport {
        audited: audited.len(),
        before_events,
        dip,
        eta,
        eps,
        eta_halvings: halvings,
        after_events: after_events.len(),
        after_clearance,
        lengths_before,
        lengths_after,
        max_length_change,
        metric: Some(metric),
        loops_after: after,
    })
}
