//! Pushing `N` geodesic segments through a common point apart by perturbing
//! the metric in disjoint pieces of a shell around the point.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{pairwise_intersections, ANGLE_FLOOR};
use crate::bump_perturb::{make_cutoffs, PerturbationFamily, PerturbedMetric};
use crate::chart_metric::{ChartDomain, Christoffel, CurveDiscrete, MetricField};
use crate::error::{Error, Result};
use crate::geodesic_flow::GeodesicSegment;
use crate::linalg::{gram_schmidt, inner, Matrix, Vector};
use crate::tubular::TubularChart;

const SEED_ATTEMPTS: u64 = 50;
/// Seed sets scoring above this are taken without trying further rotations.
const SEED_TARGET: f64 = 0.2;
const MAX_EPS_HALVINGS: usize = 6;
const TRACE_SAMPLES: usize = 20;
const NEWTON_TOL: f64 = 1e-13;

/// `g^(s)` of several families with pairwise disjoint supports, and `g`
/// everywhere else.
#[derive(Clone)]
pub struct CompositeMetric {
    base: Arc<dyn MetricField>,
    parts: Vec<PerturbedMetric>,
}

impl std::fmt::Debug for CompositeMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CompositeMetric").field("parts", &self.parts.len()).finish()
    }
}

impl CompositeMetric {
    pub fn new(base: Arc<dyn MetricField>, parts: Vec<PerturbedMetric>) -> Self {
        Self { base, parts }
    }

    pub fn base(&self) -> &Arc<dyn MetricField> {
        &self.base
    }

    pub fn parts(&self) -> &[PerturbedMetric] {
        &self.parts
    }

    /// The part whose `alpha` is positive at `x`, if any.
    pub fn active_part(&self, x: &Vector) -> Result<Option<&PerturbedMetric>> {
        for part in &self.parts {
            if let Some(l) = part.family().locate_alpha(x, 0.0)? {
                if l.alpha > 0.0 {
                    return Ok(Some(part));
                }
            }
        }
        Ok(None)
    }
}

impl MetricField for CompositeMetric {
    fn domain(&self) -> &ChartDomain {
        self.base.domain()
    }
    fn eval(&self, x: &Vector) -> Matrix {
        match self.active_part(x) {
            Ok(Some(part)) => part.eval(x),
            Ok(None) => self.base.eval(x),
            Err(_) => Matrix::from_element(x.len(), x.len(), f64::NAN),
        }
    }
    fn injectivity_bound(&self) -> f64 {
        self.base.injectivity_bound()
    }
    fn christoffel_at(&self, x: &Vector) -> Result<Christoffel> {
        for part in &self.parts {
            if part.touches(x)? {
                return part.christoffel_at(x);
            }
        }
        self.base.christoffel_at(x)
    }
}

/// Cholesky factor `L` of `g_p` (`g = L L^T`); `L^T x` are orthonormal coordinates.
fn orthonormal_frame(g: &Matrix) -> Result<Matrix> {
    g.clone().cholesky().map(|c| c.l()).ok_or_else(|| Error::DegenerateMetric { point: Vec::new(), min_eigenvalue: f64::NAN })
}

fn angle_between_lines(a: &Vector, b: &Vector) -> f64 {
    let c = a.dot(b).abs() / (a.norm() * b.norm());
    c.min(1.0).acos()
}

/// Orthonormal basis of the complement of `v` (orthonormal coordinates).
fn complement_basis(v: &Vector) -> Vec<Vector> {
    let n = v.len();
    let mut seeds = vec![v.normalize()];
    seeds.extend((0..n).map(|i| Vector::from_fn(n, |k, _| if k == i { 1.0 } else { 0.0 })));
    let basis = gram_schmidt(&Matrix::identity(n, n), &seeds);
    basis.into_iter().skip(1).take(n - 1).collect()
}

fn plane_normal3(v: &Vector, w: &Vector) -> Vector {
    let a = nalgebra::Vector3::new(v[0], v[1], v[2]);
    let b = nalgebra::Vector3::new(w[0], w[1], w[2]);
    let c = a.cross(&b);
    Vector::from_column_slice(c.as_slice())
}

/// Worst angle (3D) between a plane-intersection line and any `+-v_m`, or
/// between two plane normals.
fn score3(vs: &[Vector], ws: &[Vector]) -> f64 {
    let normals: Vec<Vector> = vs.iter().zip(ws).map(|(v, w)| plane_normal3(v, w)).collect();
    let mut worst = std::f64::consts::FRAC_PI_2;
    for j in 0..vs.len() {
        for k in j + 1..vs.len() {
            let line = plane_normal3(&normals[j], &normals[k]);
            let distinct = line.norm() / (normals[j].norm() * normals[k].norm());
            if distinct < ANGLE_FLOOR.sin() {
                return 0.0;
            }
            for v in vs {
                worst = worst.min(angle_between_lines(&line, v));
            }
        }
    }
    worst
}

/// Smallest principal-angle sine between the planes `span(v_j, w_j)`.
fn score_high(vs: &[Vector], ws: &[Vector]) -> f64 {
    let bases: Vec<Matrix> = vs
        .iter()
        .zip(ws)
        .map(|(v, w)| {
            let q = gram_schmidt(&Matrix::identity(v.len(), v.len()), &[v.clone(), w.clone()]);
            Matrix::from_columns(&q)
        })
        .collect();
    let mut worst: f64 = 1.0;
    for j in 0..bases.len() {
        for k in j + 1..bases.len() {
            let sv = (bases[j].transpose() * &bases[k]).svd(false, false).singular_values;
            let c = sv.max().min(1.0);
            worst = worst.min((1.0 - c * c).max(0.0).sqrt());
        }
    }
    worst
}

/// Unit vectors `w_j`, `g_p`-orthogonal to `v_j`, whose planes `span(v_j, w_j)`
/// meet pairwise only at `p` (`dim >= 4`) or meet in lines away from every
/// `+-v_m` (`dim = 3`).
pub fn choose_plane_seeds<M: MetricField + ?Sized>(p: &Vector, vs: &[Vector], field: &M, dim: usize) -> Result<Vec<Vector>> {
    if dim < 3 {
        return Err(Error::DimensionTooLow { dim, need: 3 });
    }
    let g = field.eval(p);
    let l = orthonormal_frame(&g)?;
    let lt = l.transpose();
    let lt_inv = lt.clone().try_inverse().ok_or_else(|| Error::SingularMetric { point: p.iter().cloned().collect() })?;
    let us: Vec<Vector> = vs.iter().map(|v| (&lt * v).normalize()).collect();
    for j in 0..us.len() {
        for k in j + 1..us.len() {
            if angle_between_lines(&us[j], &us[k]) <= ANGLE_FLOOR {
                return Err(Error::BoundViolation(format!("directions {j} and {k} are (anti)parallel")));
            }
        }
    }
    let complements: Vec<Vec<Vector>> = us.iter().map(complement_basis).collect();
    let mut best: Option<(f64, Vec<Vector>)> = None;
    for attempt in 0..SEED_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(attempt);
        let ws: Vec<Vector> = complements
            .iter()
            .enumerate()
            .map(|(j, basis)| {
                if attempt == 0 {
                    // spread the seeds over the complements deterministically
                    let k = (basis.len() - 1 - j % basis.len()) % basis.len();
                    let phase = 0.5 + j as f64 * 0.61803398875;
                    let other = &basis[(k + 1) % basis.len()];
                    (&basis[k] * phase.cos() + other * phase.sin()).normalize()
                } else {
                    let c: Vec<f64> = (0..basis.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let w = basis.iter().zip(&c).fold(Vector::zeros(dim), |acc, (b, c)| acc + b * *c);
                    w.normalize()
                }
            })
            .collect();
        let score = if dim == 3 { score3(&us, &ws) } else { score_high(&us, &ws) };
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, ws));
        }
        if score > SEED_TARGET {
            break;
        }
    }
    let floor = if dim == 3 { ANGLE_FLOOR } else { ANGLE_FLOOR.sin() };
    match best {
        Some((score, ws)) if score > floor => Ok(ws
            .iter()
            .map(|w| {
                let x = &lt_inv * w;
                let len = inner(&g, &x, &x).sqrt();
                x / len
            })
            .collect()),
        _ => Err(Error::SeedSearchFailed { attempts: SEED_ATTEMPTS as usize }),
    }
}

/// One sample of the curve `P_j cap P_k`: tube coordinates in both charts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlaneCurvePoint {
    pub u: f64,
    pub t_jk: f64,
    pub x_jk: f64,
    pub t_kj: f64,
    pub x_kj: f64,
}

fn surface_point(chart: &TubularChart, t: f64, x: f64) -> Result<(Vector, Matrix)> {
    let n = chart.dim();
    let mut y = Vector::zeros(n - 1);
    y[0] = x;
    Ok((chart.forward(t, &y)?, chart.jacobian(t, &y)?))
}

fn check_pair(chart_j: &TubularChart, chart_k: &TubularChart) -> Result<()> {
    if chart_j.dim() != 3 {
        return Err(Error::Config("plane intersection curves are traced in dimension 3 only".into()));
    }
    let gap = chart_j.field().domain().chart_distance(chart_j.p(), chart_k.p());
    if gap > 1e-9 {
        return Err(Error::Config(format!("charts have different base points (gap {gap})")));
    }
    Ok(())
}

/// Direction of `span(v_j, w_j) cap span(v_k, w_k)` in chart coordinates.
fn intersection_direction(chart_j: &TubularChart, chart_k: &TubularChart) -> Result<Vector> {
    let m = Matrix::from_columns(&[chart_j.v().clone(), chart_j.w().clone(), -chart_k.v(), -chart_k.w()]);
    let svd = (m.transpose() * &m).symmetric_eigen();
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| svd.eigenvalues[a].total_cmp(&svd.eigenvalues[b]));
    let scale = svd.eigenvalues[order[3]].max(1e-300);
    if svd.eigenvalues[order[1]] / scale < 1e-12 {
        return Err(Error::NoIntersectionCurve);
    }
    let c = svd.eigenvectors.column(order[0]);
    let d = chart_j.v() * c[0] + chart_j.w() * c[1];
    if d.norm() < 1e-12 {
        return Err(Error::NoIntersectionCurve);
    }
    Ok(d.normalize())
}

/// Samples `P_j cap P_k` on `|u| <= half_width`, where `u` is the chart
/// coordinate along the intersection direction at `p`.
pub fn trace_plane_intersection(chart_j: &TubularChart, chart_k: &TubularChart, half_width: f64) -> Result<Vec<PlaneCurvePoint>> {
    check_pair(chart_j, chart_k)?;
    let d = intersection_direction(chart_j, chart_k)?;
    let dom = chart_j.field().domain();
    let p = chart_j.p().clone();
    let solve = |u: f64, start: [f64; 4]| -> Result<[f64; 4]> {
        let mut z = start;
        for _ in 0..40 {
            let (xj, jj) = surface_point(chart_j, z[0], z[1])?;
            let (xk, jk) = surface_point(chart_k, z[2], z[3])?;
            let r3 = -dom.displacement(&xj, &xk);
            let along = dom.displacement(&p, &xj).dot(&d) - u;
            let mut jac = Matrix::zeros(4, 4);
            for i in 0..3 {
                jac[(i, 0)] = jj[(i, 0)];
                jac[(i, 1)] = jj[(i, 1)];
                jac[(i, 2)] = -jk[(i, 0)];
                jac[(i, 3)] = -jk[(i, 1)];
            }
            jac[(3, 0)] = jj.column(0).dot(&d);
            jac[(3, 1)] = jj.column(1).dot(&d);
            let rhs = Vector::from_column_slice(&[r3[0], r3[1], r3[2], along]);
            let step = jac.lu().solve(&rhs).ok_or(Error::NoIntersectionCurve)?;
            for i in 0..4 {
                z[i] -= step[i];
            }
            if step.amax() < NEWTON_TOL {
                return Ok(z);
            }
        }
        Err(Error::NoConvergence(format!("plane intersection point at u = {u}")))
    };
    let du = half_width / TRACE_SAMPLES as f64;
    let mut forward = vec![[0.0; 4]];
    let mut backward = Vec::new();
    for (sign, out) in [(1.0, &mut forward), (-1.0, &mut backward)] {
        let mut z = [0.0; 4];
        for i in 1..=TRACE_SAMPLES {
            z = solve(sign * du * i as f64, z)?;
            out.push(z);
        }
    }
    backward.reverse();
    let all: Vec<[f64; 4]> = backward.into_iter().chain(forward).collect();
    let pts: Vec<PlaneCurvePoint> = all
        .iter()
        .enumerate()
        .map(|(i, z)| PlaneCurvePoint { u: -half_width + du * i as f64, t_jk: z[0], x_jk: z[1], t_kj: z[2], x_kj: z[3] })
        .collect();
    // (t_jk, x_jk) must be strictly monotone so that each offset s_j picks one
    // point of the curve; on the k side a constant coordinate is allowed
    let diffs = |f: &dyn Fn(&PlaneCurvePoint) -> f64| -> Vec<f64> { pts.windows(2).map(|w| f(&w[1]) - f(&w[0])).collect() };
    let scale = half_width * 1e-12;
    let strict = |d: &[f64]| d.iter().all(|&x| x > 0.0) || d.iter().all(|&x| x < 0.0);
    let weak = |d: &[f64]| d.iter().all(|&x| x > -scale) || d.iter().all(|&x| x < scale);
    let checks: [(&str, &dyn Fn(&PlaneCurvePoint) -> f64, bool); 4] =
        [("t_jk", &|q| q.t_jk, true), ("x_jk", &|q| q.x_jk, true), ("t_kj", &|q| q.t_kj, false), ("x_kj", &|q| q.x_kj, false)];
    for (name, f, need_strict) in checks {
        let d = diffs(f);
        let ok = if need_strict { strict(&d) } else { weak(&d) };
        if !ok {
            return Err(Error::MonotonicityLost(format!("{name} along the plane intersection curve")));
        }
    }
    Ok(pts)
}

/// Collision data of a pair of displaced planes.
#[derive(Debug, Clone)]
pub struct ForbiddenOffset {
    chart_j: TubularChart,
    chart_k: TubularChart,
    pub curve: Vec<PlaneCurvePoint>,
}

impl ForbiddenOffset {
    /// `(s*_jk, t*_jk, t)`: segment `j` displaced by `s_j` meets segment `k`
    /// displaced by `s*_jk` at `c_j(t) = c_k(t*_jk)`.
    pub fn at(&self, s_j: f64) -> Result<(f64, f64, f64)> {
        // start from the traced curve, interpolating in x_jk
        let c = &self.curve;
        let k = c
            .windows(2)
            .position(|w| (w[0].x_jk - s_j) * (w[1].x_jk - s_j) <= 0.0)
            .ok_or_else(|| Error::BoundViolation(format!("offset {s_j} lies outside the traced window")))?;
        let (a, b) = (c[k], c[k + 1]);
        let lam = if b.x_jk != a.x_jk { (s_j - a.x_jk) / (b.x_jk - a.x_jk) } else { 0.0 };
        let mut t = a.t_jk + lam * (b.t_jk - a.t_jk);
        let mut tk = a.t_kj + lam * (b.t_kj - a.t_kj);
        let mut y = a.x_kj + lam * (b.x_kj - a.x_kj);
        let dom = self.chart_j.field().domain();
        for _ in 0..40 {
            let (xj, jj) = surface_point(&self.chart_j, t, s_j)?;
            let (xk, jk) = surface_point(&self.chart_k, tk, y)?;
            let r = -dom.displacement(&xj, &xk);
            let jac = Matrix::from_columns(&[jj.column(0).into_owned(), -jk.column(0), -jk.column(1)]);
            let step = jac.lu().solve(&r).ok_or(Error::NoIntersectionCurve)?;
            t -= step[0];
            tk -= step[1];
            y -= step[2];
            if step.amax() < NEWTON_TOL {
                return Ok((y, tk, t));
            }
        }
        Err(Error::NoConvergence(format!("forbidden offset for s_j = {s_j}")))
    }
}

/// Traces `P_j cap P_k` wide enough for offsets up to `s_budget` and returns
/// the map `s_j -> s*_jk`.
pub fn forbidden_offsets(chart_j: &TubularChart, chart_k: &TubularChart, s_budget: f64) -> Result<ForbiddenOffset> {
    check_pair(chart_j, chart_k)?;
    let d = intersection_direction(chart_j, chart_k)?;
    // |x_jk| grows like |u| times the w_j-component of d; make the window
    // reach x_jk = 1.5 s_budget
    let g = chart_j.field().eval(chart_j.p());
    let wcomp = inner(&g, &d, chart_j.w()).abs();
    let reach = if wcomp > 1e-12 { 1.5 * s_budget / wcomp } else { 0.0 };
    let half = reach.clamp(1e-6, chart_j.eta());
    let curve = trace_plane_intersection(chart_j, chart_k, half)?;
    Ok(ForbiddenOffset { chart_j: chart_j.clone(), chart_k: chart_k.clone(), curve })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisentangleOptions {
    /// Radial extent of the bump; defaults to `0.4 eps`.
    pub delta: Option<f64>,
    pub theta: f64,
    /// Nodes of the dense traces on `[-2 eta, 2 eta]` used for clearance.
    pub nodes: usize,
    /// Nodes of the segments whose residual is measured under the new metric.
    pub residual_nodes: usize,
}

impl Default for DisentangleOptions {
    fn default() -> Self {
        Self { delta: None, theta: 0.1, nodes: 16001, residual_nodes: 1601 }
    }
}

#[derive(Clone)]
pub struct DisentangleResult {
    pub metric: CompositeMetric,
    pub families: Vec<Arc<PerturbationFamily>>,
    /// Displaced segments with residuals under `metric`.
    pub segments: Vec<GeodesicSegment>,
    /// The same segments traced densely.
    pub traces: Vec<CurveDiscrete>,
    pub offsets: Vec<f64>,
    /// `forbidden[j][k] = s*_jk(s_j)` (dimension 3 only).
    pub forbidden: Vec<Vec<Option<f64>>>,
    pub clearance: f64,
    pub eps: f64,
    pub delta: f64,
    pub node_spacing: f64,
    /// Events found by re-running pairwise detection on the displaced segments.
    pub post_check_events: usize,
}

impl std::fmt::Debug for DisentangleResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DisentangleResult")
            .field("offsets", &self.offsets)
            .field("forbidden", &self.forbidden)
            .field("clearance", &self.clearance)
            .field("eps", &self.eps)
            .field("delta", &self.delta)
            .finish()
    }
}

/// Whether the pieces of the tubes inside the shell `eta <= |t| <= eta + 7 eps`
/// avoid each other, by probing sample points of each piece in every other chart.
fn shell_pieces_disjoint(charts: &[TubularChart], eta: f64, eps: f64) -> Result<bool> {
    let n = charts[0].dim();
    let mut dirs: Vec<Vector> = Vec::new();
    dirs.push(Vector::zeros(n - 1));
    for i in 0..n - 1 {
        for sgn in [1.0, -1.0] {
            let mut e = Vector::zeros(n - 1);
            e[i] = sgn * 0.99 * eps;
            dirs.push(e);
        }
    }
    for (j, cj) in charts.iter().enumerate() {
        for step in 0..=14 {
            let tt = eta + 7.0 * eps * step as f64 / 14.0;
            for t in [tt, -tt] {
                for y in &dirs {
                    let x = cj.forward(t, y)?;
                    for (k, ck) in charts.iter().enumerate() {
                        if k != j && ck.locate(&x, (eta, eta + 7.0 * eps), true, eps)?.is_some() {
                            return Ok(false);
                        }
                    }
                }
            }
        }
    }
    Ok(true)
}

/// Offsets from the grid `i s / (2N + 2)` that keep every pair of displaced
/// segments away from its collision offset by at least `s / (8 N^2)`; each
/// pick is the admissible candidate farthest from the collisions.
fn select_offsets(forbidden: &[Vec<Option<ForbiddenOffset>>], s_eff: f64) -> Result<(Vec<f64>, Vec<Vec<Option<f64>>>)> {
    let n = forbidden.len();
    let margin = s_eff / (8.0 * (n * n) as f64);
    let grid: Vec<f64> = (1..=2 * n + 1).rev().map(|i| i as f64 * s_eff / (2 * n + 2) as f64).collect();
    let mut offsets: Vec<f64> = Vec::with_capacity(n);
    let mut table = vec![vec![None; n]; n];
    for k in 0..n {
        // the admissible candidate farthest from every collision offset
        let mut chosen: Option<(f64, f64)> = None;
        for &s in &grid {
            let mut gap = f64::INFINITY;
            for j in 0..k {
                if let Some(fo) = &forbidden[j][k] {
                    gap = gap.min((s - fo.at(offsets[j])?.0).abs());
                }
            }
            if gap >= margin && chosen.is_none_or(|(_, g)| gap > g) {
                chosen = Some((s, gap));
            }
        }
        offsets.push(chosen.ok_or(Error::OffsetSelectionFailed)?.0);
    }
    for j in 0..n {
        for k in 0..n {
            if let Some(fo) = &forbidden[j][k] {
                table[j][k] = Some(fo.at(offsets[j])?.0);
            }
        }
    }
    Ok((offsets, table))
}

pub fn disentangle(
    field: Arc<dyn MetricField>,
    p: &Vector,
    segments: &[GeodesicSegment],
    eta: f64,
    eps: f64,
    s_budget: f64,
) -> Result<DisentangleResult> {
    disentangle_with(field, p, segments, eta, eps, s_budget, &DisentangleOptions::default())
}

/// Perturbs `field` near `p` so that the given segments (unit speed, all
/// through `p` at parameter 0) become pairwise disjoint geodesics.
pub fn disentangle_with(
    field: Arc<dyn MetricField>,
    p: &Vector,
    segments: &[GeodesicSegment],
    eta: f64,
    eps: f64,
    s_budget: f64,
    opts: &DisentangleOptions,
) -> Result<DisentangleResult> {
    let dim = p.len();
    if dim < 3 {
        return Err(Error::DimensionTooLow { dim, need: 3 });
    }
    let dom = field.domain();
    for (j, seg) in segments.iter().enumerate() {
        let gap = dom.chart_distance(&seg.p, p);
        if gap > 1e-9 {
            return Err(Error::Config(format!("segment {j} does not pass through p at parameter 0 (gap {gap})")));
        }
    }
    let vs: Vec<Vector> = segments.iter().map(|s| s.v.clone()).collect();
    let ws = choose_plane_seeds(p, &vs, field.as_ref(), dim)?;

    let mut eps = eps;
    let mut halvings = 0;
    let charts = loop {
        let built: Result<Vec<TubularChart>> =
            vs.iter().zip(&ws).map(|(v, w)| TubularChart::build(field.clone(), p, v, w, eta, eps)).collect();
        if let Ok(charts) = built {
            if shell_pieces_disjoint(&charts, eta, eps)? {
                break charts;
            }
        }
        halvings += 1;
        if halvings > MAX_EPS_HALVINGS {
            return Err(Error::EpsilonExhausted { halvings: MAX_EPS_HALVINGS });
        }
        eps *= 0.5;
    };
    let delta = match opts.delta {
        Some(d) if 2.0 * d < eps => d,
        _ => 0.4 * eps,
    };
    let s_eff = s_budget.min(delta);
    let cutoffs = make_cutoffs(opts.theta, eta, eps, delta)?;

    let n = segments.len();
    let mut forbidden_maps: Vec<Vec<Option<ForbiddenOffset>>> = vec![vec![None; n]; n];
    if dim == 3 {
        for j in 0..n {
            for k in 0..n {
                if j != k {
                    forbidden_maps[j][k] = Some(forbidden_offsets(&charts[j], &charts[k], s_eff)?);
                }
            }
        }
    }
    let (offsets, forbidden) =
        if dim == 3 { select_offsets(&forbidden_maps, s_eff)? } else { (vec![0.5 * s_eff; n], vec![vec![None; n]; n]) };

    let mut families = Vec::with_capacity(n);
    let mut parts = Vec::with_capacity(n);
    let mut traces = Vec::with_capacity(n);
    for (chart, &s) in charts.into_iter().zip(&offsets) {
        let fam = Arc::new(PerturbationFamily::new(chart, cutoffs, s_eff)?);
        parts.push(PerturbedMetric::new(fam.clone(), s)?);
        traces.push(fam.displaced_curve(s, opts.nodes)?);
        families.push(fam);
    }
    let metric = CompositeMetric::new(field.clone(), parts);
    let mut displaced = Vec::with_capacity(n);
    for (fam, &s) in families.iter().zip(&offsets) {
        displaced.push(GeodesicSegment::from_curve(&metric, fam.displaced_curve(s, opts.residual_nodes)?)?);
    }
    let node_spacing = 4.0 * eta / (opts.nodes - 1) as f64;
    let mut clearance = f64::INFINITY;
    let mut post_check_events = 0;
    for j in 0..n {
        for k in j + 1..n {
            let (a, b) = (&traces[j], &traces[k]);
            clearance = clearance.min(super::curve_clearance(dom, a, b)?);
            let tol = (2.0 * node_spacing).max(1e-12);
            let report = pairwise_intersections(a, b, &metric, tol)?;
            post_check_events += report.events.len();
        }
    }
    Ok(DisentangleResult {
        metric,
        families,
        segments: displaced,
        traces,
        offsets,
        forbidden,
        clearance,
        eps,
        delta,
        node_spacing,
        post_check_events,
    })
}

/// Replaces the piece of `curve` with parameters in `[center - 2 eta, center + 2 eta]`
/// (mod the period for closed curves) by the displaced segment `c_s`. The
/// curve must be unit speed there, with `c(center)` and `c'(center)` the base
/// point and direction of `family`.
pub fn splice_displaced(curve: &CurveDiscrete, center: f64, family: &PerturbationFamily, s: f64) -> Result<CurveDiscrete> {
    let eta = family.cutoffs().eta;
    let span = curve.span();
    let local = |u: f64| -> Option<f64> {
        let mut d = u - center;
        if curve.closed {
            d -= span * (d / span).round();
        }
        (d.abs() <= 2.0 * eta).then_some(d)
    };
    let mut hits: Vec<(usize, f64)> = curve.params.iter().enumerate().filter_map(|(i, &u)| local(u).map(|d| (i, d))).collect();
    // a window across the seam of a closed curve arrives out of order
    hits.sort_by(|a, b| a.1.total_cmp(&b.1));
    hits.dedup_by(|a, b| a.1 == b.1);
    if hits.is_empty() {
        return Ok(curve.clone());
    }
    let ts: Vec<f64> = hits.iter().map(|&(_, d)| d).collect();
    let piece = family.displaced_curve_at(s, &ts)?;
    let dom = family.chart().field().domain();
    let mut out = curve.clone();
    let mut tangents = curve.tangents.clone().unwrap_or_else(|| curve.velocities());
    let piece_tangents = piece.tangents.as_ref().expect("displaced curves carry tangents");
    for (k, &(i, _)) in hits.iter().enumerate() {
        // keep the curve's own lift on periodic axes
        out.nodes[i] = dom.wrap_near(&piece.nodes[k], &curve.nodes[i]);
        tangents[i] = piece_tangents[k].clone();
    }
    if curve.closed {
        let m = out.nodes.len();
        let shift = &curve.nodes[m - 1] - &curve.nodes[0];
        if hits.iter().any(|&(i, _)| i == 0) && !hits.iter().any(|&(i, _)| i == m - 1) {
            out.nodes[m - 1] = &out.nodes[0] + &shift;
            tangents[m - 1] = tangents[0].clone();
        } else if hits.iter().any(|&(i, _)| i == m - 1) && !hits.iter().any(|&(i, _)| i == 0) {
            out.nodes[0] = &out.nodes[m - 1] - &shift;
            tangents[0] = tangents[m - 1].clone();
        }
    }
    Ok(out.with_tangents(tangents))
}
