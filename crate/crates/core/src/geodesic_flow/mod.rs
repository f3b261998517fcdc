//! Geodesic integration, exponential maps and geodesic residuals.
//!
//! Everything here uses fixed-step RK4. Maps that are later differentiated
//! numerically (the exponential map, the normal exponential map) always take
//! the same number of steps for a given patch, so they are smooth functions of
//! their inputs rather than piecewise ones.

use std::io::Write;
use std::sync::Arc;

use crate::chart_metric::{
    christoffel_from_derivatives, finsler_fundamental_tensor, ChartDomain, CurveDiscrete, FinslerField, MetricField,
};
use crate::error::{Error, Result};
use crate::linalg::{gram_schmidt, inner, norm, Matrix, Vector};

/// Arc-length step used when a caller does not choose one.
pub const DEFAULT_STEP: f64 = 1.0 / 200.0;
/// Allowed speed drift per unit arc length for Riemannian integrations.
pub const SPEED_DRIFT_PER_UNIT: f64 = 1e-7;
const UNIT_SPEED_TOL: f64 = 1e-9;
/// Seed directions whose normal projection falls below this fraction are
/// treated as a flip of the normal field.
const NORMAL_FLIP_RATIO: f64 = 1e-3;

/// Default step for a tube of half-length `eta`.
pub fn default_step(eta: f64) -> f64 {
    eta.min(1.0) / 200.0
}

/// Second-order ODE `x'' = a(x, x')` with a speed functional, shared by the
/// Riemannian and Finsler integrators.
pub trait Spray {
    fn domain(&self) -> &ChartDomain;
    fn accel(&self, x: &Vector, v: &Vector) -> Result<Vector>;
    fn speed(&self, x: &Vector, v: &Vector) -> f64;
}

/// The Levi-Civita spray of a metric.
pub struct RiemannSpray<'a, M: MetricField + ?Sized>(pub &'a M);

impl<M: MetricField + ?Sized> Spray for RiemannSpray<'_, M> {
    fn domain(&self) -> &ChartDomain {
        self.0.domain()
    }
    fn accel(&self, x: &Vector, v: &Vector) -> Result<Vector> {
        self.0.geodesic_accel(x, v)
    }
    fn speed(&self, x: &Vector, v: &Vector) -> f64 {
        norm(&self.0.eval(x), v)
    }
}

/// Geodesic spray of a Finsler field: the Christoffel formula applied to the
/// fundamental tensor frozen at the current velocity, with `x`-derivatives by
/// fourth-order differences.
pub struct FinslerSpray<'a, F: FinslerField + ?Sized> {
    pub field: &'a F,
    pub h: f64,
}

impl<'a, F: FinslerField + ?Sized> FinslerSpray<'a, F> {
    pub fn new(field: &'a F) -> Self {
        Self { field, h: 2e-3 }
    }
}

impl<F: FinslerField + ?Sized> Spray for FinslerSpray<'_, F> {
    fn domain(&self) -> &ChartDomain {
        self.field.domain()
    }
    fn accel(&self, x: &Vector, v: &Vector) -> Result<Vector> {
        let n = x.len();
        let g = finsler_fundamental_tensor(self.field, x, v)?;
        let at = |k: usize, s: f64| {
            let mut y = x.clone();
            y[k] += s * self.h;
            finsler_fundamental_tensor(self.field, &y, v)
        };
        let mut dg = Vec::with_capacity(n);
        for k in 0..n {
            let d = (at(k, -2.0)? - at(k, 2.0)? + (at(k, 1.0)? - at(k, -1.0)?) * 8.0) / (12.0 * self.h);
            dg.push(d);
        }
        let gamma = christoffel_from_derivatives(x, &g, &dg)?;
        Ok(-gamma.contract(v, v))
    }
    fn speed(&self, x: &Vector, v: &Vector) -> f64 {
        self.field.norm(x, v)
    }
}

/// One RK4 step of `(x, v)` with parameter step `h`.
pub fn rk4_step<S: Spray + ?Sized>(spray: &S, x: &Vector, v: &Vector, h: f64) -> Result<(Vector, Vector)> {
    let a1 = spray.accel(x, v)?;
    let x2 = x + v * (0.5 * h);
    let v2 = v + &a1 * (0.5 * h);
    let a2 = spray.accel(&x2, &v2)?;
    let x3 = x + &v2 * (0.5 * h);
    let v3 = v + &a2 * (0.5 * h);
    let a3 = spray.accel(&x3, &v3)?;
    let x4 = x + &v3 * h;
    let v4 = v + &a3 * h;
    let a4 = spray.accel(&x4, &v4)?;
    let xn = x + (v + &v2 * 2.0 + &v3 * 2.0 + &v4) * (h / 6.0);
    let vn = v + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (h / 6.0);
    Ok((xn, vn))
}

/// Flows `(x, v)` for parameter time `t` in exactly `steps` RK4 steps.
///
/// The geodesic equation is quadratic in the velocity, so flowing `(x, v)`
/// for time `t` and flowing `(x, t v)` for unit time produce the same points.
pub fn flow<M: MetricField + ?Sized>(field: &M, x: &Vector, v: &Vector, t: f64, steps: usize) -> Result<(Vector, Vector)> {
    if field.constant().is_some() {
        return Ok((x + v * t, v.clone()));
    }
    // rk4_step unrolled into reused buffers; this loop dominates chart evaluation
    let h = t / steps as f64;
    let (mut x, mut v) = (x.clone(), v.clone());
    let (mut xs, mut vs) = (x.clone(), v.clone());
    let (mut sx, mut sv) = (v.clone(), v.clone());
    for _ in 0..steps {
        let a1 = field.geodesic_accel(&x, &v)?;
        sx.copy_from(&v);
        sv.copy_from(&a1);
        xs.copy_from(&x);
        xs.axpy(0.5 * h, &v, 1.0);
        vs.copy_from(&v);
        vs.axpy(0.5 * h, &a1, 1.0);
        let a2 = field.geodesic_accel(&xs, &vs)?;
        sx.axpy(2.0, &vs, 1.0);
        sv.axpy(2.0, &a2, 1.0);
        xs.copy_from(&x);
        xs.axpy(0.5 * h, &vs, 1.0);
        vs.copy_from(&v);
        vs.axpy(0.5 * h, &a2, 1.0);
        let a3 = field.geodesic_accel(&xs, &vs)?;
        sx.axpy(2.0, &vs, 1.0);
        sv.axpy(2.0, &a3, 1.0);
        xs.copy_from(&x);
        xs.axpy(h, &vs, 1.0);
        vs.copy_from(&v);
        vs.axpy(h, &a3, 1.0);
        let a4 = field.geodesic_accel(&xs, &vs)?;
        sx.axpy(1.0, &vs, 1.0);
        sv.axpy(1.0, &a4, 1.0);
        x.axpy(h / 6.0, &sx, 1.0);
        v.axpy(h / 6.0, &sv, 1.0);
    }
    if field.domain().reduce(&x).is_err() {
        return Err(Error::DomainEscape { exit: x.iter().cloned().collect() });
    }
    Ok((x, v))
}

/// A discretized unit-speed geodesic with per-node residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicSegment {
    pub curve: CurveDiscrete,
    pub p: Vector,
    pub v: Vector,
    /// Per-node geodesic-equation defect; `NaN` where the stencil does not fit.
    pub residuals: Vec<f64>,
    pub residual_max: f64,
}

impl GeodesicSegment {
    /// Wraps a curve produced elsewhere, measuring its residual under `field`.
    pub fn from_curve<M: MetricField + ?Sized>(field: &M, curve: CurveDiscrete) -> Result<Self> {
        let k = nearest_param(&curve.params, 0.0);
        let vel = curve.velocities();
        let residuals = node_residuals(&RiemannSpray(field), &curve)?;
        let residual_max = finite_max(&residuals);
        Ok(Self { p: curve.nodes[k].clone(), v: vel[k].clone(), curve, residuals, residual_max })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let n = self.curve.dim();
        let mut header = String::from("t");
        for i in 1..=n {
            header.push_str(&format!(",x_{i}"));
        }
        header.push_str(",residual\n");
        out.write_all(header.as_bytes())?;
        for (k, x) in self.curve.nodes.iter().enumerate() {
            let mut line = format!("{}", self.curve.params[k]);
            for c in x.iter() {
                line.push_str(&format!(",{c}"));
            }
            let r = self.residuals[k];
            if r.is_finite() {
                line.push_str(&format!(",{r}\n"));
            } else {
                line.push_str(",\n");
            }
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }
}

fn nearest_param(params: &[f64], t: f64) -> usize {
    let mut best = 0;
    for (i, p) in params.iter().enumerate() {
        if (p - t).abs() < (params[best] - t).abs() {
            best = i;
        }
    }
    best
}

fn finite_max(xs: &[f64]) -> f64 {
    xs.iter().cloned().filter(|r| r.is_finite()).fold(0.0, f64::max)
}

fn integrate_spray<S: Spray + ?Sized>(
    spray: &S,
    p: &Vector,
    v: &Vector,
    span: (f64, f64),
    step: f64,
    drift_per_unit: f64,
) -> Result<(CurveDiscrete, f64)> {
    let (t0, t1) = span;
    if !(step > 0.0) || !(t0 <= 0.0 && 0.0 <= t1 && t1 > t0) {
        return Err(Error::Config("span must contain 0 and the step must be positive".into()));
    }
    let s0 = spray.speed(p, v);
    if (s0 - 1.0).abs() > UNIT_SPEED_TOL {
        return Err(Error::BoundViolation(format!("initial speed {s0} is not 1")));
    }
    let dom = spray.domain();
    let run = |t_end: f64| -> Result<Vec<(f64, Vector, Vector)>> {
        let mut out = vec![(0.0, p.clone(), v.clone())];
        if t_end == 0.0 {
            return Ok(out);
        }
        let m = (t_end.abs() / step).ceil().max(1.0) as usize;
        let h = t_end / m as f64;
        let (mut x, mut u) = (p.clone(), v.clone());
        for k in 1..=m {
            let (xn, un) = rk4_step(spray, &x, &u, h)?;
            x = xn;
            u = un;
            if dom.reduce(&x).is_err() {
                return Err(Error::DomainEscape { exit: x.iter().cloned().collect() });
            }
            out.push((h * k as f64, x.clone(), u.clone()));
        }
        Ok(out)
    };
    let mut back = run(t0)?;
    let fwd = run(t1)?;
    back.reverse();
    back.pop();
    back.extend(fwd);
    let mut drift: f64 = 0.0;
    for (_, x, u) in &back {
        drift = drift.max((spray.speed(x, u) - 1.0).abs());
    }
    let bound = drift_per_unit * (t1 - t0).max(1.0);
    if drift > bound {
        return Err(Error::StepTooLarge { drift, bound });
    }
    let params = back.iter().map(|b| b.0).collect();
    let tangents = back.iter().map(|b| b.2.clone()).collect();
    let nodes = back.into_iter().map(|b| b.1).collect();
    Ok((CurveDiscrete::new(nodes, params, false)?.with_tangents(tangents), drift))
}

/// Unit-speed geodesic with `c(0) = p`, `c'(0) = v` sampled on `span`
/// (which must contain 0) by RK4 with arc-length step at most `step`.
pub fn integrate_geodesic<M: MetricField + ?Sized>(
    field: &M,
    p: &Vector,
    v: &Vector,
    span: (f64, f64),
    step: f64,
) -> Result<GeodesicSegment> {
    let spray = RiemannSpray(field);
    let (curve, _) = integrate_spray(&spray, p, v, span, step, SPEED_DRIFT_PER_UNIT)?;
    segment_from(&spray, curve, p, v)
}

/// Finsler geodesic with unit `f`-speed. Accuracy is about ten times looser
/// than the Riemannian integrator because the spray is differenced.
pub fn integrate_finsler_geodesic<F: FinslerField + ?Sized>(
    field: &F,
    p: &Vector,
    v: &Vector,
    span: (f64, f64),
    step: f64,
) -> Result<GeodesicSegment> {
    let spray = FinslerSpray::new(field);
    let (curve, _) = integrate_spray(&spray, p, v, span, step, 10.0 * SPEED_DRIFT_PER_UNIT)?;
    segment_from(&spray, curve, p, v)
}

fn segment_from<S: Spray + ?Sized>(spray: &S, curve: CurveDiscrete, p: &Vector, v: &Vector) -> Result<GeodesicSegment> {
    let residuals = if curve.len() >= 7 && curve.is_uniform() { node_residuals(spray, &curve)? } else { vec![f64::NAN; curve.len()] };
    let residual_max = finite_max(&residuals);
    Ok(GeodesicSegment { curve, p: p.clone(), v: v.clone(), residuals, residual_max })
}

/// `exp_p(x)`, the endpoint of the geodesic with initial velocity `x` at unit time.
pub fn exp_map<M: MetricField + ?Sized>(field: &M, p: &Vector, x: &Vector) -> Result<Vector> {
    let r = norm(&field.eval(p), x);
    if r >= field.injectivity_bound() {
        return Err(Error::BoundViolation(format!("|x| = {r} exceeds the injectivity bound {}", field.injectivity_bound())));
    }
    if r == 0.0 {
        return Ok(p.clone());
    }
    let steps = (r / DEFAULT_STEP).ceil().max(8.0) as usize;
    Ok(flow(field, p, x, 1.0, steps)?.0)
}

/// Residuals of the geodesic equation at the nodes of a uniformly sampled
/// curve, using fourth-order stencils for both derivatives. The first and last
/// two nodes are `NaN`.
fn node_residuals<S: Spray + ?Sized>(spray: &S, c: &CurveDiscrete) -> Result<Vec<f64>> {
    let m = c.len();
    if m < 7 {
        return Err(Error::TooFewNodes { got: m, need: 7 });
    }
    if !c.is_uniform() {
        return Err(Error::Config("geodesic residual needs uniformly spaced nodes".into()));
    }
    let h = c.span() / (m - 1) as f64;
    let x = &c.nodes;
    let mut out = vec![f64::NAN; m];
    for i in 2..m - 2 {
        let d1 = (&x[i - 2] - &x[i + 2] + (&x[i + 1] - &x[i - 1]) * 8.0) / (12.0 * h);
        let d2 = ((&x[i + 1] + &x[i - 1]) * 16.0 - (&x[i + 2] + &x[i - 2]) - &x[i] * 30.0) / (12.0 * h * h);
        let r = d2 - spray.accel(&x[i], &d1)?;
        out[i] = r.norm();
    }
    Ok(out)
}

/// Largest defect `|x'' + Gamma(x', x')|` over interior nodes.
pub fn geodesic_residual<M: MetricField + ?Sized>(field: &M, c: &CurveDiscrete) -> Result<f64> {
    Ok(finite_max(&node_residuals(&RiemannSpray(field), c)?))
}

/// The hypersurface `Sigma = exp_p(B_eps(v^perp))` with its unit normal field.
///
/// Points of `v^perp` are addressed by coordinates in a `g_p`-orthonormal
/// frame whose first vector is the chosen `w`; these coordinates are the disc
/// coordinates `y` of the tubular chart.
#[derive(Clone)]
pub struct HypersurfacePatch {
    field: Arc<dyn MetricField>,
    base: Vector,
    normal_seed: Vector,
    radius: f64,
    frame: Vec<Vector>,
    y_steps: usize,
    t_steps: usize,
    fd_step: f64,
}

impl std::fmt::Debug for HypersurfacePatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HypersurfacePatch")
            .field("base", &self.base)
            .field("normal_seed", &self.normal_seed)
            .field("radius", &self.radius)
            .finish()
    }
}

impl HypersurfacePatch {
    /// `first` is the preferred first frame vector (`w`); pass `None` to use
    /// coordinate axes only.
    pub fn new(field: Arc<dyn MetricField>, p: &Vector, v: &Vector, radius: f64, first: Option<&Vector>) -> Result<Self> {
        let g = field.eval(p);
        let n = p.len();
        let nv = norm(&g, v);
        if (nv - 1.0).abs() > UNIT_SPEED_TOL {
            return Err(Error::NotOrthonormal { defect: (nv - 1.0).abs() });
        }
        if let Some(w) = first {
            let defect = (norm(&g, w) - 1.0).abs().max(inner(&g, v, w).abs());
            if defect > UNIT_SPEED_TOL {
                return Err(Error::NotOrthonormal { defect });
            }
        }
        let mut seeds = vec![v.clone()];
        seeds.extend(first.cloned());
        seeds.extend((0..n).map(|i| crate::linalg::unit(n, i)));
        let basis = gram_schmidt(&g, &seeds);
        let frame: Vec<Vector> = basis.into_iter().skip(1).take(n - 1).collect();
        if let Some(w) = first {
            // keep w exactly rather than its re-orthogonalized copy
            let mut frame = frame;
            frame[0] = w.clone();
            return Ok(Self::assemble(field, p, v, radius, frame));
        }
        Ok(Self::assemble(field, p, v, radius, frame))
    }

    fn assemble(field: Arc<dyn MetricField>, p: &Vector, v: &Vector, radius: f64, frame: Vec<Vector>) -> Self {
        Self { field, base: p.clone(), normal_seed: v.clone(), radius, frame, y_steps: 16, t_steps: 128, fd_step: 1e-3 * radius.max(1e-3) }
    }

    /// Fixed RK4 step counts for the radial (`y`) and normal (`t`) flows.
    pub fn with_steps(mut self, y_steps: usize, t_steps: usize) -> Self {
        self.y_steps = y_steps.max(1);
        self.t_steps = t_steps.max(1);
        self
    }

    pub fn field(&self) -> &Arc<dyn MetricField> {
        &self.field
    }
    pub fn base(&self) -> &Vector {
        &self.base
    }
    pub fn normal_seed(&self) -> &Vector {
        &self.normal_seed
    }
    pub fn radius(&self) -> f64 {
        self.radius
    }
    pub fn frame(&self) -> &[Vector] {
        &self.frame
    }
    pub fn t_steps(&self) -> usize {
        self.t_steps
    }

    /// Tangent vector `sum y_i e_i` of `v^perp`.
    pub fn tangent_of(&self, y: &Vector) -> Vector {
        let mut x = Vector::zeros(self.base.len());
        for (c, e) in y.iter().zip(&self.frame) {
            x += e * *c;
        }
        x
    }

    /// Frame coordinates of a tangent vector (its `g_p`-projection onto `v^perp`).
    pub fn coords_of(&self, x: &Vector) -> Vector {
        let g = self.field.eval(&self.base);
        Vector::from_iterator(self.frame.len(), self.frame.iter().map(|e| inner(&g, e, x)))
    }

    /// `exp_p(sum y_i e_i)`.
    pub fn sample(&self, y: &Vector) -> Result<Vector> {
        Ok(self.point_and_normal(y)?.0)
    }

    /// The point of `Sigma` with disc coordinates `y` and the unit normal there.
    pub fn point_and_normal(&self, y: &Vector) -> Result<(Vector, Vector)> {
        let f = self.field.as_ref();
        if f.constant().is_some() {
            return Ok((&self.base + self.tangent_of(y), self.normal_seed.clone()));
        }
        let (q, tangents) = if self.frame.len() == 1 {
            // Sigma is the geodesic through p along e_1; its tangent is the velocity.
            let (q, vel) = flow(f, &self.base, &self.frame[0], y[0], self.y_steps)?;
            (q, vec![vel])
        } else {
            let exp = |z: &Vector| flow(f, &self.base, &self.tangent_of(z), 1.0, self.y_steps).map(|r| r.0);
            let q = exp(y)?;
            let mut ts = Vec::with_capacity(self.frame.len());
            for i in 0..self.frame.len() {
                let mut err = None;
                let mut g = |z: &Vector| match exp(z) {
                    Ok(v) => v,
                    Err(e) => {
                        err = Some(e);
                        z.clone()
                    }
                };
                let d = crate::linalg::central_diff4(&mut g, y, i, self.fd_step);
                if let Some(e) = err {
                    return Err(e);
                }
                ts.push(d);
            }
            (q, ts)
        };
        let gq = f.eval(&q);
        let nu = normal_component(&gq, &tangents, &self.normal_seed)
            .ok_or_else(|| Error::NormalFieldFlip { point: q.iter().cloned().collect() })?;
        Ok((q, nu))
    }

    /// `exp(t nu(exp_p(y)))` and its velocity `d/dt`.
    pub fn normal_exp_coords(&self, t: f64, y: &Vector) -> Result<(Vector, Vector)> {
        let (q, nu) = self.point_and_normal(y)?;
        flow(self.field.as_ref(), &q, &nu, t, self.t_steps)
    }
}

/// Unit `g`-normal to `span(tangents)` in the direction of `seed`, or `None`
/// when the seed is (numerically) tangent.
fn normal_component(g: &Matrix, tangents: &[Vector], seed: &Vector) -> Option<Vector> {
    let k = tangents.len();
    let gram = Matrix::from_fn(k, k, |i, j| inner(g, &tangents[i], &tangents[j]));
    let rhs = Vector::from_iterator(k, tangents.iter().map(|t| inner(g, t, seed)));
    let a = gram.lu().solve(&rhs)?;
    let mut nu = seed.clone();
    for (c, t) in a.iter().zip(tangents) {
        nu -= t * *c;
    }
    let len = norm(g, &nu);
    if !(len > NORMAL_FLIP_RATIO * norm(g, seed)) {
        return None;
    }
    Some(nu / len)
}

/// The normal exponential map `(t, x) -> exp(t nu(exp_p(x)))` for a tangent
/// vector `x` orthogonal to the patch's seed direction.
pub fn normal_exp(patch: &HypersurfacePatch, t: f64, x: &Vector) -> Result<Vector> {
    let g = patch.field.eval(&patch.base);
    let len = norm(&g, x);
    if len >= patch.radius {
        return Err(Error::BoundViolation(format!("|x| = {len} is not below the patch radius {}", patch.radius)));
    }
    let y = patch.coords_of(x);
    Ok(patch.normal_exp_coords(t, &y)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart_metric::{EllipsoidChart, Euclidean, PolyTest, QuarticFinsler, RiemannSquare, SphereChart};
    use crate::linalg::{unit, vector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn euclidean_geodesic_is_a_straight_segment() {
        let e = Euclidean::new(3, 5.0).unwrap();
        let seg = integrate_geodesic(&e, &Vector::zeros(3), &unit(3, 0), (0.0, 1.0), DEFAULT_STEP).unwrap();
        let end = seg.curve.nodes.last().unwrap();
        assert!((end - unit(3, 0)).amax() < 1e-15);
        assert!(seg.residual_max < 1e-9);
    }

    #[test]
    fn equator_returns_after_two_pi() {
        let s = SphereChart::new(0.1).unwrap();
        let p = vector(&[PI / 2.0, 0.0]);
        let seg = integrate_geodesic(&s, &p, &vector(&[0.0, 1.0]), (0.0, 2.0 * PI), DEFAULT_STEP).unwrap();
        let end = seg.curve.nodes.last().unwrap();
        assert!(s.domain().chart_distance(end, &p) < 1e-5);
    }

    #[test]
    fn tilted_great_circle_closes_and_keeps_speed() {
        let s = SphereChart::new(0.05).unwrap();
        let p = vector(&[PI / 2.0, 0.3]);
        let v = vector(&[0.6, 0.8]);
        let seg = integrate_geodesic(&s, &p, &v, (-PI, PI), DEFAULT_STEP).unwrap();
        let g = |x: &Vector| s.eval(x);
        for (x, u) in seg.curve.nodes.iter().zip(seg.curve.tangents.as_ref().unwrap()) {
            assert!((norm(&g(x), u) - 1.0).abs() < 1e-6);
        }
        let (a, b) = (&seg.curve.nodes[0], seg.curve.nodes.last().unwrap());
        assert!(s.domain().chart_distance(a, b) < 1e-5);
    }

    #[test]
    fn rk4_self_convergence_is_fourth_order() {
        let m = PolyTest::new(0.8, 0.5).unwrap();
        let p = vector(&[-0.3, -0.4]);
        let g = m.eval(&p);
        let v = vector(&[0.7, 0.6]);
        let v = &v / norm(&g, &v);
        let run = |steps: usize| flow(&m, &p, &v, 0.8, steps).unwrap().0;
        let reference = run(8 * 16);
        let e1 = (run(8) - &reference).norm();
        let e2 = (run(16) - &reference).norm();
        let ratio = e1 / e2;
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn reversal_returns_to_start() {
        let m = EllipsoidChart::new(1.0, 1.1, 1.3).unwrap();
        let p = vector(&[1.2, 0.4]);
        let g = m.eval(&p);
        let v = vector(&[0.3, 0.9]);
        let v = &v / norm(&g, &v);
        let seg = integrate_geodesic(&m, &p, &v, (0.0, 2.0), DEFAULT_STEP).unwrap();
        let q = seg.curve.nodes.last().unwrap().clone();
        let w = -seg.curve.tangents.as_ref().unwrap().last().unwrap().clone();
        let back = integrate_geodesic(&m, &q, &w, (0.0, 2.0), DEFAULT_STEP).unwrap();
        assert!((back.curve.nodes.last().unwrap() - &p).norm() < 1e-5);
    }

    #[test]
    fn non_unit_velocity_and_escape_are_reported() {
        let e = Euclidean::new(2, 1.0).unwrap();
        let r = integrate_geodesic(&e, &Vector::zeros(2), &vector(&[2.0, 0.0]), (0.0, 1.0), 0.01);
        assert!(matches!(r, Err(Error::BoundViolation(_))));
        let r = integrate_geodesic(&e, &Vector::zeros(2), &unit(2, 0), (0.0, 3.0), 0.01);
        assert!(matches!(r, Err(Error::DomainEscape { .. })));
    }

    #[test]
    fn coarse_step_is_rejected() {
        let s = SphereChart::new(0.05).unwrap();
        let p = vector(&[1.0, 0.0]);
        let v = vector(&[0.6, 0.8 / 1.0f64.sin()]);
        let r = integrate_geodesic(&s, &p, &v, (0.0, 3.0), 0.5);
        assert!(matches!(r, Err(Error::StepTooLarge { .. })));
    }

    #[test]
    fn exp_map_basics() {
        let e = Euclidean::new(3, 5.0).unwrap();
        let p = vector(&[0.5, -1.0, 2.0]);
        let x = vector(&[0.1, 0.2, -0.3]);
        assert_eq!(exp_map(&e, &p, &Vector::zeros(3)).unwrap(), p);
        assert!((exp_map(&e, &p, &x).unwrap() - (&p + &x)).amax() < 1e-15);
    }

    #[test]
    fn sphere_exp_is_symmetric_in_distance() {
        // on the round sphere d(exp(x), exp(-x)) = 2|x| below pi/2
        let s = SphereChart::new(0.05).unwrap();
        let p = vector(&[1.1, 0.7]);
        let g = s.eval(&p);
        let x = vector(&[0.05, 0.08]);
        let a = s.embed_unit(&exp_map(&s, &p, &x).unwrap());
        let b = s.embed_unit(&exp_map(&s, &p, &(-&x)).unwrap());
        let d = a.dot(&b).clamp(-1.0, 1.0).acos();
        assert!((d - 2.0 * norm(&g, &x)).abs() < 1e-6);
    }

    #[test]
    fn residual_of_integrated_geodesic_is_small() {
        let s = EllipsoidChart::new(1.0, 1.1, 1.3).unwrap();
        let p = vector(&[1.5, 1.0]);
        let g = s.eval(&p);
        let v = vector(&[0.3, 1.0]);
        let v = &v / norm(&g, &v);
        let seg = integrate_geodesic(&s, &p, &v, (-1.0, 1.0), DEFAULT_STEP).unwrap();
        assert!(geodesic_residual(&s, &seg.curve).unwrap() <= 5e-6);
    }

    #[test]
    fn residual_stencil_order_is_at_least_two() {
        let s = EllipsoidChart::new(1.0, 1.1, 1.3).unwrap();
        let p = vector(&[1.5, 1.0]);
        let g = s.eval(&p);
        let v = vector(&[0.3, 1.0]);
        let v = &v / norm(&g, &v);
        let fine = integrate_geodesic(&s, &p, &v, (-1.0, 1.0), 1e-3).unwrap().curve;
        let thin = |k: usize| {
            let idx: Vec<usize> = (0..fine.len()).step_by(k).collect();
            CurveDiscrete::new(idx.iter().map(|&i| fine.nodes[i].clone()).collect(), idx.iter().map(|&i| fine.params[i]).collect(), false)
                .unwrap()
        };
        let r1 = geodesic_residual(&s, &thin(100)).unwrap();
        let r2 = geodesic_residual(&s, &thin(50)).unwrap();
        assert!(r1 / r2 >= 3.5, "{r1} {r2}");
    }

    #[test]
    fn circle_has_unit_centripetal_residual() {
        let e = Euclidean::new(2, 2.0).unwrap();
        let m = 401;
        let params: Vec<f64> = (0..m).map(|i| i as f64 * PI / (m - 1) as f64).collect();
        let nodes = params.iter().map(|t| vector(&[t.cos(), t.sin()])).collect();
        let c = CurveDiscrete::new(nodes, params, false).unwrap();
        assert!((geodesic_residual(&e, &c).unwrap() - 1.0).abs() < 1e-6);
        let short = CurveDiscrete::new(c.nodes[..6].to_vec(), c.params[..6].to_vec(), false).unwrap();
        assert!(matches!(geodesic_residual(&e, &short), Err(Error::TooFewNodes { .. })));
    }

    #[test]
    fn normal_exp_axis_and_flat_case() {
        let e: Arc<dyn MetricField> = Arc::new(Euclidean::new(3, 5.0).unwrap());
        let patch = HypersurfacePatch::new(e, &Vector::zeros(3), &unit(3, 0), 0.1, Some(&unit(3, 1))).unwrap();
        let x = vector(&[0.0, 0.03, -0.04]);
        let q = normal_exp(&patch, 0.7, &x).unwrap();
        assert!((q - vector(&[0.7, 0.03, -0.04])).amax() < 1e-15);

        let s: Arc<dyn MetricField> = Arc::new(EllipsoidChart::new(1.0, 1.1, 1.3).unwrap());
        let p = vector(&[1.2, 0.5]);
        let g = s.eval(&p);
        let v = vector(&[1.0, 0.0]) / g[(0, 0)].sqrt();
        let w0 = vector(&[-g[(0, 1)], g[(0, 0)]]);
        let w = &w0 / norm(&g, &w0);
        let patch = HypersurfacePatch::new(s.clone(), &p, &v, 0.06, Some(&w)).unwrap();
        for k in -10..=10 {
            let t = 0.1 * k as f64;
            let a = normal_exp(&patch, t, &Vector::zeros(2)).unwrap();
            let b = exp_map(s.as_ref(), &p, &(&v * t)).unwrap();
            assert!((a - b).amax() < 1e-8, "t = {t}");
        }
    }

    #[test]
    fn normal_field_is_unit_and_seeded() {
        let s: Arc<dyn MetricField> = Arc::new(SphereChart::new(0.05).unwrap());
        let p = vector(&[1.0, 0.2]);
        let g = s.eval(&p);
        let v = vector(&[0.6, 0.8]) / norm(&g, &vector(&[0.6, 0.8]));
        let patch = HypersurfacePatch::new(s.clone(), &p, &v, 0.1, None).unwrap();
        let (q, nu) = patch.point_and_normal(&Vector::zeros(1)).unwrap();
        assert_eq!(q, p);
        assert!((&nu - &v).amax() < 1e-8);
        let (q, nu) = patch.point_and_normal(&vector(&[0.07])).unwrap();
        assert!((norm(&s.eval(&q), &nu) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normal_exp_jacobian_is_nonsingular() {
        let s: Arc<dyn MetricField> = Arc::new(EllipsoidChart::new(1.0, 1.1, 1.3).unwrap());
        let p = vector(&[1.4, 2.0]);
        let g = s.eval(&p);
        let v = vector(&[0.0, 1.0]) / g[(1, 1)].sqrt();
        let patch = HypersurfacePatch::new(s, &p, &v, 0.06, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = 1e-5;
        for _ in 0..200 {
            let t = rng.gen_range(-1.0..1.0);
            let y = rng.gen_range(-0.059..0.059);
            let f = |t: f64, y: f64| patch.normal_exp_coords(t, &vector(&[y])).unwrap().0;
            let dt = (f(t + h, y) - f(t - h, y)) / (2.0 * h);
            let dy = (f(t, y + h) - f(t, y - h)) / (2.0 * h);
            let det = dt[0] * dy[1] - dt[1] * dy[0];
            assert!(det.abs() > 1e-6);
        }
    }

    #[test]
    fn finsler_riemann_square_geodesic_matches_riemannian() {
        let s: Arc<dyn MetricField> = Arc::new(SphereChart::new(0.05).unwrap());
        let ff = RiemannSquare::new(s.clone());
        let p = vector(&[1.2, 0.0]);
        let v = vector(&[0.6, 0.8 / 1.2f64.sin()]);
        let a = integrate_geodesic(s.as_ref(), &p, &v, (0.0, 1.0), 0.01).unwrap();
        let b = integrate_finsler_geodesic(&ff, &p, &v, (0.0, 1.0), 0.01).unwrap();
        let gap = (a.curve.nodes.last().unwrap() - b.curve.nodes.last().unwrap()).amax();
        assert!(gap < 1e-5, "{gap}");
    }

    #[test]
    fn minkowski_finsler_geodesics_are_straight() {
        let dom = ChartDomain::cube(3, 2.0).unwrap();
        let ff = QuarticFinsler::new(dom, 0.5, 0.0).unwrap();
        let x = vector(&[0.2, 0.1, -0.3]);
        let v = vector(&[0.3, -0.5, 0.4]);
        let v = &v / ff.norm(&x, &v);
        let seg = integrate_finsler_geodesic(&ff, &x, &v, (0.0, 1.0), 0.05).unwrap();
        assert!((seg.curve.nodes.last().unwrap() - (&x + &v)).amax() < 1e-6);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let e = Euclidean::new(2, 5.0).unwrap();
        let seg = integrate_geodesic(&e, &Vector::zeros(2), &unit(2, 1), (-0.1, 0.1), 0.01).unwrap();
        let mut buf = Vec::new();
        seg.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x_1,x_2,residual");
        assert_eq!(lines.count(), seg.curve.len());
    }
}
