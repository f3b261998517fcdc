//! Tubular coordinates `xi(t, y) = exp(t nu(exp_p(zeta^-1 y)))` around a
//! geodesic segment, their inverse, and the decomposition of a neighbourhood of
//! `p` into core tube, the two perturbation sets `U-`/`U+`, the spherical shell
//! and the rest.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::chart_metric::MetricField;
use crate::error::{Error, Result};
use crate::geodesic_flow::{flow, HypersurfacePatch};
use crate::linalg::{central_diff4, inner, norm, Matrix, Vector};

const ORTHONORMAL_TOL: f64 = 1e-9;
const NEWTON_MAX_ITER: usize = 30;
const NEWTON_TOL: f64 = 1e-12;
/// Step for the fourth-order `y`-derivatives of `xi`.
const JACOBIAN_FD_STEP: f64 = 1e-3;
/// Safety factor on the sampled Lipschitz bounds used by the cheap prefilter.
const HULL_SAFETY: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum RegionLabel {
    CoreTube,
    UMinus,
    UPlus,
    Shell,
    Outside,
}

struct AxisTable {
    dt: f64,
    t: Vec<f64>,
    points: Vec<Vector>,
    lip_t: f64,
    lip_y: f64,
}

/// The chart `xi_{v,w}` on `[-2 eta, 2 eta] x D^{n-1}(eps)`.
#[derive(Clone)]
pub struct TubularChart {
    field: Arc<dyn MetricField>,
    patch: HypersurfacePatch,
    p: Vector,
    v: Vector,
    w: Vector,
    eta: f64,
    eps: f64,
    flat_inverse: Option<Matrix>,
    axis: Option<Arc<AxisTable>>,
}

impl std::fmt::Debug for TubularChart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TubularChart")
            .field("p", &self.p)
            .field("v", &self.v)
            .field("w", &self.w)
            .field("eta", &self.eta)
            .field("eps", &self.eps)
            .finish()
    }
}

/// Checks `0 < 7 eps < eta < inj / 3`.
pub fn check_tube_bounds(eta: f64, eps: f64, inj: f64) -> Result<()> {
    if !(eps > 0.0 && 7.0 * eps < eta) {
        return Err(Error::BoundViolation(format!("need 0 < 7*eps < eta, got eps = {eps}, eta = {eta}")));
    }
    if !(eta < inj / 3.0) {
        return Err(Error::BoundViolation(format!("need eta < inj/3, got eta = {eta}, inj = {inj}")));
    }
    Ok(())
}

impl TubularChart {
    pub fn build(field: Arc<dyn MetricField>, p: &Vector, v: &Vector, w: &Vector, eta: f64, eps: f64) -> Result<Self> {
        let g = field.eval(p);
        let defect = (norm(&g, v) - 1.0).abs().max((norm(&g, w) - 1.0).abs()).max(inner(&g, v, w).abs());
        if defect > ORTHONORMAL_TOL {
            return Err(Error::NotOrthonormal { defect });
        }
        check_tube_bounds(eta, eps, field.injectivity_bound())?;
        let t_steps = ((2.0 * eta) / (eta.min(1.0) / 64.0)).ceil().max(32.0) as usize;
        let patch = HypersurfacePatch::new(field.clone(), p, v, eps, Some(w))?.with_steps(16, t_steps);
        let flat_inverse = match field.constant() {
            Some(_) => {
                let n = p.len();
                let mut b = Matrix::zeros(n, n);
                b.set_column(0, v);
                for (i, e) in patch.frame().iter().enumerate() {
                    b.set_column(i + 1, e);
                }
                Some(b.try_inverse().ok_or(Error::NotOrthonormal { defect: f64::INFINITY })?)
            }
            None => None,
        };
        let mut chart = Self { field, patch, p: p.clone(), v: v.clone(), w: w.clone(), eta, eps, flat_inverse, axis: None };
        if chart.flat_inverse.is_none() {
            chart.axis = Some(Arc::new(chart.tabulate_axis()?));
            chart.self_check()?;
        }
        Ok(chart)
    }

    fn tabulate_axis(&self) -> Result<AxisTable> {
        let n = self.p.len();
        let reach = 2.0 * self.eta + 2.0 * self.eps;
        let dt = self.eps.min(self.eta / 16.0) / 2.0;
        let m = (reach / dt).ceil() as i64;
        let mut t = Vec::new();
        let mut points = Vec::new();
        for k in -m..=m {
            let tk = k as f64 * dt;
            t.push(tk);
            points.push(self.forward(tk, &Vector::zeros(n - 1))?);
        }
        let mut lip_t: f64 = 0.0;
        let mut lip_y: f64 = 0.0;
        let ys: Vec<Vector> = std::iter::once(Vector::zeros(n - 1))
            .chain((0..n - 1).flat_map(|i| {
                let mut a = Vector::zeros(n - 1);
                a[i] = self.eps;
                [a.clone(), -a]
            }))
            .collect();
        for k in 0..=16 {
            let tk = -reach + 2.0 * reach * k as f64 / 16.0;
            for y in &ys {
                let j = self.jacobian(tk, y)?;
                lip_t = lip_t.max(j.column(0).norm());
                lip_y = lip_y.max(j.columns(1, n - 1).norm());
            }
        }
        Ok(AxisTable { dt, t, points, lip_t, lip_y })
    }

    fn self_check(&self) -> Result<()> {
        let n = self.p.len();
        let mut probes = vec![(0.0, Vector::zeros(n - 1))];
        for &t in &[-2.0 * self.eta, -self.eta, self.eta, 2.0 * self.eta] {
            for i in 0..n - 1 {
                let mut y = Vector::zeros(n - 1);
                y[i] = 0.99 * self.eps;
                probes.push((t, y.clone()));
                probes.push((t, -y));
            }
        }
        for (t, y) in probes {
            let x = self.forward(t, &y)?;
            let (t2, y2) = self.inverse(&x)?;
            let err = (t2 - t).abs().max((y2 - &y).amax());
            if err > 1e-8 {
                return Err(Error::InverseDiverged { worst: x.iter().cloned().collect() });
            }
        }
        Ok(())
    }

    pub fn field(&self) -> &Arc<dyn MetricField> {
        &self.field
    }
    pub fn p(&self) -> &Vector {
        &self.p
    }
    pub fn v(&self) -> &Vector {
        &self.v
    }
    pub fn w(&self) -> &Vector {
        &self.w
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn eps(&self) -> f64 {
        self.eps
    }
    pub fn dim(&self) -> usize {
        self.p.len()
    }
    pub fn patch(&self) -> &HypersurfacePatch {
        &self.patch
    }
    pub fn is_flat(&self) -> bool {
        self.flat_inverse.is_some()
    }

    /// `zeta`: tangent vector orthogonal to `v` to disc coordinates.
    pub fn zeta(&self, x: &Vector) -> Vector {
        self.patch.coords_of(x)
    }

    pub fn zeta_inv(&self, y: &Vector) -> Vector {
        self.patch.tangent_of(y)
    }

    /// `xi(t, y)`.
    pub fn forward(&self, t: f64, y: &Vector) -> Result<Vector> {
        Ok(self.forward_with_velocity(t, y)?.0)
    }

    /// `xi(t, y)` and `d xi / dt`.
    pub fn forward_with_velocity(&self, t: f64, y: &Vector) -> Result<(Vector, Vector)> {
        if self.flat_inverse.is_some() {
            return Ok((&self.p + &self.v * t + self.patch.tangent_of(y), self.v.clone()));
        }
        self.patch.normal_exp_coords(t, y)
    }

    /// `D xi(t, y)` with columns `d/dt, d/dy_1, ...`; the `t`-column is exact,
    /// the others are fourth-order differences.
    pub fn jacobian(&self, t: f64, y: &Vector) -> Result<Matrix> {
        let n = self.dim();
        if let Some(inv) = &self.flat_inverse {
            return Ok(inv.clone().try_inverse().expect("invertible by construction"));
        }
        let (_, vel) = self.forward_with_velocity(t, y)?;
        let mut jac = Matrix::zeros(n, n);
        jac.set_column(0, &vel);
        let mut err = None;
        let mut f = |z: &Vector| match self.forward(t, z) {
            Ok(x) => x,
            Err(e) => {
                err = Some(e);
                Vector::zeros(n)
            }
        };
        for i in 0..n - 1 {
            let col = central_diff4(&mut f, y, i, JACOBIAN_FD_STEP * self.eps.max(1e-3));
            jac.set_column(i + 1, &col);
        }
        if let Some(e) = err {
            return Err(e);
        }
        Ok(jac)
    }

    /// Tube coordinates of `x` by Newton iteration from the nearest axis sample.
    pub fn inverse(&self, x: &Vector) -> Result<(f64, Vector)> {
        let n = self.dim();
        let dom = self.field.domain();
        if let Some(inv) = &self.flat_inverse {
            let z = inv * dom.displacement(&self.p, x);
            return Ok((z[0], z.rows(1, n - 1).into_owned()));
        }
        let axis = self.axis.as_ref().expect("curved charts carry an axis table");
        let (k, _) = nearest_axis(axis, dom, x, None);
        self.newton(x, axis.t[k], Vector::zeros(n - 1))
    }

    fn newton(&self, x: &Vector, t0: f64, y0: Vector) -> Result<(f64, Vector)> {
        self.refine(x, t0, &y0, None)
    }

    /// Tube coordinates of `x` by Newton iteration from `(t0, y0)`.
    ///
    /// The Jacobian (`jac` if given, else the one at the start) is reused while
    /// the iteration contracts fast and recomputed otherwise, so a start close
    /// to the answer costs one forward evaluation per step.
    pub fn refine(&self, x: &Vector, t0: f64, y0: &Vector, jac: Option<&Matrix>) -> Result<(f64, Vector)> {
        let n = self.dim();
        if self.flat_inverse.is_some() {
            return self.inverse(x);
        }
        let dom = self.field.domain();
        let diverged = || Error::InverseDiverged { worst: x.iter().cloned().collect() };
        let (mut t, mut y) = (t0, y0.clone());
        let mut lu = jac.map(|j| j.clone().lu());
        let mut last = f64::INFINITY;
        for _ in 0..NEWTON_MAX_ITER {
            let (fx, vel) = self.forward_with_velocity(t, &y)?;
            let r = dom.displacement(x, &fx);
            let size = r.amax();
            if lu.is_none() || size > 0.1 * last {
                lu = Some(self.rough_jacobian(t, &y, vel)?.lu());
            }
            last = size;
            let step = lu.as_ref().and_then(|l| l.solve(&r)).ok_or_else(diverged)?;
            t -= step[0];
            for i in 0..n - 1 {
                y[i] -= step[i + 1];
            }
            if !t.is_finite() || t.abs() > 4.0 * self.eta || y.norm() > 4.0 * self.eps.max(self.eta) {
                break;
            }
            if step.amax() < NEWTON_TOL {
                return Ok((t, y));
            }
        }
        Err(diverged())
    }

    /// `D xi` with the exact `t`-column and second-order `y`-columns.
    fn rough_jacobian(&self, t: f64, y: &Vector, vel: Vector) -> Result<Matrix> {
        let n = self.dim();
        let h = 1e-6;
        let mut jac = Matrix::zeros(n, n);
        jac.set_column(0, &vel);
        for i in 0..n - 1 {
            let mut a = y.clone();
            let mut b = y.clone();
            a[i] += h;
            b[i] -= h;
            jac.set_column(i + 1, &((self.forward(t, &a)? - self.forward(t, &b)?) / (2.0 * h)));
        }
        Ok(jac)
    }

    /// Tube coordinates of `x` when it can lie in `[t_lo, t_hi] x D(radius)`
    /// (with `|t|` taken symmetric when `symmetric` is set); `None` when a
    /// conservative distance test or the inverse rules it out.
    pub fn locate(&self, x: &Vector, t_range: (f64, f64), symmetric: bool, radius: f64) -> Result<Option<(f64, Vector)>> {
        let inside = |t: f64, y: &Vector| {
            let tt = if symmetric { t.abs() } else { t };
            tt >= t_range.0 && tt <= t_range.1 && y.norm() < radius
        };
        if self.flat_inverse.is_some() {
            let (t, y) = self.inverse(x)?;
            return Ok(inside(t, &y).then_some((t, y)));
        }
        let n = self.dim();
        let axis = self.axis.as_ref().expect("curved charts carry an axis table");
        let dom = self.field.domain();
        let window = |t: f64| {
            let tt = if symmetric { t.abs() } else { t };
            tt >= t_range.0 - axis.dt && tt <= t_range.1 + axis.dt
        };
        let (k, d) = nearest_axis(axis, dom, x, Some(&window));
        if k == usize::MAX {
            return Ok(None);
        }
        let slack = HULL_SAFETY * (axis.lip_t * axis.dt / 2.0 + axis.lip_y * radius);
        if d > slack {
            return Ok(None);
        }
        match self.newton(x, axis.t[k], Vector::zeros(n - 1)) {
            Ok((t, y)) => Ok(inside(t, &y).then_some((t, y))),
            Err(e) => Err(e),
        }
    }

    /// Geodesic distance from `p` by Newton shooting on `exp_p`.
    pub fn distance_from_base(&self, x: &Vector) -> Result<f64> {
        let f = self.field.as_ref();
        let g = f.eval(&self.p);
        let dom = f.domain();
        let d0 = dom.displacement(&self.p, x);
        if f.constant().is_some() {
            return Ok(norm(&g, &d0));
        }
        let n = self.dim();
        let steps = self.patch.t_steps();
        let exp = |z: &Vector| flow(f, &self.p, z, 1.0, steps).map(|r| r.0);
        let mut z = d0;
        for _ in 0..NEWTON_MAX_ITER {
            let r = dom.displacement(x, &exp(&z)?);
            if r.amax() < 1e-12 {
                return Ok(norm(&g, &z));
            }
            let mut jac = Matrix::zeros(n, n);
            for i in 0..n {
                let h = 1e-6;
                let mut a = z.clone();
                let mut b = z.clone();
                a[i] += h;
                b[i] -= h;
                jac.set_column(i, &(dom.displacement(&exp(&b)?, &exp(&a)?) / (2.0 * h)));
            }
            let step = jac.lu().solve(&r).ok_or_else(|| Error::InverseDiverged { worst: x.iter().cloned().collect() })?;
            z -= step;
        }
        Err(Error::InverseDiverged { worst: x.iter().cloned().collect() })
    }

    /// Region of a point given in tube coordinates, or `None` when the
    /// coordinates lie outside `[-2 eta, 2 eta] x D(eps)`.
    pub fn region_of_coords(&self, t: f64, y: &Vector) -> Option<RegionLabel> {
        let (eta, eps) = (self.eta, self.eps);
        if t.abs() > 2.0 * eta || y.norm() >= eps {
            return None;
        }
        if t.abs() <= eta {
            Some(RegionLabel::CoreTube)
        } else if t > eta && t < eta + 6.0 * eps {
            Some(RegionLabel::UPlus)
        } else if t < -eta && t > -eta - 6.0 * eps {
            Some(RegionLabel::UMinus)
        } else {
            None
        }
    }

    pub fn classify_region(&self, x: &Vector) -> RegionLabel {
        if let Ok(Some((t, y))) = self.locate(x, (-2.0 * self.eta, 2.0 * self.eta), false, self.eps) {
            if let Some(label) = self.region_of_coords(t, &y) {
                return label;
            }
        }
        match self.distance_from_base(x) {
            Ok(d) if d > self.eta && d < self.eta + 7.0 * self.eps => RegionLabel::Shell,
            _ => RegionLabel::Outside,
        }
    }

    /// `P(v, w)` sampled on a `t_count x s_count` grid, `t` on `[-2 eta, 2 eta]`
    /// and `s` at cell centres of `(-eps, eps)`.
    pub fn local_surface(&self, t_count: usize, s_count: usize) -> Result<LocalSurface> {
        let n = self.dim();
        let mut rows = Vec::with_capacity(t_count);
        let ts: Vec<f64> = (0..t_count).map(|i| -2.0 * self.eta + 4.0 * self.eta * i as f64 / (t_count.max(2) - 1) as f64).collect();
        let ss: Vec<f64> = (0..s_count).map(|j| -self.eps + (j as f64 + 0.5) * 2.0 * self.eps / s_count as f64).collect();
        for &t in &ts {
            let mut row = Vec::with_capacity(s_count);
            for &s in &ss {
                let mut y = Vector::zeros(n - 1);
                y[0] = s;
                row.push(self.forward(t, &y)?);
            }
            rows.push(row);
        }
        Ok(LocalSurface { t: ts, s: ss, points: rows })
    }
}

fn nearest_axis(
    axis: &AxisTable,
    dom: &crate::chart_metric::ChartDomain,
    x: &Vector,
    window: Option<&dyn Fn(f64) -> bool>,
) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (k, (tk, pk)) in axis.t.iter().zip(&axis.points).enumerate() {
        if let Some(w) = window {
            if !w(*tk) {
                continue;
            }
        }
        let d = dom.chart_distance(pk, x);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Samples of the local surface `P(v, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSurface {
    pub t: Vec<f64>,
    pub s: Vec<f64>,
    /// `points[i][j] = xi(t_i, (s_j, 0, ...))`.
    pub points: Vec<Vec<Vector>>,
}

impl LocalSurface {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let n = self.points.first().and_then(|r| r.first()).map_or(0, |x| x.len());
        let mut header = String::from("t,s");
        for i in 1..=n {
            header.push_str(&format!(",x_{i}"));
        }
        writeln!(out, "{header}")?;
        for (i, row) in self.points.iter().enumerate() {
            for (j, x) in row.iter().enumerate() {
                let mut line = format!("{},{}", self.t[i], self.s[j]);
                for c in x.iter() {
                    line.push_str(&format!(",{c}"));
                }
                writeln!(out, "{line}")?;
            }
        }
        Ok(())
    }
}
