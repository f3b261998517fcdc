//! The single-segment perturbation: cutoffs, the displacement flow `Psi^s`,
//! the pulled-back metric, the family `g^(s) = (1 - alpha) g + alpha (Psi^-s)^* g`
//! and the displaced geodesic `c_s(t) = xi(t, u_s(t), 0, ...)`.

mod convexity;

pub use convexity::{parallel_convexity_check, parallel_convexity_residual, ConvexityGrid, ConvexityReport};

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::chart_metric::{christoffel_from_derivatives, ChartDomain, Christoffel, CurveDiscrete, FinslerField, MetricField};
use crate::error::{Error, Result};
use crate::geodesic_flow::GeodesicSegment;
use crate::linalg::{Matrix, Vector};
use crate::tubular::TubularChart;

/// RK4 substeps for the flow of `V = (0, psi, 0, ...)` over `[0, s]`.
pub const FLOW_SUBSTEPS: usize = 50;
/// Central-difference step for [`pullback_metric`].
pub const PULLBACK_FD_STEP: f64 = 1e-6;
const ILL_CONDITIONED: f64 = 1e12;

fn sigma(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

fn dsigma(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp() / (x * x)
    } else {
        0.0
    }
}

/// `S(x) = sigma(x) / (sigma(x) + sigma(1 - x))` with `sigma(x) = exp(-1/x)`:
/// smooth, `0` for `x <= 0`, `1` for `x >= 1`, and `S(x) + S(1 - x) = 1`.
pub fn smoothstep(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let a = sigma(x);
    a / (a + sigma(1.0 - x))
}

pub fn smoothstep_deriv(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    let (a, b) = (sigma(x), sigma(1.0 - x));
    let (da, db) = (dsigma(x), dsigma(1.0 - x));
    (da * b + a * db) / ((a + b) * (a + b))
}

/// The cutoff functions of the construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutoffSpec {
    pub theta: f64,
    pub eta: f64,
    pub eps: f64,
    pub delta: f64,
}

/// Validated cutoffs: `theta > 0`, `7 eps < eta`, `0 < 2 delta < eps`.
pub fn make_cutoffs(theta: f64, eta: f64, eps: f64, delta: f64) -> Result<CutoffSpec> {
    if !(theta > 0.0) {
        return Err(Error::BoundViolation(format!("theta must be positive, got {theta}")));
    }
    if !(eps > 0.0 && 7.0 * eps < eta) {
        return Err(Error::BoundViolation(format!("need 0 < 7*eps < eta, got eps = {eps}, eta = {eta}")));
    }
    if !(delta > 0.0 && 2.0 * delta < eps) {
        return Err(Error::BoundViolation(format!("need 0 < 2*delta < eps, got delta = {delta}, eps = {eps}")));
    }
    Ok(CutoffSpec { theta, eta, eps, delta })
}

impl CutoffSpec {
    /// `beta_theta(t) = S((2 theta - |t|) / theta)`.
    pub fn beta_theta(&self, t: f64) -> f64 {
        beta_radial(self.theta, t)
    }

    /// `beta_{eta,eps}(t) = S((|t| - eta)/eps) S((eta + 6 eps - |t|)/eps)`.
    pub fn beta_eta_eps(&self, t: f64) -> f64 {
        let a = t.abs();
        smoothstep((a - self.eta) / self.eps) * smoothstep((self.eta + 6.0 * self.eps - a) / self.eps)
    }

    /// `alpha(xi(t, y)) = beta_delta(|y|) beta_{eta,eps}(t)`.
    pub fn alpha(&self, t: f64, r: f64) -> f64 {
        beta_radial(self.delta, r) * self.beta_eta_eps(t)
    }

    /// The `t`-factor of `psi`, `S((eta + 4 eps - |t|) / (2 eps))`; also the
    /// shape of the profile `u_s = s a(t)`.
    pub fn profile_shape(&self, t: f64) -> f64 {
        smoothstep((self.eta + 4.0 * self.eps - t.abs()) / (2.0 * self.eps))
    }

    pub fn profile_shape_deriv(&self, t: f64) -> f64 {
        let x = (self.eta + 4.0 * self.eps - t.abs()) / (2.0 * self.eps);
        -t.signum() * smoothstep_deriv(x) / (2.0 * self.eps)
    }

    /// `psi(t, y) = S((eta + 4 eps - |t|)/(2 eps)) S((2 delta - |y|)/delta)`.
    pub fn psi(&self, t: f64, r: f64) -> f64 {
        self.profile_shape(t) * smoothstep((2.0 * self.delta - r) / self.delta)
    }

    /// `psi` with its gradient in `(t, y)`.
    fn psi_and_grad(&self, t: f64, y: &Vector) -> (f64, Vector) {
        let n = y.len() + 1;
        let r = y.norm();
        let a = self.profile_shape(t);
        let da = self.profile_shape_deriv(t);
        let xr = (2.0 * self.delta - r) / self.delta;
        let b = smoothstep(xr);
        let db = smoothstep_deriv(xr);
        let mut grad = Vector::zeros(n);
        grad[0] = da * b;
        if r > 0.0 && db != 0.0 {
            for i in 0..n - 1 {
                grad[i + 1] = -a * db * y[i] / (self.delta * r);
            }
        }
        (a * b, grad)
    }
}

fn beta_radial(theta: f64, t: f64) -> f64 {
    smoothstep((2.0 * theta - t.abs()) / theta)
}

/// The family `s -> g^(s)` around one segment.
#[derive(Clone)]
pub struct PerturbationFamily {
    chart: TubularChart,
    cutoffs: CutoffSpec,
    s_max: f64,
    finsler: Option<Arc<dyn FinslerField>>,
}

impl std::fmt::Debug for PerturbationFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PerturbationFamily")
            .field("chart", &self.chart)
            .field("cutoffs", &self.cutoffs)
            .field("s_max", &self.s_max)
            .finish()
    }
}

/// Where a point sits relative to the family's support.
#[derive(Debug, Clone, PartialEq)]
pub struct Located {
    pub t: f64,
    pub y: Vector,
    pub alpha: f64,
}

impl PerturbationFamily {
    /// `s_max` must lie in `(0, delta]`.
    pub fn new(chart: TubularChart, cutoffs: CutoffSpec, s_max: f64) -> Result<Self> {
        if (cutoffs.eta - chart.eta()).abs() > 0.0 || (cutoffs.eps - chart.eps()).abs() > 0.0 {
            return Err(Error::Config("cutoffs and chart disagree on eta or eps".into()));
        }
        if !(s_max > 0.0 && s_max <= cutoffs.delta) {
            return Err(Error::BoundViolation(format!("need 0 < s_max <= delta, got {s_max}")));
        }
        Ok(Self { chart, cutoffs, s_max, finsler: None })
    }

    /// Attaches a Finsler base `f`, used by [`Self::finsler_at`].
    pub fn with_finsler(mut self, f: Arc<dyn FinslerField>) -> Self {
        self.finsler = Some(f);
        self
    }

    pub fn chart(&self) -> &TubularChart {
        &self.chart
    }
    pub fn cutoffs(&self) -> &CutoffSpec {
        &self.cutoffs
    }
    pub fn s_max(&self) -> f64 {
        self.s_max
    }
    pub fn base(&self) -> &Arc<dyn MetricField> {
        self.chart.field()
    }

    fn support_t(&self) -> f64 {
        self.cutoffs.eta + 6.0 * self.cutoffs.eps
    }

    fn locate_in(&self, x: &Vector, t_range: (f64, f64), radius: f64) -> Result<Option<Located>> {
        let hit = self.chart.locate(x, t_range, true, radius)?;
        Ok(hit.map(|(t, y)| {
            let alpha = self.cutoffs.alpha(t, y.norm());
            Located { t, y, alpha }
        }))
    }

    /// Tube coordinates of `x` if it may lie where `alpha` or `psi` is nonzero
    /// (`|t| < eta + 6 eps`, `|y| < 2 delta`).
    pub fn locate(&self, x: &Vector) -> Result<Option<Located>> {
        self.locate_in(x, (0.0, self.support_t()), 2.0 * self.cutoffs.delta)
    }

    /// Tube coordinates of `x` if it lies within `margin` of the support of
    /// `alpha` (`eta < |t| < eta + 6 eps`, `|y| < 2 delta`).
    pub fn locate_alpha(&self, x: &Vector, margin: f64) -> Result<Option<Located>> {
        let range = (self.cutoffs.eta - margin, self.support_t() + margin);
        self.locate_in(x, range, 2.0 * self.cutoffs.delta + margin)
    }

    pub fn alpha(&self, x: &Vector) -> Result<f64> {
        Ok(self.locate(x)?.map_or(0.0, |l| l.alpha))
    }

    /// `Psi~^s(t, y)`: the `y`-part after flowing `V` for parameter `s`, with
    /// `d y' / d(t, y)` from the variational system (the exact derivative of
    /// the discrete map).
    pub fn flow_coords(&self, s: f64, t: f64, y: &Vector) -> Result<(Vector, Matrix)> {
        let m = y.len();
        let n = m + 1;
        let h = s / FLOW_SUBSTEPS as f64;
        let mut yc = y.clone();
        // rows of d y / d(t, y0); only the first row evolves
        let mut row = Vector::zeros(n);
        row[1] = 1.0;
        let deriv = |yv: &Vector, rv: &Vector| -> (f64, Vector) {
            let (psi, grad) = self.cutoffs.psi_and_grad(t, yv);
            // d/ds row = grad_t + grad_y . (d y / d(t, y0)); only y_1 moves
            let mut dr = Vector::zeros(n);
            dr[0] = grad[0] + grad[1] * rv[0];
            for j in 1..n {
                let ident = if j >= 2 { grad[j] } else { 0.0 };
                dr[j] = grad[1] * rv[j] + ident;
            }
            (psi, dr)
        };
        for _ in 0..FLOW_SUBSTEPS {
            let (k1, r1) = deriv(&yc, &row);
            let mut y2 = yc.clone();
            y2[0] += 0.5 * h * k1;
            let (k2, r2) = deriv(&y2, &(&row + &r1 * (0.5 * h)));
            let mut y3 = yc.clone();
            y3[0] += 0.5 * h * k2;
            let (k3, r3) = deriv(&y3, &(&row + &r2 * (0.5 * h)));
            let mut y4 = yc.clone();
            y4[0] += h * k3;
            let (k4, r4) = deriv(&y4, &(&row + &r3 * h));
            yc[0] += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            row += (r1 + r2 * 2.0 + r3 * 2.0 + r4) * (h / 6.0);
        }
        if yc.norm() >= self.cutoffs.eps {
            return Err(Error::FlowEscape { point: yc.iter().cloned().collect() });
        }
        let mut jac = Matrix::zeros(n, n);
        jac[(0, 0)] = 1.0;
        for j in 0..n {
            jac[(1, j)] = row[j];
        }
        for i in 1..m {
            jac[(i + 1, i + 1)] = 1.0;
        }
        Ok((yc, jac))
    }

    /// `u_s(t)`, the `y_1`-coordinate of `Psi~^s(t, 0)`.
    pub fn profile(&self, s: f64, t: f64) -> Result<f64> {
        let m = self.chart.dim() - 1;
        Ok(self.flow_coords(s, t, &Vector::zeros(m))?.0[0])
    }

    fn moves(&self, t: f64, y: &Vector) -> bool {
        t.abs() < self.cutoffs.eta + 4.0 * self.cutoffs.eps && y.norm() < 2.0 * self.cutoffs.delta
    }

    /// `Psi^s(x)`; the identity (returning `x` itself) off the support of `psi`.
    pub fn displacement_flow(&self, s: f64, x: &Vector) -> Result<Vector> {
        if s == 0.0 {
            return Ok(x.clone());
        }
        match self.locate(x)? {
            Some(l) if self.moves(l.t, &l.y) => {
                let (y2, _) = self.flow_coords(s, l.t, &l.y)?;
                self.chart.forward(l.t, &y2)
            }
            _ => Ok(x.clone()),
        }
    }

    /// `Psi^{-s}(x)` and its chart Jacobian, given the tube coordinates of `x`
    /// and optionally `D xi` there.
    fn inverse_flow_jacobian(&self, s: f64, l: &Located, dxi_here: Option<&Matrix>) -> Result<(Vector, Matrix)> {
        let (y2, dpsi) = self.flow_coords(-s, l.t, &l.y)?;
        let x2 = self.chart.forward(l.t, &y2)?;
        let here = match dxi_here {
            Some(j) => j.clone(),
            None => self.chart.jacobian(l.t, &l.y)?,
        };
        let dxi_there = self.chart.jacobian(l.t, &y2)?;
        let inv = here.try_inverse().ok_or(Error::JacobianIllConditioned { condition: f64::INFINITY })?;
        Ok((x2, dxi_there * dpsi * inv))
    }

    /// `g_1^(s) = (Psi^{-s})^* g` at a located point.
    fn pullback_located(&self, s: f64, l: &Located, dxi_here: Option<&Matrix>) -> Result<Matrix> {
        let (x2, d) = self.inverse_flow_jacobian(s, l, dxi_here)?;
        let g = self.base().eval(&x2);
        Ok(d.transpose() * g * d)
    }

    /// `g^(s)` at `x` whose tube coordinates are already known.
    fn metric_located(&self, s: f64, x: &Vector, l: &Located, dxi_here: Option<&Matrix>) -> Result<Matrix> {
        let g = self.base().eval(x);
        if s == 0.0 || l.alpha == 0.0 {
            return Ok(g);
        }
        let g1 = self.pullback_located(s, l, dxi_here)?;
        Ok(g * (1.0 - l.alpha) + g1 * l.alpha)
    }

    /// `(Psi^{-s})^* g` at `x` (equal to `g` off the support of `psi`).
    pub fn pullback_at(&self, s: f64, x: &Vector) -> Result<Matrix> {
        match self.locate(x)? {
            Some(l) if s != 0.0 && self.moves(l.t, &l.y) => self.pullback_located(s, &l, None),
            _ => Ok(self.base().eval(x)),
        }
    }

    /// `g^(s)(x)`. Where `alpha = 0` the base value is returned unchanged.
    pub fn metric_at(&self, s: f64, x: &Vector) -> Result<Matrix> {
        if s == 0.0 {
            return Ok(self.base().eval(x));
        }
        match self.locate_alpha(x, 0.0)? {
            Some(l) => self.metric_located(s, x, &l, None),
            None => Ok(self.base().eval(x)),
        }
    }

    /// `g^(s)(x)` for several `s`, locating `x` once.
    pub fn metric_at_each(&self, ss: &[f64], x: &Vector) -> Result<Vec<Matrix>> {
        let l = if ss.iter().any(|&s| s != 0.0) { self.locate_alpha(x, 0.0)? } else { None };
        ss.iter()
            .map(|&s| match &l {
                Some(l) if s != 0.0 => self.metric_located(s, x, l, None),
                _ => Ok(self.base().eval(x)),
            })
            .collect()
    }

    /// `f^(s)(x, v) = sqrt((1 - alpha) f(x, v)^2 + alpha f(Psi^{-s} x, D Psi^{-s} v)^2)`.
    pub fn finsler_at(&self, s: f64, x: &Vector, v: &Vector) -> Result<f64> {
        let f = self.finsler.as_ref().ok_or_else(|| Error::Config("family was built without a Finsler base".into()))?;
        let f0 = f.norm(x, v);
        if s == 0.0 {
            return Ok(f0);
        }
        match self.locate_alpha(x, 0.0)? {
            Some(l) if l.alpha > 0.0 => {
                let (x2, d) = self.inverse_flow_jacobian(s, &l, None)?;
                let f1 = f.norm(&x2, &(d * v));
                Ok(((1.0 - l.alpha) * f0 * f0 + l.alpha * f1 * f1).sqrt())
            }
            _ => Ok(f0),
        }
    }

    /// `c_s` sampled at `m` uniform parameters on `[-2 eta, 2 eta]`, with
    /// velocities `d_t xi + u_s'(t) d_{y_1} xi`.
    pub fn displaced_curve(&self, s: f64, m: usize) -> Result<CurveDiscrete> {
        let eta = self.cutoffs.eta;
        let params: Vec<f64> = (0..m).map(|i| -2.0 * eta + 4.0 * eta * i as f64 / (m - 1) as f64).collect();
        self.displaced_curve_at(s, &params)
    }

    /// `c_s` at the given parameters (each in `[-2 eta, 2 eta]`).
    pub fn displaced_curve_at(&self, s: f64, params: &[f64]) -> Result<CurveDiscrete> {
        let n = self.chart.dim();
        let mut nodes = Vec::with_capacity(params.len());
        let mut tangents = Vec::with_capacity(params.len());
        for &t in params {
            if t.abs() > 2.0 * self.cutoffs.eta * (1.0 + 1e-12) {
                return Err(Error::BoundViolation(format!("parameter {t} is outside [-2 eta, 2 eta]")));
            }
            let u = self.profile(s, t)?;
            let mut y = Vector::zeros(n - 1);
            y[0] = u;
            let (x, vel) = self.chart.forward_with_velocity(t, &y)?;
            let du = s * self.cutoffs.profile_shape_deriv(t);
            let tangent = if du == 0.0 {
                vel
            } else {
                let jac = self.chart.jacobian(t, &y)?;
                vel + jac.column(1) * du
            };
            nodes.push(x);
            tangents.push(tangent);
        }
        Ok(CurveDiscrete::new(nodes, params.to_vec(), false)?.with_tangents(tangents))
    }

    /// `c_s` with its residual under `g^(s)`.
    pub fn displaced_geodesic(self: &Arc<Self>, s: f64, m: usize) -> Result<GeodesicSegment> {
        let curve = self.displaced_curve(s, m)?;
        let metric = PerturbedMetric::new(self.clone(), s)?;
        GeodesicSegment::from_curve(&metric, curve)
    }

    /// Writes a JSON header line (prefixed by `# `) and a CSV of `g^(s)` at `points`.
    pub fn write_metric_dump<W: Write>(&self, s: f64, points: &[Vector], mut out: W) -> Result<()> {
        #[derive(Serialize)]
        struct Header<'a> {
            p: &'a [f64],
            v: &'a [f64],
            w: &'a [f64],
            eta: f64,
            eps: f64,
            delta: f64,
            s: f64,
        }
        let header = Header {
            p: self.chart.p().as_slice(),
            v: self.chart.v().as_slice(),
            w: self.chart.w().as_slice(),
            eta: self.cutoffs.eta,
            eps: self.cutoffs.eps,
            delta: self.cutoffs.delta,
            s,
        };
        let json = serde_json::to_string(&header).map_err(|e| Error::Io(e.to_string()))?;
        writeln!(out, "# {json}")?;
        let n = self.chart.dim();
        let mut cols: Vec<String> = (1..=n).map(|i| format!("x_{i}")).collect();
        for i in 1..=n {
            for j in i..=n {
                cols.push(format!("g_{i}{j}"));
            }
        }
        writeln!(out, "{}", cols.join(","))?;
        for x in points {
            let g = self.metric_at(s, x)?;
            let mut vals: Vec<String> = x.iter().map(|c| format!("{c}")).collect();
            for i in 0..n {
                for j in i..n {
                    vals.push(format!("{}", g[(i, j)]));
                }
            }
            writeln!(out, "{}", vals.join(","))?;
        }
        Ok(())
    }
}

/// `(D Phi)^T g(Phi(x)) (D Phi)` with `D Phi` by central differences.
pub fn pullback_metric<M, F>(field: &M, diffeo: F, x: &Vector) -> Result<Matrix>
where
    M: MetricField + ?Sized,
    F: Fn(&Vector) -> Result<Vector>,
{
    let n = x.len();
    let h = PULLBACK_FD_STEP;
    let mut d = Matrix::zeros(n, n);
    for k in 0..n {
        let mut a = x.clone();
        let mut b = x.clone();
        a[k] += h;
        b[k] -= h;
        d.set_column(k, &((diffeo(&a)? - diffeo(&b)?) / (2.0 * h)));
    }
    let sv = d.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition > ILL_CONDITIONED {
        return Err(Error::JacobianIllConditioned { condition });
    }
    let g = field.eval(&diffeo(x)?);
    Ok(d.transpose() * g * d)
}

/// `g^(s)` for one fixed `s` as a metric field.
///
/// Christoffel symbols are fourth-order differences of `g^(s)` inside the
/// support and those of the base metric outside it.
#[derive(Clone)]
pub struct PerturbedMetric {
    family: Arc<PerturbationFamily>,
    s: f64,
    h: f64,
}

impl PerturbedMetric {
    pub fn new(family: Arc<PerturbationFamily>, s: f64) -> Result<Self> {
        if !(0.0..=family.s_max).contains(&s) {
            return Err(Error::BoundViolation(format!("need 0 <= s <= s_max, got {s}")));
        }
        let h = family.cutoffs.delta / 40.0;
        Ok(Self { family, s, h })
    }

    pub fn family(&self) -> &Arc<PerturbationFamily> {
        &self.family
    }
    pub fn s(&self) -> f64 {
        self.s
    }

    fn stencil_reach(&self) -> f64 {
        3.0 * self.h
    }

    /// Whether the difference stencil at `x` can reach the support of `alpha`.
    pub fn touches(&self, x: &Vector) -> Result<bool> {
        if self.s == 0.0 {
            return Ok(false);
        }
        Ok(self.family.locate_alpha(x, self.stencil_reach())?.is_some())
    }
}

impl MetricField for PerturbedMetric {
    fn domain(&self) -> &ChartDomain {
        self.family.base().domain()
    }
    fn eval(&self, x: &Vector) -> Matrix {
        self.family.metric_at(self.s, x).unwrap_or_else(|_| Matrix::from_element(x.len(), x.len(), f64::NAN))
    }
    fn fd_step(&self) -> f64 {
        self.h
    }
    fn injectivity_bound(&self) -> f64 {
        self.family.base().injectivity_bound()
    }
    /// Fourth-order differences of `g^(s)`; stencil points are located in the
    /// tube by Newton steps from the centre, reusing the centre's `D xi`.
    fn christoffel_at(&self, x: &Vector) -> Result<Christoffel> {
        let fam = &self.family;
        let centre = if self.s == 0.0 { None } else { fam.locate_alpha(x, self.stencil_reach())? };
        let Some(c) = centre else {
            return fam.base().christoffel_at(x);
        };
        let n = x.len();
        let chart = fam.chart();
        let jc = chart.jacobian(c.t, &c.y)?;
        let jc_inv = jc.clone().try_inverse().ok_or(Error::JacobianIllConditioned { condition: f64::INFINITY })?;
        let g = fam.metric_located(self.s, x, &c, Some(&jc))?;
        let at = |i: usize, k: f64| -> Result<Matrix> {
            let mut xk = x.clone();
            xk[i] += k * self.h;
            let dz = &jc_inv * (&xk - x);
            let y0 = Vector::from_fn(n - 1, |j, _| c.y[j] + dz[j + 1]);
            let (t, y) = chart.refine(&xk, c.t + dz[0], &y0, Some(&jc))?;
            let alpha = fam.cutoffs.alpha(t, y.norm());
            fam.metric_located(self.s, &xk, &Located { t, y, alpha }, None)
        };
        let mut dg = Vec::with_capacity(n);
        for i in 0..n {
            dg.push((at(i, -2.0)? - at(i, 2.0)? + (at(i, 1.0)? - at(i, -1.0)?) * 8.0) / (12.0 * self.h));
        }
        christoffel_from_derivatives(x, &g, &dg)
    }
}
