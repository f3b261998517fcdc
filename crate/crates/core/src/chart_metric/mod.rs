//! Riemannian and reversible Finsler metrics on a single coordinate chart.
//!
//! A chart is a box in `R^n` whose axes may be periodic (flat tori, longitude
//! coordinates). Metrics are evaluated pointwise; Christoffel symbols come from
//! an analytic derivative when the field provides one and from central
//! differences otherwise.

mod fields;
mod finsler;

pub use fields::{metric_from_registry, ClosureMetric, EllipsoidChart, Euclidean, FlatTorus, PolyTest, SphereChart};
pub use finsler::{finsler_curve_length, finsler_fundamental_tensor, legendre_transform, FinslerField, QuarticFinsler, RiemannSquare};

use crate::error::{Error, Result};
use crate::linalg::{inner, min_eigenvalue, Matrix, Vector};

pub const DEFAULT_FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct ChartDomain {
    dim: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    periods: Vec<Option<f64>>,
}

impl ChartDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, periods: Vec<Option<f64>>) -> Result<Self> {
        let dim = lower.len();
        if dim < 2 {
            return Err(Error::DimensionTooLow { dim, need: 2 });
        }
        if upper.len() != dim || periods.len() != dim {
            return Err(Error::Config("chart box and periods must have one entry per axis".into()));
        }
        for i in 0..dim {
            if !(upper[i] > lower[i]) {
                return Err(Error::Config(format!("empty chart interval on axis {i}")));
            }
            if let Some(p) = periods[i] {
                if !(p > 0.0) {
                    return Err(Error::Config(format!("non-positive period on axis {i}")));
                }
            }
        }
        Ok(Self { dim, lower, upper, periods })
    }

    /// Symmetric box `[-half_width, half_width]^dim` without periodicity.
    pub fn cube(dim: usize, half_width: f64) -> Result<Self> {
        Self::new(vec![-half_width; dim], vec![half_width; dim], vec![None; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn periods(&self) -> &[Option<f64>] {
        &self.periods
    }

    pub fn is_periodic(&self, axis: usize) -> bool {
        self.periods[axis].is_some()
    }

    pub fn contains(&self, x: &Vector) -> bool {
        (0..self.dim).all(|i| self.periods[i].is_some() || (x[i] >= self.lower[i] && x[i] <= self.upper[i]))
    }

    /// Reduces periodic axes into `[lower, lower + period)`.
    pub fn reduce(&self, x: &Vector) -> Result<Vector> {
        if x.len() != self.dim || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain { point: x.iter().cloned().collect() });
        }
        let mut y = x.clone();
        for i in 0..self.dim {
            match self.periods[i] {
                Some(p) => y[i] = self.lower[i] + (y[i] - self.lower[i]).rem_euclid(p),
                None => {
                    if y[i] < self.lower[i] || y[i] > self.upper[i] {
                        return Err(Error::Domain { point: x.iter().cloned().collect() });
                    }
                }
            }
        }
        Ok(y)
    }

    /// Minimum-image displacement `b - a`.
    pub fn displacement(&self, a: &Vector, b: &Vector) -> Vector {
        let mut d = b - a;
        for i in 0..self.dim {
            if let Some(p) = self.periods[i] {
                d[i] -= p * (d[i] / p).round();
            }
        }
        d
    }

    /// The periodic image of `x` closest to `anchor`.
    pub fn wrap_near(&self, x: &Vector, anchor: &Vector) -> Vector {
        anchor + self.displacement(anchor, x)
    }

    /// Coordinate (chart-Euclidean) distance with periodic wrap.
    pub fn chart_distance(&self, a: &Vector, b: &Vector) -> f64 {
        self.displacement(a, b).norm()
    }
}

/// Christoffel symbols of the second kind, stored as `data[k][i][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    n: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n * n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.n + i) * self.n + j]
    }

    fn set(&mut self, k: usize, i: usize, j: usize, v: f64) {
        self.data[(k * self.n + i) * self.n + j] = v;
    }

    /// `Gamma^k_ij a^i b^j`.
    pub fn contract(&self, a: &Vector, b: &Vector) -> Vector {
        let n = self.n;
        let mut out = Vector::zeros(n);
        for k in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                let ai = a[i];
                if ai == 0.0 {
                    continue;
                }
                for j in 0..n {
                    acc += self.data[(k * n + i) * n + j] * ai * b[j];
                }
            }
            out[k] = acc;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Christoffel) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Assembles `Gamma^k_ij = 1/2 g^{kl}(d_i g_jl + d_j g_il - d_l g_ij)` from the
/// metric and its first derivatives `dg[k] = d_k g`.
pub fn christoffel_from_derivatives(x: &Vector, g: &Matrix, dg: &[Matrix]) -> Result<Christoffel> {
    let n = g.nrows();
    let ginv = g.clone().cholesky().map(|c| c.inverse()).ok_or_else(|| Error::SingularMetric { point: x.iter().cloned().collect() })?;
    let mut lowered = vec![0.0; n * n * n];
    for l in 0..n {
        for i in 0..n {
            for j in i..n {
                let v = 0.5 * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                lowered[(l * n + i) * n + j] = v;
                lowered[(l * n + j) * n + i] = v;
            }
        }
    }
    let mut out = Christoffel::zeros(n);
    for k in 0..n {
        for i in 0..n {
            for j in i..n {
                let mut acc = 0.0;
                for l in 0..n {
                    acc += ginv[(k, l)] * lowered[(l * n + i) * n + j];
                }
                out.set(k, i, j, acc);
                out.set(k, j, i, acc);
            }
        }
    }
    Ok(out)
}

/// Stencil used for finite-difference metric derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdOrder {
    Second,
    Fourth,
}

/// Finite-difference `d_k g` at `x` with step `h`.
pub fn metric_derivatives_fd<M: MetricField + ?Sized>(field: &M, x: &Vector, h: f64, order: FdOrder) -> Result<Vec<Matrix>> {
    let n = x.len();
    let dom = field.domain();
    let reach = match order {
        FdOrder::Second => h,
        FdOrder::Fourth => 2.0 * h,
    };
    for i in 0..n {
        if !dom.is_periodic(i) && (x[i] - reach < dom.lower()[i] || x[i] + reach > dom.upper()[i]) {
            return Err(Error::Domain { point: x.iter().cloned().collect() });
        }
    }
    let at = |i: usize, k: f64| {
        let mut y = x.clone();
        y[i] += k * h;
        field.eval(&y)
    };
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let d = match order {
            FdOrder::Second => (at(i, 1.0) - at(i, -1.0)) / (2.0 * h),
            FdOrder::Fourth => (at(i, -2.0) - at(i, 2.0) + (at(i, 1.0) - at(i, -1.0)) * 8.0) / (12.0 * h),
        };
        out.push(d);
    }
    Ok(out)
}

/// A Riemannian metric on a chart.
///
/// `eval` must return a symmetric matrix and must respect periodic axes on its
/// own (callers pass unreduced coordinates along continuous curves).
pub trait MetricField: Send + Sync {
    fn domain(&self) -> &ChartDomain;

    fn eval(&self, x: &Vector) -> Matrix;

    /// Analytic first derivatives `d_k g`, when available.
    fn deriv(&self, _x: &Vector) -> Option<Vec<Matrix>> {
        None
    }

    fn fd_step(&self) -> f64 {
        DEFAULT_FD_STEP
    }

    /// `Some(g)` when the metric is the same constant matrix everywhere.
    fn constant(&self) -> Option<Matrix> {
        None
    }

    /// Declared lower bound for the injectivity radius on the chart.
    fn injectivity_bound(&self) -> f64 {
        f64::INFINITY
    }

    fn christoffel_at(&self, x: &Vector) -> Result<Christoffel> {
        let n = x.len();
        if self.constant().is_some() {
            return Ok(Christoffel::zeros(n));
        }
        let g = self.eval(x);
        let dg = match self.deriv(x) {
            Some(d) => d,
            None => metric_derivatives_fd(self, x, self.fd_step(), FdOrder::Second)?,
        };
        christoffel_from_derivatives(x, &g, &dg)
    }

    /// Geodesic acceleration `-Gamma(v, v)`.
    fn geodesic_accel(&self, x: &Vector, v: &Vector) -> Result<Vector> {
        if self.constant().is_some() {
            return Ok(Vector::zeros(x.len()));
        }
        Ok(-self.christoffel_at(x)?.contract(v, v))
    }
}

/// Checked metric value: domain membership, symmetry and positive definiteness.
pub fn metric_eval<M: MetricField + ?Sized>(field: &M, x: &Vector) -> Result<Matrix> {
    let y = field.domain().reduce(x)?;
    let g = field.eval(&y);
    let lam = min_eigenvalue(&g);
    if !(lam > 0.0) {
        return Err(Error::DegenerateMetric { point: x.iter().cloned().collect(), min_eigenvalue: lam });
    }
    Ok(g)
}

/// Checked Christoffel symbols.
pub fn christoffel<M: MetricField + ?Sized>(field: &M, x: &Vector) -> Result<Christoffel> {
    field.domain().reduce(x)?;
    field.christoffel_at(x)
}

/// A discretized curve. Closed curves repeat their first node (modulo
/// periodicity) as the last node, so the parameter period is
/// `params.last() - params.first()`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveDiscrete {
    pub nodes: Vec<Vector>,
    pub params: Vec<f64>,
    pub closed: bool,
    /// Exact velocities when the producer knows them.
    pub tangents: Option<Vec<Vector>>,
}

impl CurveDiscrete {
    pub fn new(nodes: Vec<Vector>, params: Vec<f64>, closed: bool) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(Error::TooFewNodes { got: nodes.len(), need: 3 });
        }
        if params.len() != nodes.len() {
            return Err(Error::Config("curve params and nodes differ in length".into()));
        }
        if params.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("curve params must be strictly increasing".into()));
        }
        Ok(Self { nodes, params, closed, tangents: None })
    }

    pub fn with_tangents(mut self, tangents: Vec<Vector>) -> Self {
        debug_assert_eq!(tangents.len(), self.nodes.len());
        self.tangents = Some(tangents);
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].len()
    }

    pub fn span(&self) -> f64 {
        self.params[self.params.len() - 1] - self.params[0]
    }

    /// Largest parameter gap between consecutive nodes.
    pub fn max_spacing(&self) -> f64 {
        self.params.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub fn is_uniform(&self) -> bool {
        let h = self.span() / (self.len() - 1) as f64;
        self.params.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.max(1.0))
    }

    /// Node velocities: exact tangents when stored, otherwise finite differences
    /// (five-point stencils on uniform grids, wrapping around for closed curves).
    pub fn velocities(&self) -> Vec<Vector> {
        if let Some(t) = &self.tangents {
            return t.clone();
        }
        let m = self.len();
        let uniform = self.is_uniform();
        if !uniform || m < 5 {
            return (0..m)
                .map(|i| {
                    let (a, b) = if i == 0 {
                        (0, 1)
                    } else if i == m - 1 {
                        (m - 2, m - 1)
                    } else {
                        (i - 1, i + 1)
                    };
                    (&self.nodes[b] - &self.nodes[a]) / (self.params[b] - self.params[a])
                })
                .collect();
        }
        let h = self.span() / (m - 1) as f64;
        if self.closed {
            // Nodes 0..m-1 are distinct, node m-1 repeats node 0 shifted by the lattice jump.
            let shift = &self.nodes[m - 1] - &self.nodes[0];
            let period = m - 1;
            let node = |k: isize| -> Vector {
                let q = k.div_euclid(period as isize);
                let r = k.rem_euclid(period as isize) as usize;
                &self.nodes[r] + &shift * q as f64
            };
            return (0..m)
                .map(|i| {
                    let i = i as isize;
                    (node(i - 2) - node(i + 2) + (node(i + 1) - node(i - 1)) * 8.0) / (12.0 * h)
                })
                .collect();
        }
        let x = &self.nodes;
        (0..m)
            .map(|i| {
                if i >= 2 && i + 2 < m {
                    (&x[i - 2] - &x[i + 2] + (&x[i + 1] - &x[i - 1]) * 8.0) / (12.0 * h)
                } else if i < 2 {
                    // forward five-point
                    (&x[i] * -25.0 + &x[i + 1] * 48.0 - &x[i + 2] * 36.0 + &x[i + 3] * 16.0 - &x[i + 4] * 3.0) / (12.0 * h)
                } else {
                    (&x[i] * 25.0 - &x[i - 1] * 48.0 + &x[i - 2] * 36.0 - &x[i - 3] * 16.0 + &x[i - 4] * 3.0) / (12.0 * h)
                }
            })
            .collect()
    }
}

/// Length and energy of a curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveMeasure {
    pub length: f64,
    /// `E = 1/2 int |c'|^2`.
    pub energy: f64,
}

pub(crate) fn integrate_speed<F>(c: &CurveDiscrete, mut speed: F) -> Result<CurveMeasure>
where
    F: FnMut(&Vector, &Vector) -> Result<f64>,
{
    let vel = c.velocities();
    let mut s = Vec::with_capacity(c.len());
    for (x, v) in c.nodes.iter().zip(&vel) {
        s.push(speed(x, v)?);
    }
    let s2: Vec<f64> = s.iter().map(|v| v * v).collect();
    let m = c.len();
    let quad = |f: &[f64]| -> f64 {
        if c.is_uniform() && (m - 1).is_multiple_of(2) {
            let h = c.span() / (m - 1) as f64;
            let mut acc = f[0] + f[m - 1];
            for (i, v) in f.iter().enumerate().take(m - 1).skip(1) {
                acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
            }
            acc * h / 3.0
        } else {
            (0..m - 1).map(|i| 0.5 * (f[i] + f[i + 1]) * (c.params[i + 1] - c.params[i])).sum()
        }
    };
    Ok(CurveMeasure { length: quad(&s), energy: 0.5 * quad(&s2) })
}

/// Riemannian length and energy of a discretized curve.
pub fn curve_length<M: MetricField + ?Sized>(field: &M, c: &CurveDiscrete) -> Result<CurveMeasure> {
    let dom = field.domain();
    integrate_speed(c, |x, v| {
        dom.reduce(x)?;
        let g = field.eval(x);
        Ok(inner(&g, v, v).max(0.0).sqrt())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::vector;
    use std::f64::consts::PI;

    #[test]
    fn euclidean_is_identity() {
        let e = Euclidean::new(3, 5.0).unwrap();
        let g = metric_eval(&e, &vector(&[0.3, -1.0, 2.0])).unwrap();
        assert_eq!(g, Matrix::identity(3, 3));
        assert_eq!(christoffel(&e, &vector(&[0.1, 0.2, 0.3])).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn sphere_equator_is_identity_and_christoffel_closed_form() {
        let s = SphereChart::new(0.1).unwrap();
        let g = metric_eval(&s, &vector(&[PI / 2.0, 1.0])).unwrap();
        assert!((g[(0, 0)] - 1.0).abs() < 1e-15 && (g[(1, 1)] - 1.0).abs() < 1e-15);
        let gam = christoffel(&s, &vector(&[PI / 4.0, 0.3])).unwrap();
        assert!((gam.get(0, 1, 1) + 0.5).abs() < 1e-12);
        // Gamma^phi_{theta phi} = cot(theta)
        assert!((gam.get(1, 0, 1) - 1.0).abs() < 1e-12);
        assert_eq!(gam.get(1, 0, 1), gam.get(1, 1, 0));
    }

    #[test]
    fn outside_box_is_domain_error() {
        let e = Euclidean::new(2, 1.0).unwrap();
        assert!(matches!(metric_eval(&e, &vector(&[2.0, 0.0])), Err(Error::Domain { .. })));
        let t = FlatTorus::new(vec![1.0, 2.0]).unwrap();
        assert!(metric_eval(&t, &vector(&[7.5, -3.0])).is_ok());
    }

    #[test]
    fn degenerate_metric_is_reported() {
        let dom = ChartDomain::cube(2, 1.0).unwrap();
        let bad = ClosureMetric::new(dom, |_x| Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]));
        assert!(matches!(metric_eval(&bad, &vector(&[0.0, 0.0])), Err(Error::DegenerateMetric { .. })));
    }

    #[test]
    fn polynomial_metric_fd_matches_analytic() {
        // g_11 = 1 + x^2: d_1 g_11 = 2x, Gamma^1_11 = x / (1 + x^2)
        let poly = PolyTest::new(1.0, 0.0).unwrap();
        let x = vector(&[0.4, -0.2]);
        let fd = ClosureMetric::new(poly.domain().clone(), move |y| poly.eval(y));
        let gam = christoffel(&fd, &x).unwrap();
        let exact = 0.4 / (1.0 + 0.16);
        assert!((gam.get(0, 0, 0) - exact).abs() < 10.0 * DEFAULT_FD_STEP * DEFAULT_FD_STEP);
    }

    #[test]
    fn christoffel_fd_converges_at_second_order() {
        let poly = PolyTest::new(1.0, 1.0 / 3.0).unwrap();
        let x = vector(&[0.3, 0.1]);
        let exact = poly.christoffel_at(&x).unwrap();
        let err = |h: f64| {
            let g = poly.eval(&x);
            let dg = metric_derivatives_fd(&poly, &x, h, FdOrder::Second).unwrap();
            christoffel_from_derivatives(&x, &g, &dg).unwrap().max_abs_diff(&exact)
        };
        let ratio = err(2e-2) / err(1e-2);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn straight_segment_length_and_energy() {
        let e = Euclidean::new(3, 10.0).unwrap();
        let m = 11;
        let nodes: Vec<Vector> = (0..m).map(|i| vector(&[3.0, 4.0, 0.0]) * (i as f64 / (m - 1) as f64)).collect();
        let params: Vec<f64> = (0..m).map(|i| i as f64 / (m - 1) as f64).collect();
        let c = CurveDiscrete::new(nodes, params, false).unwrap();
        let meas = curve_length(&e, &c).unwrap();
        assert!((meas.length - 5.0).abs() < 1e-12);
        assert!((meas.energy - 12.5).abs() < 1e-12);
    }

    #[test]
    fn cauchy_schwarz_equality_for_unit_speed() {
        let e = Euclidean::new(2, 10.0).unwrap();
        let m = 201;
        let params: Vec<f64> = (0..m).map(|i| 2.0 * i as f64 / (m - 1) as f64).collect();
        let nodes = params.iter().map(|&t| vector(&[t.cos(), t.sin()])).collect();
        let c = CurveDiscrete::new(nodes, params, false).unwrap();
        let meas = curve_length(&e, &c).unwrap();
        assert!((2.0 * meas.energy * c.span() - meas.length * meas.length).abs() < 1e-8);
    }

    #[test]
    fn curve_validation() {
        let n = vec![vector(&[0.0, 0.0]); 2];
        assert!(matches!(CurveDiscrete::new(n, vec![0.0, 1.0], false), Err(Error::TooFewNodes { .. })));
        let n = vec![vector(&[0.0, 0.0]); 3];
        assert!(CurveDiscrete::new(n, vec![0.0, 1.0, 1.0], false).is_err());
    }
}
