use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};

use super::{ChartDomain, MetricField, DEFAULT_FD_STEP};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// Flat metric on a box.
#[derive(Debug, Clone)]
pub struct Euclidean {
    domain: ChartDomain,
    half_width: f64,
}

impl Euclidean {
    pub fn new(dim: usize, half_width: f64) -> Result<Self> {
        Ok(Self { domain: ChartDomain::cube(dim, half_width)?, half_width })
    }
}

impl MetricField for Euclidean {
    fn domain(&self) -> &ChartDomain {
        &self.domain
    }
    fn eval(&self, x: &Vector) -> Matrix {
        Matrix::identity(x.len(), x.len())
    }
    fn deriv(&self, x: &Vector) -> Option<Vec<Matrix>> {
        Some(vec![Matrix::zeros(x.len(), x.len()); x.len()])
    }
    fn constant(&self) -> Option<Matrix> {
        let n = self.domain.dim();
        Some(Matrix::identity(n, n))
    }
    fn injectivity_bound(&self) -> f64 {
        self.half_width
    }
}

/// Flat torus `R^n / (P_1 Z x ... x P_n Z)`.
#[derive(Debug, Clone)]
pub struct FlatTorus {
    domain: ChartDomain,
}

impl FlatTorus {
    pub fn new(periods: Vec<f64>) -> Result<Self> {
        let n = periods.len();
        let upper = periods.clone();
        let domain = ChartDomain::new(vec![0.0; n], upper, periods.into_iter().map(Some).collect())?;
        Ok(Self { domain })
    }

    pub fn periods(&self) -> Vec<f64> {
        self.domain.periods().iter().map(|p| p.unwrap_or(0.0)).collect()
    }
}

impl MetricField for FlatTorus {
    fn domain(&self) -> &ChartDomain {
        &self.domain
    }
    fn eval(&self, x: &Vector) -> Matrix {
        Matrix::identity(x.len(), x.len())
    }
    fn deriv(&self, x: &Vector) -> Option<Vec<Matrix>> {
        Some(vec![Matrix::zeros(x.len(), x.len()); x.len()])
    }
    fn constant(&self) -> Option<Matrix> {
        let n = self.domain.dim();
        Some(Matrix::identity(n, n))
    }
    fn injectivity_bound(&self) -> f64 {
        0.5 * self.periods().into_iter().fold(f64::INFINITY, f64::min)
    }
}

/// Unit round sphere in colatitude/longitude coordinates `(theta, phi)`,
/// `g = d theta^2 + sin^2(theta) d phi^2`, longitude periodic.
#[derive(Debug, Clone)]
pub struct SphereChart {
    domain: ChartDomain,
}

impl SphereChart {
    /// `pole_margin` keeps the chart away from the coordinate singularities.
    pub fn new(pole_margin: f64) -> Result<Self> {
        let domain = ChartDomain::new(vec![pole_margin, 0.0], vec![PI - pole_margin, 2.0 * PI], vec![None, Some(2.0 * PI)])?;
        Ok(Self { domain })
    }

    /// The point of the unit sphere in `R^3` with chart coordinates `x`.
    pub fn embed_unit(&self, x: &Vector) -> Vector3<f64> {
        let (st, ct) = x[0].sin_cos();
        let (sp, cp) = x[1].sin_cos();
        Vector3::new(st * cp, st * sp, ct)
    }
}

impl MetricField for SphereChart {
    fn domain(&self) -> &ChartDomain {
        &self.domain
    }
    fn eval(&self, x: &Vector) -> Matrix {
        let s = x[0].sin();
        Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, s * s])
    }
    fn deriv(&self, x: &Vector) -> Option<Vec<Matrix>> {
        let d = 2.0 * x[0].sin() * x[0].cos();
        Some(vec![Matrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, d]), Matrix::zeros(2, 2)])
    }
    fn injectivity_bound(&self) -> f64 {
        PI
    }
    fn geodesic_accel(&self, x: &Vector, v: &Vector) -> Result<Vector> {
        let (s, c) = x[0].sin_cos();
        Ok(Vector::from_column_slice(&[s * c * v[1] * v[1], -2.0 * c / s * v[0] * v[1]]))
    }
}

/// Triaxial ellipsoid `x^2/a^2 + y^2/b^2 + z^2/c^2 = 1` in rotated spherical
/// coordinates. The chart poles sit on the `(1,1,1)` diagonal so that all three
/// principal sections are smooth loops winding once in longitude.
#[derive(Debug, Clone)]
pub struct EllipsoidChart {
    domain: ChartDomain,
    axes: [f64; 3],
    rotation: Matrix3<f64>,
    embed: Matrix3<f64>,
}

impl EllipsoidChart {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && c > 0.0) {
            return Err(Error::Config("ellipsoid axes must be positive".into()));
        }
        let n = Vector3::new(1.0, 1.0, 1.0).normalize();
        let e1 = Vector3::new(1.0, -1.0, 0.0).normalize();
        let e2 = n.cross(&e1);
        let rotation = Matrix3::from_columns(&[e1, e2, n]);
        let embed = Matrix3::from_diagonal(&Vector3::new(a, b, c)) * rotation;
        let domain = ChartDomain::new(vec![0.05, 0.0], vec![PI - 0.05, 2.0 * PI], vec![None, Some(2.0 * PI)])?;
        Ok(Self { domain, axes: [a, b, c], rotation, embed })
    }

    pub fn axes(&self) -> [f64; 3] {
        self.axes
    }

    /// Embedding `(theta, phi) -> R^3`.
    pub fn embedding(&self, x: &Vector) -> Vector3<f64> {
        let (st, ct) = x[0].sin_cos();
        let (sp, cp) = x[1].sin_cos();
        self.embed * Vector3::new(st * cp, st * sp, ct)
    }

    /// Chart coordinates of a point on the unit sphere before the axis scaling.
    pub fn chart_of_sphere_point(&self, s: &Vector3<f64>) -> Vector {
        let u = self.rotation.transpose() * s;
        let theta = u[2].clamp(-1.0, 1.0).acos();
        let phi = u[1].atan2(u[0]);
        Vector::from_column_slice(&[theta, phi])
    }

    /// Chart coordinates of an ambient point on the ellipsoid.
    pub fn chart_of_point(&self, p: &Vector3<f64>) -> Vector {
        let s = Vector3::new(p[0] / self.axes[0], p[1] / self.axes[1], p[2] / self.axes[2]);
        self.chart_of_sphere_point(&s.normalize())
    }

    /// Principal section orthogonal to `normal_axis` as a closed chart curve with `m` intervals,
    /// parametrized by the ellipse angle and unwrapped in longitude.
    pub fn principal_section(&self, normal_axis: usize, m: usize) -> Vec<Vector> {
        let (i, j) = match normal_axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let mut out: Vec<Vector> = Vec::with_capacity(m + 1);
        for k in 0..=m {
            let a = 2.0 * PI * k as f64 / m as f64;
            let mut s = Vector3::zeros();
            s[i] = a.cos();
            s[j] = a.sin();
            let mut x = self.chart_of_sphere_point(&s);
            if let Some(prev) = out.last() {
                x[1] = prev[1] + (x[1] - prev[1] + PI).rem_euclid(2.0 * PI) - PI;
            }
            out.push(x);
        }
        out
    }

    fn frames(&self, x: &Vector) -> ([Vector3<f64>; 2], [[Vector3<f64>; 2]; 2]) {
        let (st, ct) = x[0].sin_cos();
        let (sp, cp) = x[1].sin_cos();
        let m = &self.embed;
        let u = Vector3::new(st * cp, st * sp, ct);
        let ut = Vector3::new(ct * cp, ct * sp, -st);
        let up = Vector3::new(-st * sp, st * cp, 0.0);
        let utp = Vector3::new(-ct * sp, ct * cp, 0.0);
        let upp = Vector3::new(-st * cp, -st * sp, 0.0);
        let first = [m * ut, m * up];
        let second = [[m * (-u), m * utp], [m * utp, m * upp]];
        (first, second)
    }
}

impl MetricField for EllipsoidChart {
    fn domain(&self) -> &ChartDomain {
        &self.domain
    }
    fn eval(&self, x: &Vector) -> Matrix {
        let (d, _) = self.frames(x);
        Matrix::from_fn(2, 2, |i, j| d[i].dot(&d[j]))
    }
    fn deriv(&self, x: &Vector) -> Option<Vec<Matrix>> {
        let (d, dd) = self.frames(x);
        Some((0..2).map(|k| Matrix::from_fn(2, 2, |i, j| dd[i][k].dot(&d[j]) + d[i].dot(&dd[j][k]))).collect())
    }
    fn injectivity_bound(&self) -> f64 {
        2.0
    }
    /// `Gamma(v, v) = G^-1 J^T (X_ij v^i v^j)` for the embedding `X`.
    fn geodesic_accel(&self, x: &Vector, v: &Vector) -> Result<Vector> {
        let (d, dd) = self.frames(x);
        let a = dd[0][0] * (v[0] * v[0]) + dd[0][1] * (2.0 * v[0] * v[1]) + dd[1][1] * (v[1] * v[1]);
        let g = nalgebra::Matrix2::new(d[0].dot(&d[0]), d[0].dot(&d[1]), d[1].dot(&d[0]), d[1].dot(&d[1]));
        let r = nalgebra::Vector2::new(d[0].dot(&a), d[1].dot(&a));
        let sol = g.try_inverse().ok_or_else(|| Error::SingularMetric { point: x.iter().cloned().collect() })? * r;
        Ok(Vector::from_column_slice(&[-sol[0], -sol[1]]))
    }
}

/// Test metric `g_11 = 1 + a x_1^2 + b x_1^3`, all other entries Euclidean, on `[-1,1]^2`.
#[derive(Debug, Clone)]
pub struct PolyTest {
    domain: ChartDomain,
    a: f64,
    b: f64,
}

impl PolyTest {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if a < 0.0 || b.abs() >= 1.0 {
            return Err(Error::Config("poly-test coefficients break positive definiteness".into()));
        }
        Ok(Self { domain: ChartDomain::cube(2, 1.0)?, a, b })
    }
}

impl MetricField for PolyTest {
    fn domain(&self) -> &ChartDomain {
        &self.domain
    }
    fn eval(&self, x: &Vector) -> Matrix {
        let t = x[0];
        let mut g = Matrix::identity(2, 2);
        g[(0, 0)] = 1.0 + self.a * t * t + self.b * t * t * t;
        g
    }
    fn deriv(&self, x: &Vector) -> Option<Vec<Matrix>> {
        let t = x[0];
        let mut d0 = Matrix::zeros(2, 2);
        d0[(0, 0)] = 2.0 * self.a * t + 3.0 * self.b * t * t;
        Some(vec![d0, Matrix::zeros(2, 2)])
    }
    fn injectivity_bound(&self) -> f64 {
        0.5
    }
    /// Only `Gamma^1_11 = h' / (2 h)` is nonzero, with `h = g_11`.
    fn geodesic_accel(&self, x: &Vector, v: &Vector) -> Result<Vector> {
        let t = x[0];
        let h = 1.0 + self.a * t * t + self.b * t * t * t;
        let dh = 2.0 * self.a * t + 3.0 * self.b * t * t;
        Ok(Vector::from_column_slice(&[-0.5 * dh / h * v[0] * v[0], 0.0]))
    }
}

type EvalFn = dyn Fn(&Vector) -> Matrix + Send + Sync;
type DerivFn = dyn Fn(&Vector) -> Vec<Matrix> + Send + Sync;

/// Metric given by closures.
#[derive(Clone)]
pub struct ClosureMetric {
    domain: ChartDomain,
    eval: Arc<EvalFn>,
    deriv: Option<Arc<DerivFn>>,
    fd_step: f64,
    inj: f64,
}

impl ClosureMetric {
    pub fn new<F>(domain: ChartDomain, eval: F) -> Self
    where
        F: Fn(&Vector) -> Matrix + Send + Sync + 'static,
    {
        Self { domain, eval: Arc::new(eval), deriv: None, fd_step: DEFAULT_FD_STEP, inj: f64::INFINITY }
    }

    pub fn with_deriv<F>(mut self, deriv: F) -> Self
    where
        F: Fn(&Vector) -> Vec<Matrix> + Send + Sync + 'static,
    {
        self.deriv = Some(Arc::new(deriv));
        self
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    pub fn with_injectivity_bound(mut self, inj: f64) -> Self {
        self.inj = inj;
        self
    }
}

impl MetricField for ClosureMetric {
    fn domain(&self) -> &ChartDomain {
        &self.domain
    }
    fn eval(&self, x: &Vector) -> Matrix {
        (self.eval)(x)
    }
    fn deriv(&self, x: &Vector) -> Option<Vec<Matrix>> {
        self.deriv.as_ref().map(|d| d(x))
    }
    fn fd_step(&self) -> f64 {
        self.fd_step
    }
    fn injectivity_bound(&self) -> f64 {
        self.inj
    }
}

/// Builds a metric by registry name: `euclidean`, `flat-torus`, `sphere-chart`,
/// `ellipsoid-chart`, `poly-test`.
pub fn metric_from_registry(name: &str, params: &BTreeMap<String, f64>) -> Result<Arc<dyn MetricField>> {
    let get = |k: &str, d: f64| params.get(k).copied().unwrap_or(d);
    let dim = get("dim", 3.0);
    if dim.fract() != 0.0 || dim < 2.0 {
        return Err(Error::Config(format!("dim must be an integer >= 2, got {dim}")));
    }
    let dim = dim as usize;
    Ok(match name {
        "euclidean" => Arc::new(Euclidean::new(dim, get("half_width", 5.0))?),
        "flat-torus" => {
            let periods = (0..dim).map(|i| get(&format!("period_{}", i + 1), get("period", 2.0 * PI))).collect();
            Arc::new(FlatTorus::new(periods)?)
        }
        "sphere-chart" => Arc::new(SphereChart::new(get("pole_margin", 0.1))?),
        "ellipsoid-chart" => Arc::new(EllipsoidChart::new(get("a", 1.0), get("b", 1.1), get("c", 1.3))?),
        "poly-test" => Arc::new(PolyTest::new(get("a", 1.0), get("b", 0.0))?),
        other => return Err(Error::Config(format!("unknown metric '{other}'"))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart_metric::{christoffel_from_derivatives, metric_derivatives_fd, FdOrder};
    use crate::linalg::{max_abs_diff, min_eigenvalue, vector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn shipped() -> Vec<Arc<dyn MetricField>> {
        let empty = BTreeMap::new();
        ["euclidean", "flat-torus", "sphere-chart", "ellipsoid-chart", "poly-test"]
            .iter()
            .map(|n| metric_from_registry(n, &empty).unwrap())
            .collect()
    }

    #[test]
    fn shipped_metrics_are_positive_definite_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for f in shipped() {
            let d = f.domain();
            for _ in 0..1000 {
                let x = Vector::from_fn(d.dim(), |i, _| rng.gen_range(d.lower()[i]..d.upper()[i]));
                let g = f.eval(&x);
                assert_eq!(max_abs_diff(&g, &g.transpose()), 0.0);
                assert!(min_eigenvalue(&g) > 0.0);
            }
        }
    }

    #[test]
    fn analytic_derivatives_agree_with_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for f in shipped() {
            let d = f.domain();
            for _ in 0..20 {
                let x = Vector::from_fn(d.dim(), |i, _| {
                    let (lo, hi) = (d.lower()[i] + 0.01, d.upper()[i] - 0.01);
                    rng.gen_range(lo..hi)
                });
                let exact = f.deriv(&x).unwrap();
                let fd = metric_derivatives_fd(f.as_ref(), &x, 1e-4, FdOrder::Fourth).unwrap();
                for (a, b) in exact.iter().zip(&fd) {
                    assert!(max_abs_diff(a, b) < 1e-9);
                }
                let g = f.eval(&x);
                christoffel_from_derivatives(&x, &g, &exact).unwrap();
            }
        }
    }

    #[test]
    fn closed_form_accelerations_match_christoffel_contraction() {
        let fields: Vec<Arc<dyn MetricField>> = vec![
            Arc::new(SphereChart::new(0.1).unwrap()),
            Arc::new(EllipsoidChart::new(1.0, 1.1, 1.3).unwrap()),
            Arc::new(PolyTest::new(0.8, 0.5).unwrap()),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for f in fields {
            for _ in 0..50 {
                let x = vector(&[rng.gen_range(0.3..2.8), rng.gen_range(0.0..6.2)]);
                let v = vector(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
                let g = f.eval(&x);
                let gamma = christoffel_from_derivatives(&x, &g, &f.deriv(&x).unwrap()).unwrap();
                let fast = f.geodesic_accel(&x, &v).unwrap();
                assert!((fast + gamma.contract(&v, &v)).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn ellipsoid_chart_embeds_onto_surface() {
        let e = EllipsoidChart::new(1.0, 1.1, 1.3).unwrap();
        let p = e.embedding(&vector(&[1.0, 2.0]));
        let lhs = (p[0] / 1.0).powi(2) + (p[1] / 1.1).powi(2) + (p[2] / 1.3).powi(2);
        assert!((lhs - 1.0).abs() < 1e-14);
        let back = e.chart_of_point(&p);
        assert!((back[0] - 1.0).abs() < 1e-12 && (back[1] - 2.0).abs() < 1e-12);
        // the z = 0 section winds once in longitude
        let loop_ = e.principal_section(2, 64);
        let wind = (loop_[64][1] - loop_[0][1]).abs();
        assert!((wind - 2.0 * PI).abs() < 1e-9);
    }

    #[test]
    fn registry_rejects_unknown_names() {
        assert!(metric_from_registry("hyperbolic", &BTreeMap::new()).is_err());
    }
}
