use std::sync::Arc;

use super::{integrate_speed, ChartDomain, CurveDiscrete, CurveMeasure, MetricField};
use crate::error::{Error, Result};
use crate::linalg::{inner, Matrix, Vector};

/// Second-difference steps for the fundamental tensor, Richardson-extrapolated.
const TENSOR_STEPS: [f64; 3] = [1e-3, 5e-4, 2.5e-4];
const TENSOR_SPREAD_TOL: f64 = 1e-4;

/// A reversible Finsler structure on a chart: a positively 1-homogeneous norm
/// on each tangent space.
pub trait FinslerField: Send + Sync {
    fn domain(&self) -> &ChartDomain;
    fn norm(&self, x: &Vector, v: &Vector) -> f64;
}

/// `f(x, v) = sqrt(g_x(v, v))`.
#[derive(Clone)]
pub struct RiemannSquare {
    metric: Arc<dyn MetricField>,
}

impl RiemannSquare {
    pub fn new(metric: Arc<dyn MetricField>) -> Self {
        Self { metric }
    }

    pub fn metric(&self) -> &Arc<dyn MetricField> {
        &self.metric
    }
}

impl FinslerField for RiemannSquare {
    fn domain(&self) -> &ChartDomain {
        self.metric.domain()
    }
    fn norm(&self, x: &Vector, v: &Vector) -> f64 {
        inner(&self.metric.eval(x), v, v).max(0.0).sqrt()
    }
}

/// Reversible quartic Minkowski norm with a conformal factor:
/// `f(x, v) = (1 + k |x|^2) ((1 - m) |v|^4 + m sum v_i^4)^(1/4)`.
///
/// `m = 1` is the pure quartic-root norm `(sum v_i^4)^(1/4)`; `m < 1` is
/// strongly convex.
#[derive(Debug, Clone)]
pub struct QuarticFinsler {
    domain: ChartDomain,
    mix: f64,
    conformal: f64,
}

impl QuarticFinsler {
    pub fn new(domain: ChartDomain, mix: f64, conformal: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&mix) || conformal < 0.0 {
            return Err(Error::Config("quartic Finsler needs mix in [0,1] and conformal >= 0".into()));
        }
        Ok(Self { domain, mix, conformal })
    }
}

impl FinslerField for QuarticFinsler {
    fn domain(&self) -> &ChartDomain {
        &self.domain
    }
    fn norm(&self, x: &Vector, v: &Vector) -> f64 {
        let q2: f64 = v.iter().map(|a| a * a).sum();
        let q4: f64 = v.iter().map(|a| a.powi(4)).sum();
        let scale = 1.0 + self.conformal * x.norm_squared();
        scale * ((1.0 - self.mix) * q2 * q2 + self.mix * q4).max(0.0).powf(0.25)
    }
}

fn second_difference<F: FinslerField + ?Sized>(ff: &F, x: &Vector, v: &Vector, h: f64) -> Matrix {
    let n = v.len();
    let f2 = |w: &Vector| {
        let f = ff.norm(x, w);
        f * f
    };
    let mut out = Matrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let shifted = |sa: f64, sb: f64| {
                let mut w = v.clone();
                w[a] += sa * h;
                w[b] += sb * h;
                f2(&w)
            };
            let d = (shifted(1.0, 1.0) - shifted(1.0, -1.0) - shifted(-1.0, 1.0) + shifted(-1.0, -1.0)) / (8.0 * h * h);
            out[(a, b)] = d;
            out[(b, a)] = d;
        }
    }
    out
}

/// `g_v(a, b) = 1/2 d^2/ds dt f^2(v + s a + t b)` at `s = t = 0`, by central
/// second differences at three steps with Richardson extrapolation.
pub fn finsler_fundamental_tensor<F: FinslerField + ?Sized>(ff: &F, x: &Vector, v: &Vector) -> Result<Matrix> {
    let len = ff.norm(x, v);
    if !(len > 1e-12) || !len.is_finite() {
        return Err(Error::NonSmoothAtVector { vector: v.iter().cloned().collect(), spread: f64::INFINITY });
    }
    let u = v / len;
    let d: Vec<Matrix> = TENSOR_STEPS.iter().map(|&h| second_difference(ff, x, &u, h)).collect();
    let r1 = (&d[1] * 4.0 - &d[0]) / 3.0;
    let r2 = (&d[2] * 4.0 - &d[1]) / 3.0;
    let scale = r2.iter().map(|a| a.abs()).fold(0.0, f64::max).max(1e-300);
    let spread = (&r1 - &r2).iter().map(|a| a.abs()).fold(0.0, f64::max) / scale;
    if spread > TENSOR_SPREAD_TOL || !spread.is_finite() {
        return Err(Error::NonSmoothAtVector { vector: v.iter().cloned().collect(), spread });
    }
    Ok(&r2 + (&r2 - &r1) / 15.0)
}

/// The covector `w -> g_v(w, v)`.
pub fn legendre_transform<F: FinslerField + ?Sized>(ff: &F, x: &Vector, v: &Vector) -> Result<Vector> {
    let g = finsler_fundamental_tensor(ff, x, v)?;
    Ok(g * v)
}

/// Finsler length and energy of a discretized curve.
pub fn finsler_curve_length<F: FinslerField + ?Sized>(ff: &F, c: &CurveDiscrete) -> Result<CurveMeasure> {
    let dom = ff.domain();
    integrate_speed(c, |x, v| {
        dom.reduce(x)?;
        Ok(ff.norm(x, v))
    })
}
