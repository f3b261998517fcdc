//! Closed geodesics: energy descent on discrete loops, shooting to an exact
//! periodic orbit, the linearized Poincare map, and the audits built on them.

mod pipeline;

pub use pipeline::{theorem1_pipeline, theorem1_pipeline_with, DipPoint, PipelineOptions, PipelineReport};

use std::io::Write;

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::chart_metric::{metric_derivatives_fd, CurveDiscrete, FdOrder, MetricField};
use crate::error::{Error, Result};
use crate::geodesic_flow::{flow, GeodesicSegment};
use crate::intersect::trace_hausdorff;
use crate::linalg::{inner, orthonormal_complement, solve_lstsq, Matrix, Vector};

/// Eigenvalues closer than this to 1 make a closed geodesic degenerate.
pub const TOL_EIG: f64 = 1e-4;
pub const DEFAULT_LOOP_NODES: usize = 256;
const MAX_LOOP_NODES: usize = 4096;
const RESIDUAL_TOL: f64 = 1e-6;
const CLOSURE_TOL: f64 = 1e-6;
/// RK4 step for shooting and monodromy.
const SHOOT_STEP: f64 = 2.5e-3;
const SHOOT_TOL: f64 = 1e-12;
const SHOOT_MAX_ITER: usize = 30;
const ACCEL_FD_STEP: f64 = 1e-6;
const DESCENT_MAX_ITER: usize = 400;
const ARMIJO: f64 = 1e-4;
/// Multiplicities tried when looking for a shorter period.
const MAX_MULTIPLICITY: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedGeodesic {
    /// Unit-speed loop on `[0, length]`; the last node is the first shifted by `lattice`.
    pub segment: GeodesicSegment,
    pub length: f64,
    pub prime: bool,
    pub multiplicity: usize,
    /// Coordinate jump across one period (nonzero on periodic axes).
    pub lattice: Vector,
    /// Position plus velocity mismatch of the shooting solution after one period.
    pub closure_gap: f64,
}

impl ClosedGeodesic {
    pub fn curve(&self) -> &CurveDiscrete {
        &self.segment.curve
    }

    pub fn start(&self) -> (&Vector, &Vector) {
        (&self.segment.p, &self.segment.v)
    }

    pub fn residual(&self) -> f64 {
        self.segment.residual_max
    }

    /// The `m`-fold iterate `c(m t)`, traversed at unit speed.
    pub fn iterate<M: MetricField + ?Sized>(&self, field: &M, m: usize) -> Result<Self> {
        let (x0, v0) = self.start();
        let nodes = (self.curve().len() - 1) * m;
        let mut out = sample_loop(field, x0, v0, self.length * m as f64, &(&self.lattice * m as f64), nodes)?;
        out.closure_gap = self.closure_gap * m as f64;
        Ok(out)
    }

    /// The same loop sampled with `nodes` intervals.
    pub fn resample<M: MetricField + ?Sized>(&self, field: &M, nodes: usize) -> Result<Self> {
        let (x0, v0) = self.start();
        let mut out = sample_loop(field, x0, v0, self.length, &self.lattice, nodes)?;
        out.closure_gap = self.closure_gap;
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        self.segment.write_csv(out)
    }
}

/// `d/dt (x, v) = (v, a)` and its Jacobian `[[0, I], [d_x a, d_v a]]`.
fn accel_jacobian<M: MetricField + ?Sized>(field: &M, x: &Vector, v: &Vector) -> Result<(Vector, Matrix)> {
    let n = x.len();
    let a = field.geodesic_accel(x, v)?;
    let mut jac = Matrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        jac[(i, n + i)] = 1.0;
    }
    if field.constant().is_some() {
        return Ok((a, jac));
    }
    for k in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += ACCEL_FD_STEP;
        xm[k] -= ACCEL_FD_STEP;
        let dx = (field.geodesic_accel(&xp, v)? - field.geodesic_accel(&xm, v)?) / (2.0 * ACCEL_FD_STEP);
        // a is quadratic in v, so the polarization below is exact
        let mut vp = v.clone();
        let mut vm = v.clone();
        vp[k] += 1.0;
        vm[k] -= 1.0;
        let dv = (field.geodesic_accel(x, &vp)? - field.geodesic_accel(x, &vm)?) / 2.0;
        for i in 0..n {
            jac[(n + i, k)] = dx[i];
            jac[(n + i, n + k)] = dv[i];
        }
    }
    Ok((a, jac))
}

/// RK4 on the geodesic flow together with its variational equation. Returns
/// the final state and the derivative of the discrete flow map.
pub fn variational_flow<M: MetricField + ?Sized>(
    field: &M,
    x: &Vector,
    v: &Vector,
    t: f64,
    steps: usize,
) -> Result<(Vector, Vector, Matrix)> {
    let n = x.len();
    if field.constant().is_some() {
        let mut phi = Matrix::identity(2 * n, 2 * n);
        for i in 0..n {
            phi[(i, n + i)] = t;
        }
        return Ok((x + v * t, v.clone(), phi));
    }
    let h = t / steps as f64;
    let (mut x, mut v) = (x.clone(), v.clone());
    let mut phi = Matrix::identity(2 * n, 2 * n);
    for _ in 0..steps {
        let (a1, j1) = accel_jacobian(field, &x, &v)?;
        let k1 = &j1 * &phi;
        let (x2, v2) = (&x + &v * (0.5 * h), &v + &a1 * (0.5 * h));
        let (a2, j2) = accel_jacobian(field, &x2, &v2)?;
        let k2 = &j2 * (&phi + &k1 * (0.5 * h));
        let (x3, v3) = (&x + &v2 * (0.5 * h), &v + &a2 * (0.5 * h));
        let (a3, j3) = accel_jacobian(field, &x3, &v3)?;
        let k3 = &j3 * (&phi + &k2 * (0.5 * h));
        let (x4, v4) = (&x + &v3 * h, &v + &a3 * h);
        let (a4, j4) = accel_jacobian(field, &x4, &v4)?;
        let k4 = &j4 * (&phi + &k3 * h);
        x += (&v + &v2 * 2.0 + &v3 * 2.0 + &v4) * (h / 6.0);
        v += (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (h / 6.0);
        phi += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    Ok((x, v, phi))
}

fn shoot_steps(period: f64) -> usize {
    (period / SHOOT_STEP).ceil().max(16.0) as usize
}

/// Gauss-Newton on `(x0, v0, T)` for a unit-speed geodesic with
/// `x(T) = x0 + lattice`, `v(T) = v0`, and `x0` on the hyperplane through
/// the initial guess orthogonal to its velocity.
fn shoot<M: MetricField + ?Sized>(
    field: &M,
    x0: &Vector,
    v0: &Vector,
    period: f64,
    lattice: &Vector,
) -> Result<(Vector, Vector, f64, f64)> {
    let n = x0.len();
    let steps = shoot_steps(period);
    let (xr, vr) = (x0.clone(), v0.clone());
    let gr = field.eval(&xr);
    let (mut x, mut v, mut t) = (x0.clone(), v0.clone(), period);
    for _ in 0..SHOOT_MAX_ITER {
        let (xe, ve, phi) = variational_flow(field, &x, &v, t, steps)?;
        let ae = field.geodesic_accel(&xe, &ve)?;
        let g = field.eval(&x);
        let mut f = Vector::zeros(2 * n + 2);
        let mut jac = Matrix::zeros(2 * n + 2, 2 * n + 1);
        for i in 0..n {
            f[i] = xe[i] - x[i] - lattice[i];
            f[n + i] = ve[i] - v[i];
            jac[(i, 2 * n)] = ve[i];
            jac[(n + i, 2 * n)] = ae[i];
        }
        jac.view_mut((0, 0), (2 * n, 2 * n)).copy_from(&(phi - Matrix::identity(2 * n, 2 * n)));
        let gap = f.rows(0, 2 * n).norm();
        f[2 * n] = inner(&gr, &(&x - &xr), &vr);
        f[2 * n + 1] = inner(&g, &v, &v) - 1.0;
        let gv = &gr * &vr;
        let gvv = &g * &v * 2.0;
        for i in 0..n {
            jac[(2 * n, i)] = gv[i];
            jac[(2 * n + 1, n + i)] = gvv[i];
        }
        let dz = solve_lstsq(&jac, &f, 1e-10);
        for i in 0..n {
            x[i] -= dz[i];
            v[i] -= dz[n + i];
        }
        t -= dz[2 * n];
        if dz.amax() < SHOOT_TOL && gap < SHOOT_TOL.sqrt() {
            break;
        }
        if !(t > 0.0) {
            return Err(Error::NoConvergence("shooting period became non-positive".into()));
        }
    }
    let (xe, ve) = flow(field, &x, &v, t, steps)?;
    let gap = (&xe - &x - lattice).norm() + (&ve - &v).norm();
    if gap > CLOSURE_TOL {
        return Err(Error::NoConvergence(format!("closed geodesic shooting left a gap of {gap}")));
    }
    Ok((x, v, t, gap))
}

/// Samples the unit-speed loop from `(x0, v0)` with `nodes` intervals.
fn sample_loop<M: MetricField + ?Sized>(
    field: &M,
    x0: &Vector,
    v0: &Vector,
    period: f64,
    lattice: &Vector,
    nodes: usize,
) -> Result<ClosedGeodesic> {
    let dt = period / nodes as f64;
    let sub = (dt / SHOOT_STEP).ceil().max(1.0) as usize;
    let mut xs = vec![x0.clone()];
    let mut vs = vec![v0.clone()];
    for _ in 1..nodes {
        let (x, v) = flow(field, xs.last().unwrap(), vs.last().unwrap(), dt, sub)?;
        xs.push(x);
        vs.push(v);
    }
    xs.push(x0 + lattice);
    vs.push(v0.clone());
    let params = (0..=nodes).map(|k| k as f64 * dt).collect();
    let curve = CurveDiscrete::new(xs, params, true)?.with_tangents(vs);
    let segment = GeodesicSegment::from_curve(field, curve)?;
    let mut cg = ClosedGeodesic { segment, length: period, prime: true, multiplicity: 1, lattice: lattice.clone(), closure_gap: 0.0 };
    cg.multiplicity = detect_multiplicity(field, &cg);
    cg.prime = cg.multiplicity == 1;
    Ok(cg)
}

/// Largest `m` such that the loop repeats after `length / m`.
fn detect_multiplicity<M: MetricField + ?Sized>(field: &M, cg: &ClosedGeodesic) -> usize {
    let dom = field.domain();
    let c = cg.curve();
    let intervals = c.len() - 1;
    for m in (2..=MAX_MULTIPLICITY).rev() {
        if !intervals.is_multiple_of(m) {
            continue;
        }
        let shift = intervals / m;
        let tol = 1e-6 * cg.length.max(1.0);
        let repeats = (0..intervals).all(|i| {
            let j = (i + shift) % intervals;
            dom.chart_distance(&c.nodes[i], &c.nodes[j]) < tol
        });
        if repeats {
            return m;
        }
    }
    1
}

/// Closes the geodesic started at `(x0, v0)` after about `period` with the
/// given coordinate jump, then samples it so that its residual is at most
/// `1e-6` (starting from `nodes` intervals and doubling).
pub fn close_geodesic<M: MetricField + ?Sized>(
    field: &M,
    x0: &Vector,
    v0: &Vector,
    period: f64,
    lattice: &Vector,
    nodes: usize,
) -> Result<ClosedGeodesic> {
    let g = field.eval(x0);
    let v0 = v0 / inner(&g, v0, v0).sqrt();
    let (x, v, t, gap) = shoot(field, x0, &v0, period, lattice)?;
    let mut m = nodes.max(8);
    loop {
        let mut cg = sample_loop(field, &x, &v, t, lattice, m)?;
        cg.closure_gap = gap;
        if cg.residual() <= RESIDUAL_TOL {
            return Ok(cg);
        }
        if m >= MAX_LOOP_NODES {
            return Err(Error::NoConvergence(format!("closed geodesic residual {} at {m} nodes", cg.residual())));
        }
        m *= 2;
    }
}

/// Energy `sum g(mid)(d, d) / (2h)` of a discrete loop on the unit parameter circle.
fn loop_energy<M: MetricField + ?Sized>(field: &M, xs: &[Vector], lattice: &Vector) -> f64 {
    let n = xs.len();
    let h = 1.0 / n as f64;
    (0..n)
        .map(|i| {
            let next = if i + 1 == n { &xs[0] + lattice } else { xs[i + 1].clone() };
            let d = &next - &xs[i];
            let mid = (&next + &xs[i]) * 0.5;
            inner(&field.eval(&mid), &d, &d) / (2.0 * h)
        })
        .sum()
}

fn loop_gradient<M: MetricField + ?Sized>(field: &M, xs: &[Vector], lattice: &Vector) -> Result<Vec<Vector>> {
    let n = xs.len();
    let dim = xs[0].len();
    let h = 1.0 / n as f64;
    // per edge: g(mid) d and the metric-derivative term
    let mut flux = Vec::with_capacity(n);
    let mut bend = Vec::with_capacity(n);
    for i in 0..n {
        let next = if i + 1 == n { &xs[0] + lattice } else { xs[i + 1].clone() };
        let d = &next - &xs[i];
        let mid = (&next + &xs[i]) * 0.5;
        flux.push(field.eval(&mid) * &d / h);
        let dg = match field.deriv(&mid) {
            Some(dg) => dg,
            None if field.constant().is_some() => vec![Matrix::zeros(dim, dim); dim],
            None => metric_derivatives_fd(field, &mid, field.fd_step(), FdOrder::Fourth)?,
        };
        bend.push(Vector::from_fn(dim, |k, _| inner(&dg[k], &d, &d) / (4.0 * h)));
    }
    Ok((0..n)
        .map(|i| {
            let prev = (i + n - 1) % n;
            &flux[prev] - &flux[i] + &bend[prev] + &bend[i]
        })
        .collect())
}

/// Preconditioned gradient descent of the loop energy with Armijo
/// backtracking. Returns the final loop and the energy after every accepted
/// step (non-increasing by construction).
pub fn descend_loop<M: MetricField + ?Sized>(
    field: &M,
    xs: Vec<Vector>,
    lattice: &Vector,
    max_iter: usize,
) -> Result<(Vec<Vector>, Vec<f64>)> {
    let n = xs.len();
    if n < 8 {
        return Err(Error::TooFewNodes { got: n, need: 8 });
    }
    let h = 1.0 / n as f64;
    // H^1 preconditioner: periodic discrete Laplacian plus identity
    let mut lap = Matrix::identity(n, n);
    for i in 0..n {
        lap[(i, i)] += 2.0 / h;
        lap[(i, (i + 1) % n)] -= 1.0 / h;
        lap[(i, (i + n - 1) % n)] -= 1.0 / h;
    }
    let lu = lap.lu();
    let mut xs = xs;
    let mut e = loop_energy(field, &xs, lattice);
    let mut energies = vec![e];
    for _ in 0..max_iter {
        let grad = loop_gradient(field, &xs, lattice)?;
        let gmat = Matrix::from_fn(n, xs[0].len(), |i, k| grad[i][k]);
        let dir = -lu.solve(&gmat).ok_or_else(|| Error::NoConvergence("singular loop preconditioner".into()))?;
        let slope: f64 = gmat.component_mul(&dir).sum();
        if !(slope < -1e-14 * e.max(1e-300)) {
            break;
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<Vector> = xs.iter().enumerate().map(|(i, x)| x + dir.row(i).transpose() * step).collect();
            let et = loop_energy(field, &trial, lattice);
            if et <= e + ARMIJO * step * slope {
                accepted = Some((trial, et));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, et)) = accepted else { break };
        let done = e - et <= 1e-14 * e;
        xs = trial;
        e = et;
        energies.push(e);
        if done {
            break;
        }
    }
    Ok((xs, energies))
}

/// Descent on a discrete loop followed by shooting.
pub fn refine_closed_geodesic<M: MetricField + ?Sized>(
    field: &M,
    xs: Vec<Vector>,
    lattice: &Vector,
    max_descent: usize,
) -> Result<(ClosedGeodesic, Vec<f64>)> {
    let (xs, energies) = descend_loop(field, xs, lattice, max_descent)?;
    let n = xs.len();
    let h = 1.0 / n as f64;
    let prev = &xs[n - 1] - lattice;
    let v = (&xs[1] - &prev) / (2.0 * h);
    let length: f64 = (0..n)
        .map(|i| {
            let next = if i + 1 == n { &xs[0] + lattice } else { xs[i + 1].clone() };
            let d = &next - &xs[i];
            inner(&field.eval(&((&next + &xs[i]) * 0.5)), &d, &d).sqrt()
        })
        .sum();
    let cg = close_geodesic(field, &xs[0], &v, length, lattice, DEFAULT_LOOP_NODES)?;
    Ok((cg, energies))
}

#[derive(Debug, Clone)]
pub struct ClosedSearch {
    pub geodesics: Vec<ClosedGeodesic>,
    /// Seeds that did not converge, with the reason.
    pub failures: Vec<(usize, String)>,
    /// Energy history of every descent.
    pub energies: Vec<Vec<f64>>,
}

/// Closed geodesics in the free homotopy class `class` (integer multiples of
/// the periods) of a fully periodic chart, from `init_count` random loops.
pub fn find_closed_geodesics<M: MetricField + ?Sized>(field: &M, class: &[i64], init_count: usize, seed: u64) -> Result<ClosedSearch> {
    let dom = field.domain();
    let n = dom.dim();
    if class.len() != n {
        return Err(Error::Config(format!("class has {} entries for a {n}-dimensional chart", class.len())));
    }
    let mut periods = Vec::with_capacity(n);
    for i in 0..n {
        periods.push(dom.periods()[i].ok_or_else(|| Error::Config("closed geodesic search needs a fully periodic chart".into()))?);
    }
    if class.iter().all(|&k| k == 0) {
        return Err(Error::Config("the homotopy class must be nonzero".into()));
    }
    let lattice = Vector::from_fn(n, |i, _| class[i] as f64 * periods[i]);
    let wiggle = 0.05 * periods.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ClosedSearch { geodesics: Vec::new(), failures: Vec::new(), energies: Vec::new() };
    for s in 0..init_count {
        let start = Vector::from_fn(n, |i, _| rng.gen_range(0.0..periods[i]));
        let amp: Vec<[f64; 4]> = (0..n).map(|_| [0; 4].map(|_| rng.gen_range(-wiggle..wiggle))).collect();
        let m = DEFAULT_LOOP_NODES;
        let xs: Vec<Vector> = (0..m)
            .map(|k| {
                let u = k as f64 / m as f64;
                let (s1, c1) = (2.0 * std::f64::consts::PI * u).sin_cos();
                let (s2, c2) = (4.0 * std::f64::consts::PI * u).sin_cos();
                Vector::from_fn(n, |i, _| start[i] + u * lattice[i] + amp[i][0] * s1 + amp[i][1] * c1 + amp[i][2] * s2 + amp[i][3] * c2)
            })
            .collect();
        match refine_closed_geodesic(field, xs, &lattice, DESCENT_MAX_ITER) {
            Ok((cg, energies)) => {
                out.geodesics.push(cg);
                out.energies.push(energies);
            }
            Err(e) => out.failures.push((s, e.to_string())),
        }
    }
    Ok(out)
}

/// Whether two loops have the same trace (orientation ignored): symmetric
/// Hausdorff distance of the node sets below ten node spacings.
pub fn same_trace<M: MetricField + ?Sized>(field: &M, a: &ClosedGeodesic, b: &ClosedGeodesic) -> bool {
    let spacing = a.curve().max_spacing().max(b.curve().max_spacing());
    let cap = 10.0 * spacing;
    trace_hausdorff(field.domain(), a.curve(), b.curve(), cap) < cap
}

/// Drops loops that repeat an earlier one up to rotation, reflection of the
/// parameter circle and period (same trace and same length).
pub fn dedup_geodesics<M: MetricField + ?Sized>(field: &M, list: Vec<ClosedGeodesic>) -> Vec<ClosedGeodesic> {
    let mut out: Vec<ClosedGeodesic> = Vec::new();
    for cg in list {
        let dup = out.iter().any(|k| (k.length - cg.length).abs() <= 1e-6 * cg.length.max(1.0) && same_trace(field, k, &cg));
        if !dup {
            out.push(cg);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoincareData {
    /// Map of normal Jacobi data `(J, J')` in a `g`-orthonormal frame of `c'(0)^perp`.
    #[serde(serialize_with = "ser_matrix")]
    pub monodromy: Matrix,
    #[serde(serialize_with = "ser_complex")]
    pub eigenvalues: Vec<Complex<f64>>,
    pub nondegenerate: bool,
    pub determinant: f64,
}

fn ser_matrix<S: serde::Serializer>(m: &Matrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect();
    serde::Serialize::serialize(&rows, s)
}

fn ser_complex<S: serde::Serializer>(v: &[Complex<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
    let pairs: Vec<[f64; 2]> = v.iter().map(|c| [c.re, c.im]).collect();
    serde::Serialize::serialize(&pairs, s)
}

/// `g`-orthonormal frame of the normal space at the start of `cg`.
fn normal_frame<M: MetricField + ?Sized>(field: &M, cg: &ClosedGeodesic) -> Result<(Matrix, Vec<Vector>)> {
    let (x0, v0) = cg.start();
    let g = field.eval(x0);
    let frame = orthonormal_complement(&g, std::slice::from_ref(v0), &[]);
    if frame.len() + 1 != x0.len() {
        return Err(Error::FramePropagationFailed { defect: (frame.len() + 1) as f64 - x0.len() as f64 });
    }
    Ok((g, frame))
}

/// `(J, J')` of a chart variation `(dx, dv)` along `cg` at its start point.
fn to_jacobi<M: MetricField + ?Sized>(
    field: &M,
    cg: &ClosedGeodesic,
    g: &Matrix,
    frame: &[Vector],
    dx: &Vector,
    dv: &Vector,
) -> Result<Vector> {
    let (x0, v0) = cg.start();
    let cov = dv + field.christoffel_at(x0)?.contract(v0, dx);
    let k = frame.len();
    Ok(Vector::from_fn(2 * k, |i, _| if i < k { inner(g, &frame[i], dx) } else { inner(g, &frame[i - k], &cov) }))
}

fn from_jacobi<M: MetricField + ?Sized>(field: &M, cg: &ClosedGeodesic, frame: &[Vector], data: &Vector) -> Result<(Vector, Vector)> {
    let (x0, v0) = cg.start();
    let k = frame.len();
    let n = x0.len();
    let j = (0..k).fold(Vector::zeros(n), |acc, i| acc + &frame[i] * data[i]);
    let jp = (0..k).fold(Vector::zeros(n), |acc, i| acc + &frame[i] * data[k + i]);
    let dv = jp - field.christoffel_at(x0)?.contract(v0, &j);
    Ok((j, dv))
}

/// The linearized Poincare map of a closed geodesic from the Jacobi equation
/// over one period.
pub fn linearized_poincare<M: MetricField + ?Sized>(field: &M, cg: &ClosedGeodesic) -> Result<PoincareData> {
    if !(cg.residual() <= RESIDUAL_TOL) {
        return Err(Error::BoundViolation(format!("closed geodesic residual {} exceeds {RESIDUAL_TOL}", cg.residual())));
    }
    let (x0, v0) = cg.start();
    let n = x0.len();
    let (g, frame) = normal_frame(field, cg)?;
    let k = frame.len();
    let (xe, ve, phi) = variational_flow(field, x0, v0, cg.length, shoot_steps(cg.length))?;
    let drift = (&xe - x0 - &cg.lattice).norm() + (&ve - v0).norm();
    if drift > 1e-5 {
        return Err(Error::FramePropagationFailed { defect: drift });
    }
    let mut p = Matrix::zeros(2 * k, 2 * k);
    for col in 0..2 * k {
        let data = Vector::from_fn(2 * k, |i, _| if i == col { 1.0 } else { 0.0 });
        let (dx, dv) = from_jacobi(field, cg, &frame, &data)?;
        let mut state = Vector::zeros(2 * n);
        state.rows_mut(0, n).copy_from(&dx);
        state.rows_mut(n, n).copy_from(&dv);
        let end = &phi * state;
        let out = to_jacobi(field, cg, &g, &frame, &end.rows(0, n).into_owned(), &end.rows(n, n).into_owned())?;
        p.set_column(col, &out);
    }
    Ok(poincare_data(p))
}

fn poincare_data(p: Matrix) -> PoincareData {
    let eig = p.complex_eigenvalues();
    let mut eigenvalues: Vec<Complex<f64>> = eig.iter().cloned().collect();
    eigenvalues.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let nondegenerate = eigenvalues.iter().all(|l| (l - Complex::new(1.0, 0.0)).norm() > TOL_EIG);
    let determinant = p.determinant();
    PoincareData { monodromy: p, eigenvalues, nondegenerate, determinant }
}

/// The return map on the section through `c(0)` orthogonal to `c'(0)`,
/// linearized by integrating `samples` nearby geodesics (in `+-` pairs) and
/// fitting a linear map.
pub fn return_map_fd<M: MetricField + ?Sized>(field: &M, cg: &ClosedGeodesic, samples: usize, amplitude: f64, seed: u64) -> Result<Matrix> {
    let (x0, v0) = cg.start();
    let n = x0.len();
    let (g, frame) = normal_frame(field, cg)?;
    let k = frame.len();
    let gv0 = &g * v0;
    let section = |x: &Vector| (x - x0 - &cg.lattice).dot(&gv0);
    let steps = shoot_steps(cg.length);
    let h = cg.length / steps as f64;
    let returned = |data: &Vector| -> Result<Vector> {
        let (dx, dv) = from_jacobi(field, cg, &frame, data)?;
        let x = x0 + dx;
        let v = v0 + dv;
        let v = &v / inner(&field.eval(&x), &v, &v).sqrt();
        // flow to just before the section, then Newton on the crossing time
        let lead = steps - 4;
        let (mut x, mut v) = flow(field, &x, &v, h * lead as f64, lead)?;
        for _ in 0..50 {
            let f = section(&x);
            let dt = -f / v.dot(&gv0);
            if dt.abs() < 1e-15 {
                break;
            }
            let sub = (dt.abs() / h).ceil().max(1.0) as usize;
            let (xn, vn) = flow(field, &x, &v, dt, sub)?;
            x = xn;
            v = vn;
        }
        let dx = &x - x0 - &cg.lattice;
        let dv = &v - v0;
        to_jacobi(field, cg, &g, &frame, &dx, &dv)
    };
    let base = returned(&Vector::zeros(2 * k))?;
    let pairs = samples.div_ceil(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Matrix::zeros(pairs, 2 * k);
    let mut outputs = Matrix::zeros(pairs, 2 * k);
    for r in 0..pairs {
        let d = Vector::from_fn(2 * k, |_, _| rng.gen_range(-1.0..1.0)).normalize() * amplitude;
        let plus = returned(&d)? - &base;
        let minus = returned(&-&d)? - &base;
        inputs.set_row(r, &d.transpose());
        outputs.set_row(r, &((plus - minus) * 0.5).transpose());
    }
    let _ = n;
    // outputs = inputs * P^T in the least-squares sense
    let mut p = Matrix::zeros(2 * k, 2 * k);
    for row in 0..2 * k {
        let col = solve_lstsq(&inputs, &outputs.column(row).into_owned(), 1e-12);
        p.set_row(row, &col.transpose());
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditEntry {
    /// Index of the geometric class (loops with the same trace share it).
    pub class: usize,
    pub length: f64,
    pub prime: bool,
    pub multiplicity: usize,
    pub nondegenerate: bool,
    #[serde(serialize_with = "ser_complex")]
    pub eigenvalues: Vec<Complex<f64>>,
    pub determinant: f64,
    pub trace_csv_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BumpyReport {
    pub length_bound: f64,
    pub classes: usize,
    pub entries: Vec<AuditEntry>,
    pub all_nondegenerate: bool,
    /// Which closed geodesics the audit covers.
    pub coverage: String,
}

/// Audits the given closed geodesics and their iterates up to length `a`:
/// groups them into geometric classes and tests each for degeneracy.
pub fn bumpy_audit<M: MetricField + ?Sized>(field: &M, a: f64, candidates: &[ClosedGeodesic]) -> Result<BumpyReport> {
    let mut primes: Vec<ClosedGeodesic> = Vec::new();
    for cg in candidates {
        if cg.length > a * (1.0 + 1e-12) {
            continue;
        }
        let prime = if cg.multiplicity > 1 {
            let (x0, v0) = cg.start();
            let m = cg.multiplicity;
            let lattice = &cg.lattice / m as f64;
            sample_loop(field, x0, v0, cg.length / m as f64, &lattice, (cg.curve().len() - 1) / m)?
        } else {
            cg.clone()
        };
        if !primes.iter().any(|p| (p.length - prime.length).abs() <= 1e-6 * p.length.max(1.0) && same_trace(field, p, &prime)) {
            primes.push(prime);
        }
    }
    let mut entries = Vec::new();
    for (class, prime) in primes.iter().enumerate() {
        let copies = (a / prime.length + 1e-12).floor() as usize;
        for m in 1..=copies.max(1) {
            let cg = if m == 1 { prime.clone() } else { prime.iterate(field, m)? };
            let pd = linearized_poincare(field, &cg)?;
            entries.push(AuditEntry {
                class,
                length: cg.length,
                prime: m == 1,
                multiplicity: m,
                nondegenerate: pd.nondegenerate,
                eigenvalues: pd.eigenvalues,
                determinant: pd.determinant,
                trace_csv_path: None,
            });
        }
    }
    let all_nondegenerate = entries.iter().all(|e| e.nondegenerate);
    Ok(BumpyReport {
        length_bound: a,
        classes: primes.len(),
        entries,
        all_nondegenerate,
        coverage: format!("{} supplied closed geodesics and their iterates of length <= {a}", candidates.len()),
    })
}

#[cfg(test)]
mod tests;
