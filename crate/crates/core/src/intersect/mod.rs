//! Self-intersections and mutual intersections of discretized curves, and the
//! construction that pushes several geodesic segments through one point apart.
//!
//! Curves are treated as polylines in chart coordinates (with minimum-image
//! wrapping on periodic axes). Candidate segment pairs come from a spatial hash
//! with cells of size `2 tol`; each cluster of candidates is refined to a
//! single event on a cubic Hermite interpolant of the curve.

mod disentangle;

pub use disentangle::{
    choose_plane_seeds, disentangle, disentangle_with, forbidden_offsets, splice_displaced, trace_plane_intersection, CompositeMetric,
    DisentangleOptions, DisentangleResult, ForbiddenOffset, PlaneCurvePoint,
};

use std::collections::{HashMap, HashSet};

use serde::Serialize;

use crate::chart_metric::{ChartDomain, CurveDiscrete, MetricField};
use crate::error::{Error, Result};
use crate::linalg::{inner, norm, Vector};

/// Smallest accepted angle between tangents at a crossing (radians).
pub const ANGLE_FLOOR: f64 = 1e-3;
const REFINE_TOL: f64 = 1e-12;
/// Refined distance below which a close pair counts as a crossing; larger
/// minima are near misses.
const CONTACT_TOL: f64 = 1e-8;
const REFINE_MAX_ITER: usize = 60;
const MAX_DIM: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntersectionEvent {
    pub param_a: f64,
    pub param_b: f64,
    pub point: Vec<f64>,
    /// Unoriented `g`-angle between the tangents, in `[0, pi/2]`.
    pub angle: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntersectionReport {
    pub events: Vec<IntersectionEvent>,
    /// Minimum distance between the curves (for a single curve: between
    /// points at least a quarter period apart) when there are no events.
    pub clearance: Option<f64>,
    pub tol: f64,
}

/// How candidate segment pairs are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scan {
    Hashed,
    /// All pairs; kept as an oracle for the hashed scan.
    Exhaustive,
}

/// A curve flattened for fast pair tests.
struct Poly<'a> {
    curve: &'a CurveDiscrete,
    n: usize,
    pts: Vec<f64>,
}

impl<'a> Poly<'a> {
    fn new(curve: &'a CurveDiscrete) -> Result<Self> {
        let n = curve.dim();
        if n > MAX_DIM {
            return Err(Error::Config(format!("intersection scans support up to {MAX_DIM} dimensions")));
        }
        let pts = curve.nodes.iter().flat_map(|x| x.iter().cloned()).collect();
        Ok(Self { curve, n, pts })
    }

    fn segments(&self) -> usize {
        self.curve.len() - 1
    }

    fn node(&self, k: usize) -> &[f64] {
        &self.pts[k * self.n..(k + 1) * self.n]
    }

    fn param_at(&self, seg: usize, s: f64) -> f64 {
        let p = &self.curve.params;
        p[seg] + s * (p[seg + 1] - p[seg])
    }
}

fn min_image(dom: &ChartDomain, d: &mut [f64]) {
    for (i, v) in d.iter_mut().enumerate() {
        if let Some(p) = dom.periods()[i] {
            *v -= p * (*v / p).round();
        }
    }
}

/// Closest points of segments `[a0, a1]` and `[b0, b1]` (with `b` moved to
/// its periodic image nearest `a0`): `(s, t, distance)`.
fn segment_distance(dom: &ChartDomain, a0: &[f64], a1: &[f64], b0: &[f64], b1: &[f64]) -> (f64, f64, f64) {
    let n = a0.len();
    let mut off = [0.0; MAX_DIM];
    for i in 0..n {
        off[i] = b0[i] - a0[i];
    }
    min_image(dom, &mut off[..n]);
    let (mut d1, mut d2, mut r) = ([0.0; MAX_DIM], [0.0; MAX_DIM], [0.0; MAX_DIM]);
    for i in 0..n {
        d1[i] = a1[i] - a0[i];
        d2[i] = b1[i] - b0[i];
        // a0 - b0' with b0' = a0 + off
        r[i] = -off[i];
    }
    let dot = |x: &[f64; MAX_DIM], y: &[f64; MAX_DIM]| (0..n).map(|i| x[i] * y[i]).sum::<f64>();
    let (aa, ee, f) = (dot(&d1, &d1), dot(&d2, &d2), dot(&d2, &r));
    let (s, t);
    if aa <= 1e-300 && ee <= 1e-300 {
        s = 0.0;
        t = 0.0;
    } else if aa <= 1e-300 {
        s = 0.0;
        t = (f / ee).clamp(0.0, 1.0);
    } else {
        let c = dot(&d1, &r);
        if ee <= 1e-300 {
            t = 0.0;
            s = (-c / aa).clamp(0.0, 1.0);
        } else {
            let b = dot(&d1, &d2);
            let denom = aa * ee - b * b;
            let mut ss = if denom > 1e-14 * aa * ee { ((b * f - c * ee) / denom).clamp(0.0, 1.0) } else { 0.0 };
            let mut tt = (b * ss + f) / ee;
            if tt < 0.0 {
                tt = 0.0;
                ss = (-c / aa).clamp(0.0, 1.0);
            } else if tt > 1.0 {
                tt = 1.0;
                ss = ((b - c) / aa).clamp(0.0, 1.0);
            }
            s = ss;
            t = tt;
        }
    }
    let mut d = 0.0;
    for i in 0..n {
        let v = r[i] + d1[i] * s - d2[i] * t;
        d += v * v;
    }
    (s, t, d.sqrt())
}

/// Spatial hash of polyline segments.
struct SegmentHash {
    cell: Vec<f64>,
    wrap: Vec<Option<i64>>,
    lower: Vec<f64>,
    map: HashMap<Vec<i64>, Vec<u32>>,
}

impl SegmentHash {
    fn new(dom: &ChartDomain, cell: f64) -> Self {
        let n = dom.dim();
        let mut sizes = vec![cell; n];
        let mut wrap = vec![None; n];
        for i in 0..n {
            if let Some(p) = dom.periods()[i] {
                let m = ((p / cell).floor() as i64).max(1);
                sizes[i] = p / m as f64;
                wrap[i] = Some(m);
            }
        }
        Self { cell: sizes, wrap, lower: dom.lower().to_vec(), map: HashMap::new() }
    }

    /// Cells overlapped by the box `[lo, hi]`.
    fn cells(&self, lo: &[f64], hi: &[f64]) -> Vec<Vec<i64>> {
        let mut out: Vec<Vec<i64>> = vec![Vec::new()];
        for i in 0..lo.len() {
            let a = ((lo[i] - self.lower[i]) / self.cell[i]).floor() as i64;
            let b = ((hi[i] - self.lower[i]) / self.cell[i]).floor() as i64;
            let mut idx: Vec<i64> = (a..=b).collect();
            if let Some(m) = self.wrap[i] {
                let mut seen: Vec<i64> = idx.iter().map(|k| k.rem_euclid(m)).collect();
                seen.sort_unstable();
                seen.dedup();
                idx = seen;
            }
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    idx.iter().map(move |&k| {
                        let mut p = prefix.clone();
                        p.push(k);
                        p
                    })
                })
                .collect();
        }
        out
    }

    fn segment_box(dom: &ChartDomain, poly: &Poly, k: usize, pad: f64) -> (Vec<f64>, Vec<f64>) {
        let n = poly.n;
        let (a, b) = (poly.node(k), poly.node(k + 1));
        let mut lo = vec![0.0; n];
        let mut hi = vec![0.0; n];
        for i in 0..n {
            // reduce the start into the fundamental box, carry the end along
            let mut a_i = a[i];
            if let Some(p) = dom.periods()[i] {
                a_i = dom.lower()[i] + (a_i - dom.lower()[i]).rem_euclid(p);
            }
            let b_i = a_i + (b[i] - a[i]);
            lo[i] = a_i.min(b_i) - pad;
            hi[i] = a_i.max(b_i) + pad;
        }
        (lo, hi)
    }

    fn insert(&mut self, dom: &ChartDomain, poly: &Poly, pad: f64) {
        for k in 0..poly.segments() {
            let (lo, hi) = Self::segment_box(dom, poly, k, pad);
            for c in self.cells(&lo, &hi) {
                self.map.entry(c).or_default().push(k as u32);
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    i: usize,
    j: usize,
    pa: f64,
    pb: f64,
    d: f64,
}

fn cyclic_gap(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).abs() % period;
    d.min(period - d)
}

/// Segment pairs closer than `tol`. For a single curve (`b` is `None`) pairs
/// whose closest points are within `min_sep` in parameter are dropped.
fn candidates(dom: &ChartDomain, a: &Poly, b: Option<&Poly>, tol: f64, min_sep: f64, scan: Scan) -> Vec<Candidate> {
    let same = b.is_none();
    let b = b.unwrap_or(a);
    let period = a.curve.span();
    let mut out = Vec::new();
    let mut test = |i: usize, j: usize| {
        let (s, t, d) = segment_distance(dom, a.node(i), a.node(i + 1), b.node(j), b.node(j + 1));
        if d >= tol {
            return;
        }
        let (pa, pb) = (a.param_at(i, s), b.param_at(j, t));
        if same {
            let gap = if a.curve.closed { cyclic_gap(pa, pb, period) } else { (pa - pb).abs() };
            if gap <= min_sep {
                return;
            }
        }
        out.push(Candidate { i, j, pa, pb, d });
    };
    match scan {
        Scan::Exhaustive => {
            for i in 0..a.segments() {
                let start = if same { i + 1 } else { 0 };
                for j in start..b.segments() {
                    test(i, j);
                }
            }
        }
        Scan::Hashed => {
            let mut hash = SegmentHash::new(dom, 2.0 * tol);
            hash.insert(dom, a, 0.5 * tol);
            let mut seen = HashSet::new();
            for j in 0..b.segments() {
                let (lo, hi) = SegmentHash::segment_box(dom, b, j, 0.5 * tol);
                for c in hash.cells(&lo, &hi) {
                    if let Some(list) = hash.map.get(&c) {
                        for &i in list {
                            let i = i as usize;
                            if same && i >= j {
                                continue;
                            }
                            if seen.insert((i, j)) {
                                test(i, j);
                            }
                        }
                    }
                }
            }
        }
    }
    out.sort_by_key(|x| (x.i, x.j));
    out
}

/// Groups candidates into connected blobs in segment-index space.
fn cluster(cands: &[Candidate], seg_a: usize, seg_b: usize, cyclic_a: bool, cyclic_b: bool) -> Vec<Vec<usize>> {
    let index: HashMap<(usize, usize), usize> = cands.iter().enumerate().map(|(k, c)| ((c.i, c.j), k)).collect();
    let mut parent: Vec<usize> = (0..cands.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let step = |v: usize, d: i64, len: usize, cyclic: bool| -> Option<usize> {
        let w = v as i64 + d;
        if cyclic {
            Some(w.rem_euclid(len as i64) as usize)
        } else if w < 0 || w >= len as i64 {
            None
        } else {
            Some(w as usize)
        }
    };
    for (k, c) in cands.iter().enumerate() {
        for di in -1..=1 {
            for dj in -1..=1 {
                let (Some(i), Some(j)) = (step(c.i, di, seg_a, cyclic_a), step(c.j, dj, seg_b, cyclic_b)) else {
                    continue;
                };
                for key in [(i, j), (j, i)] {
                    if let Some(&other) = index.get(&key) {
                        let (ra, rb) = (find(&mut parent, k), find(&mut parent, other));
                        if ra != rb {
                            parent[ra] = rb;
                        }
                    }
                }
            }
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for k in 0..cands.len() {
        let r = find(&mut parent, k);
        groups.entry(r).or_default().push(k);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort();
    out
}

/// Cubic Hermite interpolation of a discretized curve.
pub(crate) struct Track<'a> {
    curve: &'a CurveDiscrete,
    vel: Vec<Vector>,
    lattice: Vector,
}

impl<'a> Track<'a> {
    pub(crate) fn new(curve: &'a CurveDiscrete) -> Self {
        let m = curve.len();
        let lattice = if curve.closed { &curve.nodes[m - 1] - &curve.nodes[0] } else { Vector::zeros(curve.dim()) };
        Self { curve, vel: curve.velocities(), lattice }
    }

    fn wrap(&self, s: f64) -> (f64, f64) {
        let p = &self.curve.params;
        let (lo, hi) = (p[0], p[p.len() - 1]);
        if self.curve.closed {
            let period = hi - lo;
            let q = ((s - lo) / period).floor();
            (s - q * period, q)
        } else {
            (s.clamp(lo, hi), 0.0)
        }
    }

    /// Position and velocity at parameter `s`.
    pub(crate) fn eval(&self, s: f64) -> (Vector, Vector) {
        let (s, q) = self.wrap(s);
        let p = &self.curve.params;
        let k = match p.partition_point(|&v| v <= s) {
            0 => 0,
            i => (i - 1).min(p.len() - 2),
        };
        let h = p[k + 1] - p[k];
        let u = (s - p[k]) / h;
        let (x0, x1) = (&self.curve.nodes[k], &self.curve.nodes[k + 1]);
        let (m0, m1) = (&self.vel[k] * h, &self.vel[k + 1] * h);
        let (u2, u3) = (u * u, u * u * u);
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        let x = x0 * h00 + &m0 * h10 + x1 * h01 + &m1 * h11 + &self.lattice * q;
        let d00 = 6.0 * u2 - 6.0 * u;
        let d10 = 3.0 * u2 - 4.0 * u + 1.0;
        let d01 = -6.0 * u2 + 6.0 * u;
        let d11 = 3.0 * u2 - 2.0 * u;
        let v = (x0 * d00 + m0 * d10 + x1 * d01 + m1 * d11) / h;
        (x, v)
    }
}

/// Gauss-Newton on `|c_a(s) - c_b(t)|^2` from `(s, t)`, steps capped at `cap`.
fn refine_pair(dom: &ChartDomain, ta: &Track, tb: &Track, mut s: f64, mut t: f64, cap: f64) -> (f64, f64, f64) {
    for _ in 0..REFINE_MAX_ITER {
        let (xa, va) = ta.eval(s);
        let (xb, vb) = tb.eval(t);
        let r = -dom.displacement(&xa, &xb);
        let (aa, ab, bb) = (va.dot(&va), -va.dot(&vb), vb.dot(&vb));
        let (ga, gb) = (va.dot(&r), -vb.dot(&r));
        let det = aa * bb - ab * ab;
        if !(det > 1e-14 * aa * bb) {
            break;
        }
        let mut ds = -(bb * ga - ab * gb) / det;
        let mut dt = -(aa * gb - ab * ga) / det;
        let big = ds.abs().max(dt.abs());
        if big > cap {
            ds *= cap / big;
            dt *= cap / big;
        }
        s += ds;
        t += dt;
        if big < REFINE_TOL {
            break;
        }
    }
    let (xa, _) = ta.eval(s);
    let (xb, _) = tb.eval(t);
    (s, t, dom.chart_distance(&xa, &xb))
}

fn canonical(curve: &CurveDiscrete, s: f64) -> f64 {
    if !curve.closed {
        return s;
    }
    let lo = curve.params[0];
    lo + (s - lo).rem_euclid(curve.span())
}

fn check_spacing(dom: &ChartDomain, c: &CurveDiscrete, tol: f64) -> Result<()> {
    let worst = c.nodes.windows(2).map(|w| dom.chart_distance(&w[0], &w[1])).fold(0.0, f64::max);
    if worst >= tol {
        return Err(Error::BoundViolation(format!("node spacing {worst} is not below the tolerance {tol}")));
    }
    Ok(())
}

fn detect<M: MetricField + ?Sized>(
    field: &M,
    a: &CurveDiscrete,
    b: Option<&CurveDiscrete>,
    tol: f64,
    scan: Scan,
) -> Result<IntersectionReport> {
    let dom = field.domain();
    check_spacing(dom, a, tol)?;
    if let Some(b) = b {
        check_spacing(dom, b, tol)?;
    }
    let pa = Poly::new(a)?;
    let pb = b.map(Poly::new).transpose()?;
    let min_sep = 3.0 * tol;
    let cands = candidates(dom, &pa, pb.as_ref(), tol, min_sep, scan);
    let other = b.unwrap_or(a);
    let groups = cluster(&cands, pa.segments(), pb.as_ref().map_or(pa.segments(), |p| p.segments()), a.closed, other.closed);
    let (ta, tb) = (Track::new(a), Track::new(other));
    let mut events: Vec<IntersectionEvent> = Vec::new();
    for g in groups {
        let best = g.iter().map(|&k| cands[k]).min_by(|x, y| x.d.total_cmp(&y.d)).expect("clusters are non-empty");
        let cap = a.max_spacing().max(other.max_spacing());
        let (s, t, d) = refine_pair(dom, &ta, &tb, best.pa, best.pb, cap);
        let (s, t, d) = if d <= best.d { (s, t, d) } else { (best.pa, best.pb, best.d) };
        if d > CONTACT_TOL {
            continue;
        }
        let (s, t) = (canonical(a, s), canonical(other, t));
        if b.is_none() {
            let gap = if a.closed { cyclic_gap(s, t, a.span()) } else { (s - t).abs() };
            if gap <= min_sep {
                continue;
            }
        }
        let (xa, va) = ta.eval(s);
        let (_, vb) = tb.eval(t);
        let g = field.eval(&dom.reduce(&xa)?);
        let cos = inner(&g, &va, &vb).abs() / (norm(&g, &va) * norm(&g, &vb));
        let angle = cos.min(1.0).acos();
        if angle < ANGLE_FLOOR {
            return Err(Error::NonTransversalContact { param_a: s, param_b: t, angle });
        }
        let (s, t) = if b.is_none() && s > t { (t, s) } else { (s, t) };
        let point = dom.reduce(&xa)?.iter().cloned().collect();
        let duplicate = events.iter().any(|e| {
            let ga = if a.closed { cyclic_gap(e.param_a, s, a.span()) } else { (e.param_a - s).abs() };
            let gb = if other.closed { cyclic_gap(e.param_b, t, other.span()) } else { (e.param_b - t).abs() };
            ga < 1e-6 && gb < 1e-6
        });
        if !duplicate {
            events.push(IntersectionEvent { param_a: s, param_b: t, point, angle, distance: d });
        }
    }
    events.sort_by(|x, y| x.param_a.total_cmp(&y.param_a).then(x.param_b.total_cmp(&y.param_b)));
    let clearance = if events.is_empty() {
        Some(match b {
            Some(b) => curve_clearance(dom, a, b)?,
            None => self_clearance(dom, a)?,
        })
    } else {
        None
    };
    Ok(IntersectionReport { events, clearance, tol })
}

/// Transversal self-intersections of a closed curve.
pub fn double_points<M: MetricField + ?Sized>(c: &CurveDiscrete, field: &M, tol: f64) -> Result<IntersectionReport> {
    detect(field, c, None, tol, Scan::Hashed)
}

/// Mutual intersections of two curves, after ruling out that their traces
/// coincide.
pub fn pairwise_intersections<M: MetricField + ?Sized>(
    c: &CurveDiscrete,
    d: &CurveDiscrete,
    field: &M,
    tol: f64,
) -> Result<IntersectionReport> {
    pairwise_intersections_with(c, d, field, tol, Scan::Hashed)
}

pub fn double_points_with<M: MetricField + ?Sized>(c: &CurveDiscrete, field: &M, tol: f64, scan: Scan) -> Result<IntersectionReport> {
    detect(field, c, None, tol, scan)
}

pub fn pairwise_intersections_with<M: MetricField + ?Sized>(
    c: &CurveDiscrete,
    d: &CurveDiscrete,
    field: &M,
    tol: f64,
    scan: Scan,
) -> Result<IntersectionReport> {
    let h = trace_hausdorff(field.domain(), c, d, tol);
    if h < tol {
        return Err(Error::GeometricallyEquivalent { hausdorff: h });
    }
    detect(field, c, Some(d), tol, scan)
}

/// Symmetric Hausdorff distance between the node sets, or `cap` when it is at
/// least `cap`.
pub fn trace_hausdorff(dom: &ChartDomain, a: &CurveDiscrete, b: &CurveDiscrete, cap: f64) -> f64 {
    let one_way = |a: &CurveDiscrete, b: &CurveDiscrete| -> f64 {
        let n = dom.dim();
        let hash = SegmentHash::new(dom, cap);
        let key = |x: &Vector| -> Vec<i64> {
            let lo: Vec<f64> = x.iter().cloned().collect();
            hash.cells(&lo, &lo).pop().expect("a point lies in one cell")
        };
        let mut map: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        let reduced: Vec<Vector> = b.nodes.iter().map(|x| dom.reduce(x).unwrap_or_else(|_| x.clone())).collect();
        for (k, x) in reduced.iter().enumerate() {
            map.entry(key(x)).or_default().push(k);
        }
        let mut worst: f64 = 0.0;
        for x in &a.nodes {
            let x = dom.reduce(x).unwrap_or_else(|_| x.clone());
            let lo: Vec<f64> = (0..n).map(|i| x[i] - cap).collect();
            let hi: Vec<f64> = (0..n).map(|i| x[i] + cap).collect();
            let mut best = cap;
            for c in hash.cells(&lo, &hi) {
                if let Some(list) = map.get(&c) {
                    for &k in list {
                        best = best.min(dom.chart_distance(&x, &reduced[k]));
                    }
                }
            }
            worst = worst.max(best);
            if worst >= cap {
                return cap;
            }
        }
        worst
    };
    one_way(a, b).max(one_way(b, a))
}

const COARSE_NODES: usize = 1200;
const COARSE_KEEP: usize = 64;

/// Minimum over segment pairs allowed by `keep` of the polyline distance:
/// a coarse all-pairs pass on subsampled nodes, then exact segment distances
/// around the best coarse pairs.
fn clearance_scan<F>(dom: &ChartDomain, a: &CurveDiscrete, b: &CurveDiscrete, keep: F) -> Result<f64>
where
    F: Fn(f64, f64) -> bool,
{
    let (pa, pb) = (Poly::new(a)?, Poly::new(b)?);
    let stride = |c: &CurveDiscrete| (c.len() / COARSE_NODES).max(1);
    let (sa, sb) = (stride(a), stride(b));
    let n = pa.n;
    let mut coarse: Vec<(f64, usize, usize)> = Vec::new();
    let mut diff = [0.0; MAX_DIM];
    for i in (0..a.len()).step_by(sa) {
        for j in (0..b.len()).step_by(sb) {
            if !keep(a.params[i], b.params[j]) {
                continue;
            }
            let (x, y) = (pa.node(i), pb.node(j));
            for k in 0..n {
                diff[k] = y[k] - x[k];
            }
            min_image(dom, &mut diff[..n]);
            let d = diff[..n].iter().map(|v| v * v).sum::<f64>().sqrt();
            coarse.push((d, i, j));
        }
    }
    if coarse.is_empty() {
        return Ok(f64::INFINITY);
    }
    coarse.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut best = f64::INFINITY;
    for &(_, i, j) in coarse.iter().take(COARSE_KEEP) {
        let ra = i.saturating_sub(2 * sa)..(i + 2 * sa).min(pa.segments());
        for si in ra {
            let rb = j.saturating_sub(2 * sb)..(j + 2 * sb).min(pb.segments());
            for sj in rb {
                let (s, t, d) = segment_distance(dom, pa.node(si), pa.node(si + 1), pb.node(sj), pb.node(sj + 1));
                if d < best && keep(pa.param_at(si, s), pb.param_at(sj, t)) {
                    best = d;
                }
            }
        }
    }
    Ok(best)
}

/// Minimum chart distance between two polylines.
pub fn curve_clearance(dom: &ChartDomain, a: &CurveDiscrete, b: &CurveDiscrete) -> Result<f64> {
    clearance_scan(dom, a, b, |_, _| true)
}

/// Minimum chart distance between points of one curve at least a quarter of
/// its parameter span apart.
pub fn self_clearance(dom: &ChartDomain, c: &CurveDiscrete) -> Result<f64> {
    let period = c.span();
    let closed = c.closed;
    clearance_scan(dom, c, c, |s, t| {
        let gap = if closed { cyclic_gap(s, t, period) } else { (s - t).abs() };
        gap >= 0.25 * period
    })
}

#[cfg(test)]
mod tests;
