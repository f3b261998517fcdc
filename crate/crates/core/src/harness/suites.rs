//! The five verification suites.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::config::ScenarioConfig;
use super::report::{Artifact, Check};
use crate::bump_perturb::{
    make_cutoffs, parallel_convexity_check, parallel_convexity_residual, ConvexityGrid, PerturbationFamily, PerturbedMetric,
};
use crate::chart_metric::{
    curve_length, finsler_fundamental_tensor, ChartDomain, CurveDiscrete, EllipsoidChart, Euclidean, FinslerField, MetricField,
    RiemannSquare,
};
use crate::closed_geo::{
    bumpy_audit, close_geodesic, linearized_poincare, refine_closed_geodesic, return_map_fd, theorem1_pipeline, ClosedGeodesic,
    DEFAULT_LOOP_NODES,
};
use crate::error::{Error, Result};
use crate::geodesic_flow::{default_step, geodesic_residual, integrate_geodesic};
use crate::intersect::{disentangle, double_points_with, forbidden_offsets, Scan};
use crate::linalg::{gram_schmidt, inner, max_abs_diff, unit, Matrix, Vector};
use crate::tubular::{RegionLabel, TubularChart};

/// Width of the transition of `beta_theta`.
const THETA: f64 = 0.1;
const SUPPORT_SAMPLES: usize = 10_000;
const SEGMENT_NODES: usize = 400;
const PROFILE_SAMPLES: usize = 1000;
const FINSLER_SAMPLES: usize = 100;
const DETECTION_CURVES: u64 = 20;
const DETECTION_NODES: usize = 6000;
const DETECTION_TOLS: [f64; 2] = [1e-2, 5e-3];
const PIPELINE_SAMPLES: usize = 2000;
const FD_SAMPLES: usize = 200;
const FD_AMPLITUDE: f64 = 1e-5;
/// Every `k`-th node of dense traces goes into the CSV files.
const TRACE_STRIDE: usize = 20;

/// What a suite produced.
#[derive(Default)]
pub(super) struct Sections {
    pub checks: Vec<Check>,
    pub skipped: Vec<String>,
    pub artifacts: Vec<Artifact>,
    pub data: serde_json::Map<String, serde_json::Value>,
    /// Restricts the run to these sections when set.
    pub only: Option<Vec<String>>,
}

impl Sections {
    /// Runs a section; an error becomes a failing check named after it.
    fn section(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<()>) {
        if self.only.as_ref().is_some_and(|o| !o.iter().any(|n| n == name)) {
            return;
        }
        if let Err(e) = f(self) {
            self.checks.push(Check::error(name, &e));
        }
    }
}

fn fraction_label(f: f64) -> &'static str {
    match f {
        x if x == 0.25 => "1/4",
        x if x == 0.5 => "1/2",
        _ => "1",
    }
}

/// Uniform point within `radius` of `p` per axis, kept inside the chart.
fn sample_near(rng: &mut ChaCha8Rng, dom: &ChartDomain, p: &Vector, radius: f64) -> Vector {
    let y = Vector::from_fn(dom.dim(), |i, _| {
        let (mut lo, mut hi) = (p[i] - radius, p[i] + radius);
        if !dom.is_periodic(i) {
            lo = lo.max(dom.lower()[i]);
            hi = hi.min(dom.upper()[i]);
        }
        rng.gen_range(lo..=hi)
    });
    dom.reduce(&y).expect("sample lies in the chart")
}

fn curve_artifact(name: &str, c: &CurveDiscrete, stride: usize) -> Artifact {
    let n = c.dim();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    let mut a = Artifact { name: name.into(), header, rows: Vec::new() };
    let last = c.len() - 1;
    for k in (0..c.len()).filter(|&k| k % stride == 0 || k == last) {
        let mut row = vec![c.params[k]];
        row.extend(c.nodes[k].iter());
        a.push(row);
    }
    a
}

/// The single-segment family at the configured point and direction.
pub fn perturbation_family(cfg: &ScenarioConfig, field: Arc<dyn MetricField>) -> Result<Arc<PerturbationFamily>> {
    let (v, w) = cfg.frame(field.as_ref());
    let chart = TubularChart::build(field, &cfg.base_point(), &v, &w, cfg.eta, cfg.eps)?;
    let cut = make_cutoffs(THETA, cfg.eta, cfg.eps, cfg.delta)?;
    Ok(Arc::new(PerturbationFamily::new(chart, cut, cfg.s_max)?))
}

pub(super) fn perturb(cfg: &ScenarioConfig, out: &mut Sections) -> Result<()> {
    let field = cfg.field()?;
    let tol = &cfg.tolerances;
    let fam = match perturbation_family(cfg, field.clone()) {
        Ok(f) => f,
        Err(e) => {
            out.checks.push(Check::error("family", &e));
            return Ok(());
        }
    };
    let c = *fam.cutoffs();
    let chart = fam.chart();
    let dom = field.domain().clone();
    let p = cfg.base_point();
    let fractions = [0.25, 0.5, 1.0];

    out.section("support_exact", |out| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let n = cfg.dim;
        let mut worst = [0.0f64; 3];
        let (mut accepted, mut drawn) = (0, 0);
        while accepted < SUPPORT_SAMPLES {
            drawn += 1;
            if drawn > 20 * SUPPORT_SAMPLES {
                return Err(Error::BoundViolation(format!("only {accepted} points fell outside the support")));
            }
            // half inside the tube, where the coordinates are known, half in the surrounding box
            let (x, coords) = if drawn % 2 == 0 {
                let t = rng.gen_range(-2.0..=2.0) * c.eta;
                let mut y = Vector::from_fn(n - 1, |_, _| rng.gen_range(-1.0..1.0));
                y *= rng.gen_range(0.0..0.999) * c.eps / y.norm().max(1e-300);
                (chart.forward(t, &y)?, Some((t, y)))
            } else {
                let x = sample_near(&mut rng, &dom, &p, 2.0 * c.eta + c.eps);
                let coords = chart.locate(&x, (-2.0 * c.eta, 2.0 * c.eta), false, c.eps).ok().flatten();
                (x, coords)
            };
            let in_u = coords.is_some_and(|(t, y)| matches!(chart.region_of_coords(t, &y), Some(RegionLabel::UMinus | RegionLabel::UPlus)));
            if in_u {
                continue;
            }
            let g = field.eval(&x);
            let ss = fractions.map(|f| f * cfg.s_max);
            for (k, gs) in fam.metric_at_each(&ss, &x)?.iter().enumerate() {
                worst[k] = worst[k].max(max_abs_diff(gs, &g));
            }
            accepted += 1;
        }
        for (k, f) in fractions.iter().enumerate() {
            out.checks.push(Check::at_most(format!("support_exact[s={} s_max]", fraction_label(*f)), worst[k], tol.support));
        }
        out.data.insert("support_points".into(), json!(accepted));
        Ok(())
    });

    out.section("displaced_geodesic", |out| {
        let base = fam.displaced_curve(0.0, SEGMENT_NODES)?;
        let l0 = curve_length(field.as_ref(), &base)?.length;
        let mut length_gap: f64 = 0.0;
        for f in fractions {
            let s = f * cfg.s_max;
            let seg = fam.displaced_geodesic(s, SEGMENT_NODES)?;
            out.checks.push(Check::at_most(format!("residual[s={} s_max]", fraction_label(f)), seg.residual_max, tol.residual));
            let pm = PerturbedMetric::new(fam.clone(), s)?;
            length_gap = length_gap.max((curve_length(&pm, &seg.curve)?.length - l0).abs());
            if f == 1.0 {
                let control = geodesic_residual(field.as_ref(), &seg.curve)?;
                out.checks.push(Check::above("residual_under_base_metric", control, tol.residual_control));
                out.artifacts.push(curve_artifact("curve_displaced", &seg.curve, 1));
            }
        }
        out.checks.push(Check::at_most("length_preserved", length_gap, tol.length));
        out.artifacts.push(curve_artifact("curve_base", &base, 1));
        out.data.insert("base_length".into(), json!(l0));
        Ok(())
    });

    out.section("profile", |out| {
        let s = cfg.s_max;
        let plateau = c.eta + 2.0 * c.eps;
        let mut gap: f64 = 0.0;
        for k in 0..PROFILE_SAMPLES {
            let t = -plateau + 2.0 * plateau * k as f64 / (PROFILE_SAMPLES - 1) as f64;
            gap = gap.max((fam.profile(s, t)? - s).abs());
        }
        out.checks.push(Check::at_most("profile_plateau", gap, tol.plateau));
        let mut violations = 0;
        for k in 0..PROFILE_SAMPLES {
            let t = -2.0 * c.eta + 4.0 * c.eta * k as f64 / (PROFILE_SAMPLES - 1) as f64;
            if s * c.profile_shape_deriv(t) * t > 0.0 {
                violations += 1;
            }
        }
        out.checks.push(Check::at_most("profile_monotone_violations", violations as f64, 0.0));
        let mut prof = Artifact::new("profile", &["t", "u"]);
        for k in 0..=400 {
            let t = -2.0 * c.eta + 4.0 * c.eta * k as f64 / 400.0;
            prof.push(vec![t, fam.profile(s, t)?]);
        }
        out.artifacts.push(prof);
        Ok(())
    });

    out.section("finsler", |out| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
        let ff: Arc<dyn FinslerField> = Arc::new(RiemannSquare::new(field.clone()));
        let n = cfg.dim;
        let mut tensor_gap: f64 = 0.0;
        for _ in 0..FINSLER_SAMPLES {
            let x = sample_near(&mut rng, &dom, &p, c.eta);
            let v = Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let gv = finsler_fundamental_tensor(ff.as_ref(), &x, &v)?;
            tensor_gap = tensor_gap.max(max_abs_diff(&gv, &field.eval(&x)));
        }
        out.checks.push(Check::at_most("finsler_fundamental_tensor", tensor_gap, tol.finsler_tensor));
        let ffam = PerturbationFamily::clone(&fam).with_finsler(ff);
        let (mut rev, mut quad): (f64, f64) = (0.0, 0.0);
        for _ in 0..FINSLER_SAMPLES {
            let t = rng.gen_range(c.eta..c.eta + 6.0 * c.eps) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let mut y = Vector::from_fn(n - 1, |_, _| rng.gen_range(-1.0..1.0));
            y *= rng.gen_range(0.0..1.5) * c.delta / y.norm().max(1e-300);
            let x = chart.forward(t, &y)?;
            let v = Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let s = cfg.s_max;
            let f = ffam.finsler_at(s, &x, &v)?;
            rev = rev.max((ffam.finsler_at(s, &x, &(-&v))? - f).abs());
            let g = ffam.metric_at(s, &x)?;
            quad = quad.max((f - inner(&g, &v, &v).sqrt()).abs());
        }
        out.checks.push(Check::at_most("finsler_reversible", rev, tol.finsler_reversible));
        out.checks.push(Check::at_most("finsler_quadratic", quad, tol.finsler_quadratic));
        Ok(())
    });

    out.section("plots", |out| {
        let mut heat = Artifact::new("alpha_slice", &["t", "r", "alpha"]);
        for i in 0..=80 {
            let t = -2.0 * c.eta + 4.0 * c.eta * i as f64 / 80.0;
            for j in 0..=20 {
                let r = 2.0 * c.delta * j as f64 / 20.0;
                heat.push(vec![t, r, c.alpha(t, r)]);
            }
        }
        out.artifacts.push(heat);
        let mut table = Artifact::new("clearance_vs_s", &["s", "clearance"]);
        for k in 1..=8 {
            let s = cfg.s_max * k as f64 / 8.0;
            let cs = fam.displaced_curve(s, SEGMENT_NODES)?;
            let mut d = f64::INFINITY;
            for (x, t) in cs.nodes.iter().zip(&cs.params) {
                if t.abs() <= c.eta {
                    d = d.min(chart.distance_from_base(x)?);
                }
            }
            table.push(vec![s, d]);
        }
        out.artifacts.push(table);
        Ok(())
    });
    Ok(())
}

/// Random closed plane curve with a few decaying Fourier modes.
pub fn fourier_curve(seed: u64, m: usize) -> CurveDiscrete {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coef: Vec<[f64; 4]> = (1..=4).map(|_| [0; 4].map(|_| rng.gen_range(-1.0..1.0))).collect();
    let params: Vec<f64> = (0..m).map(|i| 2.0 * PI * i as f64 / (m - 1) as f64).collect();
    let nodes = params
        .iter()
        .map(|&u| {
            let mut x = Vector::zeros(2);
            for (k, c) in coef.iter().enumerate() {
                let kf = (k + 1) as f64;
                let (s, co) = (kf * u).sin_cos();
                x[0] += (c[0] * co + c[1] * s) / kf;
                x[1] += (c[2] * co + c[3] * s) / kf;
            }
            x
        })
        .collect();
    CurveDiscrete::new(nodes, params, true).expect("uniform parameters")
}

/// Closed-form `(s*, t*, t)` for displaced straight lines.
pub fn line_oracle(vj: &Vector, wj: &Vector, vk: &Vector, wk: &Vector, s_j: f64) -> Option<(f64, f64, f64)> {
    let m = Matrix::from_columns(&[vj.clone(), -vk, -wk]);
    let sol = m.lu().solve(&(-wj * s_j))?;
    Some((sol[2], sol[1], sol[0]))
}

pub(super) fn intersections(cfg: &ScenarioConfig, out: &mut Sections) -> Result<()> {
    let tol = &cfg.tolerances;
    out.section("detection_oracle", |out| {
        let plane = Euclidean::new(2, 5.0)?;
        let (mut mismatched, mut unstable, mut events) = (0, 0, 0);
        for k in 0..DETECTION_CURVES {
            let c = fourier_curve(cfg.seed.wrapping_add(k), DETECTION_NODES);
            let mut counts = Vec::new();
            for t in DETECTION_TOLS {
                let fast = double_points_with(&c, &plane, t, Scan::Hashed);
                let slow = double_points_with(&c, &plane, t, Scan::Exhaustive);
                match (fast, slow) {
                    (Ok(a), Ok(b)) => {
                        let same = a.events.len() == b.events.len()
                            && a.events
                                .iter()
                                .zip(&b.events)
                                .all(|(x, y)| (x.param_a - y.param_a).abs() < 1e-9 && (x.param_b - y.param_b).abs() < 1e-9);
                        mismatched += usize::from(!same);
                        counts.push(a.events.len());
                        events += a.events.len();
                    }
                    (Err(a), Err(b)) if a == b => counts.push(usize::MAX),
                    _ => mismatched += 1,
                }
            }
            unstable += usize::from(counts.len() == 2 && counts[0] != counts[1]);
        }
        out.checks.push(Check::at_most("hashed_scan_matches_exhaustive", mismatched as f64, 0.0).with_detail("mismatched scans"));
        out.checks.push(Check::at_most("event_count_stable_under_halving", unstable as f64, 0.0).with_detail("curves whose count changed"));
        out.data.insert("detection_events".into(), json!(events));
        Ok(())
    });

    if cfg.dim < 3 {
        out.skipped.push(format!("disentangle: needs dimension >= 3, scenario has {}", cfg.dim));
        return Ok(());
    }
    out.section("disentangle", |out| {
        let field = cfg.field()?;
        let p = cfg.base_point();
        let g = field.eval(&p);
        let mut seeds = vec![Vector::from_vec(cfg.direction.clone())];
        seeds.extend((0..cfg.dim).map(|i| unit(cfg.dim, i)));
        let dirs: Vec<Vector> = gram_schmidt(&g, &seeds).into_iter().take(3).collect();
        let segs = dirs
            .iter()
            .map(|v| integrate_geodesic(field.as_ref(), &p, v, (-2.0 * cfg.eta, 2.0 * cfg.eta), default_step(cfg.eta)))
            .collect::<Result<Vec<_>>>()?;
        let r = disentangle(field.clone(), &p, &segs, cfg.eta, cfg.eps, cfg.s_budget)?;
        out.checks.push(Check::above("clearance_over_node_spacing", r.clearance / r.node_spacing, tol.clearance_factor));
        out.checks.push(Check::at_most("events_after_disentangle", r.post_check_events as f64, 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
        let dom = field.domain();
        let (mut worst, mut outside): (f64, usize) = (0.0, 0);
        for _ in 0..SUPPORT_SAMPLES {
            let x = sample_near(&mut rng, dom, &p, 1.8 * cfg.eta);
            let mut inside = false;
            for fam in &r.families {
                if let Some(l) = fam.locate_alpha(&x, 0.0)? {
                    inside |= l.alpha > 0.0;
                }
            }
            if !inside {
                outside += 1;
                worst = worst.max(max_abs_diff(&r.metric.eval(&x), &field.eval(&x)));
            }
        }
        out.checks.push(Check::at_most("metric_unchanged_outside_shells", worst, tol.support));

        if field.constant().is_some() {
            let mut err: f64 = 0.0;
            for j in 0..3 {
                for k in 0..3 {
                    if j == k {
                        continue;
                    }
                    let (cj, ck) = (r.families[j].chart(), r.families[k].chart());
                    let fo = forbidden_offsets(cj, ck, cfg.s_budget)?;
                    for s_j in [0.5 * r.offsets[j], r.offsets[j]] {
                        let got = fo.at(s_j)?;
                        let want = line_oracle(cj.v(), cj.w(), ck.v(), ck.w(), s_j)
                            .ok_or_else(|| Error::BoundViolation("degenerate line configuration".into()))?;
                        err = err.max((got.0 - want.0).abs()).max((got.1 - want.1).abs()).max((got.2 - want.2).abs());
                    }
                }
            }
            out.checks.push(Check::at_most("forbidden_offsets_match_line_oracle", err, tol.forbidden_oracle));
        } else {
            out.skipped.push("forbidden offset line oracle: metric is not constant".into());
        }

        for (j, trace) in r.traces.iter().enumerate() {
            out.artifacts.push(curve_artifact(&format!("trace_{j}"), trace, TRACE_STRIDE));
        }
        out.data.insert(
            "disentangle".into(),
            json!({
                "offsets": r.offsets,
                "forbidden": r.forbidden,
                "clearance": r.clearance,
                "node_spacing": r.node_spacing,
                "eps": r.eps,
                "delta": r.delta,
                "outside_samples": outside,
            }),
        );
        Ok(())
    });
    Ok(())
}

/// Closed geodesics along the coordinate axes through `p` of a flat torus.
fn axis_loops(field: &dyn MetricField, p: &Vector) -> Result<Vec<ClosedGeodesic>> {
    let n = p.len();
    let dom = field.domain();
    (0..n)
        .map(|i| {
            let period = dom.periods()[i].ok_or_else(|| Error::Config(format!("axis {i} is not periodic")))?;
            close_geodesic(field, p, &unit(n, i), period, &(unit(n, i) * period), DEFAULT_LOOP_NODES)
        })
        .collect()
}

pub(super) fn pipeline(cfg: &ScenarioConfig, out: &mut Sections) -> Result<()> {
    let tol = &cfg.tolerances;
    out.section("pipeline", |out| {
        let field = cfg.field()?;
        let p = cfg.base_point();
        let loops = axis_loops(field.as_ref(), &p)?;
        let r = theorem1_pipeline(field.clone(), &loops, cfg.a, cfg.eta, cfg.eps, cfg.s_budget)?;
        out.checks.push(Check::new("events_before", r.before_events as f64, super::report::Relation::AtLeast, 1.0));
        out.checks.push(Check::at_most("events_after", r.after_events as f64, 0.0));
        out.checks.push(Check::at_most("length_change", r.max_length_change, tol.length));

        let metric = r.metric.as_ref().expect("pipeline returns its metric");
        let dom = field.domain();
        let centres: Vec<Vector> = r.dip.iter().map(|d| Vector::from_vec(d.point.clone())).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(3));
        let mut worst: f64 = 0.0;
        for _ in 0..PIPELINE_SAMPLES {
            let x = Vector::from_fn(cfg.dim, |i, _| rng.gen_range(dom.lower()[i]..dom.upper()[i]));
            if centres.iter().all(|c| dom.chart_distance(&x, c) > 2.0 * r.eta) {
                worst = worst.max(max_abs_diff(&metric.eval(&x), &field.eval(&x)));
            }
        }
        out.checks.push(Check::at_most("metric_unchanged_outside_balls", worst, tol.support));
        let audited: Vec<&ClosedGeodesic> = loops.iter().filter(|c| c.length <= cfg.a * (1.0 + 1e-12)).collect();
        for (i, c) in audited.iter().enumerate() {
            out.artifacts.push(curve_artifact(&format!("loop_{i}_before"), c.curve(), 8));
        }
        for (i, c) in r.loops_after.iter().enumerate() {
            out.artifacts.push(curve_artifact(&format!("loop_{i}_after"), c, 8));
        }
        out.data.insert("pipeline".into(), serde_json::to_value(&r).map_err(|e| Error::Io(e.to_string()))?);
        Ok(())
    });
    Ok(())
}

/// Loops audited by the bumpy suite for metrics whose closed geodesics are known.
fn known_loops(cfg: &ScenarioConfig, field: &dyn MetricField) -> Result<Vec<ClosedGeodesic>> {
    match cfg.metric.as_str() {
        "flat-torus" => axis_loops(field, &cfg.base_point()),
        "sphere-chart" => {
            let cg =
                close_geodesic(field, &Vector::from_vec(vec![FRAC_PI_2, 0.0]), &unit(2, 1), 2.0 * PI, &(unit(2, 1) * (2.0 * PI)), 512)?;
            Ok(vec![cg])
        }
        "ellipsoid-chart" => {
            let get = |k: &str, d: f64| cfg.metric_params.get(k).copied().unwrap_or(d);
            let e = EllipsoidChart::new(get("a", 1.0), get("b", 1.1), get("c", 1.3))?;
            (0..3)
                .map(|axis| {
                    let mut pts = e.principal_section(axis, DEFAULT_LOOP_NODES);
                    let lattice = &pts[DEFAULT_LOOP_NODES] - &pts[0];
                    pts.pop();
                    Ok(refine_closed_geodesic(field, pts, &lattice, 20)?.0)
                })
                .collect()
        }
        other => Err(Error::Config(format!("metric: bumpy audit has no closed geodesics for '{other}'"))),
    }
}

pub(super) fn bumpy(cfg: &ScenarioConfig, out: &mut Sections) -> Result<()> {
    let tol = &cfg.tolerances;
    out.section("bumpy", |out| {
        let field = cfg.field()?;
        let mut loops = known_loops(cfg, field.as_ref())?;
        loops.retain(|c| c.length <= cfg.a * (1.0 + 1e-12));
        loops.sort_by(|a, b| a.length.total_cmp(&b.length));
        for (i, cg) in loops.iter().enumerate() {
            let pd = linearized_poincare(field.as_ref(), cg)?;
            out.checks.push(Check::at_most(format!("determinant[loop {i}]"), (pd.determinant - 1.0).abs(), tol.determinant));
            let fd = return_map_fd(field.as_ref(), cg, FD_SAMPLES, FD_AMPLITUDE, cfg.seed)?;
            out.checks.push(Check::at_most(format!("return_map_fd[loop {i}]"), max_abs_diff(&fd, &pd.monodromy), tol.monodromy_fd));
            out.artifacts.push(curve_artifact(&format!("loop_{i}"), cg.curve(), 4));
        }
        let report = bumpy_audit(field.as_ref(), cfg.a, &loops)?;
        match cfg.expect_nondegenerate {
            Some(true) => {
                let bad = report.entries.iter().filter(|e| !e.nondegenerate).count();
                out.checks.push(Check::at_most("degenerate_loops", bad as f64, 0.0));
            }
            Some(false) => {
                let bad = report.entries.iter().filter(|e| e.nondegenerate).count();
                out.checks.push(Check::at_most("nondegenerate_loops", bad as f64, 0.0));
            }
            None => out.skipped.push("classification: no expectation for this scenario".into()),
        }
        let mut spectrum = Artifact::new("spectrum", &["class", "length", "multiplicity", "re", "im"]);
        for e in &report.entries {
            for l in &e.eigenvalues {
                spectrum.push(vec![e.class as f64, e.length, e.multiplicity as f64, l.re, l.im]);
            }
        }
        out.artifacts.push(spectrum);
        out.data.insert("audit".into(), serde_json::to_value(&report).map_err(|e| Error::Io(e.to_string()))?);
        Ok(())
    });
    Ok(())
}

pub(super) fn convexity(cfg: &ScenarioConfig, out: &mut Sections) -> Result<()> {
    let tol = cfg.tolerances.convexity;
    let n = cfg.dim;
    let (a, b) = if cfg.metric == "poly-test" {
        (cfg.metric_params.get("a").copied().unwrap_or(1.0), cfg.metric_params.get("b").copied().unwrap_or(0.0))
    } else {
        (1.0, 0.2)
    };
    out.section("convexity", |out| {
        let grid = ConvexityGrid::tensor(&vec![-1.0; n], &vec![1.0; n], if n > 2 { 5 } else { 9 });
        // two metrics in parallel form dt^2 + h(t, x) dx^2
        let g0 = move |x: &Vector| {
            let mut g = Matrix::identity(n, n);
            g[(1, 1)] = 1.0 + a * x[1] * x[1] + b * x[1].powi(3);
            g
        };
        let g1 = move |x: &Vector| {
            let mut g = Matrix::identity(n, n);
            for i in 1..n {
                g[(i, i)] = 1.0 + 0.5 * x[0] * x[0] + 0.3 * x[i] * x[i];
            }
            g
        };
        let alpha = |x: &Vector| 0.5 + 0.4 * (1.3 * x[0] + x.iter().skip(1).sum::<f64>()).sin();
        let r = parallel_convexity_check(g0, g1, alpha, &grid)?;
        out.checks.push(Check::at_most("t_line_residual", r.max_residual, tol));

        // a cross term dt dx breaks the form
        let crossed = move |x: &Vector| {
            let mut g = Matrix::identity(n, n);
            g[(0, 1)] = 0.1 * (1.0 + x[0]);
            g[(1, 0)] = g[(0, 1)];
            g
        };
        let defect = match parallel_convexity_check(g0, crossed, alpha, &grid) {
            Err(Error::NotParallelForm { defect, .. }) => defect,
            Err(e) => return Err(e),
            Ok(_) => 0.0,
        };
        out.checks.push(Check::above("cross_term_form_defect", defect, 0.0));
        let bad = parallel_convexity_residual(g0, crossed, alpha, &grid)?;
        out.checks.push(Check::above("cross_term_residual", bad.max_residual, tol));
        out.data.insert("grid_points".into(), json!(r.points));
        Ok(())
    });
    Ok(())
}
