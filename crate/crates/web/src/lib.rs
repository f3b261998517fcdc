//! WebAssembly bindings for the demo page in `www/`.
//!
//! Each export takes plain numbers or a scenario name and returns a JSON
//! string; the page does the drawing.

use geoperturb::bump_perturb::make_cutoffs;
use geoperturb::chart_metric::MetricField;
use geoperturb::geodesic_flow::{default_step, integrate_geodesic};
use geoperturb::harness::{perturbation_family, scenario, ScenarioConfig};
use geoperturb::intersect::{disentangle_with, DisentangleOptions};
use geoperturb::linalg::{unit, Vector};
use geoperturb::{Error, Result};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const THETA: f64 = 0.1;
const CURVE_NODES: usize = 400;
/// Coarser than the native default so the page stays responsive.
const TRACE_NODES: usize = 4001;
const TRACE_POINTS: usize = 400;

fn export(r: Result<Value>) -> std::result::Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e.to_string()))
}

fn resolve(name: &str) -> Result<ScenarioConfig> {
    let c = scenario(name)?;
    c.validate()?;
    Ok(c)
}

/// Profile `u_s(t)` next to the normal offset of the displaced geodesic,
/// read back through the tube coordinates.
pub fn displaced_curve_json(name: &str, s_fraction: f64) -> Result<Value> {
    if !(0.0..=1.0).contains(&s_fraction) {
        return Err(Error::Config(format!("s_fraction must lie in [0, 1], got {s_fraction}")));
    }
    let cfg = resolve(name)?;
    let fam = perturbation_family(&cfg, cfg.field()?)?;
    let s = s_fraction * cfg.s_max;
    let seg = fam.displaced_geodesic(s, CURVE_NODES)?;
    let mut profile = Vec::with_capacity(seg.curve.len());
    let mut offset = Vec::with_capacity(seg.curve.len());
    for (x, &t) in seg.curve.nodes.iter().zip(&seg.curve.params) {
        profile.push([t, fam.profile(s, t)?]);
        offset.push([t, fam.chart().inverse(x)?.1.norm()]);
    }
    Ok(json!({
        "scenario": cfg.scenario,
        "eta": cfg.eta,
        "eps": cfg.eps,
        "delta": cfg.delta,
        "s": s,
        "s_max": cfg.s_max,
        "residual": seg.residual_max,
        "profile": profile,
        "offset": offset,
    }))
}

/// The cutoff `alpha(t, r)` on `[-2 eta, 2 eta] x [0, 2 delta]`.
pub fn alpha_slice_json(eta: f64, eps: f64, delta: f64, nt: usize, nr: usize) -> Result<Value> {
    if nt < 2 || nr < 2 {
        return Err(Error::Config("need at least two samples per axis".into()));
    }
    let c = make_cutoffs(THETA, eta, eps, delta)?;
    let t: Vec<f64> = (0..nt).map(|i| -2.0 * eta + 4.0 * eta * i as f64 / (nt - 1) as f64).collect();
    let r: Vec<f64> = (0..nr).map(|j| 2.0 * delta * j as f64 / (nr - 1) as f64).collect();
    let alpha: Vec<Vec<f64>> = r.iter().map(|&r| t.iter().map(|&t| c.alpha(t, r)).collect()).collect();
    Ok(json!({ "t": t, "r": r, "alpha": alpha }))
}

/// Separates the three coordinate axes of Euclidean 3-space through the origin.
pub fn disentangle_axes_json(eta: f64, eps: f64, s_budget: f64) -> Result<Value> {
    let mut cfg = resolve("euclidean-r3")?;
    cfg.eta = eta;
    cfg.eps = eps;
    cfg.s_budget = s_budget;
    cfg.delta = 0.4 * eps;
    cfg.s_max = cfg.s_max.min(cfg.delta);
    cfg.validate()?;
    let field = cfg.field()?;
    let p = Vector::zeros(3);
    let segs = (0..3)
        .map(|i| integrate_geodesic(field.as_ref(), &p, &unit(3, i), (-2.0 * eta, 2.0 * eta), default_step(eta)))
        .collect::<Result<Vec<_>>>()?;
    let opts = DisentangleOptions { nodes: TRACE_NODES, ..Default::default() };
    let r = disentangle_with(field.clone(), &p, &segs, eta, eps, s_budget, &opts)?;
    // distance of each trace from its original axis
    let deviation: Vec<Vec<[f64; 2]>> = r
        .traces
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let stride = (c.len() / TRACE_POINTS).max(1);
            (0..c.len())
                .step_by(stride)
                .map(|k| {
                    let mut x = c.nodes[k].clone();
                    x[j] = 0.0;
                    [c.params[k], x.norm()]
                })
                .collect()
        })
        .collect();
    let residuals: Vec<f64> = r.segments.iter().map(|s| s.residual_max).collect();
    Ok(json!({
        "offsets": r.offsets,
        "forbidden": r.forbidden,
        "clearance": r.clearance,
        "node_spacing": r.node_spacing,
        "events_after": r.post_check_events,
        "residuals": residuals,
        "deviation": deviation,
        "unchanged_far_away": field.eval(&Vector::from_column_slice(&[1.5 * eta, 1.5 * eta, 0.0]))
            == r.metric.eval(&Vector::from_column_slice(&[1.5 * eta, 1.5 * eta, 0.0])),
    }))
}

#[wasm_bindgen]
pub fn displaced_curve(scenario: &str, s_fraction: f64) -> std::result::Result<String, JsError> {
    export(displaced_curve_json(scenario, s_fraction))
}

#[wasm_bindgen]
pub fn alpha_slice(eta: f64, eps: f64, delta: f64, nt: usize, nr: usize) -> std::result::Result<String, JsError> {
    export(alpha_slice_json(eta, eps, delta, nt, nr))
}

#[wasm_bindgen]
pub fn disentangle_axes(eta: f64, eps: f64, s_budget: f64) -> std::result::Result<String, JsError> {
    export(disentangle_axes_json(eta, eps, s_budget))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offset_follows_the_profile_on_the_plateau() {
        let v = displaced_curve_json("euclidean-r3", 1.0).unwrap();
        let s = v["s"].as_f64().unwrap();
        let eta = v["eta"].as_f64().unwrap();
        for pt in v["offset"].as_array().unwrap() {
            let (t, d) = (pt[0].as_f64().unwrap(), pt[1].as_f64().unwrap());
            if t.abs() <= eta {
                assert!((d - s).abs() < 1e-8, "t = {t}: {d} vs {s}");
            }
        }
        assert!(v["residual"].as_f64().unwrap() < 1e-4);
        assert!(displaced_curve_json("euclidean-r3", 1.5).is_err());
        assert!(displaced_curve_json("klein-bottle", 0.5).is_err());
    }

    #[test]
    fn alpha_vanishes_on_the_core_segment() {
        let v = alpha_slice_json(1.0, 0.14, 0.05, 41, 11).unwrap();
        let t = v["t"].as_array().unwrap();
        let row0 = v["alpha"][0].as_array().unwrap();
        for (t, a) in t.iter().zip(row0) {
            if t.as_f64().unwrap().abs() <= 1.0 {
                assert_eq!(a.as_f64().unwrap(), 0.0);
            }
        }
        assert!(alpha_slice_json(1.0, 0.2, 0.05, 41, 11).is_err());
    }

    #[test]
    fn three_axes_come_apart() {
        let v = disentangle_axes_json(1.0, 0.14, 0.05).unwrap();
        assert_eq!(v["events_after"], 0);
        assert!(v["clearance"].as_f64().unwrap() > 10.0 * v["node_spacing"].as_f64().unwrap());
        assert_eq!(v["deviation"].as_array().unwrap().len(), 3);
        assert_eq!(v["unchanged_far_away"], true);
    }
}
