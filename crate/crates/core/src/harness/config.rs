//! Scenario registry and configuration.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::chart_metric::{metric_from_registry, MetricField};
use crate::error::{Error, Result};
use crate::linalg::{gram_schmidt, unit, Vector};

/// Defaults follow the acceptance bounds; every entry can be overridden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub support: f64,
    pub residual: f64,
    pub residual_control: f64,
    pub plateau: f64,
    pub length: f64,
    pub clearance_factor: f64,
    pub forbidden_oracle: f64,
    pub convexity: f64,
    pub finsler_tensor: f64,
    pub finsler_reversible: f64,
    pub finsler_quadratic: f64,
    pub monodromy_fd: f64,
    pub determinant: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            support: 0.0,
            residual: 1e-4,
            residual_control: 1e-2,
            plateau: 1e-8,
            length: 1e-6,
            clearance_factor: 10.0,
            forbidden_oracle: 1e-9,
            convexity: 1e-6,
            finsler_tensor: 1e-8,
            finsler_reversible: 1e-12,
            finsler_quadratic: 1e-10,
            monodromy_fd: 1e-3,
            determinant: 1e-5,
        }
    }
}

/// A configuration document. Every field is optional; missing ones come from
/// the named scenario.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub scenario: Option<String>,
    pub dim: Option<usize>,
    pub metric: Option<String>,
    pub metric_params: Option<BTreeMap<String, f64>>,
    pub eta: Option<f64>,
    pub eps: Option<f64>,
    pub delta: Option<f64>,
    pub s_budget: Option<f64>,
    pub s_max: Option<f64>,
    pub a: Option<f64>,
    pub point: Option<Vec<f64>>,
    pub direction: Option<Vec<f64>>,
    pub tolerances: Option<Tolerances>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

impl ConfigFile {
    /// Parses a JSON document; syntax and unknown-field errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("{e}")))
    }
}

/// A fully resolved and validated run configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub scenario: String,
    pub dim: usize,
    pub metric: String,
    pub metric_params: BTreeMap<String, f64>,
    pub eta: f64,
    pub eps: f64,
    pub delta: f64,
    /// Offset budget for disentangling.
    pub s_budget: f64,
    /// Largest offset of the single-segment family.
    pub s_max: f64,
    /// Length bound for closed geodesic audits.
    pub a: f64,
    /// Base point of the perturbation.
    pub point: Vec<f64>,
    /// Direction of the perturbed segment at `point` (chart coordinates).
    pub direction: Vec<f64>,
    /// Whether closed geodesics of this metric are expected to be nondegenerate.
    pub expect_nondegenerate: Option<bool>,
    pub tolerances: Tolerances,
    pub seed: u64,
    pub output_dir: PathBuf,
}

pub const SCENARIOS: [&str; 5] = ["euclidean-r3", "torus-cross", "sphere-chart", "ellipsoid-113", "poly-test"];

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
}

/// The shipped scenario with its defaults, before validation.
pub fn scenario(name: &str) -> Result<ScenarioConfig> {
    let base = |metric: &str, dim: usize, p: BTreeMap<String, f64>| ScenarioConfig {
        scenario: name.to_string(),
        dim,
        metric: metric.to_string(),
        metric_params: p,
        eta: 1.0,
        eps: 0.14,
        delta: 0.05,
        s_budget: 0.05,
        s_max: 1e-4,
        a: 0.0,
        point: vec![0.0; dim],
        direction: unit(dim, 0).iter().cloned().collect(),
        expect_nondegenerate: None,
        tolerances: Tolerances::default(),
        seed: 0,
        output_dir: PathBuf::from("geoperturb-out"),
    };
    Ok(match name {
        "euclidean-r3" => base("euclidean", 3, params(&[("dim", 3.0), ("half_width", 5.0)])),
        "torus-cross" => ScenarioConfig {
            eta: 0.3,
            eps: 0.04,
            delta: 0.016,
            s_budget: 0.018,
            s_max: 8e-6,
            a: 3.0,
            expect_nondegenerate: Some(false),
            ..base("flat-torus", 3, params(&[("dim", 3.0), ("period_1", 2.0), ("period_2", 2.5), ("period_3", 3.5)]))
        },
        "sphere-chart" => ScenarioConfig {
            eta: 0.5,
            eps: 0.07,
            delta: 0.03,
            s_max: 3.5e-5,
            a: 7.0,
            point: vec![FRAC_PI_2, 0.5],
            direction: vec![0.0, 1.0],
            expect_nondegenerate: Some(false),
            ..base("sphere-chart", 2, params(&[("pole_margin", 0.1)]))
        },
        "ellipsoid-113" => ScenarioConfig {
            eta: 0.5,
            eps: 0.07,
            delta: 0.03,
            s_max: 3.5e-5,
            a: 8.0,
            point: vec![1.3, 0.8],
            direction: vec![0.0, 1.0],
            expect_nondegenerate: Some(true),
            ..base("ellipsoid-chart", 2, params(&[("a", 1.0), ("b", 1.1), ("c", 1.3)]))
        },
        "poly-test" => ScenarioConfig {
            eta: 0.15,
            eps: 0.02,
            delta: 0.008,
            s_max: 2e-6,
            point: vec![0.2, 0.1],
            ..base("poly-test", 2, params(&[("a", 1.0), ("b", 0.2)]))
        },
        other => return Err(Error::Config(format!("scenario: unknown scenario '{other}', expected one of {SCENARIOS:?}"))),
    })
}

/// Command-line overrides, applied after the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub scenario: Option<String>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub a: Option<f64>,
}

impl ScenarioConfig {
    /// Scenario defaults, then the file, then the overrides; validated.
    pub fn resolve(file: &ConfigFile, over: &Overrides) -> Result<Self> {
        let name = over.scenario.clone().or_else(|| file.scenario.clone()).unwrap_or_else(|| "euclidean-r3".into());
        let mut c = scenario(&name)?;
        if let Some(m) = &file.metric {
            c.metric = m.clone();
        }
        if let Some(p) = &file.metric_params {
            c.metric_params.extend(p.iter().map(|(k, v)| (k.clone(), *v)));
        }
        if let Some(d) = file.dim {
            c.dim = d;
            c.metric_params.insert("dim".into(), d as f64);
            if file.point.is_none() {
                c.point.resize(d, 0.0);
            }
            if file.direction.is_none() {
                c.direction = unit(d, 0).iter().cloned().collect();
            }
        }
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = file.$f.clone() { c.$f = v; } )* };
        }
        take!(eta, eps, delta, s_budget, s_max, a, point, direction, tolerances, seed, output_dir);
        if let Some(s) = over.seed {
            c.seed = s;
        }
        if let Some(d) = &over.output_dir {
            c.output_dir = d.clone();
        }
        if let Some(a) = over.a {
            c.a = a;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn field(&self) -> Result<Arc<dyn MetricField>> {
        metric_from_registry(&self.metric, &self.metric_params).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("metric_params: {m}")),
            e => Error::Config(format!("metric_params: {e}")),
        })
    }

    /// Checks the chain `2 delta < eps`, `7 eps < eta`, `eta < inj / 3` and the shapes.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        let field = self.field()?;
        let dom = field.domain();
        if dom.dim() != self.dim {
            return bad("dim", format!("metric '{}' has dimension {}, config says {}", self.metric, dom.dim(), self.dim));
        }
        for (name, v) in [("eta", self.eta), ("eps", self.eps), ("delta", self.delta), ("s_budget", self.s_budget), ("s_max", self.s_max)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(name, format!("must be positive and finite, got {v}"));
            }
        }
        if !(self.a.is_finite() && self.a >= 0.0) {
            return bad("a", format!("must be a non-negative length, got {}", self.a));
        }
        if 2.0 * self.delta >= self.eps {
            return bad("delta", format!("bound 2*delta < eps violated: 2*{} >= {}", self.delta, self.eps));
        }
        if 7.0 * self.eps >= self.eta {
            return bad("eps", format!("bound 7*eps < eta violated: 7*{} >= {}", self.eps, self.eta));
        }
        let inj = field.injectivity_bound();
        if self.eta >= inj / 3.0 {
            return bad("eta", format!("bound eta < inj/3 violated: {} >= {inj}/3", self.eta));
        }
        if self.s_max > self.delta {
            return bad("s_max", format!("bound s_max <= delta violated: {} > {}", self.s_max, self.delta));
        }
        if self.point.len() != self.dim {
            return bad("point", format!("expected {} coordinates, got {}", self.dim, self.point.len()));
        }
        if !dom.contains(&Vector::from_vec(self.point.clone())) {
            return bad("point", format!("{:?} lies outside the chart domain", self.point));
        }
        if self.direction.len() != self.dim || self.direction.iter().all(|&d| d == 0.0) {
            return bad("direction", format!("expected a nonzero vector with {} coordinates", self.dim));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("support", t.support),
            ("residual", t.residual),
            ("residual_control", t.residual_control),
            ("plateau", t.plateau),
            ("length", t.length),
            ("clearance_factor", t.clearance_factor),
            ("forbidden_oracle", t.forbidden_oracle),
            ("convexity", t.convexity),
            ("finsler_tensor", t.finsler_tensor),
            ("finsler_reversible", t.finsler_reversible),
            ("finsler_quadratic", t.finsler_quadratic),
            ("monodromy_fd", t.monodromy_fd),
            ("determinant", t.determinant),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(&format!("tolerances.{name}"), format!("must be non-negative, got {v}"));
            }
        }
        Ok(())
    }

    pub fn base_point(&self) -> Vector {
        Vector::from_vec(self.point.clone())
    }

    /// Unit direction `v` at the base point and a unit normal `w`, both for `g(p)`.
    pub fn frame(&self, field: &dyn MetricField) -> (Vector, Vector) {
        let p = self.base_point();
        let g = field.eval(&p);
        let d = Vector::from_vec(self.direction.clone());
        let mut seeds = vec![d];
        seeds.extend((0..self.dim).map(|i| unit(self.dim, i)));
        let basis = gram_schmidt(&g, &seeds);
        (basis[0].clone(), basis[1].clone())
    }
}
