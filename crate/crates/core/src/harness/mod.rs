//! Scenario registry, suite orchestration and report emission.
//!
//! A run resolves a [`ScenarioConfig`], executes one suite and returns a
//! [`Bundle`]: the JSON report with one [`Check`] per invariant plus the
//! plot-ready tables. Failures inside a suite become failing checks; only
//! configuration problems are returned as errors.

mod config;
mod report;
mod suites;

use std::path::PathBuf;
use std::str::FromStr;

pub use config::{scenario, ConfigFile, Overrides, ScenarioConfig, Tolerances, SCENARIOS};
pub use report::{emit_plots, fmt_f64, report_file_name, to_json, write_report, Artifact, Bundle, Check, Relation, Report, SCHEMA};
pub use suites::{fourier_curve, line_oracle, perturbation_family};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Perturb,
    Intersections,
    Pipeline,
    Bumpy,
    Convexity,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Perturb, Suite::Intersections, Suite::Pipeline, Suite::Bumpy, Suite::Convexity];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Perturb => "perturb",
            Suite::Intersections => "intersections",
            Suite::Pipeline => "pipeline",
            Suite::Bumpy => "bumpy",
            Suite::Convexity => "convexity",
        }
    }

    pub fn sections(self) -> &'static [&'static str] {
        match self {
            Suite::Perturb => &["support_exact", "displaced_geodesic", "profile", "finsler", "plots"],
            Suite::Intersections => &["detection_oracle", "disentangle"],
            Suite::Pipeline => &["pipeline"],
            Suite::Bumpy => &["bumpy"],
            Suite::Convexity => &["convexity"],
        }
    }

    /// Rejects suite and scenario combinations that cannot run.
    pub fn check_applicable(self, cfg: &ScenarioConfig) -> Result<()> {
        match self {
            Suite::Pipeline if cfg.metric != "flat-torus" => {
                Err(Error::Config(format!("metric: the pipeline suite needs a flat torus, scenario uses '{}'", cfg.metric)))
            }
            Suite::Pipeline if cfg.dim < 3 => Err(Error::Config(format!("dim: the pipeline suite needs dimension >= 3, got {}", cfg.dim))),
            Suite::Bumpy if !matches!(cfg.metric.as_str(), "flat-torus" | "sphere-chart" | "ellipsoid-chart") => {
                Err(Error::Config(format!("metric: the bumpy suite has no closed geodesics for '{}'", cfg.metric)))
            }
            _ => Ok(()),
        }
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|x| x.as_str() == s).ok_or_else(|| Error::Config(format!("suite: unknown suite '{s}'")))
    }
}

impl std::fmt::Display for Suite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Runs one suite. Only configuration errors are returned as `Err`.
pub fn run(suite: Suite, cfg: &ScenarioConfig) -> Result<Bundle> {
    run_sections(suite, cfg, None)
}

/// Runs the named sections of a suite, or all of them for `None`.
pub fn run_sections(suite: Suite, cfg: &ScenarioConfig, only: Option<&[&str]>) -> Result<Bundle> {
    cfg.validate()?;
    suite.check_applicable(cfg)?;
    if let Some(names) = only {
        if let Some(bad) = names.iter().find(|n| !suite.sections().contains(n)) {
            return Err(Error::Config(format!("section: '{bad}' is not part of the {suite} suite")));
        }
    }
    let mut out = suites::Sections { only: only.map(|o| o.iter().map(|s| s.to_string()).collect()), ..Default::default() };
    match suite {
        Suite::Perturb => suites::perturb(cfg, &mut out)?,
        Suite::Intersections => suites::intersections(cfg, &mut out)?,
        Suite::Pipeline => suites::pipeline(cfg, &mut out)?,
        Suite::Bumpy => suites::bumpy(cfg, &mut out)?,
        Suite::Convexity => suites::convexity(cfg, &mut out)?,
    }
    // a section that fails on configuration grounds is a configuration error
    if let Some(c) = out.checks.iter().find(|c| c.detail.as_deref().is_some_and(|d| d.starts_with("configuration error"))) {
        return Err(Error::Config(format!("{}: {}", c.name, c.detail.as_deref().unwrap_or_default())));
    }
    let pass = !out.checks.is_empty() && out.checks.iter().all(|c| c.pass);
    let report = Report {
        schema: SCHEMA,
        suite: suite.as_str().into(),
        config: cfg.clone(),
        checks: out.checks,
        skipped: out.skipped,
        data: serde_json::Value::Object(out.data),
        pass,
    };
    Ok(Bundle { report, artifacts: out.artifacts })
}

/// Runs a suite and writes the report and its tables into the output directory.
pub fn run_and_write(suite: Suite, cfg: &ScenarioConfig) -> Result<(Bundle, Vec<PathBuf>)> {
    let bundle = run(suite, cfg)?;
    let mut files = vec![write_report(&bundle.report, &cfg.output_dir)?];
    files.extend(emit_plots(&bundle, &cfg.output_dir)?);
    Ok((bundle, files))
}

#[cfg(test)]
mod tests;
