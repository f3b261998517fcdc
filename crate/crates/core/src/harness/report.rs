//! Report bundle, deterministic JSON and CSV emission.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use super::config::ScenarioConfig;
use crate::error::{Error, Result};

pub const SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">")]
    Above,
    #[serde(rename = ">=")]
    AtLeast,
}

/// One invariant with its measured value and the tolerance it was held to.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub relation: Relation,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Check {
    pub fn new(name: impl Into<String>, measured: f64, relation: Relation, tolerance: f64) -> Self {
        let pass = match relation {
            Relation::AtMost => measured <= tolerance,
            Relation::Above => measured > tolerance,
            Relation::AtLeast => measured >= tolerance,
        };
        Self { name: name.into(), measured, relation, tolerance, pass, detail: None }
    }

    pub fn at_most(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self::new(name, measured, Relation::AtMost, tolerance)
    }

    pub fn above(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self::new(name, measured, Relation::Above, tolerance)
    }

    /// A section that could not run to completion.
    pub fn error(name: impl Into<String>, err: &Error) -> Self {
        Self {
            name: name.into(),
            measured: f64::NAN,
            relation: Relation::AtMost,
            tolerance: 0.0,
            pass: false,
            detail: Some(err.to_string()),
        }
    }

    pub fn with_detail(mut self, d: impl Into<String>) -> Self {
        self.detail = Some(d.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema: u32,
    pub suite: String,
    pub config: ScenarioConfig,
    pub checks: Vec<Check>,
    /// Sections that do not apply to the scenario.
    pub skipped: Vec<String>,
    /// Suite-specific measurements that are not pass/fail.
    pub data: serde_json::Value,
    pub pass: bool,
}

impl Report {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// A table destined for `<name>.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Artifact {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub report: Report,
    pub artifacts: Vec<Artifact>,
}

/// Seventeen significant digits, so every double survives a round trip.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        // no negative zero in the files
        format!("{:.16e}", 0.0)
    } else if v.is_finite() {
        format!("{v:.16e}")
    } else {
        // CSV cells; JSON writes null
        format!("{v}")
    }
}

struct FixedDigits(PrettyFormatter<'static>);

impl Formatter for FixedDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        w.write_all(fmt_f64(v).as_bytes())
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Pretty JSON with every float at 17 significant digits and a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedDigits(PrettyFormatter::new()));
    value.serialize(&mut ser).map_err(|e| Error::Io(e.to_string()))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

pub fn report_file_name(report: &Report) -> String {
    format!("{}-{}.json", report.suite, report.config.scenario)
}

pub fn write_report(report: &Report, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(report_file_name(report));
    let mut f = BufWriter::new(File::create(&path)?);
    f.write_all(to_json(report)?.as_bytes())?;
    f.flush()?;
    Ok(path)
}

/// Writes every artifact of the bundle as `<suite>-<scenario>-<name>.csv`.
/// A bundle without artifacts writes nothing.
pub fn emit_plots(bundle: &Bundle, dir: &Path) -> Result<Vec<PathBuf>> {
    if bundle.artifacts.is_empty() {
        return Ok(Vec::new());
    }
    std::fs::create_dir_all(dir)?;
    let prefix = format!("{}-{}", bundle.report.suite, bundle.report.config.scenario);
    let mut written = Vec::with_capacity(bundle.artifacts.len());
    for a in &bundle.artifacts {
        let path = dir.join(format!("{prefix}-{}.csv", a.name));
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(&path).map_err(csv_err)?;
        w.write_record(&a.header).map_err(csv_err)?;
        for row in &a.rows {
            w.write_record(row.iter().map(|&v| fmt_f64(v))).map_err(csv_err)?;
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}
