use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use geoperturb::harness::{run_and_write, ConfigFile, Overrides, ScenarioConfig, Suite};
use geoperturb::Error;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SuiteArg {
    Perturb,
    Intersections,
    Pipeline,
    Bumpy,
    Convexity,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Perturb => Suite::Perturb,
            SuiteArg::Intersections => Suite::Intersections,
            SuiteArg::Pipeline => Suite::Pipeline,
            SuiteArg::Bumpy => Suite::Bumpy,
            SuiteArg::Convexity => Suite::Convexity,
        }
    }
}

/// Verify local metric perturbations on a shipped scenario.
///
/// Exit status: 0 when every invariant passes, 1 when any fails, 2 on a
/// configuration error.
#[derive(Parser, Debug)]
#[command(name = "geoperturb", version)]
struct Cli {
    suite: SuiteArg,
    /// JSON configuration; fields left out come from the scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    /// euclidean-r3, torus-cross, sphere-chart, ellipsoid-113 or poly-test.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Length bound for closed geodesics.
    #[arg(long)]
    a: Option<f64>,
    /// Print only the summary line.
    #[arg(long, short)]
    quiet: bool,
}

fn load(cli: &Cli) -> Result<ScenarioConfig, Error> {
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            ConfigFile::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => ConfigFile::default(),
    };
    let over = Overrides { scenario: cli.scenario.clone(), output_dir: cli.out.clone(), seed: cli.seed, a: cli.a };
    ScenarioConfig::resolve(&file, &over)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let suite = Suite::from(cli.suite);
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("geoperturb: {e}");
            return ExitCode::from(2);
        }
    };
    let (bundle, files) = match run_and_write(suite, &cfg) {
        Ok(r) => r,
        Err(e @ Error::Config(_)) => {
            eprintln!("geoperturb: {e}");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("geoperturb: {e}");
            return ExitCode::from(1);
        }
    };
    let report = &bundle.report;
    if !cli.quiet {
        for c in &report.checks {
            let verdict = if c.pass { "PASS" } else { "FAIL" };
            let rel = relation_symbol(c.relation);
            print!("{verdict} {:<44} {:>24e} {rel} {:e}", c.name, c.measured, c.tolerance);
            match &c.detail {
                Some(d) if !c.pass => println!("  ({d})"),
                _ => println!(),
            }
        }
        for s in &report.skipped {
            println!("SKIP {s}");
        }
        for f in &files {
            println!("wrote {}", f.display());
        }
    }
    let failed = report.failures().count();
    println!(
        "{} {} on {}: {} checks, {} failed",
        if report.pass { "PASS" } else { "FAIL" },
        report.suite,
        report.config.scenario,
        report.checks.len(),
        failed
    );
    if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn relation_symbol(r: geoperturb::harness::Relation) -> &'static str {
    use geoperturb::harness::Relation::*;
    match r {
        AtMost => "<=",
        Above => ">",
        AtLeast => ">=",
    }
}
