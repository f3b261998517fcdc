//! One line per acceptance criterion: verdict, wall time, and the measured values.
//!
//! Runs without the libtest harness so the lines are always printed; the
//! process fails if any criterion fails.

use std::time::{Duration, Instant};

use geoperturb::harness::{run_sections, scenario, Bundle, ScenarioConfig, Suite};

struct Outcome {
    pass: bool,
    detail: String,
}

fn cfg(name: &str) -> ScenarioConfig {
    let c = scenario(name).expect("shipped scenario");
    c.validate().expect("shipped scenario validates");
    c
}

fn bundle(suite: Suite, name: &str, sections: &[&str]) -> Bundle {
    run_sections(suite, &cfg(name), Some(sections)).unwrap_or_else(|e| panic!("{suite} on {name}: {e}"))
}

/// Every check of every bundle passes, and each named check is present.
fn judge(bundles: &[Bundle], required: &[&str]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for b in bundles {
        let r = &b.report;
        pass &= r.pass;
        for name in required {
            match r.check(name) {
                Some(c) => parts.push(format!("{}:{}={:.3e}", r.config.scenario, c.name, c.measured)),
                None => {
                    pass = false;
                    parts.push(format!("{}:{} missing", r.config.scenario, name));
                }
            }
        }
        for c in r.failures() {
            parts.push(format!(
                "{}:{} FAILED ({:.3e} vs {:.3e}{})",
                r.config.scenario,
                c.name,
                c.measured,
                c.tolerance,
                c.detail.as_deref().map(|d| format!(", {d}")).unwrap_or_default()
            ));
        }
    }
    Outcome { pass, detail: parts.join("  ") }
}

fn c1() -> Outcome {
    let bs: Vec<Bundle> = ["euclidean-r3", "ellipsoid-113"].iter().map(|n| bundle(Suite::Perturb, n, &["support_exact"])).collect();
    judge(&bs, &["support_exact[s=1/4 s_max]", "support_exact[s=1/2 s_max]", "support_exact[s=1 s_max]"])
}

fn c2() -> Outcome {
    let bs: Vec<Bundle> = ["euclidean-r3", "ellipsoid-113"].iter().map(|n| bundle(Suite::Perturb, n, &["displaced_geodesic"])).collect();
    judge(&bs, &["residual[s=1/4 s_max]", "residual[s=1/2 s_max]", "residual[s=1 s_max]", "residual_under_base_metric"])
}

fn c3() -> Outcome {
    let bs: Vec<Bundle> = ["euclidean-r3", "ellipsoid-113"].iter().map(|n| bundle(Suite::Perturb, n, &["profile"])).collect();
    judge(&bs, &["profile_plateau", "profile_monotone_violations"])
}

fn c4() -> Outcome {
    let bs: Vec<Bundle> = ["euclidean-r3", "ellipsoid-113"].iter().map(|n| bundle(Suite::Perturb, n, &["displaced_geodesic"])).collect();
    judge(&bs, &["length_preserved"])
}

fn c5() -> Outcome {
    judge(
        &[bundle(Suite::Intersections, "euclidean-r3", &["disentangle"])],
        &[
            "clearance_over_node_spacing",
            "events_after_disentangle",
            "metric_unchanged_outside_shells",
            "forbidden_offsets_match_line_oracle",
        ],
    )
}

fn c6() -> Outcome {
    judge(&[bundle(Suite::Pipeline, "torus-cross", &["pipeline"])], &["events_before", "events_after", "length_change"])
}

fn c7() -> Outcome {
    judge(&[bundle(Suite::Convexity, "poly-test", &["convexity"])], &["t_line_residual", "cross_term_form_defect", "cross_term_residual"])
}

fn c8() -> Outcome {
    let bs: Vec<Bundle> = ["euclidean-r3", "ellipsoid-113"].iter().map(|n| bundle(Suite::Perturb, n, &["finsler"])).collect();
    judge(&bs, &["finsler_fundamental_tensor", "finsler_reversible", "finsler_quadratic"])
}

fn c9() -> Outcome {
    let a = judge(
        &[bundle(Suite::Bumpy, "torus-cross", &["bumpy"]), bundle(Suite::Bumpy, "sphere-chart", &["bumpy"])],
        &["determinant[loop 0]", "nondegenerate_loops"],
    );
    // loops are sorted by length, so loop 0 is the shortest equator
    let b =
        judge(&[bundle(Suite::Bumpy, "ellipsoid-113", &["bumpy"])], &["return_map_fd[loop 0]", "determinant[loop 0]", "degenerate_loops"]);
    Outcome { pass: a.pass && b.pass, detail: format!("{}  {}", a.detail, b.detail) }
}

fn c10() -> Outcome {
    judge(
        &[bundle(Suite::Intersections, "euclidean-r3", &["detection_oracle"])],
        &["hashed_scan_matches_exhaustive", "event_count_stable_under_halving"],
    )
}

/// Name, runtime limit in seconds, and the check.
type Criterion = (&'static str, Option<u64>, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("support exactness", Some(10), c1),
        ("displaced geodesic certification", Some(30), c2),
        ("profile contract", None, c3),
        ("length preservation", None, c4),
        ("disentanglement of three axes", Some(60), c5),
        ("pipeline end to end", Some(120), c6),
        ("convexity in parallel coordinates", Some(5), c7),
        ("Finsler layer", None, c8),
        ("Poincare map and bumpy audit", None, c9),
        ("detection oracle equivalence", None, c10),
    ];
    let mut failed = 0;
    for (i, (name, limit, f)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let out = f();
        let took = start.elapsed();
        let in_time = limit.is_none_or(|s| took < Duration::from_secs(s));
        let pass = out.pass && in_time;
        failed += usize::from(!pass);
        let budget = limit.map(|s| format!(" (limit {s} s)")).unwrap_or_default();
        println!(
            "{} {:>2} {:<36} {:>7.2} s{}{}  {}",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            name,
            took.as_secs_f64(),
            budget,
            if in_time { "" } else { " OVER TIME" },
            out.detail
        );
    }
    println!("{} of 10 criteria pass", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
