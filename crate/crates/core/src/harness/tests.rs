use super::*;

fn cfg(name: &str) -> ScenarioConfig {
    ScenarioConfig::resolve(&ConfigFile::default(), &Overrides { scenario: Some(name.into()), ..Default::default() }).unwrap()
}

#[test]
fn shipped_scenarios_validate() {
    for name in SCENARIOS {
        let c = cfg(name);
        assert_eq!(c.scenario, name);
        assert_eq!(c.point.len(), c.dim);
    }
    assert!(matches!(scenario("nope"), Err(Error::Config(_))));
}

#[test]
fn bound_violations_name_the_bound() {
    let file = ConfigFile::from_json(r#"{"scenario": "euclidean-r3", "eps": 0.2}"#).unwrap();
    let err = ScenarioConfig::resolve(&file, &Overrides::default()).unwrap_err().to_string();
    assert!(err.contains("7*eps < eta"), "{err}");

    let file = ConfigFile::from_json(r#"{"delta": 0.08}"#).unwrap();
    let err = ScenarioConfig::resolve(&file, &Overrides::default()).unwrap_err().to_string();
    assert!(err.contains("2*delta < eps"), "{err}");

    let file = ConfigFile::from_json(r#"{"scenario": "torus-cross", "eta": 0.34, "eps": 0.04}"#).unwrap();
    let err = ScenarioConfig::resolve(&file, &Overrides::default()).unwrap_err().to_string();
    assert!(err.contains("inj/3"), "{err}");
}

#[test]
fn malformed_documents_report_position() {
    let err = ConfigFile::from_json("{\n  \"eta\": 1.0,\n  \"colour\": 3\n}").unwrap_err().to_string();
    assert!(err.contains("colour") && err.contains("line 3"), "{err}");
    let err = ConfigFile::from_json("{\"tolerances\": {\"residul\": 1}}").unwrap_err().to_string();
    assert!(err.contains("residul"), "{err}");
    let err = ConfigFile::from_json("{\"eta\": }").unwrap_err().to_string();
    assert!(err.contains("line 1"), "{err}");
}

#[test]
fn overrides_take_precedence() {
    let file = ConfigFile::from_json(r#"{"scenario": "euclidean-r3", "seed": 4, "a": 1.0}"#).unwrap();
    let over = Overrides { scenario: Some("torus-cross".into()), seed: Some(9), a: Some(3.5), output_dir: None };
    let c = ScenarioConfig::resolve(&file, &over).unwrap();
    assert_eq!((c.scenario.as_str(), c.seed, c.a), ("torus-cross", 9, 3.5));
}

#[test]
fn inapplicable_suites_are_configuration_errors() {
    assert!(matches!(run(Suite::Pipeline, &cfg("ellipsoid-113")), Err(Error::Config(_))));
    assert!(matches!(run(Suite::Pipeline, &cfg("euclidean-r3")), Err(Error::Config(_))));
    assert!(matches!(run(Suite::Bumpy, &cfg("poly-test")), Err(Error::Config(_))));
    assert_eq!("bumpy".parse::<Suite>().unwrap(), Suite::Bumpy);
    assert!("bumpiness".parse::<Suite>().is_err());
}

#[test]
fn floats_keep_seventeen_digits() {
    assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
    assert_eq!(fmt_f64(-0.0), "0.0000000000000000e0");
    assert_eq!(fmt_f64(3.0), "3.0000000000000000e0");
    for v in [0.1, 1.0 / 3.0, 2e-300, -7.25e12] {
        assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
    }
    let text = to_json(&serde_json::json!({"x": 0.1, "n": 3, "bad": f64::NAN})).unwrap();
    assert!(text.contains("\"x\": 1.0000000000000001e-1") && text.contains("\"n\": 3") && text.contains("null"));
}

#[test]
fn empty_bundle_writes_no_files() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg("euclidean-r3");
    let report = Report {
        schema: SCHEMA,
        suite: "perturb".into(),
        config: c,
        checks: Vec::new(),
        skipped: Vec::new(),
        data: serde_json::Value::Null,
        pass: false,
    };
    let files = emit_plots(&Bundle { report, artifacts: Vec::new() }, &dir.path().join("plots")).unwrap();
    assert!(files.is_empty());
    assert!(!dir.path().join("plots").exists());
}

#[test]
fn convexity_suite_passes_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = cfg("poly-test");
    c.output_dir = dir.path().to_path_buf();
    let (b, files) = run_and_write(Suite::Convexity, &c).unwrap();
    assert!(b.report.pass, "{:?}", b.report.checks);
    assert_eq!(files.len(), 1);
    let first = std::fs::read(&files[0]).unwrap();
    run_and_write(Suite::Convexity, &c).unwrap();
    assert_eq!(first, std::fs::read(&files[0]).unwrap());
}

#[test]
fn perturb_suite_emits_plateau_profile_and_alpha_slice() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = cfg("euclidean-r3");
    c.output_dir = dir.path().to_path_buf();
    let (b, files) = run_and_write(Suite::Perturb, &c).unwrap();
    assert!(b.report.pass, "{:?}", b.report.failures().collect::<Vec<_>>());
    let names: Vec<String> = files.iter().map(|f| f.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert!(names.contains(&"perturb-euclidean-r3.json".to_string()));
    assert!(names.contains(&"perturb-euclidean-r3-profile.csv".to_string()));

    let read = |name: &str| -> Vec<Vec<f64>> {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(!text.contains('\r'));
        text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect()
    };
    let (eta, eps, s) = (c.eta, c.eps, c.s_max);
    for row in read("perturb-euclidean-r3-profile.csv") {
        if row[0].abs() <= eta + 2.0 * eps {
            assert!((row[1] - s).abs() <= 1e-8);
        }
    }
    let slice = read("perturb-euclidean-r3-alpha_slice.csv");
    for row in slice.iter().filter(|r| r[1] == 0.0 && r[0].abs() <= eta) {
        assert_eq!(row[2], 0.0);
    }
    assert!(slice.iter().any(|r| r[2] > 0.0));
}
