use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

use skewwarp::ambient::AmbientModel;

fn skewwarp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skewwarp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json_of(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

fn write(dir: &Path, name: &str, doc: &Value) -> String {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(doc).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn registry_lists_exactly_the_builtins() {
    let o = skewwarp(&["list-scenarios"]);
    assert_eq!(o.status.code(), Some(0));
    let names: Vec<String> = stdout(&o)
        .lines()
        .map(|l| l.split_whitespace().next().unwrap().to_string())
        .collect();
    assert_eq!(
        names,
        [
            "ex31",
            "ex32",
            "ex61",
            "ex62",
            "sasakian5-ambient",
            "sasakian5-invariant-submanifold",
            "unit-circle",
            "tg-plane",
            "sheared-nonproduct"
        ]
    );
}

#[test]
fn verify_ex62_json_carries_the_reference_rhs() {
    let o = skewwarp(&["verify", "ex62", "--samples", "20"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc = json_of(&o);
    let rhs = doc["theorem41"]["rhs_statement_i"].as_f64().unwrap();
    assert!((rhs - 4.083_333_333_333_333).abs() < 1e-12);
    assert_eq!(
        doc["theorem41"]["hypothesis_flags"]["sasakian_ambient"],
        json!(false)
    );
    assert_eq!(doc["verdict"], json!("pass"));
    assert_eq!(doc["samples"], json!(20));
    assert_eq!(doc["seed"], json!(42));
}

#[test]
fn text_report_has_one_line_per_lemma_identity() {
    let o = skewwarp(&["verify", "ex62", "--samples", "5", "--format", "text"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lemma_lines: Vec<&str> = text.lines().filter(|l| l.starts_with("lemma.")).collect();
    assert_eq!(lemma_lines.len(), 9, "{text}");
    assert!(lemma_lines.iter().all(|l| l.contains(" info")));
    assert!(text.contains("verdict: pass"));
}

#[test]
fn report_file_and_constant_override() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let o = skewwarp(&[
        "verify",
        "ex62",
        "--samples",
        "5",
        "--set",
        "k=2",
        "--report",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let doc: Value = serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap();
    assert_eq!(doc["constants"]["k"], json!(2.0));
    // rhs (i) at the centre for general k: 4 + k^4 / (2 (1 + 2k^2)(1 + k^2)).
    let want = 4.0 + 16.0 / (2.0 * 9.0 * 5.0);
    assert!((doc["theorem41"]["rhs_statement_i"].as_f64().unwrap() - want).abs() < 1e-12);
}

#[test]
fn tolerance_override_can_fail_an_asserted_check() {
    let o = skewwarp(&["classify", "ex31", "--samples", "5", "--tol-frame", "0"]);
    assert_eq!(o.status.code(), Some(1));
    let doc = json_of(&o);
    assert_eq!(doc["verdict"], json!("fail"));
    assert_eq!(doc["tolerances"]["frame"], json!(0.0));
}

#[test]
fn informational_checks_never_fail_the_run() {
    let o = skewwarp(&["verify", "ex61", "--samples", "5", "--tol", "lemma=0"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn usage_and_config_errors_exit_with_2() {
    for args in [
        vec!["verify", "no-such-scenario"],
        vec!["verify", "ex62", "--tol-nonsense", "1"],
        vec!["verify", "ex62", "--set", "q=1"],
        vec!["verify", "ex62", "--samples", "0"],
        vec!["verify"],
        vec!["frobnicate"],
    ] {
        assert_eq!(skewwarp(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn missing_components_is_reported_by_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "bad.json",
        &json!({
            "name": "bad",
            "ambient": { "builtin": "flat", "m": 1 },
            "immersion": { "params": ["w"], "domain": { "w": [0, 1] } }
        }),
    );
    let o = skewwarp(&["classify", &path]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("components"), "{}", stderr(&o));
}

#[test]
fn reversed_domain_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "bad.json",
        &json!({
            "name": "bad",
            "ambient": { "builtin": "flat", "m": 1 },
            "immersion": { "params": ["w"], "components": ["cos(w)", "sin(w)", "0"], "domain": { "w": [1, 0] } }
        }),
    );
    let o = skewwarp(&["classify", &path]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("immersion.domain.w"), "{}", stderr(&o));
}

#[test]
fn inline_ambient_scenario_runs() {
    let inline = AmbientModel::sasakian(1).to_inline();
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "inline.json",
        &json!({
            "name": "inline-sasakian3",
            "ambient": { "inline": inline, "expect_sasakian": true },
            "immersion": {
                "params": ["a", "b", "c"],
                "components": ["a", "b", "c"],
                "domain": { "a": [-1, 1], "b": [-1, 1], "c": [-1, 1] }
            },
            "expect": { "dims": [2, 0, 0], "label": "invariant", "normal_dims": [0, 0, 0] },
            "sampling": { "count": 10 }
        }),
    );
    let o = skewwarp(&["verify", &path]);
    assert_eq!(o.status.code(), Some(0), "{}\n{}", stderr(&o), stdout(&o));
    let doc = json_of(&o);
    assert_eq!(doc["ambient"]["sasakian"], json!(true));
    assert_eq!(
        doc["classification"]["summary"]["label"],
        json!("invariant")
    );
}

#[test]
fn check_ambient_reports_only_the_ambient() {
    let o = skewwarp(&["check-ambient", "sasakian5-ambient", "--samples", "10"]);
    assert_eq!(o.status.code(), Some(0));
    let doc = json_of(&o);
    assert_eq!(doc["command"], json!("check-ambient"));
    assert!(doc.get("classification").is_none());
    assert_eq!(doc["ambient"]["sasakian"], json!(true));
}

#[test]
fn circle_and_plane_curvature() {
    let circle = json_of(&skewwarp(&["classify", "unit-circle", "--samples", "20"]));
    let c = &circle["classification"];
    for key in ["sff_norm2", "mean_curvature_norm"] {
        for end in ["min", "max"] {
            assert!(
                (c[key][end].as_f64().unwrap() - 1.0).abs() < 1e-10,
                "{key}.{end}"
            );
        }
    }
    let plane = json_of(&skewwarp(&["classify", "tg-plane", "--samples", "20"]));
    assert!(
        plane["classification"]["sff_norm2"]["max"]
            .as_f64()
            .unwrap()
            < 1e-12
    );
}
