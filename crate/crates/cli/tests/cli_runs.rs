use std::path::PathBuf;
use std::process::Command;

use serde_json::Value;

fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../specs").join(name)
}

/// Runs in-process and returns (exit, stdout, stderr).
fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("opennet").chain(args.iter().copied());
    let code = opennet_cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn run_spec(cmd: &str, spec: &PathBuf, extra: &[&str]) -> (i32, String, String) {
    let spec = spec.to_str().unwrap();
    let mut args = vec![cmd, spec];
    args.extend_from_slice(extra);
    run(&args)
}

fn json_of(cmd: &str, spec: &PathBuf, extra: &[&str]) -> (i32, Value) {
    let mut flags = vec!["--json"];
    flags.extend_from_slice(extra);
    let (code, out, err) = run_spec(cmd, spec, &flags);
    let v: Value = serde_json::from_str(&out).unwrap_or_else(|e| panic!("not JSON ({e}): {out}\n{err}"));
    assert_eq!(v["exit_code"], code);
    (code, v)
}

fn temp_spec(text: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("spec.json");
    std::fs::write(&path, text).unwrap();
    (dir, path)
}

#[test]
fn every_shipped_spec_validates() {
    for entry in std::fs::read_dir(shipped("")).unwrap() {
        let path = entry.unwrap().path();
        let (code, _, err) = run_spec("validate", &path, &[]);
        assert_eq!(code, 0, "{}: {err}", path.display());
    }
}

#[test]
fn triad_loads_with_three_nodes_on_a_three_dimensional_carrier() {
    let (code, v) = json_of("validate", &shipped("triad.json"), &[]);
    assert_eq!(code, 0);
    let net = &v["result"]["networks"]["triad"];
    assert_eq!(net["nodes"], 3);
    assert_eq!(net["carrier_dim"], 3);
}

#[test]
fn reports_echo_every_resolved_parameter() {
    let (_, v) = json_of("validate", &shipped("diagonal_sync.json"), &["--seed", "7"]);
    let p = &v["params"];
    assert_eq!(p["samples"], 200);
    assert_eq!(p["tol"], 1e-9);
    assert_eq!(p["dt"], 1e-3);
    assert_eq!(p["t1"], 1.0);
    assert_eq!(p["seed"], 7);
    assert_eq!(v["tool"], "opennet");
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn empty_file_is_a_parse_error() {
    let (_d, path) = temp_spec("");
    let (code, _, err) = run_spec("validate", &path, &[]);
    assert_eq!(code, 2);
    assert!(err.contains("spec.json"), "{err}");
}

#[test]
fn malformed_json_reports_line_and_column() {
    let (_d, path) = temp_spec("{\n  \"spaces\": {\n    \"M\": { \"dim\": }\n  }\n}\n");
    let (code, _, err) = run_spec("validate", &path, &[]);
    assert_eq!(code, 2);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn undeclared_space_is_a_dangling_reference_naming_it() {
    let (_d, path) = temp_spec(r#"{"spaces": {"M": {"dim": 1}}, "submersions": {"s": {"state": ["Q"]}}}"#);
    let (code, _, err) = run_spec("validate", &path, &[]);
    assert_eq!(code, 3);
    assert!(err.contains("\"Q\""), "{err}");
    assert!(err.contains("submersions.s"), "{err}");
}

#[test]
fn wrong_wiring_length_is_a_dimension_mismatch() {
    let (_d, path) = temp_spec(
        r#"{"spaces": {"X": {"coords": ["x"]}, "U": {"coords": ["u"]}},
            "submersions": {"cell": {"state": ["X"], "input": ["U"]}, "line": {"state": ["X"]}},
            "networks": {"one": {"nodes": ["cell"], "carrier": "line", "inputs": ["x", "x"]}}}"#,
    );
    let (code, _, err) = run_spec("validate", &path, &[]);
    assert_eq!(code, 4);
    assert!(err.contains("networks.one"), "{err}");
}

#[test]
fn expression_over_undeclared_coordinate_fails_to_load() {
    let (_d, path) = temp_spec(
        r#"{"spaces": {"X": {"coords": ["x"]}, "U": {"coords": ["u"]}},
            "submersions": {"cell": {"state": ["X"], "input": ["U"]}},
            "systems": {"F": {"on": "cell", "field": ["x + y"]}}}"#,
    );
    let (code, _, err) = run_spec("validate", &path, &[]);
    assert!(code >= 2, "{code}");
    assert!(err.contains("systems.F"), "{err}");
}

#[test]
fn unknown_field_is_rejected() {
    let (_d, path) = temp_spec(r#"{"spaces": {"M": {"dim": 1}}, "extras": 1}"#);
    assert_eq!(run_spec("validate", &path, &[]).0, 2);
}

#[test]
fn missing_file_is_an_io_error() {
    let (code, _, err) = run(&["validate", "/nonexistent/opennet/spec.json"]);
    assert_eq!(code, 6);
    assert!(err.contains("spec.json"), "{err}");
}

#[test]
fn unknown_command_and_bad_flags_are_usage_errors() {
    let spec = shipped("triad.json");
    assert_eq!(run_spec("frobnicate", &spec, &[]).0, 64);
    assert_eq!(run_spec("validate", &spec, &["--samples", "many"]).0, 64);
    assert_eq!(run_spec("simulate", &shipped("diagonal_sync.json"), &["--dt", "0"]).0, 64);
    assert_eq!(run(&[]).0, 64);
    assert_eq!(run(&["--help"]).0, 0);
}

#[test]
fn reports_are_byte_identical_across_runs() {
    for (cmd, spec) in [
        ("verify-map", "collapse.json"),
        ("verify-map", "parabola.json"),
        ("compose", "triad.json"),
        ("simulate", "diagonal_sync.json"),
        ("linrel", "strict_inclusion.json"),
    ] {
        let a = run_spec(cmd, &shipped(spec), &["--json"]);
        let b = run_spec(cmd, &shipped(spec), &["--json"]);
        assert_eq!(a, b, "{cmd} {spec}");
        let a = run_spec(cmd, &shipped(spec), &[]);
        let b = run_spec(cmd, &shipped(spec), &[]);
        assert_eq!(a, b, "{cmd} {spec}");
    }
}

#[test]
fn the_binary_matches_the_library() {
    let spec = shipped("collapse.json");
    let out = Command::new(env!("CARGO_BIN_EXE_opennet"))
        .args(["verify-map", spec.to_str().unwrap(), "--json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let (_, lib_out, _) = run_spec("verify-map", &spec, &["--json"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), lib_out);
}

#[test]
fn collapse_map_verifies() {
    let (code, v) = json_of("verify-map", &shipped("collapse.json"), &[]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["verdict"], true);
    let entry = &v["result"]["maps"][0];
    assert!(entry["two_cell"]["max_residual"].as_f64().unwrap() <= 1e-9);
    assert!(entry["conclusion"]["max_residual"].as_f64().unwrap() <= 1e-9);
}

#[test]
fn collapse_is_a_fibration_and_the_only_one() {
    let spec = shipped("collapse.json");
    assert_eq!(run_spec("check-fibration", &spec, &[]).0, 0);
    let (code, v) = json_of("enum-fibrations", &spec, &[]);
    assert_eq!(code, 0);
    let found = &v["result"]["enumerations"][0];
    assert_eq!(found["count"], 1);
    assert_eq!(found["maps"][0]["vertex_map"], serde_json::json!([0, 0, 0]));
}

#[test]
fn lone_vertex_onto_loop_lists_the_unlifted_edge() {
    let (code, v) = json_of("check-fibration", &shipped("non_fibration.json"), &[]);
    assert_eq!(code, 1);
    let defect = &v["result"]["fibrations"][0]["defects"][0];
    assert_eq!(defect["vertex"], 0);
    assert_eq!(defect["target_edge"], 0);
    let (_, text, _) = run_spec("check-fibration", &shipped("non_fibration.json"), &[]);
    assert!(text.contains("vertex 0") && text.contains("edge 0"), "{text}");
}

#[test]
fn diagonal_monitor_holds_on_the_synchrony_example() {
    let (code, v) = json_of("simulate", &shipped("diagonal_sync.json"), &[]);
    assert_eq!(code, 0);
    let sim = &v["result"]["simulations"][0];
    assert!(sim["monitor"]["report"]["max_violation"].as_f64().unwrap() <= 1e-6);
    assert!(sim["push_gap"]["max_abs_diff"].as_f64().unwrap() <= 1e-6);
    assert_eq!(sim["steps"], 1000);
    let (_, text, _) = run_spec("simulate", &shipped("diagonal_sync.json"), &[]);
    assert!(text.contains("max violation"), "{text}");
}

#[test]
fn flags_override_spec_parameters() {
    let (code, v) = json_of("simulate", &shipped("parabola.json"), &["--t1", "0.3"]);
    assert_eq!(code, 0);
    assert_eq!(v["params"]["t1"], 0.3);
    assert_eq!(v["result"]["simulations"][0]["steps"], 300);
}

#[test]
fn parabola_run_to_the_blow_up_time_fails() {
    let (code, v) = json_of("simulate", &shipped("parabola.json"), &[]);
    assert_eq!(code, 1);
    assert_eq!(v["result"]["verdict"], false);
}

#[test]
fn csv_export_has_a_header_and_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let (code, _, err) = run_spec("simulate", &shipped("diagonal_sync.json"), &["--out", out.to_str().unwrap(), "--t1", "0.1"]);
    assert_eq!(code, 0, "{err}");
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,m1,m2,m3"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 101);
    assert_eq!(rows[0], vec![0.0, 0.4, 0.4, 0.4]);
    assert!(rows.iter().all(|r| r[1] == r[2] && r[2] == r[3]));
}

#[test]
fn out_writes_the_report_for_other_commands() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let (code, stdout, _) = run_spec("verify-map", &shipped("diagonal_sync.json"), &["--json", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), stdout);
}

#[test]
fn select_restricts_and_unknown_selection_dangles() {
    let spec = shipped("parabola.json");
    let (code, v) = json_of("verify-map", &spec, &["--select", "parabola"]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["maps"].as_array().unwrap().len(), 1);
    assert_eq!(run_spec("verify-map", &spec, &["--select", "nope"]).0, 3);
}

#[test]
fn compose_prints_the_wired_field() {
    let (code, text, _) = run_spec("compose", &shipped("triad.json"), &[]);
    assert_eq!(code, 0);
    assert!(text.contains("dm1/dt = -m1 + (sin(m2) + m2^2.0 / 3.0)^2.0"), "{text}");
}

#[test]
fn from_graph_wires_in_neighbours() {
    let (code, text, _) = run_spec("from-graph", &shipped("collapse.json"), &["--select", "Cells"]);
    assert_eq!(code, 0);
    assert!(text.contains("wiring (n1.x, n0.x, n1.x)"), "{text}");
}

#[test]
fn open_parabola_verifies() {
    let (code, _, err) = run_spec("verify-map", &shipped("open_parabola.json"), &[]);
    assert_eq!(code, 0, "{err}");
}

#[test]
fn unrelated_node_systems_fail_the_hypothesis() {
    let text = std::fs::read_to_string(shipped("parabola.json"))
        .unwrap()
        .replace("\"x * (x + u^2)\"", "\"x * (x + u^2) + 1\"");
    let (_d, path) = temp_spec(&text);
    let (code, v) = json_of("verify-map", &path, &[]);
    assert_eq!(code, 1);
    assert_eq!(v["result"]["maps"][0]["error"], "hypothesis not satisfied");
}

#[test]
fn linrel_script_finds_the_strict_inclusion() {
    let (code, v) = json_of("linrel", &shipped("strict_inclusion.json"), &[]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["verdict"], true);
    let (_, text, _) = run_spec("linrel", &shipped("strict_inclusion.json"), &[]);
    assert!(text.contains("assert strict(Cgf, staged): true (dims 8 and 6)"), "{text}");
}

#[test]
fn failing_linrel_assertion_exits_one() {
    let text = std::fs::read_to_string(shipped("strict_inclusion.json"))
        .unwrap()
        .replace("\"TS\": { \"graph\": [[5, 3]] }", "\"TS\": { \"graph\": [[5, 4]] }");
    let (_d, path) = temp_spec(&text);
    assert_eq!(run_spec("linrel", &path, &[]).0, 1);
}
