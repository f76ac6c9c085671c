//! End-to-end tests driving the `gridcheck` binary on the fixture files.

use std::path::{Path, PathBuf};
use std::process::Command;

use gridcheck_core::formats::{GridFile, InterconnectionFile, LedgerFile};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_gridcheck")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gridcheck-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> (i32, serde_json::Value, String) {
    run_with_env(args, &[])
}

fn run_with_env(args: &[&str], envs: &[(&str, &str)]) -> (i32, serde_json::Value, String) {
    let mut cmd = Command::new(bin());
    cmd.args(args).env_remove("GRIDCHECK_EPSILON");
    for (key, value) in envs {
        cmd.env(key, value);
    }
    let output = cmd.output().expect("binary runs");
    let stdout = String::from_utf8(output.stdout).unwrap();
    let report = serde_json::from_str(&stdout).unwrap_or(serde_json::Value::Null);
    (output.status.code().expect("exit code"), report, stdout)
}

fn raw_run(args: &[&str]) -> (i32, String) {
    let output = Command::new(bin())
        .args(args)
        .env_remove("GRIDCHECK_EPSILON")
        .output()
        .expect("binary runs");
    (
        output.status.code().expect("exit code"),
        String::from_utf8(output.stdout).unwrap(),
    )
}

#[test]
fn validate_passes_on_island_capable_microgrid() {
    let path = fixture("microgrid1.json");
    let (code, report, _) = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(report["subcommand"], "validate");
    assert_eq!(report["hierarchy"]["pass"], true);
    assert_eq!(report["exit_status"], 0);
}

#[test]
fn validate_flags_island_incapable_microgrid() {
    // The second microgrid has a load with no path to any source on its own.
    let path = fixture("microgrid2.json");
    let (code, report, _) = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(code, 3);
    assert_eq!(report["hierarchy"]["pass"], false);
    let neither = report["hierarchy"]["per_node"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["verdict"] == "neither")
        .count();
    assert_eq!(neither, 1);
}

#[test]
fn validate_flags_swapped_attachment_order() {
    // The interconnected grid with the microgrid numbering interchanged:
    // the sourceless load can neither island nor descend.
    let dir = temp_dir("swapped");
    let (graph, grid) = gridcheck_core::testdata::interconnected_figure_grid_swapped();
    let ledger = gridcheck_core::ShuntLedger::zero_for(&grid);
    let file = GridFile::from_parts(&graph, &grid, &ledger);
    let path = dir.join("swapped.json");
    std::fs::write(&path, serde_json::to_string_pretty(&file).unwrap()).unwrap();

    let (code, report, _) = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(code, 3);
    let failing: Vec<i64> = report["hierarchy"]["per_node"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["verdict"] == "neither")
        .map(|e| e["node"].as_i64().unwrap())
        .collect();
    assert_eq!(failing, vec![3]);
}

#[test]
fn validate_rejects_malformed_and_invalid_files() {
    let dir = temp_dir("validate-bad");
    let bad_json = dir.join("bad.json");
    std::fs::write(&bad_json, "{ not json").unwrap();
    let (code, report, _) = run(&["validate", bad_json.to_str().unwrap()]);
    assert_eq!(code, 2);
    let message = report["error"].as_str().unwrap();
    assert!(
        message.contains("line"),
        "error should carry a location: {message}"
    );

    let dangling = dir.join("dangling.json");
    std::fs::write(
        &dangling,
        r#"{
  "schema_version": 1,
  "nodes": [
    { "id": 1, "kind": "load", "power": 0.1 },
    { "id": 2, "kind": "source", "voltage": 1.0 }
  ],
  "lines": [ { "i": 1, "j": 9, "conductance": 1.0 } ],
  "microgrids": [ { "index": 1, "nodes": [1, 2] } ]
}
"#,
    )
    .unwrap();
    let (code, report, _) = run(&["validate", dangling.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(report["error"].as_str().unwrap().contains("unknown node 9"));
}

#[test]
fn check_thm1_passes_on_physical_island() {
    let path = fixture("microgrid1.json");
    let (code, report, _) = run(&["check", path.to_str().unwrap(), "--condition", "thm1"]);
    assert_eq!(code, 0);
    assert_eq!(report["report"]["verdict"], "pass");
    assert_eq!(report["report"]["condition"], "thm1");
}

#[test]
fn check_thm6_virtual_matches_worked_example() {
    let path = fixture("microgrid1.json");
    let (code, report, _) = run(&[
        "check",
        path.to_str().unwrap(),
        "--condition",
        "thm6",
        "--virtual",
    ]);
    assert_eq!(code, 0);
    let lhs = report["report"]["lhs"].as_array().unwrap();
    for entry in lhs {
        assert!((entry["value"].as_f64().unwrap() - 0.08).abs() < 1e-9);
    }
    let rhs = report["report"]["rhs"].as_array().unwrap();
    assert!((rhs[0]["value"].as_f64().unwrap() - 0.125).abs() < 1e-9);
    assert!((rhs[1]["value"].as_f64().unwrap() - 1.0 / 12.0).abs() < 1e-9);
    let margin = report["report"]["margin"].as_f64().unwrap();
    assert!((margin - (1.0 / 12.0 - 0.08)).abs() < 1e-9);
}

#[test]
fn check_conditions_agree_on_single_block_grid() {
    let path = fixture("microgrid1.json");
    let (thm1_code, thm1, _) = run(&["check", path.to_str().unwrap(), "--condition", "thm1"]);
    let (thm6_code, thm6, _) = run(&["check", path.to_str().unwrap(), "--condition", "thm6"]);
    assert_eq!(thm1_code, thm6_code);
    assert_eq!(
        thm1["report"]["verdict"], thm6["report"]["verdict"],
        "one microgrid: both certificates agree"
    );
}

#[test]
fn check_scaled_demand_fails() {
    let dir = temp_dir("scaled");
    let original = std::fs::read_to_string(fixture("microgrid1.json")).unwrap();
    let mut file: GridFile = serde_json::from_str(&original).unwrap();
    for node in &mut file.nodes {
        if let Some(power) = node.power.as_mut() {
            *power *= 10.0;
        }
    }
    let scaled = dir.join("scaled.json");
    std::fs::write(&scaled, serde_json::to_string_pretty(&file).unwrap()).unwrap();
    let (code, report, _) = run(&[
        "check",
        scaled.to_str().unwrap(),
        "--condition",
        "thm6",
        "--virtual",
    ]);
    assert_eq!(code, 1);
    assert_eq!(report["report"]["verdict"], "fail");
}

#[test]
fn check_epsilon_env_and_flag() {
    let path = fixture("microgrid1.json");
    // A margin demand wider than the actual margin (0.17) flips the verdict.
    let (code, _, _) = run_with_env(
        &["check", path.to_str().unwrap(), "--condition", "thm1"],
        &[("GRIDCHECK_EPSILON", "0.2")],
    );
    assert_eq!(code, 1);
    // The flag overrides the environment.
    let (code, _, _) = run_with_env(
        &[
            "check",
            path.to_str().unwrap(),
            "--condition",
            "thm1",
            "--epsilon",
            "1e-9",
        ],
        &[("GRIDCHECK_EPSILON", "0.2")],
    );
    assert_eq!(code, 0);
    // A malformed environment value is an input error.
    let (code, report, _) = run_with_env(
        &["check", path.to_str().unwrap(), "--condition", "thm1"],
        &[("GRIDCHECK_EPSILON", "plenty")],
    );
    assert_eq!(code, 2);
    assert!(report["error"]
        .as_str()
        .unwrap()
        .contains("GRIDCHECK_EPSILON"));
}

#[test]
fn attach_admits_the_fixture_microgrid_end_to_end() {
    let dir = temp_dir("attach-pass");
    let out = dir.join("merged.json");
    let (grid, ledger, microgrid, spec) = (
        fixture("microgrid1.json"),
        fixture("ledger1.json"),
        fixture("microgrid2.json"),
        fixture("interconnection.json"),
    );
    let (code, report, _) = run(&[
        "attach",
        grid.to_str().unwrap(),
        ledger.to_str().unwrap(),
        microgrid.to_str().unwrap(),
        spec.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "admission should pass: {report}");
    assert_eq!(report["admission"]["verdict"], "pass");
    assert_eq!(report["admission"]["condition"], "thm8");
    assert_eq!(report["assumption9"]["pass"], true);

    // The written merged grid has the expected load block.
    let merged_text = std::fs::read_to_string(&out).unwrap();
    let merged_file: GridFile = serde_json::from_str(&merged_text).unwrap();
    let candidate = merged_file.to_candidate().unwrap();
    let expected = gridcheck_core::nalgebra::DMatrix::from_row_slice(
        5,
        5,
        &[
            2.0, 0.0, -1.0, 0.0, 0.0, //
            0.0, 3.0, 0.0, -1.0, -1.0, //
            -1.0, 0.0, 1.0, 0.0, 0.0, //
            0.0, -1.0, 0.0, 4.0, -1.0, //
            0.0, -1.0, 0.0, -1.0, 3.0,
        ],
    );
    assert_eq!(candidate.grid.y_ll(), &expected);

    // The merged ledger was written next to it with everything consumed.
    let ledger_path = dir.join("merged.ledger.json");
    let ledger_file: LedgerFile =
        serde_json::from_str(&std::fs::read_to_string(&ledger_path).unwrap()).unwrap();
    for load in &ledger_file.loads {
        assert_eq!(load.capacity, load.consumed);
    }

    // The written pair supports the next round: its own virtual certificate
    // passes and the physical grid solves.
    let (code, report, _) = run(&[
        "check",
        out.to_str().unwrap(),
        "--condition",
        "thm6",
        "--virtual",
        "--ledger",
        ledger_path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "merged certificate should pass: {report}");

    let (code, report, _) = run(&["solve", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(report["solve"]["status"], "converged");
    let residual = report["solve"]["residual_norm"].as_f64().unwrap();
    assert!(residual < 1e-9);
}

#[test]
fn attach_with_halved_budget_is_inapplicable() {
    let dir = temp_dir("attach-budget");
    let original = std::fs::read_to_string(fixture("microgrid2.json")).unwrap();
    let mut file: GridFile = serde_json::from_str(&original).unwrap();
    for node in &mut file.nodes {
        if let Some(capacity) = node.shunt_capacity.as_mut() {
            *capacity /= 2.0;
        }
    }
    let halved = dir.join("microgrid2-halved.json");
    std::fs::write(&halved, serde_json::to_string_pretty(&file).unwrap()).unwrap();

    let out = dir.join("merged.json");
    let (grid, ledger, spec) = (
        fixture("microgrid1.json"),
        fixture("ledger1.json"),
        fixture("interconnection.json"),
    );
    let (code, report, _) = run(&[
        "attach",
        grid.to_str().unwrap(),
        ledger.to_str().unwrap(),
        halved.to_str().unwrap(),
        spec.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 3);
    assert!(!out.exists(), "no merged grid may be written on refusal");
    let message = report["error"].as_str().unwrap();
    assert!(message.contains("budget"));
    let over: Vec<i64> = report["assumption9"]["microgrid_slack"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|s| s["slack"].as_f64().unwrap() < 0.0)
        .map(|s| s["node"].as_i64().unwrap())
        .collect();
    assert_eq!(over, vec![3, 4, 5]);
}

#[test]
fn solve_reports_exact_infeasibility_for_decoupled_loads() {
    let dir = temp_dir("solve-scalar");
    let scalar = dir.join("scalar.json");
    std::fs::write(
        &scalar,
        r#"{
  "schema_version": 1,
  "nodes": [
    { "id": 1, "kind": "load", "power": 0.3 },
    { "id": 2, "kind": "source", "voltage": 1.0 }
  ],
  "lines": [ { "i": 1, "j": 2, "conductance": 1.0 } ],
  "microgrids": [ { "index": 1, "nodes": [1, 2] } ]
}
"#,
    )
    .unwrap();
    let (code, report, _) = run(&["solve", scalar.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert_eq!(report["diagonal_exact"]["feasible"], false);
    assert!(report["error"]
        .as_str()
        .unwrap()
        .contains("no positive solution"));
    assert_ne!(report["solve"]["status"], "converged");
}

#[test]
fn solve_converges_on_feasible_scalar_grid() {
    let dir = temp_dir("solve-feasible");
    let scalar = dir.join("scalar.json");
    std::fs::write(
        &scalar,
        r#"{
  "schema_version": 1,
  "nodes": [
    { "id": 1, "kind": "load", "power": 0.16 },
    { "id": 2, "kind": "source", "voltage": 1.0 }
  ],
  "lines": [ { "i": 1, "j": 2, "conductance": 1.0 } ],
  "microgrids": [ { "index": 1, "nodes": [1, 2] } ]
}
"#,
    )
    .unwrap();
    let (code, report, _) = run(&["solve", scalar.to_str().unwrap()]);
    assert_eq!(code, 0);
    let v = report["solve"]["voltages"][0]["value"].as_f64().unwrap();
    assert!((v - 0.8).abs() < 1e-9, "high root expected, got {v}");
    let exact_v = report["diagonal_exact"]["voltages"][0]["value"]
        .as_f64()
        .unwrap();
    assert!((exact_v - 0.8).abs() < 1e-12);
}

#[test]
fn reports_are_byte_deterministic() {
    let path = fixture("microgrid1.json");
    let args = [
        "check",
        path.to_str().unwrap(),
        "--condition",
        "thm6",
        "--virtual",
    ];
    let (_, first) = raw_run(&args);
    let (_, second) = raw_run(&args);
    assert_eq!(first, second);

    let dir = temp_dir("determinism");
    let out = dir.join("merged.json");
    let (grid, ledger, microgrid, spec) = (
        fixture("microgrid1.json"),
        fixture("ledger1.json"),
        fixture("microgrid2.json"),
        fixture("interconnection.json"),
    );
    let attach_args = [
        "attach",
        grid.to_str().unwrap(),
        ledger.to_str().unwrap(),
        microgrid.to_str().unwrap(),
        spec.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    let (_, first) = raw_run(&attach_args);
    let first_merged = std::fs::read(&out).unwrap();
    let (_, second) = raw_run(&attach_args);
    let second_merged = std::fs::read(&out).unwrap();
    assert_eq!(first, second);
    assert_eq!(first_merged, second_merged);
}

#[test]
fn fixture_files_roundtrip_losslessly() {
    for name in ["microgrid1.json", "microgrid2.json"] {
        let text = std::fs::read_to_string(fixture(name)).unwrap();
        let parsed: GridFile = serde_json::from_str(&text).unwrap();
        let reserialized = serde_json::to_string_pretty(&parsed).unwrap();
        let reparsed: GridFile = serde_json::from_str(&reserialized).unwrap();
        assert_eq!(parsed, reparsed);
    }
    let text = std::fs::read_to_string(fixture("ledger1.json")).unwrap();
    let parsed: LedgerFile = serde_json::from_str(&text).unwrap();
    let reparsed: LedgerFile =
        serde_json::from_str(&serde_json::to_string_pretty(&parsed).unwrap()).unwrap();
    assert_eq!(parsed, reparsed);

    let text = std::fs::read_to_string(fixture("interconnection.json")).unwrap();
    let parsed: InterconnectionFile = serde_json::from_str(&text).unwrap();
    let reparsed: InterconnectionFile =
        serde_json::from_str(&serde_json::to_string_pretty(&parsed).unwrap()).unwrap();
    assert_eq!(parsed, reparsed);
}

#[test]
fn help_and_version_exit_zero() {
    let (code, _) = raw_run(&["--help"]);
    assert_eq!(code, 0);
    let (code, _) = raw_run(&["--version"]);
    assert_eq!(code, 0);
}
