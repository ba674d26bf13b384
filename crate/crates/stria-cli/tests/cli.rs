//! End-to-end tests of the `stria` binary: exit codes, the documented
//! example invocations, and byte-level report determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn stria(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stria"))
        .args(args)
        .env_remove("STRIA_SLOTS")
        .output()
        .expect("binary runs")
}

fn stdout_json(output: &Output) -> serde_json::Value {
    serde_json::from_slice(&output.stdout).expect("stdout is JSON")
}

#[test]
fn simulate_block_reports_the_expected_ledger() {
    let out = stria(&[
        "simulate",
        "--block",
        "D=32,e=2,cn=2",
        "--seed",
        "7",
        "--slots",
        "512",
    ]);
    assert!(out.status.success());
    let summary = stdout_json(&out);
    assert_eq!(summary["ledger"]["in_rot"], 128);
    assert_eq!(summary["ledger"]["ex_rot"], 32);
    assert_eq!(summary["oracle_max_abs_diff"], 0.0);
    assert_eq!(summary["pass"], true);
}

#[test]
fn malformed_spec_exits_two() {
    let out = stria(&["simulate", "--block", "D=32;e=2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn float_and_exact_runs_agree_within_tolerance() {
    let out = stria(&[
        "simulate",
        "--block",
        "d=8,e=2,cn=4",
        "--mode",
        "float",
        "--seed",
        "11",
        "--slots",
        "256",
    ]);
    assert!(out.status.success());
    let summary = stdout_json(&out);
    let diff = summary["cross_mode_max_abs_diff"].as_f64().unwrap();
    assert!(diff < 1e-5, "cross-mode diff {diff}");
}

#[test]
fn strided_layer_simulation_subsamples_consistently() {
    let out = stria(&[
        "simulate",
        "--layer",
        "ci=2,co=2,k=3,cn=4,stride=2",
        "--slots",
        "64",
        "--seed",
        "21",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout_json(&out);
    assert_eq!(summary["oracle_max_abs_diff"], 0.0);
    assert_eq!(summary["pass"], true);
}

#[test]
fn count_layer_matches_the_closed_form() {
    let out = stria(&["count", "--layer", "ci=4,co=4,k=3,cn=2"]);
    assert!(out.status.success());
    let report = stdout_json(&out);
    let layer = &report["report"]["layers"][0];
    assert_eq!(layer["in_rot"], 16);
    assert_eq!(layer["ex_rot"], 2);
}

#[test]
fn count_exrot_free_reports_zero_ex_rot() {
    let out = stria(&[
        "count",
        "--layer",
        "ci=16,co=16,k=3,cn=4,kernel=cross,matrix=exrot_free",
        "--verify",
        "--seed",
        "3",
    ]);
    assert!(out.status.success());
    let report = stdout_json(&out);
    assert_eq!(report["report"]["total"]["ex_rot"], 0);
    assert_eq!(report["verified"], true);
}

#[test]
fn verified_sweep_exits_clean() {
    let out = stria(&["count", "--sweep", "--verify", "--threads", "4", "--seed", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn imagenet_preset_resolves_the_expansion_ladder() {
    let dir = tempdir().unwrap();
    let out_dir = dir.path().join("plan");
    let out = stria(&[
        "plan",
        "--preset",
        "imagenet",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let network: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("network.json")).unwrap()).unwrap();
    let ladder: Vec<u64> = network["stages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["e"].as_u64().unwrap())
        .collect();
    assert_eq!(ladder, vec![2, 4, 6, 8]);
}

#[test]
fn pinned_expansion_bounds_give_a_constant_schedule() {
    let out = stria(&["plan", "--preset", "cifar", "--e-min", "3", "--e-max", "3"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("expansion schedule [3, 3, 3]"), "{text}");
}

#[test]
fn infeasible_budget_exits_three_and_names_the_stage() {
    let out = stria(&["plan", "--preset", "imagenet", "--e-min", "9", "--e-max", "9"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("stage 0"), "{err}");
}

#[test]
fn calibrate_emits_reference_values_and_interpolates() {
    let dir = tempdir().unwrap();
    let table = dir.path().join("calib.txt");
    let out = stria(&[
        "calibrate",
        "--paper-defaults",
        "--query-cn",
        "16",
        "--out",
        table.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("in_rot_ms=12.3050"), "{text}");
    let table_text = fs::read_to_string(&table).unwrap();
    assert!(table_text.contains("in_rot_ms 2 16.1"));
    // a tampered table with a negative cost is rejected
    fs::write(&table, "in_rot_ms 2 -1.0\n").unwrap();
    let out = stria(&["calibrate", "--input", table.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_flags_the_constructed_reversal() {
    let dir = tempdir().unwrap();
    let vanilla = dir.path().join("vanilla.json");
    let striated = dir.path().join("striated.json");
    fs::write(
        &vanilla,
        r#"[{"c_i":64,"c_o":64,"k_w":3,"k_h":3,"w":56,"h":56}]"#,
    )
    .unwrap();
    fs::write(
        &striated,
        r#"[{"c_i":96,"c_o":96,"k_w":3,"k_h":3,"w":56,"h":56,"kernel":"cross","matrix":"exrot_free"}]"#,
    )
    .unwrap();
    let out = stria(&[
        "compare",
        "--layers",
        vanilla.to_str().unwrap(),
        "--layers",
        striated.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(
        text.contains("reversal: vanilla is cheaper in FLOPs but striated is cheaper under packed HE"),
        "{text}"
    );
}

fn collect_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| {
            let e = e.unwrap();
            e.path()
                .is_file()
                .then(|| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        })
        .collect();
    files.sort();
    files
}

#[test]
fn identical_seeds_give_byte_identical_report_files() {
    let dir = tempdir().unwrap();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let sim = stria(&[
            "simulate",
            "--block",
            "d=8,e=2,cn=4",
            "--seed",
            "42",
            "--slots",
            "256",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(sim.status.success());
        let plan = stria(&[
            "plan",
            "--preset",
            "imagenet",
            "--out",
            out_dir.join("plan").to_str().unwrap(),
        ]);
        assert!(plan.status.success());
    }
    assert_eq!(
        collect_files(&dir.path().join("a")),
        collect_files(&dir.path().join("b")),
        "simulate outputs must be byte-identical"
    );
    assert_eq!(
        collect_files(&dir.path().join("a/plan")),
        collect_files(&dir.path().join("b/plan")),
        "plan outputs must be byte-identical"
    );
}

#[test]
fn planned_network_simulates_and_verifies() {
    let dir = tempdir().unwrap();
    let spec = dir.path().join("toy.json");
    fs::write(
        &spec,
        r#"{"input":8,"slots":256,"stages":[{"hw":8,"d":8,"blocks":2},{"hw":4,"d":16,"blocks":1}]}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("plan");
    let plan = stria(&[
        "plan",
        "--spec",
        spec.to_str().unwrap(),
        "--e-min",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(plan.status.success(), "{}", String::from_utf8_lossy(&plan.stderr));
    let network = out_dir.join("network.json");
    let sim = stria(&[
        "simulate",
        "--network",
        network.to_str().unwrap(),
        "--seed",
        "13",
    ]);
    assert!(sim.status.success(), "{}", String::from_utf8_lossy(&sim.stderr));
    let summary = stdout_json(&sim);
    assert_eq!(summary["pass"], true);
    assert_eq!(summary["ledger"]["in_rot"], summary["expected_in_rot"]);
    // count --verify re-simulates against the formula report
    let count = stria(&[
        "count",
        "--network",
        network.to_str().unwrap(),
        "--verify",
        "--seed",
        "13",
    ]);
    assert!(count.status.success(), "{}", String::from_utf8_lossy(&count.stderr));
}

#[test]
fn env_var_overrides_the_default_slot_count() {
    let out = Command::new(env!("CARGO_BIN_EXE_stria"))
        .args(["simulate", "--block", "d=8,e=2,cn=4", "--seed", "1"])
        .env("STRIA_SLOTS", "256")
        .output()
        .unwrap();
    assert!(out.status.success());
    let summary = stdout_json(&out);
    assert_eq!(summary["slots"], 256);
}
