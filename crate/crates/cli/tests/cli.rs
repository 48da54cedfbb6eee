//! End-to-end tests of the `tmc` binary: exit codes, artifact presence and
//! byte-level reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tmc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tmc"))
}

/// A small, fast scenario document.
fn small_scenario(kind: &str) -> serde_json::Value {
    let toll_profile = match kind {
        "NT" => serde_json::Value::Null,
        _ => serde_json::json!({
            "breakpoints": [390.0, 420.0, 450.0, 510.0, 540.0, 570.0],
            "levels": [0.5, 1.2, 2.0, 1.2, 0.5],
        }),
    };
    serde_json::json!({
        "instrument": { "kind": kind, "toll_profile": toll_profile },
        "population": {
            "n_travelers": 300,
            "income_lognormal": [10.3, 2.6],
            "min_hourly_wage": 7.25,
            "disposable_fraction": 0.6,
            "vot_wage_fraction": 0.3333333333333333,
            "sde_ratio_tri": [0.1, 0.5, 1.0],
            "sdl_ratio_tri": [1.0, 2.0, 3.0],
            "wait_value_ratio": 3.0,
            "scale_lognormal_mean": 0.5,
            "scale_lognormal_cov": 0.5,
            "preferred_dep_time_dist": [450.0, 36.0, 240.0, 675.0],
            "eta_window_min": 30.0,
            "seed": 1
        },
        "market": {
            "allocation_rate": 0.00285,
            "lifetime": 720.0,
            "fee_fixed_sell": 0.0,
            "fee_fixed_buy": 0.0,
            "fee_prop_sell": 0.0,
            "fee_prop_buy": 0.0,
            "price_step": 0.05,
            "revenue_threshold": 12.0,
            "price_cap": 10.0,
            "initial_price": 1.0
        },
        "supply": {
            "capacity": 2.0,
            "free_flow": 24.0,
            "car_operating_cost": 3.13,
            "pt_travel_time": 43.0,
            "pt_wait": 5.0,
            "pt_fare": 2.0
        },
        "engine": { "horizon": 12, "convergence_eps": 0.05, "convergence_window": 3 },
        "seed": 1
    })
}

fn write_scenario(dir: &Path, name: &str, doc: &serde_json::Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(doc).unwrap()).unwrap();
    path
}

fn run_ok(output: &Output) {
    assert!(
        output.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn run_writes_artifacts_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), "nt.json", &small_scenario("NT"));
    let out = dir.path().join("out");
    let output = tmc()
        .args(["run"])
        .arg(&scenario)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    run_ok(&output);
    for artifact in [
        "summary.json",
        "welfare.json",
        "day_log.csv",
        "flows.csv",
        "transactions.csv",
    ] {
        assert!(out.join(artifact).exists(), "{artifact} missing");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary["scenario_sha256"].is_string());
    assert_eq!(summary["seed"], 1);
    // CSVs carry the stamp comment and a header row.
    let flows = std::fs::read_to_string(out.join("flows.csv")).unwrap();
    let mut lines = flows.lines();
    assert!(lines.next().unwrap().starts_with("# scenario_sha256="));
    assert_eq!(
        lines.next().unwrap(),
        "day,interval,car_departures,pt_departures,mean_tt"
    );
}

#[test]
fn missing_field_exits_two_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = small_scenario("NT");
    doc["supply"].as_object_mut().unwrap().remove("capacity");
    let scenario = write_scenario(dir.path(), "bad.json", &doc);
    let output = tmc().args(["run"]).arg(&scenario).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("supply") && stderr.contains("capacity"),
        "stderr: {stderr}"
    );
}

#[test]
fn same_seed_reproduces_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), "tmc.json", &small_scenario("TMC"));
    let read_all = |out: &Path| -> Vec<(String, Vec<u8>)> {
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (
                    e.file_name().to_string_lossy().into_owned(),
                    std::fs::read(e.path()).unwrap(),
                )
            })
            .collect();
        files.sort();
        files
    };
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let output = tmc()
            .args(["run"])
            .arg(&scenario)
            .arg("--seed")
            .arg("7")
            .arg("--out")
            .arg(out)
            .output()
            .unwrap();
        run_ok(&output);
    }
    assert_eq!(read_all(&out_a), read_all(&out_b));
}

#[test]
fn optimize_rejects_nt() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), "nt.json", &small_scenario("NT"));
    let output = tmc().args(["optimize"]).arg(&scenario).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("nothing to optimize"), "stderr: {stderr}");
}

#[test]
fn sphere_selftest_converges() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), "cp.json", &small_scenario("CP"));
    let output = tmc()
        .args(["optimize"])
        .arg(&scenario)
        .arg("--sphere-selftest")
        .output()
        .unwrap();
    run_ok(&output);
    assert!(String::from_utf8_lossy(&output.stdout).contains("sphere self-test"));
}

#[test]
fn grid_allocation_emits_csv() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), "tmc.json", &small_scenario("TMC"));
    let out = dir.path().join("out");
    let output = tmc()
        .args(["optimize"])
        .arg(&scenario)
        .args(["--grid-allocation", "0.9:1.1:0.1"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    run_ok(&output);
    let csv = std::fs::read_to_string(out.join("allocation_grid.csv")).unwrap();
    assert!(csv.lines().count() >= 5, "{csv}");
    assert!(csv.contains("allocation_rate,rate_multiple,social_welfare"));
}

#[test]
fn compare_requires_matching_population_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let nt = write_scenario(dir.path(), "nt.json", &small_scenario("NT"));
    let cp = write_scenario(dir.path(), "cp.json", &small_scenario("CP"));
    let mut tmc_doc = small_scenario("TMC");
    tmc_doc["population"]["seed"] = 99.into();
    let tmc_path = write_scenario(dir.path(), "tmc.json", &tmc_doc);
    let output = tmc()
        .args(["compare"])
        .arg(&nt)
        .arg(&cp)
        .arg(&tmc_path)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("population seed"));
}

#[test]
fn compare_emits_table_and_curves() {
    let dir = tempfile::tempdir().unwrap();
    let nt = write_scenario(dir.path(), "nt.json", &small_scenario("NT"));
    let cp = write_scenario(dir.path(), "cp.json", &small_scenario("CP"));
    let tmc_path = write_scenario(dir.path(), "tmc.json", &small_scenario("TMC"));
    let out = dir.path().join("out");
    let output = tmc()
        .args(["compare"])
        .arg(&nt)
        .arg(&cp)
        .arg(&tmc_path)
        .args(["--seeds", "1,2"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    run_ok(&output);
    let table = std::fs::read_to_string(out.join("comparison.csv")).unwrap();
    assert!(table.contains("NT,") && table.contains("CP,") && table.contains("TMC,"));
    assert!(table.contains("welfare_mean"));
    assert!(out.join("benefit_curve.csv").exists());
    assert!(out.join("benefit_curve_by_income.csv").exists());
}

#[test]
fn elasticity_requires_cp_and_emits_csv() {
    let dir = tempfile::tempdir().unwrap();
    let nt = write_scenario(dir.path(), "nt.json", &small_scenario("NT"));
    let output = tmc().args(["elasticity"]).arg(&nt).output().unwrap();
    assert_eq!(output.status.code(), Some(2));

    let cp = write_scenario(dir.path(), "cp.json", &small_scenario("CP"));
    let out = dir.path().join("out");
    let output = tmc()
        .args(["elasticity"])
        .arg(&cp)
        .args(["--tolls", "0,2.5"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    run_ok(&output);
    let csv = std::fs::read_to_string(out.join("elasticity.csv")).unwrap();
    assert!(csv.contains("toll,q1,q2,q3,q4,q5,total"));
    assert_eq!(csv.lines().count(), 4); // stamp + header + 2 levels
}

#[test]
fn synth_dumps_population_csv() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), "nt.json", &small_scenario("NT"));
    let out = dir.path().join("out");
    let output = tmc()
        .args(["synth"])
        .arg(&scenario)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    run_ok(&output);
    let csv = std::fs::read_to_string(out.join("population.csv")).unwrap();
    // stamp + header + one row per traveler
    assert_eq!(csv.lines().count(), 2 + 300);
}

#[test]
fn set_override_rejects_malformed_spec() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), "nt.json", &small_scenario("NT"));
    let output = tmc()
        .args(["run"])
        .arg(&scenario)
        .args(["--set", "supply.capacity"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}
