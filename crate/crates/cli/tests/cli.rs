//! End-to-end checks of the `thzsim` binary: exit codes, validate-config,
//! and a smallest generate/stats cycle.

use std::path::Path;
use std::process::Command;

fn thzsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_thzsim"))
}

fn write_scenario(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("scenario.conf");
    let text = format!(
        "seed = 5\nensemble = 2\nrays_per_cluster = 5\nstats = acf\n\
         acf_base_times_s = 0\nacf_lag_step_s = 0.01\nacf_lag_count = 3\n{extra}\n"
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn validate_config_accepts_good_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), "");
    let out = thzsim().args(["validate-config", "--scenario"]).arg(&path).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("config hash"));
}

#[test]
fn validate_config_rejects_bad_key_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), "bogus_key = 1");
    let out = thzsim().args(["validate-config", "--scenario"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_key"));
}

#[test]
fn missing_seed_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scenario.conf");
    std::fs::write(&path, "ensemble = 1\n").unwrap();
    let out = thzsim().args(["validate-config", "--scenario"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn negative_scale_error_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), "mu_dtau_1st_ns = -2");
    let out = thzsim().args(["validate-config", "--scenario"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mu_dtau_1st_ns"));
}

#[test]
fn stats_runs_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), "");
    let out_dir = dir.path().join("run");
    let out = thzsim()
        .args(["stats", "--scenario"])
        .arg(&path)
        .args(["--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("stats/acf_t0s.csv").exists());
    assert!(out_dir.join("manifest.json").exists());
}

#[test]
fn generate_stores_tensors() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), "");
    let out_dir = dir.path().join("gen");
    let out = thzsim()
        .args(["generate", "--scenario"])
        .arg(&path)
        .args(["--ensemble", "1", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("ctf/drop_00000.ctft").exists());
    assert!(out_dir.join("ctf/drop_00000.json").exists());
}

#[test]
fn unknown_figure_name_is_rejected() {
    let out = thzsim().args(["figure", "fig9-nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn overrides_flow_through() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), "");
    let out_dir = dir.path().join("ovr");
    let out = thzsim()
        .args(["stats", "--scenario"])
        .arg(&path)
        .args(["--override", "rx_speed_mps=0", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let conf = std::fs::read_to_string(out_dir.join("scenario.conf")).unwrap();
    assert!(conf.contains("rx_speed_mps = 0"));
}

#[test]
fn memory_guard_refuses_oversized_runs() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(
        dir.path(),
        "grid_tx_elements = 1..16\ngrid_rx_elements = 1..16\nf_comb_points = 2048\n\
         f_comb_span_ghz = 2\nmemory_budget_mb = 1",
    );
    let out = thzsim().args(["stats", "--scenario"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("paper-scale"));
}
