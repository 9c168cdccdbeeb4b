use std::path::Path;
use std::process::{Command, Output};

fn sim(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sim"));
    cmd.args(args).env_remove("SIM_OUTPUT_DIR");
    if let Some(dir) = env_out {
        cmd.env("SIM_OUTPUT_DIR", dir);
    }
    cmd.output().unwrap()
}

fn small(extra: &[&str]) -> Vec<String> {
    let mut v: Vec<String> = ["--seed", "3", "--runs", "2", "-q", "--set", "ecosystem.n_users=10", "--set", "ecosystem.n_events=60"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    v.extend(["--set", "window=20", "--set", "early_events=20"].map(String::from));
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn args<'a>(head: &'a str, rest: &'a [String]) -> Vec<&'a str> {
    std::iter::once(head).chain(rest.iter().map(String::as_str)).collect()
}

#[test]
fn run_writes_report_tables_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let rest = small(&["--output-dir", dir.path().to_str().unwrap()]);
    let out = sim(&args("succession", &rest), None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let root = dir.path().join("succession");
    for f in ["report.json", "config.toml", "metadata.json", "windowed.csv", "runs.csv", "trace.csv"] {
        assert!(root.join(f).is_file(), "missing {f}");
    }
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(root.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["n_runs"], 2);
    assert!(report["summary"]["final_rate_mean"].is_number());

    // the written config reproduces the run
    let again = tempfile::tempdir().unwrap();
    let cfg = root.join("config.toml");
    let out = sim(&["succession", "-q", "-c", cfg.to_str().unwrap(), "--output-dir", again.path().to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read(root.join("report.json")).unwrap(),
        std::fs::read(again.path().join("succession/report.json")).unwrap()
    );
}

#[test]
fn unknown_key_is_a_config_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[ecosystem]\nn_userz = 5\n").unwrap();
    let out = sim(&["succession", "-c", cfg.to_str().unwrap()], Some(dir.path()));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("n_userz"), "{err}");

    let out = sim(&["succession", "--set", "ecosystem.n_users=-4"], Some(dir.path()));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_users"));
    assert!(!dir.path().join("succession").exists());
}

#[test]
fn invalid_values_and_bad_files_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = sim(&["stability", "--set", "evolution.mutation_rate=1.5"], Some(dir.path()));
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let out = sim(&["validate-config", "/nonexistent/x.toml"], None);
    assert_eq!(out.status.code(), Some(2));
    let out = sim(&["no-such-scenario"], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn output_env_is_the_fallback_root() {
    let dir = tempfile::tempdir().unwrap();
    let rest = small(&[]);
    let out = sim(&args("species-abundance", &rest), Some(dir.path()));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("species-abundance/report.json").is_file());

    let flag = tempfile::tempdir().unwrap();
    let rest = small(&["--output-dir", flag.path().to_str().unwrap()]);
    let out = sim(&args("species-abundance", &rest), Some(dir.path()));
    assert_eq!(out.status.code(), Some(0));
    assert!(flag.path().join("species-abundance/report.json").is_file());
}

#[test]
fn default_grid_is_eleven_by_eleven() {
    let dir = tempfile::tempdir().unwrap();
    let out = sim(
        &["stability-grid", "-q", "--runs-per-cell", "1", "--set", "grid.generations=5", "--output-dir", dir.path().to_str().unwrap()],
        None,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("stability-grid/d_ins.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().len(), 12);
    assert_eq!(rdr.records().count(), 11);
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let out = sim(&["validate-config", path.to_str().unwrap()], None);
            assert_eq!(out.status.code(), Some(0), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
            seen += 1;
        }
    }
    assert_eq!(seen, digeco::experiments::SCENARIOS.len());
}
