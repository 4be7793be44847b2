use std::fs;
use std::path::Path;
use std::process::Command;

use pdhg_cli::experiment::{execute, CSV_HEADER};
use pdhg_cli::sweep::sweep;
use pdhg_cli::{parse_config, ConfigError};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pdhg-lab"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("exp.toml");
    fs::write(&path, format!("output = {:?}\n{body}", dir.join("out").to_str().unwrap())).unwrap();
    path
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), CSV_HEADER);
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

const QUAD: &str = r#"
regime = "optimal_ss"
budget = 300
tol = 0.0
checks = ["lemma", "theorem", "rate_fit"]

[instance]
kind = "quad_pair"
seed = 7
d = 3
"#;

#[test]
fn optimal_run_writes_a_decreasing_bounded_energy_column() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), QUAD);
    let out = bin().args(["run", cfg.to_str().unwrap()]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&dir.path().join("out/trajectory.csv"));
    // tol = 0 still stops at an exact floating-point fixed point
    assert!(rows.len() > 20 && rows.len() <= 300);
    let col = |r: &Vec<String>, i: usize| r[i].parse::<f64>().unwrap();
    for w in rows.windows(2) {
        assert!(col(&w[1], 6) <= col(&w[0], 6) * (1.0 + 1e-12) + 1e-24);
    }
    for r in &rows {
        assert!(col(r, 6) <= col(r, 9) * (1.0 + 1e-6) + 1e-300);
    }
    let summary: toml::Table = fs::read_to_string(dir.path().join("out/summary.toml")).unwrap().parse().unwrap();
    assert_eq!(summary["all_passed"].as_bool(), Some(true));
    assert_eq!(summary["checks"]["lemma"]["status"].as_str(), Some("PASS"));
    assert!(summary["max_contraction"].as_float().is_some());
}

#[test]
fn budget_one_gives_one_row_and_verify_writes_no_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &QUAD.replace("budget = 300", "budget = 1"));
    assert!(bin().args(["run", cfg.to_str().unwrap()]).status().unwrap().success());
    let text = fs::read_to_string(dir.path().join("out/trajectory.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);

    let other = tempfile::tempdir().unwrap();
    let cfg = write_config(other.path(), QUAD);
    assert!(bin().args(["verify", cfg.to_str().unwrap()]).status().unwrap().success());
    assert!(!other.path().join("out/trajectory.csv").exists());
    assert!(other.path().join("out/summary.toml").exists());
}

#[test]
fn merely_convex_fixed_run_skips_the_lemma() {
    let dir = tempfile::tempdir().unwrap();
    let body = "regime = \"fixed\"\nbudget = 50\n[instance]\nkind = \"lasso\"\nseed = 3\nd = 6\nm = 4\n";
    let cfg = write_config(dir.path(), body);
    let out = bin().args(["run", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: toml::Table = String::from_utf8(out.stdout).unwrap().parse().unwrap();
    assert_eq!(summary["checks"]["lemma"]["status"].as_str(), Some("SKIPPED"));
    let rows = read_csv(&dir.path().join("out/trajectory.csv"));
    assert!(rows.iter().all(|r| r[8].is_empty()));
}

#[test]
fn bad_configs_exit_with_a_named_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("momentum = 0.9\n{QUAD}"));
    let out = bin().args(["run", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("momentum"));
}

#[test]
fn csv_is_bitwise_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let body = QUAD.replace("optimal_ss", "accelerated");
    for d in [&a, &b] {
        let cfg = write_config(d.path(), &body);
        assert!(bin().args(["run", cfg.to_str().unwrap()]).status().unwrap().success());
    }
    assert_eq!(
        fs::read(a.path().join("out/trajectory.csv")).unwrap(),
        fs::read(b.path().join("out/trajectory.csv")).unwrap()
    );
}

#[test]
fn info_reports_derived_constants() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &QUAD.replace("optimal_ss", "accelerated"));
    let out = bin().args(["info", cfg.to_str().unwrap()]).output().unwrap();
    assert!(out.status.success());
    let info: toml::Table = String::from_utf8(out.stdout).unwrap().parse().unwrap();
    assert_eq!(info["k0"].as_integer(), Some(1));
    assert!(info["admissible"].as_bool().unwrap());
    assert!((info["c"].as_float().unwrap() - 2.0 / 3.0).abs() < 1e-15);
}

fn varying(dir: &Path, grid: &str) -> pdhg_cli::ExperimentConfig {
    let text = format!(
        "output = {:?}\nregime = \"varying_sc\"\nbudget = 400\ntol = 0.0\nchecks = [\"lemma\", \"theorem\"]\n[instance]\nkind = \"quad_pair\"\nseed = 2\nd = 2\n{grid}",
        dir.to_str().unwrap()
    );
    parse_config(&text).unwrap()
}

#[test]
fn single_cell_sweep_matches_execute() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = varying(&dir.path().join("sweep"), "[sweep]\nc = [0.25]\n");
    let (results, agg) = sweep(&cfg, 2).unwrap();
    assert_eq!(results.len(), 1);
    assert!(agg.exists());

    let mut direct = varying(&dir.path().join("direct"), "[schedule]\nc = 0.25\n");
    direct.sweep = None;
    execute(&direct, false).unwrap();
    assert_eq!(
        fs::read(dir.path().join("sweep/cell-0/trajectory.csv")).unwrap(),
        fs::read(dir.path().join("direct/trajectory.csv")).unwrap()
    );
}

#[test]
fn sweep_preflight_rejects_bad_cells_before_running() {
    let dir = tempfile::tempdir().unwrap();
    // c = 2μ is outside (0, 2μ)
    let cfg = varying(dir.path(), "[sweep]\nc = [0.5, 2.0]\n");
    match sweep(&cfg, 1) {
        Err(ConfigError::Cell { index: 1, .. }) => {}
        other => panic!("expected a cell error, got {other:?}"),
    }
    assert!(!dir.path().join("cell-0").exists());
}
