use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use g2bin::manifest::{manifest_path, RunManifest};

fn g2bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_g2bin"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = g2bin(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_analyze_census() {
    let dir = tempfile::tempdir().unwrap();
    let tags = dir.path().join("run.bg2t");
    ok(&["simulate", "--detected-rate-mcps", "1.0", "--duration-s", "0.003", "--seed", "4", "-o", s(&tags)]);
    assert!(manifest_path(&tags).exists());

    let analysis = ok(&["analyze", s(&tags), "--tau-ns", "30,300", "--samples", "500", "--seed", "9"]);
    let rows: Vec<&str> = analysis.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "tau_ps,g2,n_w,n_total,std");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("30000,"));

    let census = ok(&["census", s(&tags), "--tau-ns", "30", "--samples", "500"]);
    let rows: Vec<&str> = census.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "tau_ps,mode,no_photon,single,multi");
    assert_eq!(rows.len(), 3);
}

#[test]
fn text_record_round_trip_through_cli() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("tags.csv");
    ok(&["simulate", "--pair-rate", "2e6", "--duration-s", "0.001", "-o", s(&csv)]);
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("# duration_ps=1000000000\nchannel,timestamp_ps\n"));
    ok(&["analyze", s(&csv), "--tau-ns", "50", "--mode", "heralded"]);
}

#[test]
fn manifest_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let tags = dir.path().join("run.bg2t");
    let first = dir.path().join("first.csv");
    let second = dir.path().join("second.csv");
    ok(&["simulate", "--detected-rate-mcps", "1.5", "--duration-s", "0.002", "--seed", "8", "-o", s(&tags)]);
    ok(&["sweep-tau", s(&tags), "--steps", "4", "--samples", "300", "--seed", "5", "-o", s(&first)]);

    let manifest = RunManifest::read(&manifest_path(&first)).unwrap();
    assert_eq!(manifest.subcommand, "sweep-tau");
    let argv = manifest.rerun_args("-o", s(&second));
    let argv: Vec<&str> = argv.iter().map(String::as_str).collect();
    ok(&argv);
    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());

    let header = fs::read_to_string(&first).unwrap();
    assert!(header.starts_with(&format!("# {}", manifest.csv_comment())));
}

#[test]
fn config_file_drives_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("source.cfg");
    fs::write(&config, "# lab source\npair_rate = 3e6\nduration = 1000000000\nseed = 12\n").unwrap();
    let a = dir.path().join("a.bg2t");
    let b = dir.path().join("b.bg2t");
    ok(&["simulate", "--config", s(&config), "-o", s(&a)]);
    ok(&["simulate", "--config", s(&config), "-o", s(&b)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    // a flag overrides the file
    let c = dir.path().join("c.bg2t");
    ok(&["simulate", "--config", s(&config), "--seed", "13", "-o", s(&c)]);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn oracle_prints_expectations() {
    let out = ok(&["oracle", "--lambda-a", "0.5", "--lambda-b", "0.5", "--mode", "unheralded", "--cap", "30"]);
    let line = out.lines().find(|l| l.starts_with("unheralded")).expect("row");
    let value: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
    assert!((value - 0.4428678872054329).abs() < 1e-12);
}

#[test]
fn error_exit_codes() {
    assert_eq!(g2bin(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(g2bin(&["analyze", "/nonexistent.bg2t", "--tau-ns", "30"]).status.code(), Some(2));
    let out = g2bin(&["simulate", "--eta-a", "1.5", "--duration-s", "0.001"]);
    assert_eq!(out.status.code(), Some(3));
}
