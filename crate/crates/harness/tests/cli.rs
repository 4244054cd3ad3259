//! The `irml` binary: exit codes, output directory handling and manifests.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn irml(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_irml"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("irml runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn bound_check_writes_csv_svg_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "# quick\nrounds = 20\n");
    let out = irml(&["bound_check", "--config", &cfg, "--seed", "3"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let res = dir.path().join("results/bound_check");
    for f in ["bound_seed3.csv", "bound_seed3.svg", "bound_summary.csv", "manifest.json"] {
        assert!(res.join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(res.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["experiment"], "bound_check");
    assert_eq!(manifest["seeds"], serde_json::json!([3]));
    let csv = fs::read(res.join("bound_seed3.csv")).unwrap();
    let listed = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .find(|o| o["file"] == "bound_seed3.csv")
        .unwrap();
    assert_eq!(listed["sha256"], irml_harness::sha256_hex(&csv));
    let config = manifest["config"].as_str().unwrap();
    assert!(config.contains("rounds = 20\n"));
    assert_eq!(manifest["config_sha256"], irml_harness::sha256_hex(config.as_bytes()));
}

#[test]
fn existing_output_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "rounds = 10\n");
    let args = ["bound_check", "--config", cfg.as_str(), "--out", "o"];
    assert_eq!(irml(&args, dir.path()).status.code(), Some(0));
    fs::write(dir.path().join("o/stale.csv"), "x\n").unwrap();
    let again = irml(&args, dir.path());
    assert_eq!(again.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));
    let forced = irml(&[&args[..], &["--force"]].concat(), dir.path());
    assert_eq!(forced.status.code(), Some(0));
    assert!(!dir.path().join("o/stale.csv").exists());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "rounds = 10\nsnr_db = banana\n");
    let out = irml(&["ser_vs_snr", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let missing = irml(&["ser_vs_snr", "--config", "nope.cfg"], dir.path());
    assert_eq!(missing.status.code(), Some(2));

    let ok = write_config(dir.path(), "");
    assert_eq!(irml(&["warp_drive", "--config", &ok], dir.path()).status.code(), Some(2));
    assert_eq!(irml(&["bound_check", "--config", &ok, "--rounds", "zero"], dir.path()).status.code(), Some(2));
    assert_eq!(irml(&["bound_check", "--config", &ok, "--noniid-p", "1.5"], dir.path()).status.code(), Some(2));
}

#[test]
fn unknown_keys_warn_in_lenient_mode() {
    let dir = tempfile::tempdir().unwrap();
    let strict = write_config(dir.path(), "rounds = 5\ncolour = blue\n");
    assert_eq!(irml(&["bound_check", "--config", &strict], dir.path()).status.code(), Some(2));
    let lenient = write_config(dir.path(), "strict = false\nrounds = 5\ncolour = blue\n");
    let out = irml(&["bound_check", "--config", &lenient], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn missing_dataset_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "fb_triples = /no/such/train.txt\n");
    assert_eq!(irml(&["ser_vs_snr", "--config", &cfg], dir.path()).status.code(), Some(3));
    let cfg = write_config(dir.path(), "planetoid_dir = /no/such/dir\n");
    assert_eq!(irml(&["fed_servers", "--config", &cfg], dir.path()).status.code(), Some(3));
}

#[test]
fn malformed_dataset_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("train.txt"), "only\ttwo\n").unwrap();
    let cfg = write_config(dir.path(), "fb_triples = train.txt\n");
    assert_eq!(irml(&["constellation", "--config", &cfg], dir.path()).status.code(), Some(3));
}

#[test]
fn runtime_failures_exit_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "rounds = 1\n");
    let out = irml(&["fed_noniid", "--config", &cfg, "--servers", "100000"], dir.path());
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "epochs = 5\npaths = 50\nsubgraph_entities = 300\n");
    for out in ["a", "b"] {
        let res = irml(&["ser_vs_snr", "--config", &cfg, "--seed", "0,1", "--snr-db", "-2,4", "--out", out], dir.path());
        assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    }
    for f in ["ser_hard.csv", "ser_reasoning.csv", "layer_sizes.csv", "ser_hard.svg"] {
        assert_eq!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
    let hard = fs::read_to_string(dir.path().join("a/ser_hard.csv")).unwrap();
    assert_eq!(hard.lines().count(), 1 + 2 * 4);
    assert!(hard.lines().nth(1).unwrap().starts_with("-2,1,"));
}
