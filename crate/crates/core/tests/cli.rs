use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mbs(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mbs"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run mbs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = mbs(dir, args);
    assert!(
        out.status.success(),
        "mbs {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stat(stdout: &str, key: &str) -> f64 {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(key).map(|v| v.trim().parse().unwrap()))
        .unwrap_or_else(|| panic!("no {key} in {stdout}"))
}

#[test]
fn complexity_reports_hilbert_scale() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["complexity", "--layers", "50000", "--modes", "15", "--fold", "56"]);
    assert!((stat(&out, "log10_combinations") - 254.0).abs() <= 1.0, "{out}");
    assert!(dir.path().join("mbs-complexity.summary.json").exists());
}

#[test]
fn identity_gives_point_mass() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("id.txt"), "3 3\n1,0 0,0 0,0\n0,0 1,0 0,0\n0,0 0,0 1,0\n").unwrap();
    ok(dir.path(), &["distribution", "--unitary", "id.txt", "--input", "1-0-1", "--out", "d.csv"]);
    let csv = fs::read_to_string(dir.path().join("d.csv")).unwrap();
    let rows: Vec<(&str, f64)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let (pattern, prob) = l.split_once(',').unwrap();
            (pattern, prob.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 6, "{csv}");
    for (pattern, prob) in rows {
        let expected = if pattern == "1-0-1" { 1.0 } else { 0.0 };
        assert!((prob - expected).abs() < 1e-12, "{pattern}: {prob}");
    }
    let summary = fs::read_to_string(dir.path().join("d.csv.summary.json")).unwrap();
    assert!(summary.contains("\"command\": \"distribution\""));
}

#[test]
fn failures_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = mbs(dir.path(), &["complexity", "--bogus"]);
    let invalid = mbs(dir.path(), &["build-net", "--layers", "2", "--transition", "1.5", "--out", "n.json"]);
    let missing = mbs(dir.path(), &["extract", "--stream", "nope.mbs", "--out", "e.csv"]);
    let codes: Vec<i32> = [&unknown, &invalid, &missing].iter().map(|o| o.status.code().unwrap()).collect();
    assert_eq!(codes, vec![2, 3, 4]);
    for o in [&invalid, &missing] {
        let line = String::from_utf8_lossy(&o.stderr);
        let err: serde_json::Value = serde_json::from_str(line.lines().last().unwrap()).unwrap();
        assert!(err["message"].is_string());
    }
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.mbs"));
}

/// build-net, distribution, gen-events, calibrate, extract, reconstruct, fidelity.
fn pipeline(dir: &Path) -> f64 {
    let input = "1-0-0-0-1-0-0-0";
    ok(dir, &["build-net", "--layers", "2", "--modes", "4", "--seed", "5", "--out", "net.json"]);
    ok(dir, &["distribution", "--net", "net.json", "--input", input, "--collision-free", "--causal", "--out", "dist.csv"]);

    ok(dir, &["build-net", "--layers", "1", "--modes", "4", "--transition", "0", "--seed", "6", "--out", "cal.json"]);
    fs::write(dir.join("all.csv"), "pattern,probability\n1-1-1-1,1\n").unwrap();
    let noise = ["--jitter-ps", "20", "--delay", "1=3.0", "--delay", "3=-2.0"];
    let mut args = vec!["gen-events", "--net", "cal.json", "--input", "1-1-1-1", "--dist", "all.csv"];
    args.extend(["--pulses", "20000", "--seed", "7", "--out", "cal.mbs"]);
    args.extend(noise);
    ok(dir, &args);
    ok(dir, &["calibrate", "--stream", "cal.mbs", "--out", "table.json"]);

    let mut args = vec!["gen-events", "--net", "net.json", "--input", input, "--dist", "dist.csv"];
    args.extend(["--pulses", "40000", "--seed", "8", "--out", "run.mbs"]);
    args.extend(noise);
    ok(dir, &args);
    fs::write(dir.join("extract.conf"), "fold = 2\nlayers = 2\nmodes = 4\nwindow_ns = 2.0\n").unwrap();
    let cfg = ["--stream", "run.mbs", "--calibration", "table.json", "--config", "extract.conf"];
    ok(dir, &[&["extract"][..], &cfg, &["--workers", "3", "--out", "events.csv"]].concat());
    let mut args = vec!["reconstruct", "--events", "events.csv", "--layers", "2", "--modes", "4"];
    args.extend(["--stream", "run.mbs", "--expected", "dist.csv", "--out", "recon.csv"]);
    ok(dir, &args);
    ok(dir, &["fidelity", "--a", "recon.csv", "--b", "dist.csv"]).trim().parse().unwrap()
}

#[test]
fn end_to_end_pipeline_is_faithful_and_replayable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = pipeline(a.path());
    let fb = pipeline(b.path());
    assert!(fa >= 0.95, "fidelity {fa}");
    assert_eq!(fa, fb);
    for f in ["dist.csv", "run.mbs", "table.json", "events.csv", "recon.csv"] {
        let x = fs::read(a.path().join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, fs::read(b.path().join(f)).unwrap(), "{f} differs between replays");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("run.mbs.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 8);
}
