use std::path::Path;
use std::process::Command;

fn featservo(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_featservo"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

#[test]
fn run_writes_trace_summary_and_profiles() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = featservo(&["run", "--seed", "3", "--out", out.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["trace.csv", "summary.json", "twist.csv", "error.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("# schema: featservo.trace/1\n"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("status=Converged"));
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let read = |name: &str| {
        let out = dir.path().join(name);
        let o = featservo(&["run", "--seed", "11", "--out", out.to_str().unwrap()], dir.path());
        assert!(o.status.success());
        std::fs::read(out.join("trace.csv")).unwrap()
    };
    assert_eq!(read("a"), read("b"));
}

#[test]
fn small_batch_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "[batch]\nclutter = [true]\n[[batch.batches]]\nband_cm = [0.0, 1.0]\nrotation_bounds_deg = [8.0, 10.0, 8.0]\ntrials = 2\n",
    )
    .unwrap();
    let out = dir.path().join("b");
    let o = featservo(
        &[
            "batch",
            "--config",
            cfg.to_str().unwrap(),
            "--threads",
            "2",
            "--out",
            out.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("batch.csv")).unwrap();
    assert!(csv.lines().any(|l| l == "1,0,1,on,2,2,1.0000"), "{csv}");
}

#[test]
fn check_accepts_defaults_and_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let o = featservo(&["check"], dir.path());
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("[control]"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(
        &bad,
        "[[batch.batches]]\nband_cm = [0.0, 1.0]\nrotation_bounds_deg = [1.0, 1.0, 1.0]\ntrials = 0\n",
    )
    .unwrap();
    let o = featservo(&["check", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));

    let o = featservo(&["check", "--config", "missing.toml"], dir.path());
    assert!(!o.status.success());
}

#[test]
fn unwritable_output_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("occupied");
    std::fs::write(&file, "x").unwrap();
    let o = featservo(&["run", "--out", file.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(3));
}
