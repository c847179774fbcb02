//! End-to-end runs of the compiled binary against real files.

use std::fs;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cfnphylo"))
}

#[test]
fn simulate_then_reconstruct() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"b":2,"q":2,"theta":{"kind":"constant","value":0.9},
            "ell":2,"k":2000,"trials":4,"seed":11,"target_rate":0.5}"#,
    )
    .unwrap();
    let out = dir.path().join("out");

    let st = bin()
        .args(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "simulate"])
        .status()
        .unwrap();
    assert!(st.success());
    assert!(out.join("tree.nwk").exists() && out.join("samples.bin").exists());

    let st = bin()
        .args(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "reconstruct"])
        .status()
        .unwrap();
    assert!(st.success());
    let report = fs::read_to_string(out.join("report.json")).unwrap();
    assert!(report.contains("\"success_rate\""));
    assert!(out.join("stages.jsonl").exists());
    assert!(out.join("metric.csv").exists());
    assert!(out.join("reconstructed.nwk").exists());

    // identical reruns: the report is byte-stable under a fixed seed
    let report2 = {
        bin()
            .args(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "reconstruct"])
            .status()
            .unwrap();
        fs::read_to_string(out.join("report.json")).unwrap()
    };
    assert_eq!(report, report2);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{not json").unwrap();
    let st = bin()
        .args(["--config", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "simulate"])
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));

    let st = bin()
        .args(["--out", dir.path().to_str().unwrap(), "majority-gain", "--theta", "1.5"])
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));
}
