use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mcg(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcg"))
        .args(args)
        .env("MCG_OUTPUT_ROOT", root)
        .output()
        .unwrap()
}

const TINY: [&str; 8] = [
    "--episodes",
    "300",
    "--seeds",
    "0,1",
    "--eval-games",
    "100",
    "--name",
    "tiny",
];

#[test]
fn train_writes_under_output_root() {
    let root = tempfile::tempdir().unwrap();
    let out = mcg(root.path(), &[&["train"][..], &TINY].concat());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let cell = root.path().join("results").join("tiny");
    assert!(cell.join("aggregate.csv").exists());
    assert!(cell.join("seed_1").join("agent2.json").exists());
    let header = fs::read_to_string(cell.join("seed_0").join("train_log.csv")).unwrap();
    assert!(header.starts_with("window_start,reward1,reward2,sc1,sc2,ent1,ent2"));
}

#[test]
fn bad_config_exits_two_with_location() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("bad.toml");
    fs::write(&cfg, "[game]\nn_actions = 2\n\n[learn]\nlr = -1.0\n").unwrap();
    let out = mcg(root.path(), &["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("lr") && err.contains("line 5"), "{err}");

    fs::write(&cfg, "[game]\nn_actoins = 2\n").unwrap();
    assert_eq!(
        mcg(root.path(), &["train", "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn check_exit_codes() {
    let root = tempfile::tempdir().unwrap();
    assert_eq!(
        mcg(root.path(), &[&["train"][..], &TINY].concat()).status.code(),
        Some(0)
    );
    let pass = root.path().join("pass.csv");
    let fail = root.path().join("fail.csv");
    fs::write(&pass, "cell,metric,agent,lo,hi\ntiny,entropy,mean,0,2\n").unwrap();
    fs::write(&fail, "cell,metric,agent,lo,hi\ntiny,entropy,mean,5,6\n").unwrap();
    let ok = mcg(
        root.path(),
        &["check", "--criteria", pass.to_str().unwrap(), "results/tiny"],
    );
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("PASS"));
    let bad = mcg(
        root.path(),
        &["check", "--criteria", fail.to_str().unwrap(), "results/tiny"],
    );
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL"));
}
