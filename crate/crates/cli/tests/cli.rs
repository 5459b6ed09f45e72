use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qswarm(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qswarm")).args(args).env("QSWARM_OUT_DIR", out_dir).output().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn run_writes_trace_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "w.toml", "name = \"cli-walk\"\nprotocol = \"walk\"\nseed = 4\nsteps = 100\n");
    let out = qswarm(&["run", &cfg], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stats: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("cli-walk.stats.json")).unwrap()).unwrap();
    assert_eq!(stats["rates"]["offset_preserved"]["value"], 1.0);
    let trace = fs::read(dir.path().join("cli-walk.trace.jsonl")).unwrap();

    // Same config, same bytes.
    let again = qswarm(&["run", &cfg], dir.path());
    assert!(again.status.success());
    assert_eq!(fs::read(dir.path().join("cli-walk.trace.jsonl")).unwrap(), trace);
}

#[test]
fn bad_config_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "name = \"x\"\nprotocol = \"walk\"\nseed = 1\nsteps = 10\ncolour = 3\n");
    let out = qswarm(&["run", &cfg], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 5"), "{err}");
}

#[test]
fn sweep_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "g.toml", "name = \"cli-ghz\"\nprotocol = \"ghz-walk\"\nseed = 1\nsteps = 200\n");
    let out = qswarm(&["sweep", &cfg, "--grid", "robots=2..3", "--seeds", "1,2"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("cli-ghz.sweep.json")).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 4);
    assert_eq!(report["points"][1]["rates"]["all_match"]["trials"], 400);
}

#[test]
fn sweep_rejects_unknown_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "g.toml", "name = \"g\"\nprotocol = \"ghz-walk\"\nseed = 1\nsteps = 20\n");
    let out = qswarm(&["sweep", &cfg, "--grid", "colour=1,2", "--seeds", "1"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = qswarm(&["verify"], dir.path());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(!text.contains("[FAIL]"));
}
