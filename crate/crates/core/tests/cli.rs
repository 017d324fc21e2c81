use std::path::Path;
use std::process::Command;

fn restore() -> Command {
    Command::new(env!("CARGO_BIN_EXE_restore"))
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name).display().to_string()
}

#[test]
fn solve_then_verify_saved_report() {
    let dir = tempfile::tempdir().unwrap();
    let fault = dir.path().join("fault.json");
    std::fs::write(&fault, r#"{"id": "F2", "faulted_line": "3-4", "horizon": [18, 19]}"#).unwrap();
    let report = dir.path().join("report.json");
    let status = restore()
        .args(["solve", "--grid", &fixture("d12.json"), "--fault"])
        .arg(&fault)
        .arg("--out")
        .arg(&report)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.contains("\"fault_id\": \"F2\""));

    let out = restore()
        .args(["verify", "--grid", &fixture("d12.json"), "--fault"])
        .arg(&fault)
        .arg("--report")
        .arg(&report)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pass"));
}

#[test]
fn batch_writes_the_table() {
    let out = restore()
        .args(["batch", "--grid", &fixture("d12.json"), "--fault", &fixture("d12_faults.json"), "--mode", "weighted"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let table = String::from_utf8(out.stdout).unwrap();
    assert_eq!(table.lines().count(), 4);
    assert!(table.starts_with("Simulation scenario,Fault location"));
}

#[test]
fn seeded_instance_needs_no_files() {
    let out = restore().args(["compare", "--seed", "3"]).output().unwrap();
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["lexicographic"]["fault_id"], "R3");
}

#[test]
fn missing_inputs_fail() {
    let out = restore().args(["solve"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--grid"));
    let out = restore().args(["solve", "--grid", "/no/such/file.json", "--fault", "x"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}
