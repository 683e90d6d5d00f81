use std::process::Command;

fn pais() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pais"))
}

#[test]
fn run_writes_summary_and_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let status = pais()
        .args(["run", "--synthetic", "300,2,3,0.2", "--k", "3", "--T", "3", "--m", "60"])
        .args(["--B", "0.1,1", "--reps", "2", "--families", "full,unif,core,opt", "--seed", "4"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("family,"), "{header}");
    assert_eq!(text.lines().count(), 1 + 4 * 2);
    assert!(dir.path().join("s.csv.runs.csv").exists());
    assert!(dir.path().join("s.csv.meta.json").exists());
}

#[test]
fn audit_passes() {
    let out = pais().args(["audit", "--seed", "3"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.ends_with("0 failed")));
}

#[test]
fn weights_emits_one_row_per_point() {
    let out = pais()
        .args(["weights", "--synthetic", "200,2,2,0.2", "--B", "1", "--k", "2", "--T", "3"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("index,l1_norm,q,weight,psi"));
    assert_eq!(lines.count(), 200 - 5);
}

#[test]
fn bad_input_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1,2\n3,x\n").unwrap();
    let out = pais().args(["run", "--m", "1"]).arg("--input").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    let out = pais().args(["weights", "--synthetic", "50,2,2,0.1", "--B", "1,2"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
