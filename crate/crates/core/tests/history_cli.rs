use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_contention-lab"))
}

#[test]
fn run_records_a_history_that_verifies() {
    let dir = std::env::temp_dir().join(format!("contention-lab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let (csv, hist) = (dir.join("out.csv"), dir.join("h.txt"));
    let out = bin()
        .args(["run", "--engine", "2pl-waitdie", "--workload", "micro-rmw", "--cores", "2", "--hot", "16"])
        .args(["--table-size", "5000", "--record-size", "64", "--duration", "0.2", "--warmup", "0"])
        .arg("--csv")
        .arg(&csv)
        .arg("--record-history")
        .arg(&hist)
        .args(["--history-limit", "20000"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(rows.lines().count(), 2);
    assert!(rows.starts_with("engine,"));
    let out = bin().args(["verify", "--history"]).arg(&hist).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("serializable"));
}

#[test]
fn verify_rejects_a_lost_update() {
    let path = std::env::temp_dir().join(format!("contention-lab-lost-{}.txt", std::process::id()));
    std::fs::write(&path, "0 1 B\n1 2 B\n2 1 R 0:7\n3 2 R 0:7\n4 1 W 0:7\n5 2 W 0:7\n6 1 C\n7 2 C\n").unwrap();
    let out = bin().args(["verify", "--history"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("NOT serializable"));
}

#[test]
fn bad_arguments_fail() {
    let out = bin().args(["run", "--engine", "nope", "--workload", "micro-rmw"]).output().unwrap();
    assert!(!out.status.success());
}
