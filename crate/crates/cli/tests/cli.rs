use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_splinecl"))
}

fn data_root() -> PathBuf {
    std::env::var_os("SPLINECL_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

#[test]
fn metrics_recomputes_acc_and_fgt() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r_matrix.csv");
    std::fs::write(&p, "t0,t1\n1.0,\n0.8,1.0\n").unwrap();
    let out = bin().args(["metrics", "--r-matrix"]).arg(&p).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("ACC 0.900000"), "{text}");
    assert!(text.contains("FGT 0.200000"), "{text}");
}

#[test]
fn bad_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "method.rho = 1.5\n").unwrap();
    let out = bin().arg("run").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["run", "--set", "method.lamda=3"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lamda"));
}

#[test]
fn missing_data_exits_with_one_and_names_fetch_script() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--seeds", "0", "--set"])
        .arg(format!("data.root=\"{}\"", dir.path().join("nowhere").display()))
        .arg("--out")
        .arg(dir.path().join("runs"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fetch_data.py"));
}

#[test]
fn small_run_writes_outputs() {
    let root = data_root();
    if !root.join("mnist").exists() {
        eprintln!("skipping: no MNIST under {}", root.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("runs");
    let mut cmd = bin();
    cmd.args(["run", "--method", "kan_cl", "--seeds", "0"])
        .arg("--out")
        .arg(&out_dir);
    for kv in [
        format!("data.root=\"{}\"", root.display()),
        "data.train_per_task=40".into(),
        "data.test_per_task=20".into(),
        "optimizer.epochs=1".into(),
        "architecture.hidden=[]".into(),
    ] {
        cmd.arg("--set").arg(kv);
    }
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["r_matrix.csv", "summary.json", "train_log.csv"] {
        assert!(out_dir.join("seed_0").join(f).exists(), "{f}");
    }
    assert!(out_dir.join("aggregate.json").exists());
    let m = bin()
        .args(["metrics", "--r-matrix"])
        .arg(out_dir.join("seed_0/r_matrix.csv"))
        .output()
        .unwrap();
    assert!(m.status.success());
}
