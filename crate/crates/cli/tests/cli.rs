use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
seeds = [0, 1]

[dataset]
num_classes = 4
dim = 8
n_per_class = 30

[partition]
num_clients = 3

[model]
encoder_hidden = [8]
z_dim = 8
projector_hidden = 8
proj_dim = 4

[train]
rounds = 2
clients_per_round = 2
batch_size = 16

[eval]
every = 1
lp_epochs = 3
"#;

fn fcl(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fcl"));
    cmd.args(args).env_remove("FCL_SEED_OVERRIDE");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("cfg.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn run_writes_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let res = fcl(&["run", "--config", &cfg, "--out", out.to_str().unwrap()], &[]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(fs::read_to_string(out.join("config.toml")).unwrap(), SMALL);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
    assert!(summary.lines().nth(1).unwrap().contains(",2,"));
    assert!(out.join("report.txt").exists());
}

#[test]
fn seed_override_env_replaces_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let res = fcl(&["run", "--config", &cfg, "--out", out.to_str().unwrap()], &[("FCL_SEED_OVERRIDE", "5")]);
    assert!(res.status.success());
    let cell = fs::read_dir(&out).unwrap().map(|e| e.unwrap().path()).find(|p| p.is_dir()).unwrap();
    let mut files: Vec<String> = fs::read_dir(cell).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    files.sort();
    assert_eq!(files, ["metrics_5.csv"]);
}

#[test]
fn unknown_key_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SMALL}bogus_key = 3\n"));
    let res = fcl(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()], &[]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("bogus_key"));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn partition_audit_prints_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let res = fcl(&["partition-audit", "--config", &cfg], &[]);
    assert!(res.status.success());
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.starts_with("# partition mode=label_skew"));
    assert!(text.contains("client_id,index,labelled_flag,bin_id"));
    assert!(text.contains("class_3"));
}

#[test]
fn validate_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let res = fcl(&["validate", "--out", dir.path().to_str().unwrap()], &[]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stdout));
    let report = fs::read_to_string(dir.path().join("validation_report.txt")).unwrap();
    assert_eq!(report, String::from_utf8(res.stdout).unwrap());
    assert!(!report.contains("FAIL"));
}

#[test]
fn missing_config_fails() {
    let res = fcl(&["partition-audit", "--config", "/nonexistent/cfg.toml"], &[]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).starts_with("error:"));
}
