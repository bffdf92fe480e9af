use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use plateau::cli_io::{read_aggregates, recompute_aggregates};

fn plateau(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plateau")).args(args).env_remove("PLATEAU_OUT_DIR").output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&read(dir, "summary.json")).unwrap()
}

#[test]
fn train_writes_trajectory_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = path(tmp.path(), "r");
    let res = plateau(&[
        "train", "--scheme", "net", "--qubits", "2", "--depth", "2", "--eta", "0.1", "--target", "0.3", "--seed", "7",
        "--out", &out,
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let dir = tmp.path().join("r");
    let traj = read(&dir, "trajectory.csv");
    let mut lines = traj.lines();
    assert_eq!(lines.next(), Some("epoch,cost"));
    assert!(!traj.contains('\r'));
    let s = summary(&dir);
    assert_eq!(s["reached"], true);
    assert_eq!(s["schema_version"], 1);
    let rows = traj.lines().count() - 1;
    assert_eq!(s["epochs_run"].as_u64().unwrap() as usize + 1, rows);
}

#[test]
fn train_usage_errors_exit_one() {
    let res = plateau(&["train", "--qubits", "2", "--target", "0.3"]);
    assert_eq!(code(&res), 1);
    assert!(String::from_utf8_lossy(&res.stderr).contains("--scheme"));
    assert_eq!(code(&plateau(&["train", "--scheme", "lstm", "--qubits", "2", "--target", "0.3"])), 1);
    assert_eq!(code(&plateau(&["train", "--scheme", "net", "--qubits", "2", "--target", "0.3", "--bogus"])), 1);
    assert_eq!(code(&plateau(&["frobnicate"])), 1);
    assert_eq!(code(&plateau(&["--help"])), 0);
}

#[test]
fn unreachable_target_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = path(tmp.path(), "r");
    let res = plateau(&[
        "train",
        "--scheme",
        "model1",
        "--qubits",
        "2",
        "--target",
        "0.0",
        "--max-epochs",
        "1",
        "--out",
        &out,
    ]);
    assert_eq!(code(&res), 2);
    let dir = tmp.path().join("r");
    assert_eq!(summary(&dir)["reached"], false);
    let model: serde_json::Value = serde_json::from_str(&read(&dir, "model.json")).unwrap();
    assert_eq!(model["model"]["arch"]["layer_dims"], serde_json::json!([4, 10, 4]));
}

#[test]
fn config_file_supplies_flags_and_rejects_unknown_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    let out = path(tmp.path(), "from-config");
    fs::write(&cfg, format!(r#"{{"scheme": "net", "qubits": 1, "target": 0.001, "seed": 3, "out": "{out}"}}"#))
        .unwrap();
    let res = plateau(&["--config", cfg.to_str().unwrap(), "train"]);
    assert_eq!(code(&res), 0);
    assert!(tmp.path().join("from-config/trajectory.csv").exists());
    // Flags win over the file.
    let res = plateau(&["--config", cfg.to_str().unwrap(), "train", "--target=-1", "--max-epochs", "2"]);
    assert_eq!(code(&res), 2);
    fs::write(&cfg, r#"{"scheme": "net", "qubits": 1, "target": 0.1, "learning_rate": 0.5}"#).unwrap();
    assert_eq!(code(&plateau(&["--config", cfg.to_str().unwrap(), "train"])), 1);
}

#[test]
fn output_directory_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let res = Command::new(env!("CARGO_BIN_EXE_plateau"))
        .args(["train", "--scheme", "net", "--qubits", "1", "--target", "0.5"])
        .env("PLATEAU_OUT_DIR", tmp.path().join("env-out"))
        .output()
        .unwrap();
    assert!(res.status.success());
    assert!(tmp.path().join("env-out/summary.json").exists());
}

#[test]
fn sweep_aggregates_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let out = path(tmp.path(), "s");
    let res = plateau(&[
        "sweep",
        "--schemes",
        "net,model1",
        "--qubits-range",
        "2:3",
        "--depth-rule",
        "fixed:3",
        "--target",
        "0.3",
        "--reps",
        "3",
        "--seed-base",
        "5",
        "--out",
        &out,
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let dir = tmp.path().join("s");
    assert_eq!(read(&dir, "records.csv").lines().count(), 1 + 2 * 2 * 3);
    let stored = read_aggregates(&dir.join("aggregate.csv")).unwrap();
    let recomputed = recompute_aggregates(&dir.join("records.csv")).unwrap();
    assert_eq!(stored, recomputed);
    assert_eq!(stored.len(), 4);
    assert!(stored.iter().all(|a| a.depth == 3));
}

#[test]
fn sweep_single_repetition_aggregate_equals_run() {
    let tmp = tempfile::tempdir().unwrap();
    let out = path(tmp.path(), "s");
    let res = plateau(&[
        "sweep",
        "--schemes",
        "net",
        "--qubits-range",
        "1",
        "--target",
        "0.001",
        "--reps",
        "1",
        "--out",
        &out,
    ]);
    assert_eq!(code(&res), 0);
    let dir = tmp.path().join("s");
    let agg = read_aggregates(&dir.join("aggregate.csv")).unwrap();
    assert_eq!(agg.len(), 1);
    let records = read(&dir, "records.csv");
    let row: Vec<&str> = records.lines().nth(1).unwrap().split(',').collect();
    let epochs: usize = row[11].parse().unwrap();
    assert_eq!(agg[0].mean_epochs, Some(epochs as f64));
    assert_eq!(agg[0].min_epochs, Some(epochs));
    assert_eq!(agg[0].max_epochs, Some(epochs));
}

#[test]
fn sweep_rejects_empty_scheme_list() {
    assert_eq!(code(&plateau(&["sweep", "--schemes", "", "--qubits-range", "2", "--target", "0.3"])), 1);
}

#[test]
fn variance_rows_and_validation() {
    let tmp = tempfile::tempdir().unwrap();
    let out = path(tmp.path(), "v");
    let res = plateau(&[
        "variance",
        "--qubits-range",
        "2:8",
        "--depth-rule",
        "equal",
        "--samples",
        "50",
        "--seed",
        "1",
        "--out",
        &out,
    ]);
    assert_eq!(code(&res), 0);
    let dir = tmp.path().join("v");
    let csv = read(&dir, "variance.csv");
    assert_eq!(csv.lines().next().unwrap(), "schema_version,n,depth,mean,variance,stderr,samples,variance_stderr");
    assert_eq!(csv.lines().count(), 1 + 7);
    assert!(summary(&dir)["log_variance_slope"].as_f64().unwrap() < 0.0);
    let res = plateau(&["variance", "--qubits-range", "2,4,6,8", "--samples", "20", "--out", &out]);
    assert_eq!(code(&res), 0);
    assert_eq!(read(&dir, "variance.csv").lines().count(), 1 + 4);
    assert_eq!(code(&plateau(&["variance", "--qubits-range", "2:4", "--samples", "1", "--out", &out])), 1);
}

#[test]
fn lemmas_contract() {
    let tmp = tempfile::tempdir().unwrap();
    let out = path(tmp.path(), "l");
    let res = plateau(&["lemmas", "--dim", "64", "--samples", "10", "--seed", "2", "--out", &out]);
    assert_eq!(code(&res), 0);
    let dir = tmp.path().join("l");
    assert_eq!(summary(&dir)["statistically_inconclusive"], true);
    assert_eq!(read(&dir, "lemmas.csv").lines().count(), 1 + 13);
    assert_eq!(code(&plateau(&["lemmas", "--dim", "1", "--samples", "10", "--out", &out])), 1);
    let res = plateau(&["lemmas", "--dim", "2", "--samples", "2000", "--seed", "2", "--out", &out]);
    assert_eq!(code(&res), 0);
    assert_eq!(summary(&dir)["statistically_inconclusive"], false);
}

#[test]
fn identity_contract() {
    let tmp = tempfile::tempdir().unwrap();
    let out = path(tmp.path(), "i");
    let res = plateau(&[
        "identity",
        "--schemes",
        "model1,model2,model3",
        "--qubits-range",
        "2:10",
        "--depth-rule",
        "equal",
        "--seeds",
        "10",
        "--out",
        &out,
    ]);
    assert_eq!(code(&res), 0);
    let dir = tmp.path().join("i");
    let csv = read(&dir, "identity.csv");
    assert_eq!(csv.lines().count(), 1 + 270);
    let res = plateau(&["identity", "--schemes", "net", "--qubits-range", "3", "--seeds", "4", "--out", &out]);
    assert_eq!(code(&res), 0);
    let csv = read(&dir, "identity.csv");
    assert!(csv.lines().skip(1).all(|l| l.starts_with("1,net,3,3,")));
    assert_eq!(
        code(&plateau(&["identity", "--schemes", "model1", "--qubits-range", "2", "--seeds", "0", "--out", &out])),
        1
    );
}

#[test]
fn csv_outputs_do_not_depend_on_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: [(&str, Vec<&str>, &str); 4] = [
        (
            "sweep",
            vec!["--schemes", "net,model2", "--qubits-range", "2:3", "--target", "0.2", "--reps", "2"],
            "records.csv",
        ),
        ("variance", vec!["--qubits-range", "2:4", "--samples", "40", "--seed", "9"], "variance.csv"),
        ("lemmas", vec!["--dim", "3", "--samples", "3000", "--seed", "4"], "lemmas.csv"),
        ("identity", vec!["--schemes", "net,model3", "--qubits-range", "2:4", "--seeds", "3"], "identity.csv"),
    ];
    for (cmd, args, file) in cases {
        let mut outputs = Vec::new();
        for threads in ["1", "3", "1"] {
            let out = path(tmp.path(), &format!("{cmd}-{threads}-{}", outputs.len()));
            let mut full = vec!["--threads", threads, cmd];
            full.extend(&args);
            full.extend(["--out", &out]);
            assert_eq!(code(&plateau(&full)), 0, "{cmd}");
            outputs.push(fs::read(Path::new(&out).join(file)).unwrap());
        }
        assert_eq!(outputs[0], outputs[1], "{cmd}: 1 vs 3 threads");
        assert_eq!(outputs[0], outputs[2], "{cmd}: repeat");
    }
}
