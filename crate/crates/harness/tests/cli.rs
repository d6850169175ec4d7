//! End-to-end CLI tests: artifact flows between subcommands and the
//! documented exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn resque() -> Command {
    Command::new(env!("CARGO_BIN_EXE_resque"))
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path
}

const SMALL_CONFIG: &str = r#"
[dataset]
num_classes = 3
samples_per_class = 16
height = 8
width = 8
seed = 7

[model]
arch = "mlp"
hidden = 32

[train]
optimizer = "adam"
learning_rate = 0.003
weight_decay = 1e-4
batch_size = 16
cutoff_accuracy = 0.9
max_epochs = 25
eval_fraction = 0.0
seed = 5
"#;

fn run_ok(cmd: &mut Command) -> Output {
    let output = cmd.output().unwrap();
    assert!(
        output.status.success(),
        "command failed: {}\n{}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn stdout_json(output: &Output) -> serde_json::Value {
    serde_json::from_slice(&output.stdout).expect("stdout is JSON")
}

#[test]
fn gen_train_shift_dist_task_flow() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL_CONFIG);
    let data = dir.path().join("data.rsqe");
    let model = dir.path().join("model.rsqe");
    let shifted = dir.path().join("shifted.rsqe");

    let out = run_ok(
        resque()
            .args(["gen-data", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&data),
    );
    assert_eq!(stdout_json(&out)["samples"], 48);

    let out = run_ok(
        resque()
            .args(["train", "--config"])
            .arg(&config)
            .arg("--data")
            .arg(&data)
            .arg("--out")
            .arg(&model),
    );
    let measures = stdout_json(&out);
    assert!(measures["epochs"].as_u64().unwrap() >= 1);

    run_ok(
        resque()
            .args(["shift", "--in"])
            .arg(&data)
            .args(["--kind", "gaussian", "--level", "4", "--seed", "3", "--out"])
            .arg(&shifted),
    );

    // Index through the model, dumping the class-embedding files.
    let emb_dir = dir.path().join("embeddings");
    let out = run_ok(
        resque()
            .args(["resque-dist", "--config"])
            .arg(&config)
            .arg("--model")
            .arg(&model)
            .arg("--original")
            .arg(&data)
            .arg("--shifted")
            .arg(&shifted)
            .arg("--dump-embeddings")
            .arg(&emb_dir),
    );
    let direct = stdout_json(&out)["index"].as_f64().unwrap();
    assert!(direct > 0.0 && direct < std::f64::consts::PI);

    // Recompute from the dumped embedding files alone.
    let out = run_ok(
        resque()
            .args(["resque-dist", "--config"])
            .arg(&config)
            .arg("--original")
            .arg(emb_dir.join("original_classes.rsqe"))
            .arg("--shifted")
            .arg(emb_dir.join("shifted_classes.rsqe"))
            .arg("--embeddings"),
    );
    let from_files = stdout_json(&out)["index"].as_f64().unwrap();
    assert!(
        (direct - from_files).abs() < 1e-5,
        "direct {direct} vs file-based {from_files}"
    );

    // Task index against a different task; the record shape is pinned.
    let target = dir.path().join("target.rsqe");
    run_ok(
        resque()
            .args(["gen-data", "--config"])
            .arg(&config)
            .args(["--seed", "99", "--classes", "4", "--out"])
            .arg(&target),
    );
    let out = run_ok(
        resque()
            .args(["resque-task", "--config"])
            .arg(&config)
            .arg("--model")
            .arg(&model)
            .arg("--target")
            .arg(&target)
            .args(["--init-scheme", "kmeanspp", "--seed", "21"]),
    );
    let value = stdout_json(&out);
    assert_eq!(value["epochs_used"], 1);
    assert_eq!(value["init_scheme"], "kmeanspp");
    assert_eq!(value["seed"], 21);
    assert!(value["index"].as_f64().unwrap() > 0.0);

    // Retraining to the 4-class task rebuilds the head.
    let retrained = dir.path().join("retrained.rsqe");
    let out = run_ok(
        resque()
            .args(["retrain", "--config"])
            .arg(&config)
            .arg("--model")
            .arg(&model)
            .arg("--data")
            .arg(&target)
            .arg("--out")
            .arg(&retrained),
    );
    assert!(stdout_json(&out)["epochs"].as_u64().unwrap() >= 1);
}

#[test]
fn gen_data_is_deterministic_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL_CONFIG);
    let a = dir.path().join("a.rsqe");
    let b = dir.path().join("b.rsqe");
    for out in [&a, &b] {
        run_ok(
            resque()
                .args(["gen-data", "--config"])
                .arg(&config)
                .arg("--out")
                .arg(out),
        );
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[dataset]\nnum_classes = 1\n");
    let output = resque()
        .args(["gen-data", "--config"])
        .arg(&config)
        .args(["--out", "/dev/null"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));

    // Unknown CLI flags also exit 2 (clap's convention matches ours).
    let output = resque().args(["gen-data", "--bogus"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let diverging = SMALL_CONFIG
        .replace("optimizer = \"adam\"", "optimizer = \"sgd\"")
        .replace("learning_rate = 0.003", "learning_rate = 1e18");
    let config = write_config(dir.path(), &diverging);
    let model = dir.path().join("model.rsqe");
    let output = resque()
        .args(["train", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&model)
        .output()
        .unwrap();
    assert_eq!(
        output.status.code(),
        Some(3),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn under_powered_report_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let records = dir.path().join("records.jsonl");
    std::fs::write(&records, "").unwrap();
    let output = resque()
        .args(["report", "--records"])
        .arg(&records)
        .args(["--mode", "dist", "--out"])
        .arg(dir.path().join("report"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(4));
}
