use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fcfl(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fcfl"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_SPLIT: &str = "[data.split]\ntest_count = 6\n";

#[test]
fn synth_data_writes_a_label_tree() {
    let dir = tempfile::tempdir().unwrap();
    let o = fcfl(
        &["synth-data", "--out", "d", "--per-class", "3", "--size", "16"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    for label in ["nontumor", "necrotic", "viable"] {
        assert_eq!(fs::read_dir(dir.path().join("d").join(label)).unwrap().count(), 3);
    }
}

#[test]
fn train_then_eval_reproduces_the_test_report() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert!(
        fcfl(&["synth-data", "--out", "d", "--per-class", "8", "--seed", "2"], p)
            .status
            .success()
    );
    fs::write(p.join("c.toml"), SMALL_SPLIT).unwrap();
    let common = ["--toy", "--config", "c.toml", "--data", "d", "--seed", "4"];

    let mut args = vec!["train", "--out", "run", "--epochs", "2"];
    args.extend(common);
    let o = fcfl(&args, p);
    assert!(o.status.success(), "{}", stderr(&o));
    let log = fs::read_to_string(p.join("run/train_log.tsv")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], "epoch\tlr\ttrain_loss\tval_acc");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0\t0.0001\t"));
    for f in [
        "config.toml",
        "splits.tsv",
        "last/manifest.json",
        "last/params.bin",
        "report/report.json",
    ] {
        assert!(p.join("run").join(f).is_file(), "{f}");
    }
    let trained = stdout(&o);
    let test_line = trained.lines().find(|l| l.starts_with("test accuracy")).unwrap();

    // eval on the best checkpoint matches the report written by train
    let ckpt = if p.join("run/best").is_dir() {
        "run/best"
    } else {
        "run/last"
    };
    let mut args = vec!["eval", "--checkpoint", ckpt, "--out", "ev"];
    args.extend(common);
    let o = fcfl(&args, p);
    assert!(o.status.success(), "{}", stderr(&o));
    let a = fs::read_to_string(p.join("run/report/report.json")).unwrap();
    let b = fs::read_to_string(p.join("ev/report.json")).unwrap();
    assert_eq!(a, b);
    assert!(stdout(&o).starts_with(test_line.split(',').next().unwrap()));
}

#[test]
fn unknown_config_keys_fail_with_the_key_named() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[train]\nepoch = 3\n").unwrap();
    let o = fcfl(&["train", "--toy", "--config", "bad.toml", "--out", "r"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("epoch"), "{}", stderr(&o));
    assert!(!dir.path().join("r").exists());
}

#[test]
fn missing_checkpoint_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = fcfl(&["eval", "--toy", "--checkpoint", "nowhere"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error:"));
}

#[test]
fn ablate_prints_the_variant_rows() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.toml"),
        "[data]\nsynth_per_class = 4\n[data.split]\ntest_count = 3\n",
    )
    .unwrap();
    let o = fcfl(
        &[
            "ablate", "--toy", "--config", "c.toml", "--which", "head", "--epochs", "1", "--out", "ab",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: Vec<String> = stdout(&o)
        .lines()
        .map(|l| l.split('\t').next().unwrap().to_string())
        .collect();
    assert_eq!(rows, ["head", "Yes", "No"]);
    assert!(dir.path().join("ab/ablation_head.json").is_file());
}

#[test]
fn gradcheck_reports_every_op() {
    let dir = tempfile::tempdir().unwrap();
    let o = fcfl(&["gradcheck", "--cases", "2"], dir.path());
    assert!(o.status.success(), "{}", stdout(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 12);
    assert!(out.lines().all(|l| l.starts_with("ok\t")));
}
