//! End-to-end tests that drive the compiled binary on throwaway workspaces.

use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_domaincraft");

/// Model/training overrides small enough for sub-second training runs.
const DESK_SCALE: &[&str] = &[
    "--set",
    "model.layers=1",
    "--set",
    "model.heads=2",
    "--set",
    "model.width=32",
    "--set",
    "model.ffn_width=64",
    "--set",
    "model.max_len=48",
    "--set",
    "model.vocab_size=200",
    "--set",
    "train.epochs=2",
    "--set",
    "train.learning_rate=2e-3",
];

fn run(root: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .arg("--workspace")
        .arg(root)
        .args(DESK_SCALE)
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(root: &Path, args: &[&str]) -> String {
    let out = run(root, args);
    assert!(
        out.status.success(),
        "command {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 stdout")
}

fn run_err(root: &Path, args: &[&str]) -> String {
    let out = run(root, args);
    assert!(!out.status.success(), "command {args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).expect("utf-8 stderr")
}

/// Initializes a workspace with two synthetic domains.
fn seed_workspace(root: &Path) {
    run_ok(root, &["ingest"]);
    run_ok(
        root,
        &[
            "synth",
            "--domains",
            "alpha:40:0.8,beta:40:0.3",
            "--train-size",
            "400",
            "--dev-size",
            "20",
            "--test-size",
            "60",
        ],
    );
}

const VANILLA_ID: &str = "vanilla-ft_in_tgt-alpha@300_aux-none_test-alpha_seed-222";

fn plan_vanilla(root: &Path) {
    let stdout = run_ok(
        root,
        &["plan", "--strategy", "vanilla-ft", "--target", "alpha", "--mode", "in", "--fi-size", "300"],
    );
    assert!(stdout.contains(VANILLA_ID), "plan output names the schedule: {stdout}");
}

#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    seed_workspace(root);
    assert!(root.join("config.txt").is_file());
    assert!(root.join("corpora/xx-yy/alpha/train.src.txt").is_file());

    let stdout = run_ok(root, &["divergence"]);
    assert!(stdout.contains("alpha") && stdout.contains("beta"));
    assert!(root.join("divergence/matrix.csv").is_file());
    assert!(root.join("divergence/matrix.svg").is_file());

    plan_vanilla(root);
    assert!(root.join(format!("manifests/{VANILLA_ID}.json")).is_file());

    let stdout = run_ok(root, &["train", VANILLA_ID]);
    assert!(stdout.contains("result: "), "train reports its row: {stdout}");
    let results = std::fs::read_to_string(root.join("results/results.csv")).unwrap();
    let row = results.lines().nth(1).expect("header plus one row");
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(fields[0], VANILLA_ID);
    assert_eq!(fields[6], "bleu-word");
    let score: f64 = fields[7].parse().unwrap();
    assert!((0.0..=100.0).contains(&score));

    let stdout = run_ok(root, &["evaluate", VANILLA_ID]);
    assert!(stdout.contains("matches the stored result"), "{stdout}");

    // A second, out-domain schedule exercises grouping downstream.
    let stdout = run_ok(
        root,
        &[
            "plan", "--strategy", "multi-domain-ft", "--target", "alpha", "--mode", "out",
            "--test", "beta", "--fi-size", "300",
        ],
    );
    let out_id = stdout
        .lines()
        .next()
        .and_then(|l| l.strip_prefix("schedule "))
        .expect("plan prints the id first")
        .to_string();
    run_ok(root, &["train", &out_id]);

    let stdout = run_ok(root, &["analyze"]);
    assert!(stdout.contains("== bleu-word | in-domain =="));
    assert!(stdout.contains("== bleu-word | out-domain =="));
    assert!(stdout.contains("vanilla-ft") && stdout.contains("multi-domain-ft"));

    let stdout = run_ok(root, &["report"]);
    assert!(stdout.contains("[best]"));
    assert!(root.join("reports/report.txt").is_file());
    assert!(root.join("reports/scatter.svg").is_file());
}

#[test]
fn training_is_deterministic_and_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    seed_workspace(root);
    plan_vanilla(root);

    run_ok(root, &["train", VANILLA_ID]);
    let ckpt = root.join(format!("checkpoints/{VANILLA_ID}/stage-1.ckpt"));
    let first_ckpt = std::fs::read(&ckpt).unwrap();
    let first_results = std::fs::read(root.join("results/results.csv")).unwrap();

    let stdout = run_ok(root, &["train", VANILLA_ID]);
    assert!(stdout.contains("already recorded"), "{stdout}");
    assert_eq!(std::fs::read(&ckpt).unwrap(), first_ckpt, "checkpoint bytes changed");
    assert_eq!(
        std::fs::read(root.join("results/results.csv")).unwrap(),
        first_results,
        "results store changed"
    );
}

#[test]
fn outputs_are_byte_deterministic_across_workspaces() {
    let build = |dir: &Path| {
        seed_workspace(dir);
        run_ok(dir, &["divergence"]);
        plan_vanilla(dir);
        run_ok(dir, &["train", VANILLA_ID]);
        run_ok(dir, &["report"]);
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    build(a.path());
    build(b.path());
    for rel in [
        "corpora/xx-yy/alpha/train.src.txt",
        "corpora/xx-yy/alpha/train.tgt.txt",
        "corpora/xx-yy/beta/test.src.txt",
        "divergence/matrix.csv",
        "divergence/matrix.svg",
        "results/results.csv",
        "reports/report.txt",
        "reports/scatter.svg",
    ] {
        let bytes_a = std::fs::read(a.path().join(rel)).unwrap();
        let bytes_b = std::fs::read(b.path().join(rel)).unwrap();
        assert_eq!(bytes_a, bytes_b, "{rel} differs between identical runs");
    }
}

#[test]
fn changed_corpus_fails_the_digest_check() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    seed_workspace(root);
    plan_vanilla(root);

    let path = root.join("corpora/xx-yy/alpha/train.src.txt");
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("an extra line\n");
    std::fs::write(&path, text).unwrap();

    let stderr = run_err(root, &["train", VANILLA_ID]);
    assert!(stderr.contains("changed since planning"), "{stderr}");
}

#[test]
fn plan_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    seed_workspace(root);

    let stderr = run_err(
        root,
        &["plan", "--strategy", "vanilla-ft", "--target", "alpha", "--mode", "in", "--fi-size", "10000"],
    );
    assert!(stderr.contains("--upsample"), "{stderr}");

    let stderr = run_err(
        root,
        &["plan", "--strategy", "vanilla-ft", "--target", "nosuch", "--mode", "in", "--fi-size", "10"],
    );
    assert!(stderr.contains("unknown domain"), "{stderr}");
}

#[test]
fn evaluate_requires_a_trained_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    seed_workspace(root);
    plan_vanilla(root);
    let stderr = run_err(root, &["evaluate", VANILLA_ID]);
    assert!(stderr.contains("not trained"), "{stderr}");
}
