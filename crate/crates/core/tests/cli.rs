//! End-to-end behaviour of the `rse` subcommands, driven through `cli::run`.

use std::fs;
use std::path::{Path, PathBuf};

use rse::cli::{self, EXIT_CHECKPOINT, EXIT_FAILURE, EXIT_OK, EXIT_USAGE};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

struct Output {
    code: i32,
    stdout: String,
    stderr: String,
}

fn rse(args: &[&str]) -> Output {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("rse").chain(args.iter().copied());
    let code = cli::run(argv, &mut out, &mut err);
    Output { code, stdout: String::from_utf8(out).unwrap(), stderr: String::from_utf8(err).unwrap() }
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn fixture_eval_reproduces_recorded_accuracies() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("eval.csv");
    let o = rse(&[
        "eval",
        "--checkpoint",
        path(&fixture("addition_m8.rse")),
        "--config",
        path(&fixture("addition_m8.cfg")),
        "--task",
        "addition",
        "--lengths",
        "16,32,64",
        "--examples",
        "64",
        "--seed",
        "11",
        "--csv",
        path(&csv),
    ]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let recorded = fs::read_to_string(fixture("addition_m8_eval.csv")).unwrap();
    let fresh = fs::read_to_string(&csv).unwrap();
    let rows = |s: &str| -> Vec<Vec<String>> {
        s.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
    };
    let (want, got) = (rows(&recorded), rows(&fresh));
    assert_eq!(want.len(), 3);
    assert_eq!(want.len(), got.len());
    for (w, g) in want.iter().zip(&got) {
        // Accuracy columns are counts over a fixed example set.
        assert_eq!(w[4..7], g[4..7]);
        let (lw, lg): (f64, f64) = (w[3].parse().unwrap(), g[3].parse().unwrap());
        assert!((lw - lg).abs() < 1e-4, "loss {lw} vs {lg}");
    }
    assert!(o.stdout.contains("per-symbol"));
}

#[test]
fn eval_appends_without_repeating_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("eval.csv");
    for _ in 0..2 {
        let o = rse(&["eval", "--checkpoint", path(&fixture("addition_m8.rse")), "--lengths", "16", "--examples", "8", "--csv", path(&csv)]);
        assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    }
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert_eq!(text.lines().filter(|l| l.starts_with("step,")).count(), 1);
}

#[test]
fn corrupted_checkpoint_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.rse");
    let mut bytes = fs::read(fixture("addition_m8.rse")).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x10;
    fs::write(&bad, &bytes).unwrap();
    let o = rse(&["eval", "--checkpoint", path(&bad), "--lengths", "16"]);
    assert_eq!(o.code, EXIT_CHECKPOINT);
    assert!(o.stderr.contains("checksum"), "{}", o.stderr);

    fs::write(&bad, &bytes[..10]).unwrap();
    assert_eq!(rse(&["eval", "--checkpoint", path(&bad)]).code, EXIT_CHECKPOINT);
}

#[test]
fn eval_rejects_a_task_the_checkpoint_cannot_serve() {
    let o = rse(&["eval", "--checkpoint", path(&fixture("addition_m8.rse")), "--task", "sorting", "--lengths", "16"]);
    assert_ne!(o.code, EXIT_OK);
    assert!(!o.stderr.is_empty());
}

#[test]
fn train_writes_config_metrics_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = rse(&[
        "train", "--task", "sorting", "--m", "8", "--steps", "40", "--buckets", "8", "--eval_lengths", "8,16",
        "--eval_every", "20", "--log_every", "10", "--checkpoint_every", "20", "--out_dir", path(&out),
    ]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    for f in ["config.txt", "metrics.csv", "final.rse", "step_00000020.rse", "step_00000040.rse"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), rse::train::CSV_HEADER);
    // Training rows at steps 1, 10, 20, 30, 40 and two evaluation rows at 20 and 40.
    assert_eq!(csv.lines().count(), 1 + 5 + 4);

    // The written config reproduces the run.
    let again = dir.path().join("again");
    let o = rse(&["train", path(&out.join("config.txt")), "--out_dir", path(&again)]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert_eq!(csv, fs::read_to_string(again.join("metrics.csv")).unwrap());
    assert_eq!(fs::read(out.join("final.rse")).unwrap(), fs::read(again.join("final.rse")).unwrap());
}

#[test]
fn train_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "task = addition\nsteps = many\n").unwrap();
    let o = rse(&["train", path(&cfg)]);
    assert_eq!(o.code, EXIT_USAGE);
    assert!(o.stderr.contains("bad.cfg:2:"), "{}", o.stderr);

    assert_eq!(rse(&["train", path(&dir.path().join("missing.cfg"))]).code, EXIT_USAGE);
    assert_eq!(rse(&["train", "--no_such_key", "1"]).code, EXIT_USAGE);
    assert_eq!(rse(&["train", "--buckets", "6"]).code, EXIT_USAGE);
}

#[test]
fn divergence_exits_1_and_keeps_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = rse(&[
        "train", "--m", "8", "--steps", "50", "--buckets", "8", "--eval_lengths", "8", "--divergence_factor", "0",
        "--divergence_window", "5", "--out_dir", path(&out),
    ]);
    assert_eq!(o.code, EXIT_FAILURE);
    assert!(o.stderr.contains("diverged"), "{}", o.stderr);
    assert!(out.join("diverged.rse").exists());
}

#[test]
fn gradcheck_exit_codes() {
    let o = rse(&["gradcheck", "gelu"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stdout);
    assert!(o.stdout.contains("gelu"));

    let o = rse(&["gradcheck", "gelu", "--precision", "single", "--tol", "1e-9"]);
    assert_eq!(o.code, EXIT_FAILURE);

    assert_eq!(rse(&["gradcheck", "no_such_op"]).code, EXIT_USAGE);
}

#[test]
fn params_lists_breakdown_and_total() {
    let o = rse(&["params", "musicnet_shape"]);
    assert_eq!(o.code, EXIT_OK);
    assert!(o.stdout.contains("3089120"), "{}", o.stdout);
    assert_eq!(rse(&["params", "tiny"]).code, EXIT_USAGE);
}

#[test]
fn bench_prints_rows_and_slope() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bench.csv");
    let o = rse(&["bench", "--lengths", "64,128,256", "--m", "8", "--repeats", "2", "--csv", path(&csv)]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert!(o.stdout.contains("slope"));
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 4);
}

#[test]
fn gen_data_lines_parse_back() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("mul.txt");
    let o = rse(&["gen-data", "--task", "multiplication", "--length", "16", "--count", "20", "--mode", "bucket", "--out", path(&file)]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let text = fs::read_to_string(&file).unwrap();
    assert_eq!(text.lines().count(), 20);
    for line in text.lines() {
        let ex = rse::tasks::TaskExample::from_line(line).unwrap();
        assert_eq!(ex.len(), 16);
    }
    assert_eq!(rse(&["gen-data", "--mode", "sideways"]).code, EXIT_USAGE);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(rse(&[]).code, EXIT_USAGE);
    assert_eq!(rse(&["fly"]).code, EXIT_USAGE);
    assert_eq!(rse(&["--help"]).code, EXIT_OK);
}
