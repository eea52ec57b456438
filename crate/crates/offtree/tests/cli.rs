use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use offtree::formats::{parse_log, parse_multiclass};
use offtree::model::ModelFile;
use offtree_core::baselines::{Fitted, RegressionMode, RegressionModel};
use offtree_core::harness::{Method, TrainedModel};

fn offtree(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_offtree")).current_dir(dir).args(args).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn err(out: &Output) -> String {
    assert!(!out.status.success(), "unexpected success: {}", String::from_utf8_lossy(&out.stdout));
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// `n` rows per class of a noiseless multiclass problem: `x = (class, row)`.
fn multiclass(k: usize, per_class: usize) -> String {
    let mut s = format!("d=2,k={k}\n");
    for c in 0..k {
        for i in 0..per_class {
            writeln!(s, "{c},{i},{}", c + 1).unwrap();
        }
    }
    s
}

/// Every action once per context of `multiclass(k, 1)`, reward 1 on the
/// label.
fn exhaustive_log(k: usize) -> String {
    let mut s = format!("d=2,k={k}\n");
    for c in 0..k {
        for a in 1..=k {
            writeln!(s, "{c},0,{a},{},uniform", (a == c + 1) as u8).unwrap();
        }
    }
    s
}

#[test]
fn banditify_rows_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "data.csv", "d=4,k=3\n1,2,3,4,2\n0.5,0,0,1,1\n");
    let a = ok(&offtree(d, &["banditify", "--input", "data.csv", "--seed", "7"]));
    let b = ok(&offtree(d, &["banditify", "--input", "data.csv", "--seed", "7"]));
    assert_eq!(a, b);
    let log = parse_log(&a).unwrap();
    assert_eq!(log.examples.len(), 2);
    for e in &log.examples {
        assert!((1..=3).contains(&e.action.number()));
        assert!(e.reward == 0.0 || e.reward == 1.0);
    }
    let row: Vec<&str> = a.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[..4], &["1", "2", "3", "4"]);
    assert_eq!(row[6], "uniform");
    // Same through --out, with the manifest alongside.
    ok(&offtree(d, &["banditify", "--input", "data.csv", "--seed", "7", "--out", "log.csv"]));
    assert_eq!(fs::read_to_string(d.join("log.csv")).unwrap(), a);
    let manifest = fs::read_to_string(d.join("log.csv.manifest")).unwrap();
    assert!(
        manifest.contains("command=banditify\n") && manifest.contains("seed=7\n") && manifest.contains("digest.input=")
    );
}

#[test]
fn banditify_rejects_bad_rows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "bad.csv", "d=1,k=3\n0,1\n0,4\n");
    let msg = err(&offtree(d, &["banditify", "--input", "bad.csv"]));
    assert!(msg.contains("line 3") && msg.contains("action 4 outside 1..=3"), "{msg}");
    write(d, "nan.csv", "d=1,k=3\nx,1\n");
    assert!(err(&offtree(d, &["banditify", "--input", "nan.csv"])).contains("line 2"));
    write(d, "ok.csv", "d=1,k=3\n0,1\n");
    assert!(err(&offtree(d, &["banditify", "--input", "ok.csv", "--propensity", "0.5,0.5"])).contains("k=3"));
}

#[test]
fn train_model_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "k8.csv", &exhaustive_log(8));
    write(d, "k4.csv", &exhaustive_log(4));
    ok(&offtree(
        d,
        &["train", "--log", "k8.csv", "--method", "offset-tree", "--learner", "table", "--out", "tree.json"],
    ));
    let tree = ModelFile::load(&d.join("tree.json")).unwrap();
    assert_eq!((tree.method, tree.k, tree.dim), (Method::OffsetTree, 8, 2));
    assert_eq!(tree.model.num_components(), 7);
    ok(&offtree(d, &["train", "--log", "k4.csv", "--method", "iwc", "--learner", "stump", "--out", "iwc.json"]));
    assert_eq!(ModelFile::load(&d.join("iwc.json")).unwrap().model.num_components(), 6);
    let msg = err(&offtree(d, &["train", "--log", "k4.csv", "--method", "binary-offset"]));
    assert!(msg.contains("binary-offset"), "{msg}");
    let msg = err(&offtree(d, &["train", "--log", "k4.csv", "--method", "bandit", "--learner", "forest"]));
    assert!(msg.contains("bandit") && msg.contains("forest"), "{msg}");
}

#[test]
fn eval_error_rates() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "log.csv", &exhaustive_log(4));
    write(d, "test.csv", &multiclass(4, 1));
    ok(&offtree(d, &["train", "--log", "log.csv", "--learner", "table", "--out", "m.json"]));
    assert_eq!(ok(&offtree(d, &["eval", "--model", "m.json", "--data", "test.csv"])), "error=0\n");

    // Always action 1 on a balanced four-class set.
    let constant = TrainedModel::Regression(RegressionModel {
        mode: RegressionMode::PerAction,
        k: 4,
        regressors: vec![
            Fitted::Constant { value: 1.0 },
            Fitted::Constant { value: 0.0 },
            Fitted::Constant { value: 0.0 },
            Fitted::Constant { value: 0.0 },
        ],
    });
    write(d, "const.json", &ModelFile::new(constant, 2, "least-squares").to_json());
    write(d, "balanced.csv", &multiclass(4, 5));
    assert_eq!(ok(&offtree(d, &["eval", "--model", "const.json", "--data", "balanced.csv"])), "error=0.75\n");

    write(d, "empty.csv", "d=2,k=4\n");
    assert!(err(&offtree(d, &["eval", "--model", "m.json", "--data", "empty.csv"])).contains("no data rows"));
    write(d, "wide.csv", "d=3,k=4\n0,0,0,1\n");
    assert!(err(&offtree(d, &["eval", "--model", "m.json", "--data", "wide.csv"])).contains("dimension"));
}

#[test]
fn eval_ips_on_the_training_log() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "log.csv", &exhaustive_log(4));
    ok(&offtree(d, &["train", "--log", "log.csv", "--learner", "table", "--out", "m.json"]));
    // Each context has reward 1 on one of its four rows, weighted by k.
    let out = ok(&offtree(d, &["eval-ips", "--model", "m.json", "--log", "log.csv"]));
    assert_eq!(out, "ips_value=1\n");
}

#[test]
fn model_files_are_versioned() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "log.csv", &exhaustive_log(2));
    ok(&offtree(d, &["train", "--log", "log.csv", "--method", "binary-offset", "--out", "m.json"]));
    let text = fs::read_to_string(d.join("m.json")).unwrap();
    let back = ModelFile::from_json(&text, "m.json").unwrap();
    assert_eq!(back.to_json(), text);
    write(d, "v2.json", &text.replacen("\"version\": 1", "\"version\": 2", 1));
    write(d, "test.csv", &multiclass(2, 1));
    let msg = err(&offtree(d, &["eval", "--model", "v2.json", "--data", "test.csv"]));
    assert!(msg.contains("unsupported model version 2"), "{msg}");
}

fn experiment_data(d: &Path) {
    let mut s = String::from("d=2,k=3\n");
    for i in 0..60 {
        let c = i % 3;
        writeln!(s, "{},{},{}", c as f64 + (i as f64 * 0.37).sin() * 0.3, (i % 7) as f64, c + 1).unwrap();
    }
    write(d, "data.csv", &s);
}

#[test]
fn experiment_shares_splits_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    experiment_data(d);
    ok(&offtree(
        d,
        &["experiment", "--data", "data.csv", "--methods", "offset-tree,iwc", "--seed", "3", "--out", "t1.csv"],
    ));
    let table = fs::read_to_string(d.join("t1.csv")).unwrap();
    let rows: Vec<Vec<&str>> = table.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let digests = |method: &str| -> Vec<String> {
        rows.iter().filter(|r| r[1] == method && r[0] != "mean").map(|r| r[4].to_string()).collect()
    };
    assert_eq!(digests("offset-tree").len(), 10);
    assert_eq!(digests("offset-tree"), digests("iwc"));
    assert!(table.ends_with("random-guess,,,0.6666666666666667,\n"));

    let manifest = fs::read_to_string(d.join("t1.csv.manifest")).unwrap();
    assert!(manifest.contains("splits=10\n") && manifest.contains("train-fraction=0.6666666666666666\n"));
    ok(&offtree(d, &["experiment", "--config", "t1.csv.manifest", "--out", "t2.csv"]));
    assert_eq!(fs::read_to_string(d.join("t2.csv")).unwrap(), table);
    assert_eq!(fs::read_to_string(d.join("t2.csv.manifest")).unwrap(), manifest);

    // A changed input or another command refuses the manifest.
    let msg = err(&offtree(d, &["train", "--config", "t1.csv.manifest"]));
    assert!(msg.contains("recorded for `experiment`"), "{msg}");
    fs::write(d.join("data.csv"), table.replace("offset-tree", "x")).unwrap();
    let msg = err(&offtree(d, &["experiment", "--config", "t1.csv.manifest"]));
    assert!(msg.contains("changed since the manifest"), "{msg}");
}

#[test]
fn config_files_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    experiment_data(d);
    write(d, "run.cfg", "# experiment\ndata = data.csv\nmethods = regression\nsplits = 3\nseed = 1\n");
    let from_cfg = ok(&offtree(d, &["--config", "run.cfg", "experiment"]));
    assert_eq!(from_cfg.lines().filter(|l| l.contains(",regression,")).count(), 4);
    let flagged = ok(&offtree(d, &["--config", "run.cfg", "experiment", "--splits", "2", "--seed", "1"]));
    assert_eq!(flagged.lines().filter(|l| l.contains(",regression,")).count(), 3);

    write(d, "bad.cfg", "data = data.csv\nsplits = 0\ntrain_fraction = 1.5\nlearnr = stump\n");
    let msg = err(&offtree(d, &["--config", "bad.cfg", "experiment"]));
    for needle in ["splits must be at least 1", "train_fraction", "unknown setting `learnr`"] {
        assert!(msg.contains(needle), "missing {needle}: {msg}");
    }
}

#[test]
fn online_trace() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "stream.csv", &multiclass(3, 40));
    let out = ok(&offtree(
        d,
        &[
            "online",
            "--data",
            "stream.csv",
            "--schedule",
            "realizable",
            "--retrain-every",
            "10",
            "--report-every",
            "50",
            "--learner",
            "table",
        ],
    ));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "step,running_error");
    assert_eq!(lines[1].split(',').next(), Some("50"));
    assert!(lines.iter().any(|l| l.starts_with("120,")));
    assert!(lines.last().unwrap().starts_with("# explored="));
    assert!(err(&offtree(d, &["online", "--data", "stream.csv", "--schedule", "greedy"])).contains("schedule"));
}

#[test]
fn regret_check_quick() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&offtree(dir.path(), &["regret-check", "--quick"]));
    assert!(out.lines().count() >= 10);
    assert!(out.lines().all(|l| l.starts_with("PASS ")), "{out}");
}

#[test]
fn sample_complexity_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&offtree(dir.path(), &["sample-complexity", "--m", "200", "--classes", "8", "--trials", "20"]));
    let rows: Vec<Vec<&str>> = out.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0][0], "offset-half");
    assert_eq!(rows[1][0], "offset-zero");
    assert!(rows[1][1].parse::<f64>().unwrap() > rows[0][1].parse::<f64>().unwrap());
    let small = ok(&offtree(dir.path(), &["sample-complexity", "--m", "5", "--trials", "3"]));
    assert!(small.contains("offset-zero skipped"));
    assert!(err(&offtree(dir.path(), &["sample-complexity", "--classes", "12"])).contains("power of two"));
}

#[test]
fn round_trip_helpers_agree_with_cli_output() {
    let text = multiclass(3, 2);
    assert_eq!(offtree::formats::render_multiclass(&parse_multiclass(&text).unwrap()), text);
}
