//! Subcommands. Each one reads its settings through a [`Reader`], does its
//! work, and returns the primary output together with the run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context as _, Result};
use offtree_core::baselines::RegressionMode;
use offtree_core::costing::{CostingConfig, Normalizer};
use offtree_core::exact::estimate_value_ips;
use offtree_core::harness::{
    banditify_all, coverage_problem, labelings, multiclass_error, run_online_epoch_greedy, run_split,
    sample_complexity_trial, split_plan, summarize, ExperimentConfig, ExplorationSchedule, Method, OnlineConfig,
    TrainConfig,
};
use offtree_core::offset_tree::NodeMode;
use offtree_core::theorems::regret_suites;
use offtree_core::{Action, Propensity};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::{sha256_file, Manifest, Reader, Settings};
use crate::formats::{load_log, load_multiclass, render_log, Header, Log};
use crate::model::ModelFile;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Slack allowed by `regret-check` before a suite counts as failed.
pub const REGRET_TOLERANCE: f64 = 1e-9;

#[derive(Debug)]
pub struct Outcome {
    pub output: String,
    pub manifest: Manifest,
    /// Set when the command ran but its check failed.
    pub failed: bool,
}

struct Run<'a> {
    command: &'static str,
    reader: Reader<'a>,
    inputs: Vec<&'static str>,
}

impl<'a> Run<'a> {
    fn new(command: &'static str, settings: &'a Settings) -> Self {
        Self { command, reader: Reader::new(settings), inputs: Vec::new() }
    }

    fn input(&mut self, key: &'static str) -> String {
        self.inputs.push(key);
        self.reader.require(key)
    }

    fn finish(self) -> Result<(Settings, Manifest)> {
        let settings = self.reader.finish()?;
        let mut digests = BTreeMap::new();
        for key in self.inputs {
            let path = settings.get(key).expect("required inputs are resolved");
            digests.insert(key.to_string(), sha256_file(Path::new(path))?);
        }
        let manifest =
            Manifest { command: self.command.into(), version: VERSION.into(), settings: settings.clone(), digests };
        Ok((settings, manifest))
    }
}

fn parse_propensity(text: &str, k: usize) -> Result<Propensity> {
    if text == "uniform" {
        return Ok(Propensity::uniform(k)?);
    }
    let probs = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("propensity entry `{}` is not a number", s.trim())))
        .collect::<Result<Vec<_>>>()?;
    if probs.len() != k {
        bail!("propensity has {} entries but the data has k={k}", probs.len());
    }
    Ok(Propensity::explicit(probs)?)
}

fn parse_leaf_order(text: &str) -> Result<Vec<Action>> {
    text.split(',')
        .map(|s| {
            let n: usize =
                s.trim().parse().with_context(|| format!("leaf-order entry `{}` is not an action number", s.trim()))?;
            Action::from_number(n).with_context(|| format!("leaf-order entry {n} must be at least 1"))
        })
        .collect()
}

/// Learner, costing and method-specific settings shared by `train`,
/// `experiment` and `online`.
fn read_train(r: &mut Reader, seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.learner = r.parse("learner", cfg.learner.clone());
    cfg.regressor = r.parse("regressor", cfg.regressor.clone());
    match r.parse("regression-mode", String::from("per-action")).as_str() {
        "per-action" => cfg.regression_mode = RegressionMode::PerAction,
        "single" => cfg.regression_mode = RegressionMode::Single,
        other => r.error(format!("`regression-mode`: expected per-action or single, found `{other}`")),
    }
    match r.parse("node-mode", String::from("per-node")).as_str() {
        "per-node" => cfg.node_mode = NodeMode::PerNode,
        "shared" => cfg.node_mode = NodeMode::Shared,
        other => r.error(format!("`node-mode`: expected per-node or shared, found `{other}`")),
    }
    if let Some(order) = r.optional("leaf-order") {
        match parse_leaf_order(&order) {
            Ok(o) => cfg.leaf_order = Some(o),
            Err(e) => r.error(format!("`leaf-order`: {e:#}")),
        }
    }
    cfg.offset = r.parse("offset", cfg.offset);
    if !(0.0..=1.0).contains(&cfg.offset) {
        r.error(format!("`offset` must lie in [0, 1], got {}", cfg.offset));
    }
    let draws: usize = r.parse("draws", 1);
    let normalizer = match r.parse_optional::<f64>("cap") {
        Some(c) => Normalizer::Cap(c),
        None => Normalizer::MaxWeight,
    };
    cfg.costing = CostingConfig { draws, normalizer, rng_seed: seed, tag_draws: r.flag("tag-draws", false) };
    if let Err(e) = cfg.costing.validate() {
        r.error(e.to_string());
    }
    cfg
}

fn method(r: &mut Reader, default: Method) -> Method {
    r.parse("method", default)
}

pub fn banditify(settings: &Settings) -> Result<Outcome> {
    let mut run = Run::new("banditify", settings);
    let input = run.input("input");
    let seed: u64 = run.reader.parse("seed", 0);
    let propensity = run.reader.parse("propensity", String::from("uniform"));
    let (_, manifest) = run.finish()?;
    let data = load_multiclass(Path::new(&input)).with_context(|| format!("reading {input}"))?;
    let k = data.num_actions();
    let p = parse_propensity(&propensity, k)?;
    let examples = banditify_all(data.examples(), &p, seed)?;
    let log = Log { header: Header { d: data.dim(), k }, examples };
    Ok(Outcome { output: render_log(&log), manifest, failed: false })
}

pub fn train(settings: &Settings) -> Result<Outcome> {
    let mut run = Run::new("train", settings);
    let log_path = run.input("log");
    let seed: u64 = run.reader.parse("seed", 0);
    let mut cfg = read_train(&mut run.reader, seed);
    cfg.method = method(&mut run.reader, Method::OffsetTree);
    let (_, manifest) = run.finish()?;
    let log = load_log(Path::new(&log_path)).with_context(|| format!("reading {log_path}"))?;
    let model = offtree_core::harness::train_method(&log.examples, log.header.k, &cfg)?;
    let file = ModelFile::new(model, log.header.d, cfg.learner_name());
    Ok(Outcome { output: file.to_json(), manifest, failed: false })
}

fn load_model(path: &str) -> Result<ModelFile> {
    Ok(ModelFile::load(Path::new(path))?)
}

fn check_shape(model: &ModelFile, d: usize, k: usize) -> Result<()> {
    if model.dim != d {
        bail!("feature dimension mismatch: model expects d={}, data has d={d}", model.dim);
    }
    if model.k != k {
        bail!("action count mismatch: model has k={}, data has k={k}", model.k);
    }
    Ok(())
}

pub fn eval(settings: &Settings) -> Result<Outcome> {
    let mut run = Run::new("eval", settings);
    let model_path = run.input("model");
    let data_path = run.input("data");
    let (_, manifest) = run.finish()?;
    let model = load_model(&model_path)?;
    let data = load_multiclass(Path::new(&data_path)).with_context(|| format!("reading {data_path}"))?;
    check_shape(&model, data.dim(), data.num_actions())?;
    let error = multiclass_error(&model.model, data.examples())?;
    Ok(Outcome { output: format!("error={error}\n"), manifest, failed: false })
}

pub fn eval_ips(settings: &Settings) -> Result<Outcome> {
    let mut run = Run::new("eval-ips", settings);
    let model_path = run.input("model");
    let log_path = run.input("log");
    let (_, manifest) = run.finish()?;
    let model = load_model(&model_path)?;
    let log = load_log(Path::new(&log_path)).with_context(|| format!("reading {log_path}"))?;
    check_shape(&model, log.header.d, log.header.k)?;
    let value = estimate_value_ips(&model.model, &log.examples)?;
    Ok(Outcome { output: format!("ips_value={value}\n"), manifest, failed: false })
}

fn parse_methods(text: &str) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for name in text.split(',').map(str::trim) {
        let m: Method = name.parse()?;
        if out.contains(&m) {
            bail!("method `{m}` listed twice");
        }
        out.push(m);
    }
    Ok(out)
}

/// Short digest of a split's membership, so tables from different runs can
/// be checked for identical splits.
pub fn split_digest(train: &[usize], test: &[usize]) -> String {
    let mut h = Sha256::new();
    for i in train {
        h.update(i.to_le_bytes());
    }
    h.update(b"|");
    for i in test {
        h.update(i.to_le_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

pub const RESULTS_HEADER: &str = "split,method,learner,error,split_digest";

pub fn experiment(settings: &Settings) -> Result<Outcome> {
    let mut run = Run::new("experiment", settings);
    let data_path = run.input("data");
    let seed: u64 = run.reader.parse("seed", 0);
    let methods_text = run.reader.parse("methods", String::from("offset-tree,regression"));
    let methods = match parse_methods(&methods_text) {
        Ok(m) => m,
        Err(e) => {
            run.reader.error(format!("`methods`: {e:#}"));
            Vec::new()
        }
    };
    let defaults = ExperimentConfig::default();
    let mut cfg = ExperimentConfig {
        train: read_train(&mut run.reader, seed),
        splits: run.reader.parse("splits", defaults.splits),
        train_fraction: run.reader.parse("train-fraction", defaults.train_fraction),
        seed,
        propensity: None,
    };
    let propensity = run.reader.parse("propensity", String::from("uniform"));
    for problem in cfg.problems() {
        run.reader.error(problem);
    }
    let (_, manifest) = run.finish()?;

    let data = load_multiclass(Path::new(&data_path)).with_context(|| format!("reading {data_path}"))?;
    if data.num_classes_present() < 2 {
        bail!("{data_path}: dataset has a single class");
    }
    let k = data.num_actions();
    cfg.propensity = Some(parse_propensity(&propensity, k)?);
    let plan = split_plan(data.len(), cfg.splits, cfg.train_fraction, cfg.seed)?;
    let configs: Vec<ExperimentConfig> = methods
        .iter()
        .map(|&m| {
            let mut c = cfg.clone();
            c.train.method = m;
            c
        })
        .collect();
    let jobs: Vec<(usize, usize)> = (0..configs.len()).flat_map(|m| (0..plan.len()).map(move |s| (m, s))).collect();
    let results = jobs
        .par_iter()
        .map(|&(m, s)| run_split(&data, &configs[m], s, &plan[s]).map(|r| (m, r)))
        .collect::<offtree_core::Result<Vec<_>>>()?;

    let digests: Vec<String> = plan.iter().map(|s| split_digest(&s.train, &s.test)).collect();
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for (m, c) in configs.iter().enumerate() {
        let splits = results.iter().filter(|(i, _)| *i == m).map(|(_, r)| r.clone()).collect();
        let summary = summarize(c, k, splits);
        for r in &summary.splits {
            writeln!(out, "{},{},{},{},{}", r.split, summary.method, summary.learner, r.error, digests[r.split])
                .unwrap();
        }
        writeln!(out, "mean,{},{},{},", summary.method, summary.learner, summary.mean_error).unwrap();
    }
    writeln!(out, "random-guess,,,{},", 1.0 - 1.0 / k as f64).unwrap();
    Ok(Outcome { output: out, manifest, failed: false })
}

pub fn online(settings: &Settings) -> Result<Outcome> {
    let mut run = Run::new("online", settings);
    let data_path = run.input("data");
    let seed: u64 = run.reader.parse("seed", 0);
    let defaults = OnlineConfig::default();
    let mut train = read_train(&mut run.reader, seed);
    train.method = method(&mut run.reader, Method::OffsetTree);
    let cfg = OnlineConfig {
        train,
        schedule: run.reader.parse("schedule", ExplorationSchedule::Agnostic),
        retrain_every: run.reader.parse("retrain-every", defaults.retrain_every),
        importance_weighted: !run.reader.flag("unweighted", false),
        include_exploit: run.reader.flag("include-exploit", defaults.include_exploit),
        passes: run.reader.parse("passes", defaults.passes),
        seed,
    };
    let report_every: usize = run.reader.parse("report-every", 100);
    if report_every == 0 {
        run.reader.error("`report-every` must be at least 1");
    }
    if cfg.retrain_every == 0 {
        run.reader.error("`retrain-every` must be at least 1");
    }
    let (_, manifest) = run.finish()?;
    let data = load_multiclass(Path::new(&data_path)).with_context(|| format!("reading {data_path}"))?;
    let trace = run_online_epoch_greedy(data.examples(), data.num_actions(), &cfg)?;
    let mut out = String::from("step,running_error\n");
    let n = trace.running_error.len();
    for (i, e) in trace.running_error.iter().enumerate() {
        let t = i + 1;
        if t.is_multiple_of(report_every) || t == n {
            writeln!(out, "{t},{e}").unwrap();
        }
    }
    writeln!(out, "# explored={} retrains={}", trace.explored, trace.retrains).unwrap();
    Ok(Outcome { output: out, manifest, failed: false })
}

pub fn regret_check(settings: &Settings) -> Result<Outcome> {
    let mut run = Run::new("regret-check", settings);
    let seed: u64 = run.reader.parse("seed", 0);
    let quick = run.reader.flag("quick", false);
    let (_, manifest) = run.finish()?;
    let lines = regret_suites(quick, seed)?;
    let mut out = String::new();
    let mut failed = false;
    for line in &lines {
        let ok = line.check.holds(REGRET_TOLERANCE);
        failed |= !ok;
        writeln!(
            out,
            "{} {:<22} {:<28} cases={} max_ratio={:.6} min_slack={:.3e}",
            if ok { "PASS" } else { "FAIL" },
            line.name,
            line.bound,
            line.check.cases,
            line.check.max_ratio,
            line.check.min_slack
        )
        .unwrap();
    }
    Ok(Outcome { output: out, manifest, failed })
}

pub fn sample_complexity(settings: &Settings) -> Result<Outcome> {
    let mut run = Run::new("sample-complexity", settings);
    let seed: u64 = run.reader.parse("seed", 0);
    let m: usize = run.reader.parse("m", 1000);
    let classes: usize = run.reader.parse("classes", 16);
    let delta: f64 = run.reader.parse("delta", 0.1);
    let trials: usize = run.reader.parse("trials", 200);
    if !classes.is_power_of_two() || !(2..=1 << 20).contains(&classes) {
        run.reader.error(format!("`classes` must be a power of two between 2 and 2^20, got {classes}"));
    }
    if m == 0 {
        run.reader.error("`m` must be at least 1");
    }
    if !(delta > 0.0 && delta < 1.0) {
        run.reader.error(format!("`delta` must lie in (0, 1), got {delta}"));
    }
    let (_, manifest) = run.finish()?;
    let n = classes.trailing_zeros() as usize;
    let problem = coverage_problem(n)?;
    let report = sample_complexity_trial(&problem, &labelings(n), m, delta, trials, seed)?;
    let mut out = String::from("variant,bound,violations,trials,violation_rate,max_deviation\n");
    writeln!(
        out,
        "offset-half,{},{},{},{},{}",
        report.bound_half,
        report.violations_half,
        trials,
        report.violation_rate_half(),
        report.max_deviation_half
    )
    .unwrap();
    match report.bound_zero {
        Some(b) => writeln!(
            out,
            "offset-zero,{b},{},{},{},{}",
            report.violations_zero,
            trials - report.skipped_zero,
            report.violation_rate_zero().unwrap_or(0.0),
            report.max_deviation_zero
        )
        .unwrap(),
        None => {
            out.push_str("# offset-zero skipped: m is too small for its bound\n");
        }
    }
    Ok(Outcome { output: out, manifest, failed: false })
}

pub fn dispatch(command: &str, settings: &Settings) -> Result<Outcome> {
    match command {
        "banditify" => banditify(settings),
        "train" => train(settings),
        "eval" => eval(settings),
        "eval-ips" => eval_ips(settings),
        "experiment" => experiment(settings),
        "online" => online(settings),
        "regret-check" => regret_check(settings),
        "sample-complexity" => sample_complexity(settings),
        other => bail!("unknown command `{other}`"),
    }
}
