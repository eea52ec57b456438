use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context as _, Result};
use clap::{Args, Parser, Subcommand};
use offtree::commands::{dispatch, Outcome};
use offtree::config::{strip_manifest_keys, Settings};

/// Offset tree reductions for learning from logged bandit feedback.
#[derive(Parser)]
#[command(name = "offtree", version)]
struct Cli {
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `key=value` settings file; a run manifest works too. Flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file. The manifest goes to `<out>.manifest`; without this,
    /// output goes to stdout and the manifest to stderr.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct TrainFlags {
    /// offset-tree, binary-offset, regression or iwc.
    #[arg(long)]
    method: Option<String>,
    /// perceptron, stump or table.
    #[arg(long)]
    learner: Option<String>,
    /// least-squares or table.
    #[arg(long)]
    regressor: Option<String>,
    /// per-action or single.
    #[arg(long)]
    regression_mode: Option<String>,
    /// Rejection-sampling draws per training set.
    #[arg(long)]
    draws: Option<String>,
    /// Fixed importance-weight normalizer instead of the largest weight.
    #[arg(long)]
    cap: Option<String>,
    /// Append a one-hot draw index to each costed example.
    #[arg(long)]
    tag_draws: bool,
    #[arg(long)]
    offset: Option<String>,
    /// per-node or shared.
    #[arg(long)]
    node_mode: Option<String>,
    /// Comma-separated permutation of action numbers.
    #[arg(long)]
    leaf_order: Option<String>,
}

impl TrainFlags {
    fn pairs(self, out: &mut Vec<(&'static str, String)>) {
        push(out, "method", self.method);
        push(out, "learner", self.learner);
        push(out, "regressor", self.regressor);
        push(out, "regression-mode", self.regression_mode);
        push(out, "draws", self.draws);
        push(out, "cap", self.cap);
        push_flag(out, "tag-draws", self.tag_draws);
        push(out, "offset", self.offset);
        push(out, "node-mode", self.node_mode);
        push(out, "leaf-order", self.leaf_order);
    }
}

#[derive(Subcommand)]
enum Command {
    /// Turn a multiclass file into a partial-label log.
    Banditify {
        #[arg(long)]
        input: Option<String>,
        /// `uniform` or k comma-separated probabilities.
        #[arg(long)]
        propensity: Option<String>,
    },
    /// Train a policy from a partial-label log and write the model JSON.
    Train {
        #[arg(long)]
        log: Option<String>,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Error rate of a model on a multiclass file.
    Eval {
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        data: Option<String>,
    },
    /// Inverse-propensity estimate of a model's value on a held-out log.
    EvalIps {
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        log: Option<String>,
    },
    /// Banditified multiclass experiment over shared random splits.
    Experiment {
        #[arg(long)]
        data: Option<String>,
        /// Comma-separated method names.
        #[arg(long)]
        methods: Option<String>,
        #[arg(long)]
        splits: Option<String>,
        #[arg(long)]
        train_fraction: Option<String>,
        #[arg(long)]
        propensity: Option<String>,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Epoch-greedy exploration over a multiclass stream.
    Online {
        #[arg(long)]
        data: Option<String>,
        /// agnostic or realizable.
        #[arg(long)]
        schedule: Option<String>,
        #[arg(long)]
        retrain_every: Option<String>,
        /// Log examples without the inverse-propensity correction.
        #[arg(long)]
        unweighted: bool,
        /// Also train on exploit steps.
        #[arg(long)]
        include_exploit: bool,
        #[arg(long)]
        passes: Option<String>,
        #[arg(long)]
        report_every: Option<String>,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Run the enumerated regret-bound suites.
    RegretCheck {
        /// Smaller problem families.
        #[arg(long)]
        quick: bool,
    },
    /// Bound-violation frequency of the two-action deviation bounds.
    SampleComplexity {
        #[arg(long)]
        m: Option<String>,
        /// Size of the classifier set; a power of two.
        #[arg(long)]
        classes: Option<String>,
        #[arg(long)]
        delta: Option<String>,
        #[arg(long)]
        trials: Option<String>,
    },
}

fn push(out: &mut Vec<(&'static str, String)>, key: &'static str, value: Option<String>) {
    if let Some(v) = value {
        out.push((key, v));
    }
}

fn push_flag(out: &mut Vec<(&'static str, String)>, key: &'static str, on: bool) {
    if on {
        out.push((key, "true".into()));
    }
}

impl Command {
    fn into_pairs(self) -> (&'static str, Vec<(&'static str, String)>) {
        let mut out = Vec::new();
        let name = match self {
            Command::Banditify { input, propensity } => {
                push(&mut out, "input", input);
                push(&mut out, "propensity", propensity);
                "banditify"
            }
            Command::Train { log, flags } => {
                push(&mut out, "log", log);
                flags.pairs(&mut out);
                "train"
            }
            Command::Eval { model, data } => {
                push(&mut out, "model", model);
                push(&mut out, "data", data);
                "eval"
            }
            Command::EvalIps { model, log } => {
                push(&mut out, "model", model);
                push(&mut out, "log", log);
                "eval-ips"
            }
            Command::Experiment { data, methods, splits, train_fraction, propensity, flags } => {
                push(&mut out, "data", data);
                push(&mut out, "methods", methods);
                push(&mut out, "splits", splits);
                push(&mut out, "train-fraction", train_fraction);
                push(&mut out, "propensity", propensity);
                flags.pairs(&mut out);
                "experiment"
            }
            Command::Online {
                data,
                schedule,
                retrain_every,
                unweighted,
                include_exploit,
                passes,
                report_every,
                flags,
            } => {
                push(&mut out, "data", data);
                push(&mut out, "schedule", schedule);
                push(&mut out, "retrain-every", retrain_every);
                push_flag(&mut out, "unweighted", unweighted);
                push_flag(&mut out, "include-exploit", include_exploit);
                push(&mut out, "passes", passes);
                push(&mut out, "report-every", report_every);
                flags.pairs(&mut out);
                "online"
            }
            Command::RegretCheck { quick } => {
                push_flag(&mut out, "quick", quick);
                "regret-check"
            }
            Command::SampleComplexity { m, classes, delta, trials } => {
                push(&mut out, "m", m);
                push(&mut out, "classes", classes);
                push(&mut out, "delta", delta);
                push(&mut out, "trials", trials);
                "sample-complexity"
            }
        };
        (name, out)
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    let (command, pairs) = cli.command.into_pairs();
    let mut settings = match &cli.config {
        Some(path) => {
            let mut s = Settings::load(path)?;
            strip_manifest_keys(&mut s, command).with_context(|| format!("config {}", path.display()))?;
            s
        }
        None => Settings::default(),
    };
    for (k, v) in pairs {
        settings.set(k, v);
    }
    if let Some(seed) = cli.seed {
        settings.set("seed", seed.to_string());
    }
    let outcome = dispatch(command, &settings)?;
    match &cli.out {
        Some(path) => {
            std::fs::write(path, &outcome.output).with_context(|| format!("writing {}", path.display()))?;
            let mut manifest_path = path.clone().into_os_string();
            manifest_path.push(".manifest");
            let manifest_path = PathBuf::from(manifest_path);
            std::fs::write(&manifest_path, outcome.manifest.render())
                .with_context(|| format!("writing {}", manifest_path.display()))?;
        }
        None => {
            print!("{}", outcome.output);
            eprint!("{}", outcome.manifest.render());
        }
    }
    Ok(outcome)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(o) if o.failed => ExitCode::from(1),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
