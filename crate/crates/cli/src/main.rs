use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use slimrnn_cli::bench::{self, BenchSpec};
use slimrnn_cli::config::ExperimentConfig;
use slimrnn_cli::experiment::{self, METRICS_FILE};
use slimrnn_cli::gradcheck::{self, GradcheckSpec};
use slimrnn_cli::params;
use slimrnn_cli::sweep::{self, SweepSpec, SUMMARY_FILE};
use slimrnn_core::cells::CellVariant;
use slimrnn_core::numerics::Activation;

#[derive(Parser)]
#[command(name = "slimrnn", version, about = "Train and compare LSTM and slim LSTM variants")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration; writes metrics.csv, model.ckpt and config.txt.
    Train(RunArgs),
    /// Cross product over comma-separated --variant, --hidden, --eta, --forget.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Cells trained in parallel.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Compare BPTT gradients with finite differences on small random nets.
    Gradcheck(GradcheckArgs),
    /// Print adaptive parameter and per-step MAC counts.
    Params(ParamsArgs),
    /// Time forward+backward per step, single-threaded.
    Bench(BenchArgs),
}

/// Values are kept as text and applied through the config-file parser, so
/// flags and files accept exactly the same syntax.
#[derive(Args)]
struct RunArgs {
    /// `key = value` file applied before the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, help = "srnn | lstm | lstm6 | lstm_c6")]
    variant: Option<String>,
    #[arg(long, help = "sigmoid | tanh | relu")]
    activation: Option<String>,
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    embed: Option<String>,
    #[arg(long = "seq-len")]
    seq_len: Option<String>,
    /// Vocabulary size, pad and OOV included.
    #[arg(long)]
    vocab: Option<String>,
    /// Synthetic samples before the 80/20 split.
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    forget: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long, help = "adam | rmsprop | sgd")]
    optimizer: Option<String>,
    #[arg(long, help = "bce | cce")]
    loss: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    bidirectional: bool,
    #[arg(long, help = "synth:<keyword_count|first_token_class|majority_vote> | tsv:<path>")]
    data: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

impl RunArgs {
    fn flags(&self) -> Vec<(&'static str, &str)> {
        let pairs = [
            ("variant", &self.variant),
            ("activation", &self.activation),
            ("hidden", &self.hidden),
            ("embed", &self.embed),
            ("seq-len", &self.seq_len),
            ("vocab", &self.vocab),
            ("samples", &self.samples),
            ("eta", &self.eta),
            ("forget", &self.forget),
            ("epochs", &self.epochs),
            ("batch", &self.batch),
            ("optimizer", &self.optimizer),
            ("loss", &self.loss),
            ("seed", &self.seed),
            ("data", &self.data),
            ("out", &self.out),
        ];
        let mut out: Vec<(&'static str, &str)> = pairs
            .into_iter()
            .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
            .collect();
        if self.bidirectional {
            out.push(("bidirectional", "true"));
        }
        out
    }

    /// Defaults, then the file, then flags except `skip`.
    fn config(&self, skip: &[&str]) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        for (k, v) in self.flags() {
            if !skip.contains(&k) {
                cfg.set(k, v).with_context(|| format!("--{k}"))?;
            }
        }
        Ok(cfg)
    }
}

fn list<T: std::str::FromStr>(flag: &str, text: Option<&str>, default: T) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let Some(text) = text else { return Ok(vec![default]) };
    text.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|e| anyhow::anyhow!("--{flag}: `{s}`: {e}")))
        .collect()
}

#[derive(Args)]
struct GradcheckArgs {
    /// Comma-separated; all variants when omitted.
    #[arg(long)]
    variant: Option<String>,
    /// Comma-separated; relu uses the kink-exclusion rule.
    #[arg(long, default_value = "sigmoid,tanh")]
    activation: String,
    /// Largest input width m (<= 8).
    #[arg(long, default_value_t = 6)]
    embed: usize,
    /// Largest hidden width n (<= 8).
    #[arg(long, default_value_t = 6)]
    hidden: usize,
    /// Longest sequence T (<= 5).
    #[arg(long = "seq-len", default_value_t = 5)]
    seq_len: usize,
    /// Largest batch (<= 3).
    #[arg(long, default_value_t = 3)]
    batch: usize,
    /// Random cases per variant and activation.
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ParamsArgs {
    /// All variants when omitted.
    variant: Option<String>,
    m: Option<usize>,
    n: Option<usize>,
    #[arg(long, conflicts_with = "m")]
    embed: Option<usize>,
    #[arg(long, conflicts_with = "n")]
    hidden: Option<usize>,
    #[arg(long)]
    bidirectional: bool,
    /// One JSON object per line.
    #[arg(long = "json-lines")]
    json_lines: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated; speedups are relative to the first.
    #[arg(long, default_value = "lstm,lstm6,lstm_c6")]
    variant: String,
    #[arg(long, default_value_t = 32)]
    embed: usize,
    #[arg(long, default_value_t = 100)]
    hidden: usize,
    #[arg(long = "seq-len", default_value_t = 500)]
    seq_len: usize,
    #[arg(long, default_value_t = 1)]
    batch: usize,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    /// Sequences per epoch for the per-epoch figure.
    #[arg(long, default_value_t = 25_000)]
    samples: usize,
    #[arg(long, default_value = "sigmoid")]
    activation: Activation,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn train(args: &RunArgs) -> Result<()> {
    let cfg = args.config(&[])?;
    let outcome = experiment::cmd_train(&cfg)?;
    for r in &outcome.records {
        println!("{}", experiment::format_record(r));
    }
    if let Some(best) = outcome.best() {
        println!("best test_acc {} at epoch {}", best.test_acc, best.epoch);
    }
    println!("wrote {}", outcome.dir.join(METRICS_FILE).display());
    Ok(())
}

fn run_sweep(args: &RunArgs, workers: usize) -> Result<bool> {
    let gridded = ["variant", "hidden", "eta", "forget"];
    let base = args.config(&gridded)?;
    let spec = SweepSpec {
        variants: list("variant", args.variant.as_deref(), base.variant)?,
        hiddens: list("hidden", args.hidden.as_deref(), base.hidden)?,
        etas: list("eta", args.eta.as_deref(), base.eta)?,
        forgets: list("forget", args.forget.as_deref(), base.forget)?,
    };
    if workers == 0 {
        bail!("--workers must be >= 1");
    }
    let results = sweep::cmd_sweep(&base, &spec, workers)?;
    print!("{}", sweep::pivot(&results));
    let mut ok = true;
    for r in &results {
        if let Err(msg) = &r.outcome {
            eprintln!("cell {} failed: {msg}", r.cell.dir_name());
            ok = false;
        }
    }
    println!("wrote {}", base.out.join(SUMMARY_FILE).display());
    Ok(ok)
}

fn run_gradcheck(a: &GradcheckArgs) -> Result<bool> {
    let spec = GradcheckSpec {
        variants: match &a.variant {
            Some(v) => list("variant", Some(v), CellVariant::Lstm)?,
            None => CellVariant::ALL.to_vec(),
        },
        activations: list("activation", Some(&a.activation), Activation::Sigmoid)?,
        max_m: a.embed,
        max_n: a.hidden,
        max_t: a.seq_len,
        max_batch: a.batch,
        seeds: a.seeds,
        base_seed: a.seed,
    };
    let reports = gradcheck::run(&spec, None)?;
    print!("{}", gradcheck::format_report(&reports));
    Ok(reports.iter().all(|r| r.passed))
}

fn run_params(a: &ParamsArgs) -> Result<()> {
    let variants = match &a.variant {
        Some(v) => vec![v.parse()?],
        None => CellVariant::ALL.to_vec(),
    };
    let m = a.m.or(a.embed).unwrap_or(32);
    let n = a.n.or(a.hidden).unwrap_or(100);
    for v in variants {
        let r = params::report(v, m, n, a.bidirectional);
        println!("{}", if a.json_lines { r.json_line() } else { r.text_line() });
    }
    Ok(())
}

fn run_bench(a: &BenchArgs) -> Result<()> {
    let spec = BenchSpec {
        variants: list("variant", Some(&a.variant), CellVariant::Lstm)?,
        m: a.embed,
        n: a.hidden,
        t: a.seq_len,
        batch: a.batch,
        reps: a.reps,
        epoch_samples: a.samples,
        activation: a.activation,
        seed: a.seed,
    };
    let results = bench::run(&spec)?;
    print!("{}", bench::format_results(&spec, &results));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Command::Train(args) => train(args).map(|()| true),
        Command::Sweep { run, workers } => run_sweep(run, *workers),
        Command::Gradcheck(a) => run_gradcheck(a),
        Command::Params(a) => run_params(a).map(|()| true),
        Command::Bench(a) => run_bench(a).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
