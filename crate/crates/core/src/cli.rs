//! Command-line entry point. Exit status: 0 success, 1 usage error,
//! 2 runtime error.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bench::{self, Algo, EstimatorSource, SweepConfig};
use crate::error::{Error, Result};
use crate::estimator::{inspect_model, load_model, save_model, train_with_log, Arch, LrSchedule, TrainConfig};
use crate::rng::{self, derive_seed};
use crate::signal::{Instance, Prior};
use crate::support::recovery_metrics;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sprf", version, about = "Sparse phase retrieval from Fourier magnitudes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate problem instances as JSON (one document per line).
    Gen(GenArgs),
    /// Train a support estimator from a TOML config.
    Train(TrainArgs),
    /// Recover one instance and print the estimate and metrics as JSON.
    Recover(RecoverArgs),
    /// Run a Monte-Carlo sweep and write trials.csv, aggregate.csv, summary.json.
    Bench(BenchArgs),
    /// Print the JSON header of a model file.
    InspectModel(InspectArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    /// DFT length; defaults to n + 1.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    k: usize,
    /// SNR in dB; `inf` for noiseless.
    #[arg(long, default_value = "inf")]
    snr_db: f64,
    #[arg(long, default_value = "uniform")]
    prior: Prior,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Model file to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON-lines batch log; defaults to `<out>.log.jsonl`.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlgoArg {
    Pred,
    Gespar,
    TseOracle,
}

impl From<AlgoArg> for Algo {
    fn from(a: AlgoArg) -> Algo {
        match a {
            AlgoArg::Pred => Algo::Pred,
            AlgoArg::Gespar => Algo::Gespar,
            AlgoArg::TseOracle => Algo::TseOracle,
        }
    }
}

#[derive(Debug, Args)]
struct RecoverArgs {
    /// Instance file written by `gen`.
    instance: PathBuf,
    /// Line of a multi-instance file, 0-based.
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long, value_enum, default_value = "pred")]
    algo: AlgoArg,
    #[arg(long, conflicts_with = "oracle")]
    model: Option<PathBuf>,
    /// Use the instance's true support as the estimator output.
    #[arg(long)]
    oracle: bool,
    /// Sparsity to recover; defaults to the instance's.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    Desk,
    Paper,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base settings when no config file is given.
    #[arg(long, value_enum, default_value = "desk", conflicts_with = "config")]
    preset: Preset,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replaces the algorithm list; repeat or separate with commas.
    #[arg(long, value_enum, value_delimiter = ',')]
    algo: Vec<AlgoArg>,
    #[arg(long, conflicts_with = "oracle")]
    model: Option<PathBuf>,
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Debug, Args)]
struct InspectArgs {
    model: PathBuf,
}

/// Flat TOML schema of `train --config`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainFile {
    pub n: usize,
    /// Defaults to n + 1.
    pub m: Option<usize>,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub unfold_steps: usize,
    pub k1: usize,
    pub k2: usize,
    pub batch_size: usize,
    pub batches: usize,
    pub epochs: usize,
    /// `inf` for noiseless training.
    pub snr_db: f64,
    pub lr_base: f64,
    pub lr_factor: f64,
    pub lr_period: usize,
    pub prior: Prior,
    pub seed: u64,
    pub rms_decay: f64,
    pub rms_eps: f64,
    pub grad_chunks: usize,
    pub out: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl Default for TrainFile {
    fn default() -> Self {
        let arch = Arch::desk(32, 33);
        let t = TrainConfig::desk();
        TrainFile {
            n: arch.n,
            m: None,
            hidden_size: arch.hidden_size,
            num_layers: arch.num_layers,
            unfold_steps: arch.unfold_steps,
            k1: t.k1,
            k2: t.k2,
            batch_size: t.batch_size,
            batches: t.batches,
            epochs: t.epochs,
            snr_db: t.snr_db,
            lr_base: t.lr.base,
            lr_factor: t.lr.factor,
            lr_period: t.lr.period,
            prior: t.prior,
            seed: t.seed,
            rms_decay: t.rms_decay,
            rms_eps: t.rms_eps,
            grad_chunks: t.grad_chunks,
            out: None,
            log: None,
            threads: None,
        }
    }
}

impl TrainFile {
    pub fn arch(&self) -> Arch {
        Arch {
            n: self.n,
            m: self.m.unwrap_or(self.n + 1),
            hidden_size: self.hidden_size,
            num_layers: self.num_layers,
            unfold_steps: self.unfold_steps,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            k1: self.k1,
            k2: self.k2,
            batch_size: self.batch_size,
            batches: self.batches,
            epochs: self.epochs,
            snr_db: self.snr_db,
            lr: LrSchedule {
                base: self.lr_base,
                factor: self.lr_factor,
                period: self.lr_period,
            },
            prior: self.prior,
            seed: self.seed,
            rms_decay: self.rms_decay,
            rms_eps: self.rms_eps,
            grad_chunks: self.grad_chunks,
        }
    }
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => {
            let mut stdout = io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(f),
        None => f(),
    }
}

fn gen(a: GenArgs) -> Result<()> {
    let m = a.m.unwrap_or(a.n + 1);
    let mut text = String::new();
    for i in 0..a.count {
        let seed = derive_seed(a.seed, &[rng::tag("gen"), i as u64]);
        let inst = Instance::generate(a.prior, a.n, m, a.k, a.snr_db, seed)?;
        text.push_str(&inst.to_json()?);
        text.push('\n');
    }
    write_output(a.out.as_deref(), &text)
}

fn train(a: TrainArgs) -> Result<()> {
    let file: TrainFile = read_toml(&a.config)?;
    let mut cfg = file.train_config();
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let out = a
        .out
        .or(file.out.clone())
        .ok_or_else(|| Error::Config("no model path: pass --out or set `out` in the config".into()))?;
    let log_path = a.log.or(file.log.clone()).unwrap_or_else(|| {
        let mut s = out.clone().into_os_string();
        s.push(".log.jsonl");
        PathBuf::from(s)
    });
    let arch = file.arch();
    cfg.validate(&arch)?;
    let log = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log = BufWriter::new(log);
    let mut log_err = None;
    let (model, report) = with_threads(a.threads.or(file.threads), || {
        train_with_log(&cfg, arch, |b| {
            if log_err.is_none() {
                let line = serde_json::to_string(b).expect("batch log serializes");
                if let Err(e) = writeln!(log, "{line}") {
                    log_err = Some(e);
                }
            }
        })
    })?;
    if let Some(e) = log_err {
        return Err(Error::io(&log_path, e));
    }
    log.flush().map_err(|e| Error::io(&log_path, e))?;
    save_model(&model, &out)?;
    let epochs: Vec<String> = report.epoch_losses.iter().map(|l| format!("{l:.6}")).collect();
    eprintln!("epoch losses: {}", epochs.join(" "));
    eprintln!("wrote {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct RecoverReport {
    algo: Algo,
    n: usize,
    m: usize,
    k: usize,
    /// 1-based.
    support: Vec<usize>,
    x: Vec<f64>,
    objective: f64,
    residual_l1: f64,
    eta: usize,
    iterations: usize,
    converged: bool,
    hit: u8,
    soft: f64,
}

fn recover(a: RecoverArgs) -> Result<()> {
    let text = fs::read_to_string(&a.instance).map_err(|e| Error::io(&a.instance, e))?;
    let line = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .nth(a.index)
        .ok_or_else(|| Error::InvalidInput(format!("no instance at index {}", a.index)))?;
    let inst = Instance::from_json(line)?;
    let algo = Algo::from(a.algo);
    let k = a.k.unwrap_or(inst.signal.k());
    let estimator = match (&a.model, algo) {
        (Some(path), Algo::Pred) => {
            let model = load_model(path)?;
            if model.arch.n != inst.problem.n() || model.arch.m != inst.problem.m() {
                return Err(Error::Config(format!(
                    "model expects (n, m) = ({}, {}), instance has ({}, {})",
                    model.arch.n,
                    model.arch.m,
                    inst.problem.n(),
                    inst.problem.m()
                )));
            }
            EstimatorSource::Model(Arc::new(model))
        }
        (None, Algo::Pred) if !a.oracle => {
            return Err(Error::Config("pred needs --model or --oracle".into()));
        }
        _ => EstimatorSource::Oracle,
    };
    let seed = derive_seed(a.seed, &[rng::tag(algo.name())]);
    let r = bench::solve(algo, &inst, k, &estimator, 100, 500, seed)?;
    let metrics = recovery_metrics(&r.support, inst.signal.support(), k).ok();
    let report = RecoverReport {
        algo,
        n: inst.problem.n(),
        m: inst.problem.m(),
        k,
        support: r.support.one_based(),
        x: r.x,
        objective: r.objective,
        residual_l1: r.residual_l1,
        eta: r.eta,
        iterations: r.iterations,
        converged: r.converged,
        hit: metrics.map_or(0, |m| m.hit as u8),
        soft: metrics.map_or(0.0, |m| m.soft),
    };
    write_output(a.out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))
}

fn bench_cmd(a: BenchArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(path) => read_toml::<SweepConfig>(path)?,
        None => match a.preset {
            Preset::Desk => SweepConfig::desk(),
            Preset::Paper => SweepConfig::paper(),
        },
    };
    if let Some(seed) = a.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = a.out {
        cfg.out = out;
    }
    if !a.algo.is_empty() {
        cfg.algos = a.algo.into_iter().map(Algo::from).collect();
    }
    if let Some(model) = a.model {
        cfg.model = Some(model);
        cfg.oracle = false;
    }
    if a.oracle {
        cfg.oracle = true;
    }
    if a.threads.is_some() {
        cfg.threads = a.threads;
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    let outcome = bench::run_sweep(&cfg)?;
    let failed = outcome.records.iter().filter(|r| !r.error.is_empty()).count();
    eprintln!(
        "{} trials in {} cells ({failed} failed), results in {}",
        outcome.records.len(),
        outcome.aggregates.len(),
        cfg.out.display()
    );
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train(a),
        Command::Recover(a) => recover(a),
        Command::Bench(a) => bench_cmd(a),
        Command::InspectModel(a) => write_output(None, &(inspect_model(&a.model)? + "\n")),
    }
}

/// Parse `args` (program name first), run the command and return the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}
