//! Monte-Carlo sweeps: per-trial records, per-cell aggregates and their
//! CSV/JSON files.
//!
//! Seeds: the instance of trial `t` in cell `(n, m, k, snr)` is generated
//! from `derive_seed(master, [n, m, k, snr bits, t])`, shared by every
//! algorithm, and each solver draws from `derive_seed(instance, [algo])`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{load_model, EstimatorModel, OracleEstimator};
use crate::gespar::{gespar, GesparConfig};
use crate::pred::{self, tse, PredConfig};
use crate::recovery::Recovery;
use crate::rng::{self, derive_seed};
use crate::signal::{Instance, Prior};
use crate::support::{recovery_metrics, ues};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algo {
    #[serde(rename = "pred")]
    Pred,
    #[serde(rename = "gespar")]
    Gespar,
    /// TSE on the shift-normalized true support.
    #[serde(rename = "tse-oracle")]
    TseOracle,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Pred => "pred",
            Algo::Gespar => "gespar",
            Algo::TseOracle => "tse-oracle",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pred" => Ok(Algo::Pred),
            "gespar" => Ok(Algo::Gespar),
            "tse-oracle" => Ok(Algo::TseOracle),
            other => Err(Error::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// How the DFT length follows the signal length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MRule {
    /// `m = n + 1`.
    #[serde(rename = "n+1")]
    PlusOne,
    /// `m = 2n`.
    #[serde(rename = "2n")]
    Double,
}

impl MRule {
    pub fn m(self, n: usize) -> usize {
        match self {
            MRule::PlusOne => n + 1,
            MRule::Double => 2 * n,
        }
    }
}

/// Where PRED gets its probability vector.
#[derive(Debug, Clone)]
pub enum EstimatorSource {
    /// The ideal output for the instance's true support.
    Oracle,
    Model(Arc<EstimatorModel>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub algos: Vec<Algo>,
    pub n: Vec<usize>,
    pub m_rule: MRule,
    pub k_min: usize,
    pub k_max: usize,
    /// `inf` for noiseless cells.
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub prior: Prior,
    pub model: Option<PathBuf>,
    pub oracle: bool,
    pub out: PathBuf,
    pub master_seed: u64,
    pub threads: Option<usize>,
    /// Record wall times; when false every `wall_ms` is 0 and the output
    /// files depend on the seeds only.
    pub timing: bool,
    pub pred_kappa: usize,
    pub gespar_kappa: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig::desk()
    }
}

impl SweepConfig {
    /// Desk-scale sweep: `n ∈ {32, 64}`, `k ∈ 2..=10`, SNR `{30, ∞}`.
    pub fn desk() -> Self {
        SweepConfig {
            algos: vec![Algo::Pred, Algo::Gespar],
            n: vec![32, 64],
            m_rule: MRule::PlusOne,
            k_min: 2,
            k_max: 10,
            snr_db: vec![30.0, f64::INFINITY],
            trials: 100,
            prior: Prior::Uniform,
            model: None,
            oracle: true,
            out: PathBuf::from("results"),
            master_seed: 0,
            threads: None,
            timing: true,
            pred_kappa: 100,
            gespar_kappa: 500,
        }
    }

    /// The full-scale sweep: `n ∈ {256, 512, 768}`, `m = n + 1`, SNR `{15, 30}`.
    pub fn paper() -> Self {
        SweepConfig {
            n: vec![256, 512, 768],
            k_max: 30,
            snr_db: vec![15.0, 30.0],
            ..SweepConfig::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.algos.is_empty() || self.n.is_empty() || self.snr_db.is_empty() {
            return Err(Error::Config("algos, n and snr_db must be nonempty".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.k_min == 0 || self.k_min > self.k_max {
            return Err(Error::Config(format!("invalid k range {}..={}", self.k_min, self.k_max)));
        }
        if self.snr_db.iter().any(|s| s.is_nan()) {
            return Err(Error::Config("snr_db contains NaN".into()));
        }
        if self.pred_kappa == 0 || self.gespar_kappa == 0 {
            return Err(Error::Config("iteration limits must be positive".into()));
        }
        Ok(())
    }

    /// Checks that PRED has an estimator: a model path or the oracle flag.
    pub fn validate_estimator(&self) -> Result<()> {
        if self.algos.contains(&Algo::Pred) {
            if self.model.is_none() && !self.oracle {
                return Err(Error::Config("pred needs a model path or the oracle flag".into()));
            }
            if self.oracle && self.k_min < 2 {
                return Err(Error::Config("the oracle estimator needs k >= 2".into()));
            }
        }
        Ok(())
    }

    /// Cells in output order: algorithm, then n, then k, then SNR.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &algo in &self.algos {
            for &n in &self.n {
                for k in self.k_min..=self.k_max {
                    for &snr_db in &self.snr_db {
                        out.push(Cell {
                            algo,
                            n,
                            m: self.m_rule.m(n),
                            k,
                            snr_db,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub algo: Algo,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub snr_db: f64,
}

impl Cell {
    pub fn instance_seed(&self, master_seed: u64, trial: usize) -> u64 {
        derive_seed(
            master_seed,
            &[self.n as u64, self.m as u64, self.k as u64, self.snr_db.to_bits(), trial as u64],
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub algo: Algo,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub snr_db: f64,
    pub trial: usize,
    pub hit: u8,
    pub soft: f64,
    pub eta: usize,
    pub residual_l1: f64,
    pub objective: f64,
    pub wall_ms: f64,
    pub master_seed: u64,
    pub trial_seed: u64,
    /// Empty unless the solver failed.
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub algo: Algo,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub snr_db: f64,
    pub trials: usize,
    pub hit_rate: f64,
    pub soft_rate: f64,
    pub mean_eta: f64,
    pub mean_wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct TrialParams {
    pub cell: Cell,
    pub prior: Prior,
    pub trial: usize,
    pub master_seed: u64,
    pub pred_kappa: usize,
    pub gespar_kappa: usize,
    pub timing: bool,
}

/// Run one algorithm on an instance. The oracle paths read the instance's
/// true support.
pub fn solve(
    algo: Algo,
    inst: &Instance,
    k: usize,
    estimator: &EstimatorSource,
    pred_kappa: usize,
    gespar_kappa: usize,
    solver_seed: u64,
) -> Result<Recovery> {
    let p = &inst.problem;
    let n = p.n();
    let mut rng = rng::stream(solver_seed);
    match algo {
        Algo::Gespar => {
            let cfg = GesparConfig {
                kappa_iter: gespar_kappa,
                ..GesparConfig::default()
            };
            gespar(p, k, &cfg, &mut rng)
        }
        Algo::Pred => {
            let cfg = PredConfig {
                kappa_iter: pred_kappa,
                ..PredConfig::default()
            };
            match estimator {
                EstimatorSource::Oracle => {
                    let oracle = OracleEstimator::new(inst.signal.support(), n)?;
                    pred::pred(p, k, &oracle, &cfg, &mut rng)
                }
                EstimatorSource::Model(model) => pred::pred(p, k, model.as_ref(), &cfg, &mut rng),
            }
        }
        Algo::TseOracle => {
            let alpha = ues(inst.signal.support(), n)?.alpha;
            let out = tse(p, k, &alpha, &GesparConfig::default().gn, &mut rng)?;
            let r1 = crate::gn::residual_l1(&out.x, &out.support, p)?;
            Ok(Recovery {
                x: out.x,
                support: out.support,
                objective: out.objective,
                residual_l1: r1,
                eta: 2,
                iterations: 1,
                converged: r1 <= p.default_epsilon(),
            })
        }
    }
}

/// Generate the trial's instance, run the solver and score it. Solver
/// failures come back as records with `hit = 0` and the error text.
pub fn run_trial(params: &TrialParams, estimator: &EstimatorSource) -> Result<TrialRecord> {
    let cell = params.cell;
    let trial_seed = cell.instance_seed(params.master_seed, params.trial);
    let inst = Instance::generate(params.prior, cell.n, cell.m, cell.k, cell.snr_db, trial_seed)?;
    let solver_seed = derive_seed(trial_seed, &[rng::tag(cell.algo.name())]);

    let start = Instant::now();
    let outcome = solve(
        cell.algo,
        &inst,
        cell.k,
        estimator,
        params.pred_kappa,
        params.gespar_kappa,
        solver_seed,
    );
    let wall_ms = if params.timing {
        start.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    };

    let mut rec = TrialRecord {
        algo: cell.algo,
        n: cell.n,
        m: cell.m,
        k: cell.k,
        snr_db: cell.snr_db,
        trial: params.trial,
        hit: 0,
        soft: 0.0,
        eta: 0,
        residual_l1: f64::NAN,
        objective: f64::NAN,
        wall_ms,
        master_seed: params.master_seed,
        trial_seed,
        error: String::new(),
    };
    match outcome.and_then(|r| recovery_metrics(&r.support, inst.signal.support(), cell.k).map(|m| (r, m))) {
        Ok((r, m)) => {
            rec.hit = m.hit as u8;
            rec.soft = m.soft;
            rec.eta = r.eta;
            rec.residual_l1 = r.residual_l1;
            rec.objective = r.objective;
        }
        Err(e) => rec.error = e.to_string(),
    }
    Ok(rec)
}

pub fn aggregate(cells: &[Cell], records: &[TrialRecord]) -> Vec<AggregateRow> {
    cells
        .iter()
        .map(|c| {
            let rs: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.algo == c.algo && r.n == c.n && r.m == c.m && r.k == c.k && r.snr_db.to_bits() == c.snr_db.to_bits())
                .collect();
            let t = rs.len().max(1) as f64;
            AggregateRow {
                algo: c.algo,
                n: c.n,
                m: c.m,
                k: c.k,
                snr_db: c.snr_db,
                trials: rs.len(),
                hit_rate: rs.iter().map(|r| r.hit as f64).sum::<f64>() / t,
                soft_rate: rs.iter().map(|r| r.soft).sum::<f64>() / t,
                mean_eta: rs.iter().map(|r| r.eta as f64).sum::<f64>() / t,
                mean_wall_ms: rs.iter().map(|r| r.wall_ms).sum::<f64>() / t,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub records: Vec<TrialRecord>,
    pub aggregates: Vec<AggregateRow>,
}

pub const TRIALS_FILE: &str = "trials.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const SUMMARY_FILE: &str = "summary.json";

fn prepare_output(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"").map_err(|e| Error::io(&probe, e))?;
    fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))
}

fn load_estimator(cfg: &SweepConfig) -> Result<EstimatorSource> {
    if !cfg.algos.contains(&Algo::Pred) || cfg.oracle {
        return Ok(EstimatorSource::Oracle);
    }
    let path = cfg.model.as_ref().expect("validated");
    let model = load_model(path)?;
    for &n in &cfg.n {
        let m = cfg.m_rule.m(n);
        if model.arch.n != n || model.arch.m != m {
            return Err(Error::Config(format!(
                "model expects (n, m) = ({}, {}), sweep has ({n}, {m})",
                model.arch.n, model.arch.m
            )));
        }
    }
    Ok(EstimatorSource::Model(Arc::new(model)))
}

/// Run every trial of every cell without writing files. `cfg.model` and
/// `cfg.oracle` are ignored in favor of `estimator`.
pub fn run_cells(cfg: &SweepConfig, estimator: &EstimatorSource) -> Result<SweepOutcome> {
    cfg.validate()?;
    let cells = cfg.cells();
    let jobs: Vec<TrialParams> = cells
        .iter()
        .flat_map(|&cell| {
            (0..cfg.trials).map(move |trial| TrialParams {
                cell,
                prior: cfg.prior,
                trial,
                master_seed: cfg.master_seed,
                pred_kappa: cfg.pred_kappa,
                gespar_kappa: cfg.gespar_kappa,
                timing: cfg.timing,
            })
        })
        .collect();
    let work = || jobs.par_iter().map(|p| run_trial(p, estimator)).collect::<Result<Vec<_>>>();
    let records = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let aggregates = aggregate(&cells, &records);
    Ok(SweepOutcome { records, aggregates })
}

#[derive(Serialize)]
struct Summary<'a> {
    /// The sweep settings without `out` and `threads`, which do not affect results.
    config: serde_json::Value,
    total_trials: usize,
    failed_trials: usize,
    cells: &'a [AggregateRow],
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Config(format!("{other:?}")),
    })?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Run the sweep and write `trials.csv`, `aggregate.csv` and `summary.json`
/// into `cfg.out`. The output directory is checked before any trial runs.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutcome> {
    cfg.validate()?;
    cfg.validate_estimator()?;
    prepare_output(&cfg.out)?;
    let estimator = load_estimator(cfg)?;
    let outcome = run_cells(cfg, &estimator)?;
    write_csv(&cfg.out.join(TRIALS_FILE), &outcome.records)?;
    write_csv(&cfg.out.join(AGGREGATE_FILE), &outcome.aggregates)?;
    let mut config = serde_json::to_value(cfg)?;
    if let Some(map) = config.as_object_mut() {
        map.remove("out");
        map.remove("threads");
    }
    let summary = Summary {
        config,
        total_trials: outcome.records.len(),
        failed_trials: outcome.records.iter().filter(|r| !r.error.is_empty()).count(),
        cells: &outcome.aggregates,
    };
    let path = cfg.out.join(SUMMARY_FILE);
    let json = serde_json::to_string_pretty(&summary)?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(outcome)
}
