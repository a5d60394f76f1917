//! Greedy sparse phase retrieval (GESPAR): 2-opt local search over supports
//! with DGN inner solves and random restarts.
//!
//! Supports are constrained by two index sets read off the autocorrelation
//! `a = Re IDFT(y)`: `v1` (always in the support) and `v2` (the allowed
//! universe). Both are expressed for the shift-normalized representative,
//! i.e. the support moved so that its smallest index is 0.

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::gn::{self, GnConfig};
use crate::recovery::{Best, Recovery};
use crate::signal::PhaseProblem;
use crate::support::{Support, hard_threshold};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportConstraints {
    pub v1: Support,
    pub v2: Support,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GesparConfig {
    pub kappa_iter: usize,
    /// Residual threshold; `None` uses [`PhaseProblem::default_epsilon`].
    pub epsilon: Option<f64>,
    /// Relative autocorrelation threshold; `None` uses `10^(-snr/20)`.
    pub noise_rel: Option<f64>,
    pub gn: GnConfig,
}

impl Default for GesparConfig {
    fn default() -> Self {
        GesparConfig {
            kappa_iter: 500,
            epsilon: None,
            noise_rel: None,
            gn: GnConfig::default(),
        }
    }
}

/// Smallest relative threshold used for noiseless autocorrelations.
const MIN_NOISE_REL: f64 = 1e-9;
const MAX_RELAXATIONS: usize = 64;

pub fn default_noise_rel(snr_db: f64) -> f64 {
    if snr_db.is_finite() {
        10f64.powf(-snr_db / 20.0).max(MIN_NOISE_REL)
    } else {
        MIN_NOISE_REL
    }
}

/// Constraints from the autocorrelation with the default threshold.
pub fn autocorr_support_sets(problem: &PhaseProblem, k: usize) -> Result<SupportConstraints> {
    autocorr_support_sets_with(problem, k, default_noise_rel(problem.snr_db))
}

/// Constraints from the autocorrelation with relative threshold `noise_rel`.
///
/// Lags `0..n` whose autocorrelation exceeds `noise_rel·max|a|` form `D`,
/// with `L = max D`. When `L <= m - n` no lag in `D` can be an alias of
/// another (a circular lag `l` mixes with `m - l`), so `L` is the true
/// support span: `v1 = {0, L}` and `v2 = {j <= L : j ∈ D, L - j ∈ D}`.
/// Otherwise the span is not identifiable and `v1 = {0}`, `v2 = D`.
/// The threshold is halved until `|v2| >= k`.
pub fn autocorr_support_sets_with(problem: &PhaseProblem, k: usize, noise_rel: f64) -> Result<SupportConstraints> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be positive".into()));
    }
    let n = problem.n();
    let m = problem.m();
    let a = problem.dft().inverse_real(&problem.y);
    let lags = &a[..n.min(m)];
    let peak = lags.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if peak.is_nan() || peak <= 0.0 {
        return Err(Error::DegenerateSignal("autocorrelation is identically zero".into()));
    }

    let mut rel = noise_rel;
    for _ in 0..MAX_RELAXATIONS {
        let threshold = rel * peak;
        let d: Vec<usize> = (0..lags.len()).filter(|&l| lags[l].abs() > threshold).collect();
        let Some(&span) = d.last() else {
            return Err(Error::DegenerateSignal("no autocorrelation lag above threshold".into()));
        };
        let in_d = |l: usize| d.binary_search(&l).is_ok();
        let (mut v1, v2) = if span + n <= m {
            let v2 = Support::new((0..=span).filter(|&j| in_d(j) && in_d(span - j)));
            (Support::new([0, span]), v2)
        } else {
            (Support::new([0]), Support::new(d.iter().copied()))
        };
        if v1.len() > k {
            v1 = Support::new([0]);
        }
        if v2.len() >= k {
            return Ok(SupportConstraints { v1, v2 });
        }
        rel *= 0.5;
    }
    Err(Error::InfeasibleConstraints { v2: 0, k })
}

fn random_support<R: Rng + ?Sized>(cons: &SupportConstraints, k: usize, rng: &mut R) -> Support {
    let free: Vec<usize> = cons.v2.iter().filter(|&j| !cons.v1.contains(j)).collect();
    let need = k - cons.v1.len();
    let picks = index::sample(rng, free.len(), need);
    Support::new(cons.v1.iter().chain(picks.into_iter().map(|i| free[i])))
}

/// GESPAR with the default autocorrelation constraints.
pub fn gespar<R: Rng + ?Sized>(problem: &PhaseProblem, k: usize, cfg: &GesparConfig, rng: &mut R) -> Result<Recovery> {
    gespar_observed(problem, k, cfg, rng, |_, _| {})
}

/// GESPAR, calling `observe(support, objective)` after every DGN execution.
pub fn gespar_observed<R, F>(
    problem: &PhaseProblem,
    k: usize,
    cfg: &GesparConfig,
    rng: &mut R,
    mut observe: F,
) -> Result<Recovery>
where
    R: Rng + ?Sized,
    F: FnMut(&Support, f64),
{
    if cfg.kappa_iter == 0 {
        return Err(Error::InvalidInput("kappa_iter must be at least 1".into()));
    }
    let rel = cfg.noise_rel.unwrap_or_else(|| default_noise_rel(problem.snr_db));
    let cons = autocorr_support_sets_with(problem, k, rel)?;
    let mut cons = cons;
    if cons.v1.len() > k {
        cons.v1 = Support::new([0]);
    }
    if cons.v2.len() < k {
        return Err(Error::InfeasibleConstraints { v2: cons.v2.len(), k });
    }
    let eps = cfg.epsilon.unwrap_or_else(|| problem.default_epsilon());

    let mut best = Best::default();
    let mut eta = 0usize;
    let mut solve = |s: &Support, rng: &mut R, best: &mut Best, eta: &mut usize| -> Result<(Vec<f64>, f64, f64)> {
        let out = gn::dgn(problem, s, &cfg.gn, None, rng)?;
        let r1 = gn::residual_l1(&out.x, s, problem)?;
        *eta += 1;
        observe(s, out.objective);
        best.offer(&out.x, s, out.objective, r1);
        Ok((out.x, out.objective, r1))
    };

    let mut support = random_support(&cons, k, rng);
    let (mut x, mut g, r1) = solve(&support, rng, &mut best, &mut eta)?;
    if r1 <= eps {
        return Ok(best.finish(eta, 0, true));
    }

    let mut iterations = 0;
    let mut converged = false;
    for t in 1..=cfg.kappa_iter {
        iterations = t;
        let removable: Vec<usize> = support.iter().filter(|&i| !cons.v1.contains(i)).collect();
        let addable: Vec<usize> = cons.v2.iter().filter(|&j| !support.contains(j) && !cons.v1.contains(j)).collect();

        if !removable.is_empty() && !addable.is_empty() {
            let out_idx = *removable
                .iter()
                .min_by(|&&a, &&b| x[a].abs().total_cmp(&x[b].abs()))
                .expect("nonempty");
            let grads = gn::gradient_at(&x, &support, &addable, problem)?;
            let in_idx = addable[hard_threshold(&grads, 1)[0]];
            let swapped = Support::new(support.iter().filter(|&i| i != out_idx).chain([in_idx]));
            let (x_new, g_new, r1_new) = solve(&swapped, rng, &mut best, &mut eta)?;
            if g_new < g {
                support = swapped;
                x = x_new;
                g = g_new;
                if r1_new <= eps {
                    converged = true;
                    break;
                }
                continue;
            }
        }

        // local search did not improve: restart from a random support
        support = random_support(&cons, k, rng);
        let (x_new, g_new, r1_new) = solve(&support, rng, &mut best, &mut eta)?;
        x = x_new;
        g = g_new;
        if r1_new <= eps {
            converged = true;
            break;
        }
    }
    Ok(best.finish(eta, iterations, converged))
}
