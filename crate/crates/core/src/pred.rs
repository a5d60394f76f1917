//! Three-stage signal estimation (TSE) and the PRED outer loop.
//!
//! An estimator maps `y` to a probability vector `d` of length `n - 1` whose
//! entry `i` scores position `i + 1` (position 0 is always in the extended
//! support). PRED proposes extended supports from `d`, runs TSE on each and
//! keeps the best pair.

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::gn::{self, GnConfig};
use crate::recovery::{Best, Recovery};
use crate::signal::PhaseProblem;
use crate::support::{hard_threshold, Support};

/// Tolerance on `Σd = 1` for estimator outputs.
pub const SIMPLEX_TOL: f64 = 1e-6;

/// A map from measurements to a probability vector over positions `1..n`.
pub trait SupportEstimator: Sync {
    /// Length of the output vector (`n - 1`).
    fn output_dim(&self) -> usize;

    fn estimate(&self, y: &[f64]) -> Result<Vec<f64>>;
}

pub fn check_simplex(d: &[f64]) -> Result<()> {
    if let Some(i) = d.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::NotOnSimplex(format!("entry {i} is {}", d[i])));
    }
    let sum: f64 = d.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::NotOnSimplex(format!("entries sum to {sum}")));
    }
    Ok(())
}

/// An extended support: always contains position 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtendedSupport {
    pub indices: Support,
}

impl ExtendedSupport {
    pub fn q(&self) -> usize {
        self.indices.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredConfig {
    pub kappa_iter: usize,
    /// Residual threshold; `None` uses [`PhaseProblem::default_epsilon`].
    pub epsilon: Option<f64>,
    pub gn: GnConfig,
}

impl Default for PredConfig {
    fn default() -> Self {
        PredConfig {
            kappa_iter: 100,
            epsilon: None,
            gn: GnConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TseOutcome {
    /// Dense estimate supported on `support`.
    pub x: Vec<f64>,
    pub support: Support,
    pub objective: f64,
    /// Objective of the stage (a) solve on the extended support.
    pub extended_objective: f64,
}

/// Solve on `extended`, keep the `k` largest entries, re-solve on those.
pub fn tse<R: Rng + ?Sized>(
    problem: &PhaseProblem,
    k: usize,
    extended: &Support,
    gn_cfg: &GnConfig,
    rng: &mut R,
) -> Result<TseOutcome> {
    if k == 0 || extended.len() < k {
        return Err(Error::InvalidExtendedSupport(format!(
            "|E| = {} is smaller than k = {k}",
            extended.len()
        )));
    }
    let wide = gn::dgn(problem, extended, gn_cfg, None, rng)?;
    let on_e: Vec<f64> = extended.iter().map(|i| wide.x[i]).collect();
    let support = Support::new(hard_threshold(&on_e, k).into_iter().map(|j| extended.as_slice()[j]));
    let narrow = gn::dgn(problem, &support, gn_cfg, Some(&wide.x), rng)?;
    Ok(TseOutcome {
        x: narrow.x,
        support,
        objective: narrow.objective,
        extended_objective: wide.objective,
    })
}

/// `{0} ∪ {i + 1 : i among the q - 1 largest d[i]}`, ties to the lower index.
pub fn init_extended_with_size(d: &[f64], q: usize) -> Result<ExtendedSupport> {
    if q == 0 || q - 1 > d.len() {
        return Err(Error::InvalidExtendedSupport(format!(
            "q = {q} does not fit n - 1 = {}",
            d.len()
        )));
    }
    let top = hard_threshold(d, q - 1);
    Ok(ExtendedSupport {
        indices: Support::new(std::iter::once(0).chain(top.into_iter().map(|i| i + 1))),
    })
}

/// Draw `q` uniformly from `[2k, min(3k, n)]`.
pub fn sample_q<R: Rng + ?Sized>(k: usize, n: usize, rng: &mut R) -> Result<usize> {
    if k == 0 || 2 * k > n {
        return Err(Error::InvalidExtendedSupport(format!("2k = {} exceeds n = {n}", 2 * k)));
    }
    Ok(rng.random_range(2 * k..=(3 * k).min(n)))
}

pub fn init_extended<R: Rng + ?Sized>(d: &[f64], k: usize, rng: &mut R) -> Result<ExtendedSupport> {
    let q = sample_q(k, d.len() + 1, rng)?;
    init_extended_with_size(d, q)
}

/// Draw `amount` distinct indices with probability proportional to `weights`,
/// sequentially without replacement. When fewer than `amount` weights are
/// positive, the rest are drawn uniformly from the zero-weight indices.
pub fn sample_without_replacement<R: Rng + ?Sized>(weights: &[f64], amount: usize, rng: &mut R) -> Result<Vec<usize>> {
    if amount > weights.len() {
        return Err(Error::InvalidInput(format!(
            "cannot draw {amount} of {} indices",
            weights.len()
        )));
    }
    let mut picked = index::sample_weighted(rng, weights.len(), |i| weights[i], amount)
        .map_err(|e| Error::InvalidInput(format!("sampling weights: {e}")))?
        .into_vec();
    if picked.len() < amount {
        let rest: Vec<usize> = (0..weights.len()).filter(|i| !picked.contains(i)).collect();
        let fill = index::sample(rng, rest.len(), amount - picked.len());
        picked.extend(fill.into_iter().map(|j| rest[j]));
    }
    Ok(picked)
}

/// `{0} ∪ S_t ∪ G` where `G` is drawn from `d` with the entries of `S_t`
/// zeroed, sized so that the result has `q` elements.
pub fn resample_extended<R: Rng + ?Sized>(d: &[f64], current: &Support, k: usize, rng: &mut R) -> Result<ExtendedSupport> {
    if current.len() != k {
        return Err(Error::InvalidExtendedSupport(format!(
            "|S_t| = {} differs from k = {k}",
            current.len()
        )));
    }
    let n = d.len() + 1;
    if current.max().is_some_and(|i| i >= n) {
        return Err(Error::Dimension("support index outside 0..n".into()));
    }
    let q = sample_q(k, n, rng)?;
    let base = Support::new(std::iter::once(0).chain(current.iter()));
    let v: Vec<f64> = (0..d.len()).map(|i| if base.contains(i + 1) { 0.0 } else { d[i] }).collect();
    let mass: f64 = v.iter().sum();
    let p: Vec<f64> = if mass > 0.0 { v.iter().map(|x| x / mass).collect() } else { v };
    // zero-weight padding must not land on the base set either
    let free: Vec<usize> = (0..d.len()).filter(|&i| !base.contains(i + 1)).collect();
    let weights: Vec<f64> = free.iter().map(|&i| p[i]).collect();
    let g = sample_without_replacement(&weights, q - base.len(), rng)?;
    Ok(ExtendedSupport {
        indices: Support::new(base.iter().chain(g.into_iter().map(|j| free[j] + 1))),
    })
}

/// PRED with estimator output `d` computed from `problem.y`.
pub fn pred<R: Rng + ?Sized>(
    problem: &PhaseProblem,
    k: usize,
    estimator: &dyn SupportEstimator,
    cfg: &PredConfig,
    rng: &mut R,
) -> Result<Recovery> {
    let d = estimator.estimate(&problem.y)?;
    pred_with_distribution(problem, k, &d, cfg, rng, |_, _| {})
}

/// PRED from a precomputed `d`, calling `observe(E_t, tse_t)` after each TSE.
pub fn pred_with_distribution<R, F>(
    problem: &PhaseProblem,
    k: usize,
    d: &[f64],
    cfg: &PredConfig,
    rng: &mut R,
    mut observe: F,
) -> Result<Recovery>
where
    R: Rng + ?Sized,
    F: FnMut(&ExtendedSupport, &TseOutcome),
{
    if cfg.kappa_iter == 0 {
        return Err(Error::InvalidInput("kappa_iter must be at least 1".into()));
    }
    if d.len() + 1 != problem.n() {
        return Err(Error::Dimension(format!(
            "estimator output has length {}, expected n - 1 = {}",
            d.len(),
            problem.n() - 1
        )));
    }
    check_simplex(d)?;
    let eps = cfg.epsilon.unwrap_or_else(|| problem.default_epsilon());

    let mut best = Best::default();
    let mut extended = init_extended(d, k, rng)?;
    let mut iterations = 0;
    let mut converged = false;
    for t in 1..=cfg.kappa_iter {
        iterations = t;
        let out = tse(problem, k, &extended.indices, &cfg.gn, rng)?;
        let r1 = gn::residual_l1(&out.x, &out.support, problem)?;
        observe(&extended, &out);
        best.offer(&out.x, &out.support, out.objective, r1);
        if r1 <= eps {
            converged = true;
            break;
        }
        if t < cfg.kappa_iter {
            extended = resample_extended(d, &out.support, k, rng)?;
        }
    }
    Ok(best.finish(2 * iterations, iterations, converged))
}
