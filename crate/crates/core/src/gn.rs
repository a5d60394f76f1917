//! Damped Gauss–Newton refinement on a fixed support.
//!
//! For a support `S` the objective is `g(x;S) = Σ_i (y[i] - v_i(x;S))²`
//! with `v_i(x;S) = |X_i|²` and `X_i = Σ_{p∈S} x[p]·ω^{ip}`, `ω = e^{-2πi/m}`.
//! The Jacobian of `v` restricted to `S` has entries
//! `∂v_i/∂x[p] = 2·Re(conj(X_i)·ω^{ip})`, which is row `i` of the
//! linearization matrix `B`. Because `v` is quadratic, `B·x^S = 2v`, so
//! `b = y + v` gives `b - B·x^S = y - v`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::signal::PhaseProblem;
use crate::support::Support;

/// Largest number of step halvings tried per iteration.
pub const MAX_BACKTRACK: u32 = 40;

/// Relative singular-value cutoff for the least-squares solve.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopMode {
    /// Stop as soon as the step norm falls to `tau` or `h` iterations ran.
    CapAtBudget,
    /// Run at least `h` iterations, then continue while the step norm
    /// exceeds `tau`, never beyond `max_iters`.
    MinimumIterations,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GnConfig {
    pub tau: f64,
    pub h: usize,
    pub max_iters: usize,
    pub initial_step: f64,
    /// Sufficient-decrease constant `c` in `g(x - δd) < g(x) - c·δ·∇gᵀd`.
    /// `0.5` reproduces the textbook DGN rule, under which a full
    /// Gauss–Newton step is never accepted on zero-residual problems.
    pub sufficient_decrease: f64,
    pub loop_mode: LoopMode,
}

impl Default for GnConfig {
    fn default() -> Self {
        GnConfig {
            tau: 1e-4,
            h: 100,
            max_iters: 100,
            initial_step: 1.0,
            sufficient_decrease: 0.25,
            loop_mode: LoopMode::CapAtBudget,
        }
    }
}

impl GnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau.is_nan() || self.tau <= 0.0 {
            return Err(Error::InvalidInput(format!("tau must be positive (got {})", self.tau)));
        }
        if self.h == 0 || self.max_iters < self.h {
            return Err(Error::InvalidInput(format!(
                "need 0 < h <= max_iters (h = {}, max_iters = {})",
                self.h, self.max_iters
            )));
        }
        if !(self.initial_step > 0.0 && self.initial_step <= 1.0) {
            return Err(Error::InvalidInput("initial step must lie in (0, 1]".into()));
        }
        if !(self.sufficient_decrease > 0.0 && self.sufficient_decrease < 1.0) {
            return Err(Error::InvalidInput("sufficient-decrease constant must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Linearization {
    /// `m × |S|`, row `i` is `2·(x^S)ᵀ Re A_i(S)`.
    pub matrix: DMatrix<f64>,
    /// `y[i] + v_i(x;S)`.
    pub rhs: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct DgnOutcome {
    /// Dense estimate of length `n`, zero off the support.
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Objective at the initial point followed by one value per iteration.
    pub trace: Vec<f64>,
    /// True when the last iteration found no acceptable step.
    pub stalled: bool,
}

fn check_dims(x: &[f64], support: &Support, problem: &PhaseProblem) -> Result<()> {
    if x.len() != problem.n() {
        return Err(Error::Dimension(format!("x has length {}, expected n = {}", x.len(), problem.n())));
    }
    if support.max().is_some_and(|p| p >= problem.n()) {
        return Err(Error::Dimension("support index outside 0..n".into()));
    }
    Ok(())
}

/// Evaluation of the model `v(x;S)` at the coefficients `xs` on `positions`.
struct Eval {
    spectrum: Vec<Complex64>,
    v: Vec<f64>,
}

impl Eval {
    fn new(m: usize) -> Self {
        Eval {
            spectrum: vec![Complex64::new(0.0, 0.0); m],
            v: vec![0.0; m],
        }
    }

    fn update(&mut self, problem: &PhaseProblem, positions: &[usize], xs: &[f64]) -> f64 {
        problem.dft().sparse_spectrum_into(positions, xs, &mut self.spectrum);
        let mut g = 0.0;
        for ((v, z), y) in self.v.iter_mut().zip(&self.spectrum).zip(&problem.y) {
            *v = z.norm_sqr();
            g += (y - *v) * (y - *v);
        }
        g
    }

    fn jacobian(&self, problem: &PhaseProblem, positions: &[usize]) -> DMatrix<f64> {
        let m = problem.m();
        let dft = problem.dft();
        DMatrix::from_fn(m, positions.len(), |i, a| {
            2.0 * (self.spectrum[i].conj() * dft.twiddle(i, positions[a])).re
        })
    }

    /// `∇g = Σ_i 2(v_i - y_i)·∂v_i`, restricted to `positions`.
    fn gradient(&self, problem: &PhaseProblem, positions: &[usize]) -> Vec<f64> {
        let dft = problem.dft();
        positions
            .iter()
            .map(|&p| {
                let mut acc = 0.0;
                for (i, (z, (v, y))) in self.spectrum.iter().zip(self.v.iter().zip(&problem.y)).enumerate() {
                    acc += 2.0 * (v - y) * 2.0 * (z.conj() * dft.twiddle(i, p)).re;
                }
                acc
            })
            .collect()
    }
}

fn restrict(x: &[f64], support: &Support) -> Vec<f64> {
    support.iter().map(|p| x[p]).collect()
}

/// `g(x;S)` via one length-`m` FFT of the support-restricted signal.
/// Entries of `x` outside `S` are ignored.
pub fn objective(x: &[f64], support: &Support, problem: &PhaseProblem) -> Result<f64> {
    check_dims(x, support, problem)?;
    let mut xs = vec![0.0; problem.n()];
    for p in support.iter() {
        xs[p] = x[p];
    }
    let v = problem.dft().power_spectrum(&xs);
    Ok(v.iter().zip(&problem.y).map(|(v, y)| (y - v) * (y - v)).sum())
}

/// `v(x;S)`, the model magnitudes of the support-restricted signal.
pub fn model_magnitudes(x: &[f64], support: &Support, problem: &PhaseProblem) -> Result<Vec<f64>> {
    check_dims(x, support, problem)?;
    let mut eval = Eval::new(problem.m());
    eval.update(problem, support.as_slice(), &restrict(x, support));
    Ok(eval.v)
}

/// `Σ_i |y[i] - v_i(x;S)|`.
pub fn residual_l1(x: &[f64], support: &Support, problem: &PhaseProblem) -> Result<f64> {
    let v = model_magnitudes(x, support, problem)?;
    Ok(v.iter().zip(&problem.y).map(|(v, y)| (y - v).abs()).sum())
}

/// Gradient of `g` with respect to the entries on `S` (in support order).
pub fn gradient(x: &[f64], support: &Support, problem: &PhaseProblem) -> Result<Vec<f64>> {
    check_dims(x, support, problem)?;
    let mut eval = Eval::new(problem.m());
    eval.update(problem, support.as_slice(), &restrict(x, support));
    Ok(eval.gradient(problem, support.as_slice()))
}

/// Partial derivatives of `g(x;S)` with respect to arbitrary coordinates
/// `at`, with `x` restricted to `S`. Used to rank swap candidates.
pub fn gradient_at(x: &[f64], support: &Support, at: &[usize], problem: &PhaseProblem) -> Result<Vec<f64>> {
    check_dims(x, support, problem)?;
    let mut eval = Eval::new(problem.m());
    eval.update(problem, support.as_slice(), &restrict(x, support));
    Ok(eval.gradient(problem, at))
}

pub fn linearize(x: &[f64], support: &Support, problem: &PhaseProblem) -> Result<Linearization> {
    check_dims(x, support, problem)?;
    let mut eval = Eval::new(problem.m());
    eval.update(problem, support.as_slice(), &restrict(x, support));
    let matrix = eval.jacobian(problem, support.as_slice());
    let rhs = DVector::from_iterator(problem.m(), problem.y.iter().zip(&eval.v).map(|(y, v)| y + v));
    Ok(Linearization { matrix, rhs })
}

/// Minimum-norm least-squares solution of `A z ≈ b`.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let top = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 || !top.is_finite() {
        return DVector::zeros(a.ncols());
    }
    svd.solve(b, RANK_TOL * top)
        .map(|z| z.column(0).into_owned())
        .unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

/// Damped Gauss–Newton on support `S`.
///
/// Starts from `init` restricted to `S`, or from standard normal entries on
/// `S` when `init` is `None`. Each iteration solves the linearized
/// least-squares problem for `z`, sets `d = x - z` and backtracks
/// `δ = u/2^a` until `g(x - δd) < g(x) - c·δ·∇gᵀd`; then `u ← min(2δ, 1)`.
pub fn dgn<R: Rng + ?Sized>(
    problem: &PhaseProblem,
    support: &Support,
    cfg: &GnConfig,
    init: Option<&[f64]>,
    rng: &mut R,
) -> Result<DgnOutcome> {
    cfg.validate()?;
    if support.is_empty() {
        return Err(Error::InvalidInput("DGN needs a nonempty support".into()));
    }
    let n = problem.n();
    if support.max().is_some_and(|p| p >= n) {
        return Err(Error::Dimension("support index outside 0..n".into()));
    }
    let positions = support.as_slice();
    let mut xs: Vec<f64> = match init {
        Some(x0) => {
            if x0.len() != n {
                return Err(Error::Dimension(format!("init has length {}, expected {n}", x0.len())));
            }
            restrict(x0, support)
        }
        None => positions.iter().map(|_| StandardNormal.sample(rng)).collect(),
    };

    let mut eval = Eval::new(problem.m());
    let mut trial_eval = Eval::new(problem.m());
    let mut g = eval.update(problem, positions, &xs);
    let mut trace = vec![g];
    let mut u = cfg.initial_step;
    let mut t = 0usize;
    let mut stalled = false;
    let mut candidate = vec![0.0; xs.len()];

    while t < cfg.max_iters {
        let b_mat = eval.jacobian(problem, positions);
        let rhs = DVector::from_iterator(problem.m(), problem.y.iter().zip(&eval.v).map(|(y, v)| y + v));
        let z = least_squares(&b_mat, &rhs);
        let d: Vec<f64> = xs.iter().zip(z.iter()).map(|(x, z)| x - z).collect();
        let grad = eval.gradient(problem, positions);
        let slope: f64 = grad.iter().zip(&d).map(|(g, d)| g * d).sum();

        let mut accepted = None;
        if slope > 0.0 && slope.is_finite() {
            let mut delta = u;
            for _ in 0..=MAX_BACKTRACK {
                for ((c, x), d) in candidate.iter_mut().zip(&xs).zip(&d) {
                    *c = x - delta * d;
                }
                let g_new = trial_eval.update(problem, positions, &candidate);
                if g_new < g - cfg.sufficient_decrease * delta * slope {
                    accepted = Some((delta, g_new));
                    break;
                }
                delta *= 0.5;
            }
        }

        t += 1;
        let step_norm = match accepted {
            Some((delta, g_new)) => {
                std::mem::swap(&mut xs, &mut candidate);
                std::mem::swap(&mut eval, &mut trial_eval);
                g = g_new;
                u = (2.0 * delta).min(1.0);
                delta * d.iter().map(|v| v * v).sum::<f64>().sqrt()
            }
            None => {
                stalled = true;
                0.0
            }
        };
        trace.push(g);
        if stalled {
            break;
        }
        let done = match cfg.loop_mode {
            LoopMode::CapAtBudget => step_norm <= cfg.tau || t >= cfg.h,
            LoopMode::MinimumIterations => step_norm <= cfg.tau && t >= cfg.h,
        };
        if done {
            break;
        }
    }

    let mut x = vec![0.0; n];
    for (&p, &v) in positions.iter().zip(&xs) {
        x[p] = v;
    }
    Ok(DgnOutcome {
        x,
        objective: g,
        iterations: t,
        trace,
        stalled,
    })
}
