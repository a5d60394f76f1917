use crate::support::Support;

/// Result of a support-recovery solver.
#[derive(Debug, Clone)]
pub struct Recovery {
    /// Dense signal estimate of length `n`.
    pub x: Vec<f64>,
    pub support: Support,
    /// `g(x;S)`, the squared-residual objective.
    pub objective: f64,
    /// `Σ|y - v(x;S)|`, the quantity compared against the stopping threshold.
    pub residual_l1: f64,
    /// Number of DGN executions.
    pub eta: usize,
    /// Outer iterations run.
    pub iterations: usize,
    /// Whether the stopping threshold was met.
    pub converged: bool,
}

/// Tracks the best (lowest objective) pair seen so far.
#[derive(Debug, Default)]
pub(crate) struct Best {
    inner: Option<(Vec<f64>, Support, f64, f64)>,
}

impl Best {
    pub(crate) fn offer(&mut self, x: &[f64], support: &Support, objective: f64, residual_l1: f64) {
        let better = match &self.inner {
            None => true,
            Some((_, _, g, _)) => objective < *g,
        };
        if better {
            self.inner = Some((x.to_vec(), support.clone(), objective, residual_l1));
        }
    }

    pub(crate) fn finish(self, eta: usize, iterations: usize, converged: bool) -> Recovery {
        let (x, support, objective, residual_l1) = self.inner.expect("at least one candidate was evaluated");
        Recovery {
            x,
            support,
            objective,
            residual_l1,
            eta,
            iterations,
            converged,
        }
    }
}
