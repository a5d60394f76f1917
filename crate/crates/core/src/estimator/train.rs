//! Estimator training: synthetic batches, batch-mean cross-entropy, RMSprop.

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{EstimatorModel, ModelMeta};
use super::network::{self, Arch, Layout};
use super::target_distribution;
use crate::error::{Error, Result};
use crate::rng;
use crate::signal::{forward_magnitudes, sample_signal, Prior};
use crate::support::Support;

/// `lr(epoch) = base / factor^floor((epoch - 1) / period)`, epochs 1-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub base: f64,
    pub factor: f64,
    pub period: usize,
}

impl LrSchedule {
    pub fn at(&self, epoch: usize) -> f64 {
        let block = (epoch.max(1) - 1) / self.period.max(1);
        self.base / self.factor.powi(block as i32)
    }
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            base: 1e-4,
            factor: 4.0,
            period: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub k1: usize,
    pub k2: usize,
    /// Samples per batch (`s_b`).
    pub batch_size: usize,
    /// Batches per epoch (`n_b`).
    pub batches: usize,
    /// Epochs (`n_e`).
    pub epochs: usize,
    /// Training SNR in dB; infinite means noiseless samples.
    pub snr_db: f64,
    pub lr: LrSchedule,
    pub prior: Prior,
    pub seed: u64,
    pub rms_decay: f64,
    pub rms_eps: f64,
    /// Each batch is split into this many chunks whose gradients are
    /// computed in parallel and summed in order.
    pub grad_chunks: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::desk()
    }
}

impl TrainConfig {
    pub fn desk() -> Self {
        TrainConfig {
            k1: 2,
            k2: 3,
            batch_size: 64,
            batches: 200,
            epochs: 15,
            snr_db: 30.0,
            lr: LrSchedule::default(),
            prior: Prior::Uniform,
            seed: 0,
            rms_decay: 0.9,
            rms_eps: 1e-8,
            grad_chunks: 1,
        }
    }

    /// The full-scale settings `(k1, k2, s_b, n_b, n_e) = (2, 20, 10⁶, 250, 40)`.
    pub fn paper() -> Self {
        TrainConfig {
            k2: 20,
            batch_size: 1_000_000,
            batches: 250,
            epochs: 40,
            ..TrainConfig::desk()
        }
    }

    pub fn validate(&self, arch: &Arch) -> Result<()> {
        arch.validate()?;
        if self.k1 < 2 || self.k1 > self.k2 || 2 * self.k2 > arch.n {
            return Err(Error::Config(format!(
                "need 2 <= k1 <= k2 <= n/2 (k1 = {}, k2 = {}, n = {})",
                self.k1, self.k2, arch.n
            )));
        }
        if self.batch_size == 0 || self.batches == 0 || self.epochs == 0 || self.grad_chunks == 0 {
            return Err(Error::Config("batch size, batches, epochs and chunks must be positive".into()));
        }
        if self.snr_db.is_nan() || self.lr.base.is_nan() || self.lr.base <= 0.0 || self.lr.factor.is_nan() || self.lr.factor <= 0.0 || self.lr.period == 0 {
            return Err(Error::Config("invalid SNR or learning-rate schedule".into()));
        }
        Ok(())
    }
}

/// One JSON line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchLog {
    pub epoch: usize,
    pub batch: usize,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean batch loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub support: Support,
    /// Clean magnitudes `z = |DFT(x)|²`.
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    /// `y = z + w`.
    pub y: Vec<f64>,
    pub target: Vec<f64>,
}

/// Draw one sample: sparsity uniform in `k1..=k2`, noise
/// `w = α·w̄·Σz·10^(-snr/10)` with `α ~ U[0,1]` and `w̄` uniform on the simplex.
pub fn training_sample<R: Rng + ?Sized>(cfg: &TrainConfig, arch: &Arch, rng: &mut R) -> Result<TrainingSample> {
    let k = rng.random_range(cfg.k1..=cfg.k2);
    let signal = sample_signal(cfg.prior, arch.n, k, rng)?;
    let z = forward_magnitudes(&signal, arch.m)?;
    let w = if cfg.snr_db.is_finite() {
        let alpha: f64 = rng.random_range(0.0..1.0);
        let raw: Vec<f64> = (0..arch.m).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = raw.iter().sum();
        let scale = alpha * z.iter().sum::<f64>() * 10f64.powf(-cfg.snr_db / 10.0) / total;
        raw.iter().map(|e| e * scale).collect()
    } else {
        vec![0.0; arch.m]
    };
    let y = z.iter().zip(&w).map(|(z, w)| z + w).collect();
    let target = target_distribution(signal.support(), arch.n)?;
    Ok(TrainingSample {
        support: signal.support().clone(),
        z,
        w,
        y,
        target,
    })
}

pub fn train(cfg: &TrainConfig, arch: Arch) -> Result<(EstimatorModel, TrainReport)> {
    train_with_log(cfg, arch, |_| {})
}

/// Train from `cfg.seed`, calling `on_batch` after every optimizer step.
pub fn train_with_log<F: FnMut(&BatchLog)>(cfg: &TrainConfig, arch: Arch, mut on_batch: F) -> Result<(EstimatorModel, TrainReport)> {
    cfg.validate(&arch)?;
    let layout = Layout::new(arch);
    let mut data_rng = rng::stream(rng::derive_seed(cfg.seed, &[rng::tag("train-data")]));
    let mut theta = layout.init(&mut rng::stream(rng::derive_seed(cfg.seed, &[rng::tag("train-init")])));
    let mut mean_sq = vec![0.0; layout.len()];
    let g = arch.output_dim();
    let chunks = cfg.grad_chunks.min(cfg.batch_size);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut last_loss = f64::NAN;

    for epoch in 1..=cfg.epochs {
        let lr = cfg.lr.at(epoch);
        let mut epoch_sum = 0.0;
        for batch in 1..=cfg.batches {
            let mut x = Array2::zeros((cfg.batch_size, arch.m));
            let mut t = Array2::zeros((cfg.batch_size, g));
            for b in 0..cfg.batch_size {
                let s = training_sample(cfg, &arch, &mut data_rng)?;
                x.row_mut(b).assign(&ArrayView1::from(&network::normalize_input(&s.y)));
                t.row_mut(b).assign(&ArrayView1::from(&s.target));
            }

            let bounds: Vec<(usize, usize)> = (0..chunks)
                .map(|c| (c * cfg.batch_size / chunks, (c + 1) * cfg.batch_size / chunks))
                .collect();
            let parts: Vec<(f64, Vec<f64>)> = bounds
                .par_iter()
                .map(|&(lo, hi)| {
                    let mut grad = vec![0.0; layout.len()];
                    let xs = x.slice(ndarray::s![lo..hi, ..]);
                    let ts = t.slice(ndarray::s![lo..hi, ..]);
                    let loss = network::loss_and_grad_sum(&layout, &theta, &xs, &ts, &mut grad);
                    (loss, grad)
                })
                .collect();
            let mut parts = parts.into_iter();
            let (mut loss, mut grad) = parts.next().expect("at least one chunk");
            for (l, gr) in parts {
                loss += l;
                grad.iter_mut().zip(&gr).for_each(|(a, b)| *a += b);
            }
            let inv = 1.0 / cfg.batch_size as f64;
            loss *= inv;

            if !loss.is_finite() || grad.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch,
                    param_norm: theta.iter().map(|v| v * v).sum::<f64>().sqrt(),
                    last_loss,
                });
            }
            for ((th, ms), gr) in theta.iter_mut().zip(mean_sq.iter_mut()).zip(&grad) {
                let gr = gr * inv;
                *ms = cfg.rms_decay * *ms + (1.0 - cfg.rms_decay) * gr * gr;
                *th -= lr * gr / (ms.sqrt() + cfg.rms_eps);
            }
            last_loss = loss;
            epoch_sum += loss;
            on_batch(&BatchLog { epoch, batch, loss, lr });
        }
        epoch_losses.push(epoch_sum / cfg.batches as f64);
    }

    let meta = ModelMeta {
        snr_db: cfg.snr_db.is_finite().then_some(cfg.snr_db),
        k1: cfg.k1,
        k2: cfg.k2,
        prior: cfg.prior.name().to_string(),
        seed: cfg.seed,
        epochs: cfg.epochs,
        final_loss: epoch_losses.last().copied(),
    };
    Ok((EstimatorModel::new(arch, meta, theta)?, TrainReport { epoch_losses }))
}
