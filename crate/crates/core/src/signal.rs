//! Sparse signals, the Fourier magnitude measurement model and its noise.
//!
//! Measurements are `y = c + w` where `c[i] = |Σ_j x[j] e^{-2πi·ij/m}|²`
//! (0-based `i`, `j`) is the squared modulus of the length-`m` DFT of the
//! zero-padded signal and `w[i] = σ·χ²(2)` is nonnegative noise.
//!
//! The signal-to-noise ratio is `10·log10(Σc / Σw)`. Noise is calibrated in
//! expectation: `σ = Σc·10^(-snr/10) / (2m)`, since a χ²(2) draw has mean 2.
//! An infinite SNR means noiseless measurements.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dft::Dft;
use crate::error::{Error, Result};
use crate::rng;
use crate::support::Support;

/// Relative residual tolerance used as the stopping threshold when the
/// measurements are noiseless (where `‖y‖·10^(-snr/20)` would be zero).
pub const NOISELESS_REL_TOL: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseSignal {
    values: Vec<f64>,
    support: Support,
}

impl SparseSignal {
    /// Build from a dense vector; the support is its nonzero pattern.
    pub fn from_dense(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Dimension("signal dimension must be positive".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("signal has non-finite entries".into()));
        }
        let support = Support::new(values.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i));
        Ok(SparseSignal { values, support })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn k(&self) -> usize {
        self.support.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support(&self) -> &Support {
        &self.support
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Prior {
    /// Nonzeros uniform on `[-1, -0.2] ∪ [0.2, 1]`.
    Uniform,
    /// Standard normal nonzeros.
    Gaussian,
}

impl Prior {
    pub fn sample_value<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Prior::Uniform => {
                let mag = rng.random_range(0.2..=1.0);
                if rng.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            }
            Prior::Gaussian => loop {
                let v: f64 = StandardNormal.sample(rng);
                if v != 0.0 {
                    break v;
                }
            },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Prior::Uniform => "uniform",
            Prior::Gaussian => "gaussian",
        }
    }
}

impl fmt::Display for Prior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Prior {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Prior::Uniform),
            "gaussian" => Ok(Prior::Gaussian),
            other => Err(Error::InvalidInput(format!("unknown prior '{other}'"))),
        }
    }
}

/// Draw a `k`-sparse signal with a uniformly random support.
pub fn sample_signal<R: Rng + ?Sized>(prior: Prior, n: usize, k: usize, rng: &mut R) -> Result<SparseSignal> {
    if k == 0 || k > n {
        return Err(Error::InvalidSparsity { k, n });
    }
    let support = Support::new(index::sample(rng, n, k));
    let mut values = vec![0.0; n];
    for i in support.iter() {
        values[i] = prior.sample_value(rng);
    }
    Ok(SparseSignal { values, support })
}

/// Clean squared Fourier magnitudes of `signal` at DFT length `m`.
pub fn forward_magnitudes(signal: &SparseSignal, m: usize) -> Result<Vec<f64>> {
    if m < signal.n() {
        return Err(Error::Dimension(format!("DFT length m = {m} is smaller than n = {}", signal.n())));
    }
    Ok(Dft::new(m).power_spectrum(signal.values()))
}

/// Per-entry noise scale `σ` for a target SNR (in expectation).
pub fn noise_scale(c: &[f64], snr_db: f64) -> Result<f64> {
    let total: f64 = c.iter().sum();
    if c.is_empty() || total <= 0.0 || c.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::DegenerateSignal("clean magnitudes must be nonnegative and not all zero".into()));
    }
    if snr_db == f64::INFINITY {
        return Ok(0.0);
    }
    Ok(total * 10f64.powf(-snr_db / 10.0) / (2.0 * c.len() as f64))
}

/// Draw `w[i] = σ·χ²(2)` for the given clean magnitudes and SNR.
pub fn sample_noise<R: Rng + ?Sized>(c: &[f64], snr_db: f64, rng: &mut R) -> Result<Vec<f64>> {
    let sigma = noise_scale(c, snr_db)?;
    if sigma == 0.0 {
        return Ok(vec![0.0; c.len()]);
    }
    let chi2 = ChiSquared::new(2.0).expect("two degrees of freedom");
    Ok((0..c.len()).map(|_| sigma * chi2.sample(rng)).collect())
}

/// Empirical SNR in dB, `10·log10(Σc / Σw)`.
pub fn empirical_snr_db(c: &[f64], w: &[f64]) -> f64 {
    let sc: f64 = c.iter().sum();
    let sw: f64 = w.iter().sum();
    10.0 * (sc / sw).log10()
}

/// A phase-retrieval problem instance: measurements plus the transform used.
#[derive(Debug, Clone)]
pub struct PhaseProblem {
    n: usize,
    /// Noisy squared magnitudes.
    pub y: Vec<f64>,
    /// Clean squared magnitudes. Equal to `y` when only measurements are known.
    pub c: Vec<f64>,
    /// Noise. Zero when only measurements are known.
    pub w: Vec<f64>,
    pub snr_db: f64,
    dft: Dft,
}

impl PhaseProblem {
    /// Synthesize noisy measurements of `signal`.
    pub fn synthesize<R: Rng + ?Sized>(signal: &SparseSignal, m: usize, snr_db: f64, rng: &mut R) -> Result<Self> {
        let c = forward_magnitudes(signal, m)?;
        let w = sample_noise(&c, snr_db, rng)?;
        let y = c.iter().zip(&w).map(|(a, b)| a + b).collect();
        Ok(PhaseProblem {
            n: signal.n(),
            y,
            c,
            w,
            snr_db,
            dft: Dft::new(m),
        })
    }

    /// A problem known only through its measurements.
    pub fn from_measurements(n: usize, y: Vec<f64>, snr_db: f64) -> Result<Self> {
        let m = y.len();
        if n == 0 || m < n {
            return Err(Error::Dimension(format!("need 0 < n <= m (n = {n}, m = {m})")));
        }
        if y.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput("measurements must be finite and nonnegative".into()));
        }
        Ok(PhaseProblem {
            n,
            c: y.clone(),
            w: vec![0.0; m],
            y,
            snr_db,
            dft: Dft::new(m),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.y.len()
    }

    pub fn dft(&self) -> &Dft {
        &self.dft
    }

    pub fn is_noiseless(&self) -> bool {
        self.snr_db == f64::INFINITY
    }

    pub fn y_norm(&self) -> f64 {
        self.y.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Residual threshold `ε = ‖y‖·10^(-snr/20)`, floored at
    /// [`NOISELESS_REL_TOL`]`·‖y‖`.
    pub fn default_epsilon(&self) -> f64 {
        let rel = if self.snr_db.is_finite() {
            10f64.powf(-self.snr_db / 20.0)
        } else {
            0.0
        };
        self.y_norm() * rel.max(NOISELESS_REL_TOL)
    }
}

/// A generated problem together with its ground truth.
#[derive(Debug, Clone)]
pub struct Instance {
    pub signal: SparseSignal,
    pub problem: PhaseProblem,
    pub seed: u64,
}

/// JSON document for an instance. Indices are 1-based; floats are written in
/// shortest round-trip decimal form; a noiseless SNR is written as `null`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct InstanceDoc {
    n: usize,
    m: usize,
    k: usize,
    snr_db: Option<f64>,
    seed: u64,
    support: Vec<usize>,
    values: Vec<f64>,
    y: Vec<f64>,
}

impl Instance {
    /// Deterministically generate an instance from `seed`.
    pub fn generate(prior: Prior, n: usize, m: usize, k: usize, snr_db: f64, seed: u64) -> Result<Self> {
        let mut rng = rng::stream(seed);
        let signal = sample_signal(prior, n, k, &mut rng)?;
        let problem = PhaseProblem::synthesize(&signal, m, snr_db, &mut rng)?;
        Ok(Instance { signal, problem, seed })
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = InstanceDoc {
            n: self.signal.n(),
            m: self.problem.m(),
            k: self.signal.k(),
            snr_db: self.problem.snr_db.is_finite().then_some(self.problem.snr_db),
            seed: self.seed,
            support: self.signal.support().one_based(),
            values: self.signal.values().to_vec(),
            y: self.problem.y.clone(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: InstanceDoc = serde_json::from_str(s)?;
        if doc.values.len() != doc.n || doc.y.len() != doc.m {
            return Err(Error::Dimension("instance vector lengths disagree with n/m".into()));
        }
        let signal = SparseSignal::from_dense(doc.values)?;
        if signal.support().one_based() != doc.support || signal.k() != doc.k {
            return Err(Error::InvalidInput("instance support disagrees with values".into()));
        }
        let c = forward_magnitudes(&signal, doc.m)?;
        let w = doc.y.iter().zip(&c).map(|(y, c)| y - c).collect();
        let problem = PhaseProblem {
            n: doc.n,
            y: doc.y,
            c,
            w,
            snr_db: doc.snr_db.unwrap_or(f64::INFINITY),
            dft: Dft::new(doc.m),
        };
        Ok(Instance {
            signal,
            problem,
            seed: doc.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn naive_dft_power(x: &[f64], m: usize) -> Vec<f64> {
        (0..m)
            .map(|i| {
                let (mut re, mut im) = (0.0, 0.0);
                for (j, &v) in x.iter().enumerate() {
                    let ang = -2.0 * std::f64::consts::PI * (i * j) as f64 / m as f64;
                    re += v * ang.cos();
                    im += v * ang.sin();
                }
                re * re + im * im
            })
            .collect()
    }

    #[test]
    fn single_spike_is_flat() {
        let s = SparseSignal::from_dense(vec![2.0, 0.0, 0.0, 0.0]).unwrap();
        let c = forward_magnitudes(&s, 4).unwrap();
        for v in c {
            assert!((v - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_term_expansion() {
        let s = SparseSignal::from_dense(vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let c = forward_magnitudes(&s, 4).unwrap();
        for (a, b) in c.iter().zip([4.0, 2.0, 0.0, 2.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_naive_dft() {
        let mut rng = stream(11);
        let s = sample_signal(Prior::Gaussian, 16, 16, &mut rng).unwrap();
        let c = forward_magnitudes(&s, 17).unwrap();
        let oracle = naive_dft_power(s.values(), 17);
        let scale = oracle.iter().cloned().fold(0.0, f64::max);
        for (a, b) in c.iter().zip(&oracle) {
            assert!((a - b).abs() / scale < 1e-10);
        }
    }

    #[test]
    fn m_smaller_than_n_is_error() {
        let s = SparseSignal::from_dense(vec![1.0; 5]).unwrap();
        assert!(matches!(forward_magnitudes(&s, 4), Err(Error::Dimension(_))));
    }

    #[test]
    fn conjugate_symmetry() {
        let mut rng = stream(2);
        let s = sample_signal(Prior::Uniform, 20, 4, &mut rng).unwrap();
        let c = forward_magnitudes(&s, 21).unwrap();
        for i in 1..21 {
            assert!((c[i] - c[21 - i]).abs() < 1e-10);
        }
    }

    #[test]
    fn uniform_prior_magnitudes() {
        let mut rng = stream(5);
        let s = sample_signal(Prior::Uniform, 256, 5, &mut rng).unwrap();
        assert_eq!(s.k(), 5);
        for i in s.support().iter() {
            let v = s.values()[i].abs();
            assert!((0.2..=1.0).contains(&v));
        }
    }

    #[test]
    fn gaussian_prior_variance() {
        let mut rng = stream(99);
        let mut sum2 = 0.0;
        let mut count = 0usize;
        for _ in 0..10_000 {
            let s = sample_signal(Prior::Gaussian, 256, 5, &mut rng).unwrap();
            for i in s.support().iter() {
                sum2 += s.values()[i].powi(2);
                count += 1;
            }
        }
        let var = sum2 / count as f64;
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn same_seed_same_signal() {
        let a = sample_signal(Prior::Uniform, 64, 6, &mut stream(42)).unwrap();
        let b = sample_signal(Prior::Uniform, 64, 6, &mut stream(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_sparsity() {
        assert!(matches!(
            sample_signal(Prior::Uniform, 4, 5, &mut stream(0)),
            Err(Error::InvalidSparsity { k: 5, n: 4 })
        ));
    }

    #[test]
    fn noiseless_noise_is_zero() {
        let w = sample_noise(&[1.0, 2.0, 3.0], f64::INFINITY, &mut stream(0)).unwrap();
        assert_eq!(w, vec![0.0; 3]);
    }

    #[test]
    fn zero_signal_noise_is_error() {
        assert!(matches!(
            sample_noise(&[0.0, 0.0], 30.0, &mut stream(0)),
            Err(Error::DegenerateSignal(_))
        ));
    }

    #[test]
    fn noise_mean_matches_calibration() {
        // E[Σw] = Σc·10^(-snr/10); averaged over many draws
        let c: Vec<f64> = (0..50).map(|i| 1.0 + (i % 7) as f64).collect();
        let target = c.iter().sum::<f64>() * 10f64.powf(-2.0);
        let mut rng = stream(3);
        let draws = 2000;
        let mean: f64 = (0..draws)
            .map(|_| sample_noise(&c, 20.0, &mut rng).unwrap().iter().sum::<f64>())
            .sum::<f64>()
            / draws as f64;
        assert!((mean / target - 1.0).abs() < 0.02, "{mean} vs {target}");
    }

    #[test]
    fn snr_calibration_at_769() {
        let mut rng = stream(17);
        let s = sample_signal(Prior::Uniform, 768, 20, &mut rng).unwrap();
        let c = forward_magnitudes(&s, 769).unwrap();
        let mean_snr: f64 = (0..100)
            .map(|_| empirical_snr_db(&c, &sample_noise(&c, 30.0, &mut rng).unwrap()))
            .sum::<f64>()
            / 100.0;
        assert!((mean_snr - 30.0).abs() < 0.5);
    }

    #[test]
    fn wrapped_shift_ambiguity_at_m_equal_n_plus_one() {
        // with m = n + 1 a circular rotation that keeps all indices below n
        // is also invisible to the magnitudes
        let n = 10;
        let m = n + 1;
        let x = SparseSignal::from_dense(vec![0.5, 0.0, 0.0, -0.8, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let mut rotated = vec![0.0; n];
        for i in x.support().iter() {
            rotated[(i + 8) % m] = x.values()[i];
        }
        let rotated = SparseSignal::from_dense(rotated).unwrap();
        assert_eq!(rotated.support().one_based(), vec![1, 9]);
        let a = forward_magnitudes(&x, m).unwrap();
        let b = forward_magnitudes(&rotated, m).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn instance_json_round_trip() {
        let inst = Instance::generate(Prior::Uniform, 32, 33, 4, 30.0, 7).unwrap();
        let text = inst.to_json().unwrap();
        let back = Instance::from_json(&text).unwrap();
        assert_eq!(back.problem.y, inst.problem.y);
        assert_eq!(back.signal, inst.signal);
        assert_eq!(back.problem.snr_db, 30.0);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["support"].as_array().unwrap().len(), 4);

        let noiseless = Instance::generate(Prior::Gaussian, 8, 9, 2, f64::INFINITY, 1).unwrap();
        let text = noiseless.to_json().unwrap();
        assert!(text.contains("\"snr_db\":null"));
        assert!(Instance::from_json(&text).unwrap().problem.is_noiseless());
    }

    proptest! {
        #[test]
        fn shift_and_reflection_invariance(
            seed in any::<u64>(),
            k in 1usize..5,
            shift in 0usize..8,
        ) {
            let n = 24;
            let m = 2 * n;
            let mut rng = stream(seed);
            // signal confined to the first n - 8 entries so every shift fits
            let base = sample_signal(Prior::Gaussian, n - 8, k, &mut rng).unwrap();
            let mut shifted = vec![0.0; n];
            let mut reflected = vec![0.0; n];
            let hi = base.support().max().unwrap();
            for i in base.support().iter() {
                shifted[i + shift] = base.values()[i];
                reflected[hi - i + shift] = base.values()[i];
            }
            let mut padded = base.values().to_vec();
            padded.resize(n, 0.0);
            let c0 = forward_magnitudes(&SparseSignal::from_dense(padded).unwrap(), m).unwrap();
            let c1 = forward_magnitudes(&SparseSignal::from_dense(shifted).unwrap(), m).unwrap();
            let c2 = forward_magnitudes(&SparseSignal::from_dense(reflected).unwrap(), m).unwrap();
            for i in 0..m {
                prop_assert!((c0[i] - c1[i]).abs() < 1e-10);
                prop_assert!((c0[i] - c2[i]).abs() < 1e-10);
            }
        }

        #[test]
        fn measurements_decompose(seed in any::<u64>(), snr in 5.0f64..40.0) {
            let inst = Instance::generate(Prior::Uniform, 16, 17, 3, snr, seed).unwrap();
            let p = &inst.problem;
            for i in 0..p.m() {
                prop_assert!(p.w[i] >= 0.0 && p.c[i] >= 0.0);
                prop_assert!((p.y[i] - p.c[i] - p.w[i]).abs() <= 1e-15 * p.y[i].max(1.0));
            }
        }
    }
}
