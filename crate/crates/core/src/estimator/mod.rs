//! Support-probability estimators: the UES target, the cross-entropy loss,
//! an oracle that returns the target itself, and a trainable recurrent
//! network with its on-disk format.

mod model;
pub mod network;
mod train;

pub use model::{inspect_model, load_model, save_model, EstimatorModel, ModelMeta, FORMAT_VERSION, MAGIC};
pub use network::Arch;
pub use train::{
    training_sample, train, train_with_log, BatchLog, LrSchedule, TrainConfig, TrainReport, TrainingSample,
};

use crate::error::{Error, Result};
use crate::pred::SupportEstimator;
use crate::support::{ues, Support};

/// Uniform mass `1/|I₋₁(T)|` on the positions `I₋₁(T)`, read as entries
/// `i - 1` of a vector of length `n - 1`.
pub fn target_distribution(support: &Support, n: usize) -> Result<Vec<f64>> {
    let rest = ues(support, n)?.union_minus_one;
    if rest.is_empty() {
        return Err(Error::Unsupported("a single-index support has an empty UES remainder".into()));
    }
    let mut d = vec![0.0; n - 1];
    let w = 1.0 / rest.len() as f64;
    for i in rest.iter() {
        d[i - 1] = w;
    }
    Ok(d)
}

/// `-(1/g)·Σ target[i]·ln max(pred[i], 1e-12)`.
pub fn cross_entropy(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Dimension(format!(
            "cross-entropy of lengths {} and {}",
            pred.len(),
            target.len()
        )));
    }
    let g = pred.len() as f64;
    Ok(-pred
        .iter()
        .zip(target)
        .filter(|(_, t)| **t != 0.0)
        .map(|(p, t)| t * p.max(network::LOG_CLAMP).ln())
        .sum::<f64>()
        / g)
}

/// Returns the ideal output for a known support, ignoring `y`.
#[derive(Debug, Clone)]
pub struct OracleEstimator {
    d: Vec<f64>,
}

impl OracleEstimator {
    pub fn new(truth: &Support, n: usize) -> Result<Self> {
        if truth.len() < 2 {
            return Err(Error::Unsupported("the oracle needs k >= 2".into()));
        }
        Ok(OracleEstimator {
            d: target_distribution(truth, n)?,
        })
    }

    pub fn distribution(&self) -> &[f64] {
        &self.d
    }
}

impl SupportEstimator for OracleEstimator {
    fn output_dim(&self) -> usize {
        self.d.len()
    }

    fn estimate(&self, _y: &[f64]) -> Result<Vec<f64>> {
        Ok(self.d.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s1(v: &[usize]) -> Support {
        Support::from_one_based(v).unwrap()
    }

    #[test]
    fn target_worked_example() {
        let d = target_distribution(&s1(&[2, 3, 6]), 6).unwrap();
        let third = 1.0 / 3.0;
        assert_eq!(d, vec![third, 0.0, third, third, 0.0]);
    }

    #[test]
    fn target_adjacent_pair() {
        let d = target_distribution(&s1(&[1, 2]), 8).unwrap();
        assert_eq!(d[0], 1.0);
        assert!(d[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn target_single_index_is_unsupported() {
        assert!(matches!(target_distribution(&s1(&[4]), 8), Err(Error::Unsupported(_))));
        assert!(OracleEstimator::new(&s1(&[4]), 8).is_err());
    }

    #[test]
    fn target_sums_to_one() {
        for a in 1..=10 {
            for b in a + 1..=10 {
                let d = target_distribution(&s1(&[a, b, 10]), 10).unwrap_or_else(|_| target_distribution(&s1(&[a, b]), 10).unwrap());
                assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn cross_entropy_values() {
        let t = [0.5, 0.5, 0.0, 0.0, 0.0];
        let ce = cross_entropy(&t, &t).unwrap();
        assert!((ce - 2f64.ln() / 5.0).abs() < 1e-15);
        assert!((ce - 0.13863).abs() < 1e-5);

        let one = [0.0, 1.0, 0.0];
        assert!(cross_entropy(&one, &one).unwrap().abs() < 1e-15);

        let uniform = [0.2; 5];
        assert!(ce <= cross_entropy(&uniform, &t).unwrap());
        assert!(cross_entropy(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn oracle_ignores_measurements() {
        let o = OracleEstimator::new(&s1(&[2, 3, 6]), 6).unwrap();
        assert_eq!(o.estimate(&[1.0; 7]).unwrap(), o.estimate(&[0.0; 7]).unwrap());
        assert_eq!(o.output_dim(), 5);
    }
}
