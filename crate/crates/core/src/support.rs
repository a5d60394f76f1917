//! Index sets, the union of equivalent solutions (UES) and support-recovery
//! metrics.
//!
//! All index sets are stored 0-based. The external 1-based view (files,
//! CLI output) is produced with [`Support::one_based`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A sorted, duplicate-free set of 0-based indices.
#[derive(Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Support(Vec<usize>);

impl Support {
    pub fn new(indices: impl IntoIterator<Item = usize>) -> Self {
        let mut v: Vec<usize> = indices.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Support(v)
    }

    pub fn from_one_based(indices: &[usize]) -> Result<Self> {
        if indices.contains(&0) {
            return Err(Error::InvalidInput("1-based index set contains 0".into()));
        }
        Ok(Support::new(indices.iter().map(|&i| i - 1)))
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.0.iter().map(|&i| i + 1).collect()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn min(&self) -> Option<usize> {
        self.0.first().copied()
    }

    pub fn max(&self) -> Option<usize> {
        self.0.last().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn union(&self, other: &Support) -> Support {
        Support::new(self.iter().chain(other.iter()))
    }

    pub fn intersection_len(&self, other: &Support) -> usize {
        self.iter().filter(|&i| other.contains(i)).count()
    }

    pub fn is_subset(&self, other: &Support) -> bool {
        self.iter().all(|i| other.contains(i))
    }

    pub fn without(&self, i: usize) -> Support {
        Support(self.iter().filter(|&j| j != i).collect())
    }

    /// Shift so that the smallest index becomes 0.
    pub fn shifted_to_origin(&self) -> Support {
        match self.min() {
            Some(lo) => Support(self.iter().map(|i| i - lo).collect()),
            None => Support::default(),
        }
    }

    /// Reflect so that the largest index becomes 0.
    pub fn reflected_to_origin(&self) -> Support {
        match self.max() {
            Some(hi) => Support::new(self.iter().map(|i| hi - i)),
            None => Support::default(),
        }
    }
}

impl fmt::Debug for Support {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.0.iter()).finish()
    }
}

impl From<Vec<usize>> for Support {
    fn from(v: Vec<usize>) -> Self {
        Support::new(v)
    }
}

impl<const N: usize> From<[usize; N]> for Support {
    fn from(v: [usize; N]) -> Self {
        Support::new(v)
    }
}

/// Union of equivalent solutions of a support.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UesSet {
    pub alpha: Support,
    pub beta: Support,
    pub union_set: Support,
    /// `union_set` without the origin index.
    pub union_minus_one: Support,
}

pub fn ues(support: &Support, n: usize) -> Result<UesSet> {
    if support.is_empty() {
        return Err(Error::InvalidInput("empty support".into()));
    }
    if support.max().is_some_and(|hi| hi >= n) {
        return Err(Error::InvalidInput(format!(
            "support index {} out of range for n = {n}",
            support.max().unwrap() + 1
        )));
    }
    let alpha = support.shifted_to_origin();
    let beta = support.reflected_to_origin();
    let union_set = alpha.union(&beta);
    let union_minus_one = union_set.without(0);
    Ok(UesSet {
        alpha,
        beta,
        union_set,
        union_minus_one,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryMetrics {
    pub hit: bool,
    pub soft: f64,
}

/// Success indicators modulo shift and reflection.
pub fn recovery_metrics(estimate: &Support, truth: &Support, k: usize) -> Result<RecoveryMetrics> {
    if estimate.len() != k || truth.len() != k || k == 0 {
        return Err(Error::InvalidInput(format!(
            "recovery metrics need |S| = |T| = k > 0 (got |S| = {}, |T| = {}, k = {k})",
            estimate.len(),
            truth.len()
        )));
    }
    let at = truth.shifted_to_origin();
    let a_s = estimate.shifted_to_origin();
    let b_s = estimate.reflected_to_origin();
    let hit = at == a_s || at == b_s;
    let overlap = at.intersection_len(&a_s).max(at.intersection_len(&b_s));
    Ok(RecoveryMetrics {
        hit,
        soft: overlap as f64 / k as f64,
    })
}

/// Indices of the `k` largest `|x[i]|`, largest first; ties go to the lower index.
pub fn hard_threshold(x: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[b].abs().total_cmp(&x[a].abs()).then(a.cmp(&b)));
    order.truncate(k);
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s1(v: &[usize]) -> Support {
        Support::from_one_based(v).unwrap()
    }

    #[test]
    fn ues_worked_example() {
        let u = ues(&s1(&[2, 3, 6]), 6).unwrap();
        assert_eq!(u.union_minus_one.one_based(), vec![2, 4, 5]);
    }

    #[test]
    fn ues_palindrome() {
        let u = ues(&s1(&[1, 4]), 6).unwrap();
        assert_eq!(u.alpha.one_based(), vec![1, 4]);
        assert_eq!(u.beta.one_based(), vec![1, 4]);
        assert_eq!(u.union_set.one_based(), vec![1, 4]);
    }

    #[test]
    fn ues_direct_formula() {
        let u = ues(&s1(&[3, 5, 8]), 10).unwrap();
        assert_eq!(u.alpha.one_based(), vec![1, 3, 6]);
        assert_eq!(u.beta.one_based(), vec![1, 4, 6]);
        assert_eq!(u.union_set.one_based(), vec![1, 3, 4, 6]);
    }

    #[test]
    fn ues_rejects_empty_and_out_of_range() {
        assert!(matches!(ues(&Support::default(), 4), Err(Error::InvalidInput(_))));
        assert!(ues(&s1(&[5]), 4).is_err());
    }

    #[test]
    fn metrics_examples() {
        let t = s1(&[2, 3, 6]);
        let m = recovery_metrics(&t, &t, 3).unwrap();
        assert!(m.hit && m.soft == 1.0);

        let m = recovery_metrics(&s1(&[1, 4, 5]), &t, 3).unwrap();
        assert!(m.hit);
        assert_eq!(m.soft, 1.0);

        let m = recovery_metrics(&s1(&[1, 3, 5]), &s1(&[1, 2, 3]), 3).unwrap();
        assert!(!m.hit);
        assert!((m.soft - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn metrics_size_mismatch() {
        assert!(recovery_metrics(&s1(&[1, 2]), &s1(&[1, 2, 3]), 3).is_err());
    }

    #[test]
    fn hard_threshold_order_and_ties() {
        assert_eq!(hard_threshold(&[0.9, 0.0, -1.2, 0.3], 2), vec![2, 0]);
        assert_eq!(hard_threshold(&[1.0, -1.0, 1.0], 2), vec![0, 1]);
    }

    #[test]
    fn one_based_rejects_zero() {
        assert!(Support::from_one_based(&[0, 2]).is_err());
    }
}
