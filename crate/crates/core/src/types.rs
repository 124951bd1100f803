//! Domain values shared by every stage of the pipeline.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A total order over feature indices. Position 0 holds the best feature (rank 1).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureRanking {
    order: Vec<usize>,
}

impl FeatureRanking {
    /// Validates that `order` is a permutation of `0..order.len()`.
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        let mut seen = vec![false; n];
        for &f in &order {
            if f >= n || seen[f] {
                return Err(Error::invalid(format!(
                    "ranking is not a permutation of 0..{n} (offending index {f})"
                )));
            }
            seen[f] = true;
        }
        Ok(Self { order })
    }

    /// Caller guarantees the permutation invariant.
    pub(crate) fn from_permutation(order: Vec<usize>) -> Self {
        debug_assert!(Self::new(order.clone()).is_ok());
        Self { order }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn n_feature(&self) -> usize {
        self.order.len()
    }

    /// The `k` best features.
    pub fn top(&self, k: usize) -> Result<FeatureSubset> {
        if k == 0 || k > self.order.len() {
            return Err(Error::invalid(format!(
                "top-{k} requested from a ranking of {} features",
                self.order.len()
            )));
        }
        Ok(FeatureSubset::from_members_unchecked(
            self.order[..k].to_vec(),
            self.order.len(),
        ))
    }

    /// 1-based rank of every feature, indexed by feature.
    pub fn ranks(&self) -> Vec<usize> {
        let mut ranks = vec![0; self.order.len()];
        for (pos, &f) in self.order.iter().enumerate() {
            ranks[f] = pos + 1;
        }
        ranks
    }
}

/// A set of `n_target` selected features, stored sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureSubset {
    members: Vec<usize>,
}

impl FeatureSubset {
    pub fn new(mut members: Vec<usize>, n_feature: usize) -> Result<Self> {
        members.sort_unstable();
        if members.is_empty() {
            return Err(Error::invalid("feature subset must not be empty"));
        }
        if members.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("feature subset contains duplicates"));
        }
        if let Some(&max) = members.last() {
            if max >= n_feature {
                return Err(Error::invalid(format!(
                    "feature {max} out of range for {n_feature} features"
                )));
            }
        }
        Ok(Self { members })
    }

    pub(crate) fn from_members_unchecked(mut members: Vec<usize>, n_feature: usize) -> Self {
        members.sort_unstable();
        debug_assert!(Self::new(members.clone(), n_feature).is_ok());
        Self { members }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    /// `n_target`.
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, feature: usize) -> bool {
        self.members.binary_search(&feature).is_ok()
    }

    pub fn intersection_len(&self, other: &FeatureSubset) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        let (a, b) = (&self.members, &other.members);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    pub fn jaccard(&self, other: &FeatureSubset) -> f64 {
        let inter = self.intersection_len(other);
        let union = self.len() + other.len() - inter;
        inter as f64 / union as f64
    }
}

/// Parameters of the simulated weak selector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulatorParams {
    pub n_feature: usize,
    pub n_target: usize,
    pub n_useful: usize,
    pub p: f64,
}

impl SimulatorParams {
    pub fn new(n_feature: usize, n_target: usize, n_useful: usize, p: f64) -> Result<Self> {
        let params = Self {
            n_feature,
            n_target,
            n_useful,
            p,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0 < self.n_target && self.n_target <= self.n_useful && self.n_useful <= self.n_feature)
        {
            return Err(Error::invalid(format!(
                "need 0 < n_target ({}) <= n_useful ({}) <= n_feature ({})",
                self.n_target, self.n_useful, self.n_feature
            )));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::invalid(format!("p = {} is outside [0, 1]", self.p)));
        }
        Ok(())
    }

    pub fn with_p(self, p: f64) -> Result<Self> {
        Self::new(self.n_feature, self.n_target, self.n_useful, p)
    }

    pub fn with_n_useful(self, n_useful: usize) -> Result<Self> {
        Self::new(self.n_feature, self.n_target, n_useful, self.p)
    }
}

/// Counts real and simulated selector invocations. Shared across workers.
#[derive(Debug, Default)]
pub struct ExecutionCounter {
    real_runs: AtomicU64,
    simulated_runs: AtomicU64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionCounts {
    pub real_runs: u64,
    pub simulated_runs: u64,
}

impl ExecutionCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_real(&self) {
        self.real_runs.fetch_add(1, Ordering::Relaxed);
    }

    pub fn record_simulated(&self) {
        self.simulated_runs.fetch_add(1, Ordering::Relaxed);
    }

    pub fn real_runs(&self) -> u64 {
        self.real_runs.load(Ordering::Relaxed)
    }

    pub fn simulated_runs(&self) -> u64 {
        self.simulated_runs.load(Ordering::Relaxed)
    }

    pub fn snapshot(&self) -> ExecutionCounts {
        ExecutionCounts {
            real_runs: self.real_runs(),
            simulated_runs: self.simulated_runs(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranking_rejects_non_permutations() {
        assert!(FeatureRanking::new(vec![2, 0, 1]).is_ok());
        assert!(FeatureRanking::new(vec![0, 0, 1]).is_err());
        assert!(FeatureRanking::new(vec![0, 3, 1]).is_err());
    }

    #[test]
    fn ranks_are_one_based() {
        let r = FeatureRanking::new(vec![2, 0, 1]).unwrap();
        assert_eq!(r.ranks(), vec![2, 3, 1]);
        assert_eq!(r.top(2).unwrap().members(), &[0, 2]);
        assert!(r.top(0).is_err());
        assert!(r.top(4).is_err());
    }

    #[test]
    fn subset_validation_and_jaccard() {
        assert!(FeatureSubset::new(vec![1, 1], 5).is_err());
        assert!(FeatureSubset::new(vec![5], 5).is_err());
        assert!(FeatureSubset::new(vec![], 5).is_err());
        let a = FeatureSubset::new(vec![3, 1, 2], 5).unwrap();
        let b = FeatureSubset::new(vec![2, 3, 4], 5).unwrap();
        assert_eq!(a.members(), &[1, 2, 3]);
        assert_eq!(a.intersection_len(&b), 2);
        assert_eq!(a.jaccard(&b), 0.5);
        assert!(a.contains(2) && !a.contains(4));
    }

    #[test]
    fn params_invariants() {
        assert!(SimulatorParams::new(2000, 20, 60, 0.7).is_ok());
        assert!(SimulatorParams::new(2000, 0, 60, 0.7).is_err());
        assert!(SimulatorParams::new(2000, 61, 60, 0.7).is_err());
        assert!(SimulatorParams::new(50, 20, 60, 0.7).is_err());
        assert!(SimulatorParams::new(2000, 20, 60, 1.5).is_err());
        assert!(SimulatorParams::new(2000, 20, 60, f64::NAN).is_err());
    }

    #[test]
    fn counter_is_monotone() {
        let c = ExecutionCounter::new();
        c.record_real();
        c.record_simulated();
        c.record_simulated();
        assert_eq!(
            c.snapshot(),
            ExecutionCounts {
                real_runs: 1,
                simulated_runs: 2
            }
        );
    }
}
