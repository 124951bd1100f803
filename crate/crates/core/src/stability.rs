//! Pairwise Jaccard stability and the replica harness that measures it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::FeatureSubset;

/// Replica count used when none is given.
pub const DEFAULT_M_STABILITY: usize = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityRun {
    pub subsets: Vec<FeatureSubset>,
    pub j: f64,
}

/// Mean Jaccard similarity over all unordered pairs, summed in `(i, j)` order with `i < j`.
pub fn pairwise_jaccard(subsets: &[FeatureSubset]) -> Result<f64> {
    let u = subsets.len();
    if u < 2 {
        return Err(Error::invalid(format!(
            "stability needs at least 2 subsets, got {u}"
        )));
    }
    let n_target = subsets[0].len();
    if subsets.iter().any(|s| s.len() != n_target) {
        return Err(Error::invalid("all subsets must have the same size"));
    }
    let mut sum = 0.0;
    for i in 0..u {
        for j in (i + 1)..u {
            sum += subsets[i].jaccard(&subsets[j]);
        }
    }
    Ok(2.0 * sum / (u as f64 * (u as f64 - 1.0)))
}

/// Runs `factory` once per replica on `rng.derive(replica)` and scores the outputs.
///
/// Replicas may run on any worker; results are collected in replica order.
pub fn estimate_stability<F>(
    factory: F,
    m_stability: usize,
    rng: &RngStream,
) -> Result<StabilityRun>
where
    F: Fn(usize, &RngStream) -> Result<FeatureSubset> + Sync,
{
    if m_stability < 2 {
        return Err(Error::invalid(format!(
            "m_stability must be >= 2, got {m_stability}"
        )));
    }
    let subsets = (0..m_stability)
        .into_par_iter()
        .map(|r| factory(r, &rng.derive(r as u64)))
        .collect::<Result<Vec<_>>>()?;
    let j = pairwise_jaccard(&subsets)?;
    Ok(StabilityRun { subsets, j })
}
