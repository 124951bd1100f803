//! Mean-rank aggregation of weak-selector rankings.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::ForestConfig;
use crate::rng::RngStream;
use crate::selectors::{FeatureSelector, RealSelector, SimulatedSelector};
use crate::types::{ExecutionCounter, FeatureRanking, FeatureSubset, SimulatorParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    MeanRank,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub m_ensemble: usize,
    pub aggregation: Aggregation,
    pub n_target: usize,
}

impl EnsembleConfig {
    pub fn new(m_ensemble: usize, n_target: usize) -> Result<Self> {
        if m_ensemble == 0 {
            return Err(Error::invalid("m_ensemble must be >= 1"));
        }
        if n_target == 0 {
            return Err(Error::invalid("n_target must be >= 1"));
        }
        Ok(Self {
            m_ensemble,
            aggregation: Aggregation::MeanRank,
            n_target,
        })
    }
}

/// Features ordered by mean 1-based rank, lower index first on ties.
///
/// Rank sums are compared instead of means; with a common divisor the order is identical
/// and integer sums avoid rounding.
pub fn mean_rank_order(rankings: &[FeatureRanking]) -> Result<Vec<usize>> {
    let first = rankings
        .first()
        .ok_or_else(|| Error::invalid("at least one ranking is required"))?;
    let n = first.n_feature();
    let mut sums = vec![0u64; n];
    for r in rankings {
        if r.n_feature() != n {
            return Err(Error::invalid(format!(
                "rankings disagree on n_feature ({} vs {n})",
                r.n_feature()
            )));
        }
        for (pos, &f) in r.order().iter().enumerate() {
            sums[f] += pos as u64 + 1;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sums[a].cmp(&sums[b]).then(a.cmp(&b)));
    Ok(order)
}

/// Mean 1-based rank of every feature.
pub fn mean_ranks(rankings: &[FeatureRanking]) -> Result<Vec<f64>> {
    mean_rank_order(rankings)?;
    let n = rankings[0].n_feature();
    let mut sums = vec![0.0; n];
    for r in rankings {
        for (f, rank) in r.ranks().into_iter().enumerate() {
            sums[f] += rank as f64;
        }
    }
    Ok(sums
        .into_iter()
        .map(|s| s / rankings.len() as f64)
        .collect())
}

/// The `n_target` features with the smallest mean rank.
pub fn mean_rank_aggregate(rankings: &[FeatureRanking], n_target: usize) -> Result<FeatureSubset> {
    let order = mean_rank_order(rankings)?;
    if n_target == 0 || n_target > order.len() {
        return Err(Error::invalid(format!(
            "n_target = {n_target} must lie in [1, {}]",
            order.len()
        )));
    }
    FeatureSubset::new(order[..n_target].to_vec(), order.len())
}

/// Runs `config.m_ensemble` weak selectors (weak selector `i` on `rng.derive(i)`)
/// and aggregates their rankings.
pub fn run_ensemble<S: FeatureSelector + ?Sized>(
    selector: &S,
    config: &EnsembleConfig,
    rng: &RngStream,
    counter: &ExecutionCounter,
) -> Result<FeatureSubset> {
    let rankings = weak_rankings(selector, config.m_ensemble, rng, counter)?;
    match config.aggregation {
        Aggregation::MeanRank => mean_rank_aggregate(&rankings, config.n_target),
    }
}

/// Rankings of `m` weak selectors; weak selector `i` runs on `rng.derive(i)`.
pub fn weak_rankings<S: FeatureSelector + ?Sized>(
    selector: &S,
    m: usize,
    rng: &RngStream,
    counter: &ExecutionCounter,
) -> Result<Vec<FeatureRanking>> {
    (0..m)
        .into_par_iter()
        .map(|i| selector.rank(&mut rng.derive(i as u64), counter))
        .collect()
}

/// Simulated ensemble: `m_ensemble` weak selectors, each with a fresh `S_m`.
pub fn run_simulated_ensemble(
    params: &SimulatorParams,
    config: &EnsembleConfig,
    rng: &RngStream,
    counter: &ExecutionCounter,
) -> Result<FeatureSubset> {
    check_target(params.n_target, config)?;
    run_ensemble(&SimulatedSelector::new(*params)?, config, rng, counter)
}

/// Real ensemble: `m_ensemble` forest-importance rankings on `rows`.
pub fn run_real_ensemble(
    dataset: &Dataset,
    rows: &[usize],
    forest: &ForestConfig,
    config: &EnsembleConfig,
    rng: &RngStream,
    counter: &ExecutionCounter,
) -> Result<FeatureSubset> {
    let selector = RealSelector::new(dataset, forest.clone())?.with_rows(rows.to_vec());
    run_ensemble(&selector, config, rng, counter)
}

fn check_target(n_target: usize, config: &EnsembleConfig) -> Result<()> {
    if n_target != config.n_target {
        return Err(Error::invalid(format!(
            "simulator n_target {n_target} differs from ensemble n_target {}",
            config.n_target
        )));
    }
    Ok(())
}
