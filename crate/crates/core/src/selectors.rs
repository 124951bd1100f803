//! The three feature selectors: uniform (null model), simulated weak selector, and
//! the real random-forest selector.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{subsample_rows, Dataset};
use crate::error::Result;
use crate::forest::{fit_forest, gini_importance, ForestConfig};
use crate::rng::{sample_range, RngStream};
use crate::types::{ExecutionCounter, FeatureRanking, FeatureSubset, SimulatorParams};

/// Anything that ranks all features given a private random stream.
///
/// One call corresponds to one weak selector.
pub trait FeatureSelector: Sync {
    fn n_feature(&self) -> usize;

    fn rank(&self, rng: &mut RngStream, counter: &ExecutionCounter) -> Result<FeatureRanking>;
}

/// Draws the preferred subset `S_m`: `n_target` features uniformly from
/// `S' = {0, ..., n_useful - 1}`.
pub fn sample_s_m<R: Rng + ?Sized>(params: &SimulatorParams, rng: &mut R) -> Result<FeatureSubset> {
    params.validate()?;
    let members = sample_range(params.n_useful, params.n_target, rng)?;
    FeatureSubset::new(members, params.n_feature)
}

/// Ranks all features by the order a `p`-biased urn draws them.
///
/// Each step flips a `p`-coin: heads draws uniformly from the members of `s_m` not yet
/// drawn, tails from the remaining non-members. Once either pool is empty, draws
/// come from the other pool without flipping.
pub fn simulated_rank<R: Rng + ?Sized>(
    params: &SimulatorParams,
    s_m: &FeatureSubset,
    rng: &mut R,
) -> Result<FeatureRanking> {
    params.validate()?;
    if s_m.len() != params.n_target {
        return Err(crate::Error::invalid(format!(
            "S_m has {} features, n_target is {}",
            s_m.len(),
            params.n_target
        )));
    }
    let n = params.n_feature;
    let mut preferred: Vec<usize> = s_m.members().to_vec();
    if preferred.last().is_some_and(|&f| f >= n) {
        return Err(crate::Error::invalid(
            "S_m contains an out-of-range feature",
        ));
    }
    let mut rest: Vec<usize> = (0..n).filter(|&f| !s_m.contains(f)).collect();
    let mut order = Vec::with_capacity(n);

    while !preferred.is_empty() && !rest.is_empty() {
        let pool = if rng.gen_bool(params.p) {
            &mut preferred
        } else {
            &mut rest
        };
        let i = rng.gen_range(0..pool.len());
        order.push(pool.swap_remove(i));
    }
    for pool in [&mut preferred, &mut rest] {
        while !pool.is_empty() {
            let i = rng.gen_range(0..pool.len());
            order.push(pool.swap_remove(i));
        }
    }
    Ok(FeatureRanking::from_permutation(order))
}

/// Uniform random permutation of `0..n_feature`.
pub fn uniform_rank<R: Rng + ?Sized>(n_feature: usize, rng: &mut R) -> Result<FeatureRanking> {
    if n_feature == 0 {
        return Err(crate::Error::invalid("n_feature must be >= 1"));
    }
    let mut order: Vec<usize> = (0..n_feature).collect();
    order.shuffle(rng);
    Ok(FeatureRanking::from_permutation(order))
}

/// Sorts features by descending importance; equal scores keep the lower index first.
pub fn ranking_from_scores(scores: &[f64]) -> FeatureRanking {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    FeatureRanking::from_permutation(order)
}

/// One run of the real selector: fit a forest on `rows` (optionally subsampled) and
/// rank features by Gini importance.
pub fn real_rank(
    dataset: &Dataset,
    rows: &[usize],
    config: &ForestConfig,
    rng: &RngStream,
    counter: &ExecutionCounter,
) -> Result<FeatureRanking> {
    counter.record_real();
    let forest = if config.subsample_fraction < 1.0 {
        let sub = subsample_rows(rows, config.subsample_fraction, &mut rng.derive(0));
        fit_forest(dataset, &sub, config, &rng.derive(1))?
    } else {
        fit_forest(dataset, rows, config, &rng.derive(1))?
    };
    Ok(ranking_from_scores(&gini_importance(
        &forest,
        dataset.n_feature(),
    )))
}

/// Null model: every ranking equally likely.
#[derive(Clone, Copy, Debug)]
pub struct UniformSelector {
    pub n_feature: usize,
}

impl FeatureSelector for UniformSelector {
    fn n_feature(&self) -> usize {
        self.n_feature
    }

    fn rank(&self, rng: &mut RngStream, _counter: &ExecutionCounter) -> Result<FeatureRanking> {
        uniform_rank(self.n_feature, rng)
    }
}

/// One simulated weak selector `f_m` with a fixed preferred subset.
#[derive(Clone, Debug)]
pub struct SimulatedWeakSelector {
    pub params: SimulatorParams,
    pub s_m: FeatureSubset,
}

impl FeatureSelector for SimulatedWeakSelector {
    fn n_feature(&self) -> usize {
        self.params.n_feature
    }

    fn rank(&self, rng: &mut RngStream, counter: &ExecutionCounter) -> Result<FeatureRanking> {
        counter.record_simulated();
        simulated_rank(&self.params, &self.s_m, rng)
    }
}

/// The simulated selector family `f_{n_useful, p}`: each call is a fresh weak
/// selector with its own `S_m`.
#[derive(Clone, Copy, Debug)]
pub struct SimulatedSelector {
    pub params: SimulatorParams,
}

impl SimulatedSelector {
    pub fn new(params: SimulatorParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }
}

impl FeatureSelector for SimulatedSelector {
    fn n_feature(&self) -> usize {
        self.params.n_feature
    }

    fn rank(&self, rng: &mut RngStream, counter: &ExecutionCounter) -> Result<FeatureRanking> {
        counter.record_simulated();
        let s_m = sample_s_m(&self.params, rng)?;
        simulated_rank(&self.params, &s_m, rng)
    }
}

/// A simulated selector standing in for the real one, e.g. to check that calibration
/// recovers known parameters. Its runs are accounted as real runs.
#[derive(Clone, Copy, Debug)]
pub struct GroundTruthSelector {
    pub params: SimulatorParams,
}

impl FeatureSelector for GroundTruthSelector {
    fn n_feature(&self) -> usize {
        self.params.n_feature
    }

    fn rank(&self, rng: &mut RngStream, counter: &ExecutionCounter) -> Result<FeatureRanking> {
        counter.record_real();
        let s_m = sample_s_m(&self.params, rng)?;
        simulated_rank(&self.params, &s_m, rng)
    }
}

/// Random-forest importance selector bound to a dataset.
#[derive(Clone, Debug)]
pub struct RealSelector<'a> {
    pub dataset: &'a Dataset,
    pub rows: Vec<usize>,
    pub config: ForestConfig,
}

impl<'a> RealSelector<'a> {
    /// Binds to every row of `dataset`.
    pub fn new(dataset: &'a Dataset, config: ForestConfig) -> Result<Self> {
        config.validate(dataset.n_feature())?;
        Ok(Self {
            dataset,
            rows: (0..dataset.n_sample()).collect(),
            config,
        })
    }

    pub fn with_rows(mut self, rows: Vec<usize>) -> Self {
        self.rows = rows;
        self
    }
}

impl FeatureSelector for RealSelector<'_> {
    fn n_feature(&self) -> usize {
        self.dataset.n_feature()
    }

    fn rank(&self, rng: &mut RngStream, counter: &ExecutionCounter) -> Result<FeatureRanking> {
        real_rank(self.dataset, &self.rows, &self.config, rng, counter)
    }
}

/// Run-time choice among the selectors.
#[derive(Clone, Debug)]
pub enum SelectorKind<'a> {
    Uniform(UniformSelector),
    Simulated(SimulatedSelector),
    GroundTruth(GroundTruthSelector),
    Real(RealSelector<'a>),
}

impl FeatureSelector for SelectorKind<'_> {
    fn n_feature(&self) -> usize {
        match self {
            SelectorKind::Uniform(s) => s.n_feature(),
            SelectorKind::Simulated(s) => s.n_feature(),
            SelectorKind::GroundTruth(s) => s.n_feature(),
            SelectorKind::Real(s) => s.n_feature(),
        }
    }

    fn rank(&self, rng: &mut RngStream, counter: &ExecutionCounter) -> Result<FeatureRanking> {
        match self {
            SelectorKind::Uniform(s) => s.rank(rng, counter),
            SelectorKind::Simulated(s) => s.rank(rng, counter),
            SelectorKind::GroundTruth(s) => s.rank(rng, counter),
            SelectorKind::Real(s) => s.rank(rng, counter),
        }
    }
}
