//! Random-forest classifier with Gini splits and mean-decrease-in-impurity importance.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{leave_one_out_splits, Dataset};
use crate::error::{Error, Result};
use crate::rng::{sample_range, RngStream};
use crate::types::FeatureSubset;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_tree: usize,
    /// Candidate features per split; `floor(sqrt(n_feature))` when unset.
    pub mtry: Option<usize>,
    /// Overrides `mtry` with `round(fraction * n_feature)`.
    pub normalized_mtry: Option<f64>,
    /// `None` grows until purity.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub bootstrap: bool,
    /// Fraction of rows each weak selector draws (without replacement) before fitting.
    /// `1.0` uses every row and leaves all randomness to the forest itself.
    pub subsample_fraction: f64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_tree: 100,
            mtry: None,
            normalized_mtry: None,
            max_depth: None,
            min_samples_split: 2,
            bootstrap: true,
            subsample_fraction: 1.0,
        }
    }
}

impl ForestConfig {
    pub fn with_trees(n_tree: usize) -> Self {
        Self {
            n_tree,
            ..Self::default()
        }
    }

    /// Effective number of split candidates for `n_feature` features.
    pub fn resolved_mtry(&self, n_feature: usize) -> Result<usize> {
        let mtry = match (self.normalized_mtry, self.mtry) {
            (Some(frac), _) => {
                if !(frac > 0.0 && frac <= 1.0) {
                    return Err(Error::invalid(format!(
                        "normalized mtry {frac} must lie in (0, 1]"
                    )));
                }
                ((frac * n_feature as f64).round() as usize).max(1)
            }
            (None, Some(m)) => m,
            (None, None) => ((n_feature as f64).sqrt().floor() as usize).max(1),
        };
        if mtry == 0 || mtry > n_feature {
            return Err(Error::invalid(format!(
                "mtry = {mtry} must lie in [1, {n_feature}]"
            )));
        }
        Ok(mtry)
    }

    pub fn validate(&self, n_feature: usize) -> Result<()> {
        if self.n_tree == 0 {
            return Err(Error::invalid("n_tree must be >= 1"));
        }
        if self.min_samples_split < 2 {
            return Err(Error::invalid("min_samples_split must be >= 2"));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(Error::invalid("subsample fraction must lie in (0, 1]"));
        }
        self.resolved_mtry(n_feature).map(|_| ())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        /// Training samples per class reaching this leaf.
        counts: Vec<u32>,
    },
    Split {
        feature: usize,
        /// Samples with `value <= threshold` go left.
        threshold: f64,
        left: usize,
        right: usize,
        /// Weighted impurity decrease: `N_t * gini(t) - N_l * gini(l) - N_r * gini(r)`.
        gain: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_splits(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Split { .. }))
            .count()
    }

    fn leaf_for(&self, row: &[f64]) -> &[u32] {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { counts } => return counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    idx = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    /// Class with the most training samples in the reached leaf; lower class wins ties.
    pub fn predict(&self, row: &[f64]) -> usize {
        argmax_lowest(self.leaf_for(row).iter().copied())
    }

    /// Unnormalized per-feature impurity decrease.
    fn raw_importance(&self, n_feature: usize) -> Vec<f64> {
        let mut imp = vec![0.0; n_feature];
        for node in &self.nodes {
            if let Node::Split { feature, gain, .. } = node {
                imp[*feature] += gain;
            }
        }
        imp
    }
}

fn argmax_lowest<I: Iterator<Item = u32>>(values: I) -> usize {
    let mut best = (0, 0u32);
    for (i, v) in values.enumerate() {
        if i == 0 || v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<Tree>,
    n_feature: usize,
    n_class: usize,
}

impl Forest {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_feature(&self) -> usize {
        self.n_feature
    }

    pub fn n_class(&self) -> usize {
        self.n_class
    }
}

/// Fits `config.n_tree` trees on `rows`. Tree `t` draws from `rng.derive(t)`.
pub fn fit_forest(
    dataset: &Dataset,
    rows: &[usize],
    config: &ForestConfig,
    rng: &RngStream,
) -> Result<Forest> {
    config.validate(dataset.n_feature())?;
    let mtry = config.resolved_mtry(dataset.n_feature())?;
    if let Some(&bad) = rows.iter().find(|&&r| r >= dataset.n_sample()) {
        return Err(Error::invalid(format!("row {bad} out of range")));
    }
    if rows.len() < config.min_samples_split {
        return Err(Error::Fit(format!(
            "{} training rows is below min_samples_split = {}",
            rows.len(),
            config.min_samples_split
        )));
    }
    let labels = dataset.labels();
    if rows.iter().all(|&r| labels[r] == labels[rows[0]]) {
        return Err(Error::Fit("training rows contain a single class".into()));
    }

    let trees = (0..config.n_tree)
        .into_par_iter()
        .map(|t| {
            let mut tree_rng = rng.derive(t as u64);
            let mut sample: Vec<usize> = if config.bootstrap {
                (0..rows.len())
                    .map(|_| rows[tree_rng.gen_range(0..rows.len())])
                    .collect()
            } else {
                rows.to_vec()
            };
            let mut builder = TreeBuilder {
                data: dataset,
                mtry,
                max_depth: config.max_depth,
                min_samples_split: config.min_samples_split,
                rng: tree_rng,
                nodes: Vec::new(),
                values: Vec::with_capacity(sample.len()),
            };
            builder.grow(&mut sample, 0);
            Tree {
                nodes: builder.nodes,
            }
        })
        .collect();

    Ok(Forest {
        trees,
        n_feature: dataset.n_feature(),
        n_class: dataset.n_class(),
    })
}

struct TreeBuilder<'a> {
    data: &'a Dataset,
    mtry: usize,
    max_depth: Option<usize>,
    min_samples_split: usize,
    rng: RngStream,
    nodes: Vec<Node>,
    values: Vec<(f64, usize)>,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Candidate {
    /// Higher gain, then lower feature, then lower threshold.
    fn beats(&self, other: &Candidate) -> bool {
        if self.gain != other.gain {
            return self.gain > other.gain;
        }
        if self.feature != other.feature {
            return self.feature < other.feature;
        }
        self.threshold < other.threshold
    }
}

fn weighted_gini(counts: &[u32], n: u32) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let sq: f64 = counts.iter().map(|&c| (c as f64) * (c as f64)).sum();
    n as f64 - sq / n as f64
}

impl TreeBuilder<'_> {
    fn class_counts(&self, rows: &[usize]) -> Vec<u32> {
        let mut counts = vec![0u32; self.data.n_class()];
        for &r in rows {
            counts[self.data.labels()[r]] += 1;
        }
        counts
    }

    fn grow(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let counts = self.class_counts(rows);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_reached = self.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_reached || rows.len() < self.min_samples_split {
            return self.push(Node::Leaf { counts });
        }
        let Some(best) = self.best_split(rows, &counts) else {
            return self.push(Node::Leaf { counts });
        };

        let column = self.data.column(best.feature);
        let mut split_at = 0;
        for i in 0..rows.len() {
            if column[rows[i]] <= best.threshold {
                rows.swap(i, split_at);
                split_at += 1;
            }
        }
        let idx = self.push(Node::Leaf { counts: Vec::new() });
        let (l, r) = rows.split_at_mut(split_at);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[idx] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
            gain: best.gain,
        };
        idx
    }

    fn push(&mut self, node: Node) -> usize {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    fn best_split(&mut self, rows: &[usize], counts: &[u32]) -> Option<Candidate> {
        let n = rows.len() as u32;
        let parent = weighted_gini(counts, n);
        let features = sample_range(self.data.n_feature(), self.mtry, &mut self.rng)
            .expect("mtry <= n_feature");
        let labels = self.data.labels();
        let mut best: Option<Candidate> = None;
        let mut left = vec![0u32; counts.len()];
        let mut right = vec![0u32; counts.len()];

        for feature in features {
            let column = self.data.column(feature);
            self.values.clear();
            self.values
                .extend(rows.iter().map(|&r| (column[r], labels[r])));
            self.values.sort_by(|a, b| a.0.total_cmp(&b.0));
            if self.values[0].0 == self.values[self.values.len() - 1].0 {
                continue;
            }
            left.iter_mut().for_each(|c| *c = 0);
            right.copy_from_slice(counts);
            for i in 0..self.values.len() - 1 {
                let (v, y) = self.values[i];
                left[y] += 1;
                right[y] -= 1;
                let next = self.values[i + 1].0;
                if v == next {
                    continue;
                }
                let n_left = i as u32 + 1;
                let gain =
                    parent - weighted_gini(&left, n_left) - weighted_gini(&right, n - n_left);
                let mut threshold = v + (next - v) / 2.0;
                if threshold >= next {
                    threshold = v;
                }
                let cand = Candidate {
                    feature,
                    threshold,
                    gain,
                };
                if best.as_ref().is_none_or(|b| cand.beats(b)) {
                    best = Some(cand);
                }
            }
        }
        best
    }
}

/// Mean decrease in impurity per feature.
///
/// Each tree's vector is normalized to sum 1, vectors of trees that split at least
/// once are averaged, and the average is renormalized. Without any split the result
/// is all zeros.
pub fn gini_importance(forest: &Forest, n_feature: usize) -> Vec<f64> {
    let mut total = vec![0.0; n_feature];
    for tree in &forest.trees {
        if tree.n_splits() == 0 {
            continue;
        }
        let imp = tree.raw_importance(n_feature);
        let sum: f64 = imp.iter().sum();
        if sum > 0.0 {
            for (t, v) in total.iter_mut().zip(&imp) {
                *t += v / sum;
            }
        }
    }
    let sum: f64 = total.iter().sum();
    if sum > 0.0 {
        total.iter_mut().for_each(|v| *v /= sum);
    }
    total
}

/// Majority vote of per-tree predictions; lower class index wins ties.
pub fn predict(forest: &Forest, row: &[f64]) -> Result<usize> {
    if row.len() != forest.n_feature {
        return Err(Error::invalid(format!(
            "row has {} features, forest was trained on {}",
            row.len(),
            forest.n_feature
        )));
    }
    let mut votes = vec![0u32; forest.n_class];
    for tree in &forest.trees {
        votes[tree.predict(row)] += 1;
    }
    Ok(argmax_lowest(votes.into_iter()))
}

/// Leave-one-out accuracy of a forest trained on each fold's `train2` rows,
/// restricted to the `selected` columns.
pub fn loo_accuracy(
    dataset: &Dataset,
    selected: &FeatureSubset,
    config: &ForestConfig,
    rng: &RngStream,
) -> Result<f64> {
    let projected = dataset.select_features(selected.members())?;
    let splits = leave_one_out_splits(dataset, &rng.derive(0))?;
    let hits = splits
        .par_iter()
        .enumerate()
        .map(|(i, split)| -> Result<usize> {
            let forest = fit_forest(&projected, &split.train2, config, &rng.derive2(1, i as u64))?;
            let t = split.test[0];
            Ok(usize::from(
                predict(&forest, &projected.row(t))? == dataset.labels()[t],
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / splits.len() as f64)
}
