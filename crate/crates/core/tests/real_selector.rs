use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use stabsim::data::{synth_generate, Dataset, SynthConfig};
use stabsim::ensemble::{run_real_ensemble, EnsembleConfig};
use stabsim::estimation::{collect_counts, uniform_threshold};
use stabsim::forest::{fit_forest, gini_importance, loo_accuracy, ForestConfig};
use stabsim::selectors::{ranking_from_scores, real_rank, RealSelector};
use stabsim::{make_stream, ExecutionCounter, FeatureSubset};

fn synth(n_sample: usize, n_feature: usize, n_informative: usize, seed: u64) -> Dataset {
    let cfg = SynthConfig {
        n_sample,
        n_feature,
        n_informative,
        n_class: 2,
        noise_level: 1.0,
        discretize_levels: None,
    };
    synth_generate(&cfg, &mut make_stream(seed, 100)).unwrap()
}

fn rows(d: &Dataset) -> Vec<usize> {
    (0..d.n_sample()).collect()
}

#[test]
fn single_member_ensemble_is_the_weak_selector() {
    let d = synth(40, 30, 3, 1);
    let forest = ForestConfig::with_trees(30);
    let rng = make_stream(7, 0);
    let counter = ExecutionCounter::new();
    let ens = run_real_ensemble(
        &d,
        &rows(&d),
        &forest,
        &EnsembleConfig::new(1, 5).unwrap(),
        &rng,
        &counter,
    )
    .unwrap();
    let direct = real_rank(&d, &rows(&d), &forest, &rng.derive(0), &counter)
        .unwrap()
        .top(5)
        .unwrap();
    assert_eq!(ens, direct);
}

#[test]
fn ensemble_counts_one_real_run_per_member() {
    let d = synth(30, 20, 2, 2);
    let counter = ExecutionCounter::new();
    let before = counter.real_runs();
    run_real_ensemble(
        &d,
        &rows(&d),
        &ForestConfig::with_trees(10),
        &EnsembleConfig::new(7, 4).unwrap(),
        &make_stream(1, 1),
        &counter,
    )
    .unwrap();
    assert_eq!(counter.real_runs() - before, 7);
    assert_eq!(counter.simulated_runs(), 0);
}

#[test]
fn single_informative_feature_is_selected() {
    let forest = ForestConfig::with_trees(50);
    let config = EnsembleConfig::new(10, 5).unwrap();
    let mut hits = 0;
    for seed in 0..100 {
        let d = synth(60, 50, 1, seed);
        let counter = ExecutionCounter::new();
        let out = run_real_ensemble(
            &d,
            &rows(&d),
            &forest,
            &config,
            &make_stream(seed, 1),
            &counter,
        )
        .unwrap();
        hits += usize::from(out.contains(0));
    }
    assert!(
        hits >= 90,
        "informative feature selected in {hits}/100 runs"
    );
}

#[test]
fn single_informative_feature_beats_uniform_threshold() {
    let forest = ForestConfig::with_trees(50);
    let mut hits = 0;
    for seed in 0..100 {
        let d = synth(60, 50, 1, seed);
        let rng = make_stream(seed, 2);
        let selector = RealSelector::new(&d, forest.clone()).unwrap();
        let counts =
            collect_counts(&selector, 10, 5, &rng.derive(1), &ExecutionCounter::new()).unwrap();
        let t = uniform_threshold(50, 5, 10, &rng.derive(0)).unwrap();
        hits += usize::from(counts[0] > t);
    }
    assert!(hits >= 90, "c_0 > t_uniform in {hits}/100 runs");
}

fn welch_t(x: &[f64], y: &[usize]) -> f64 {
    let stats = |class: usize| {
        let v: Vec<f64> = x
            .iter()
            .zip(y)
            .filter(|(_, &c)| c == class)
            .map(|(&v, _)| v)
            .collect();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var, n)
    };
    let (m0, v0, n0) = stats(0);
    let (m1, v1, n1) = stats(1);
    (m1 - m0) / (v0 / n0 + v1 / n1).sqrt()
}

#[test]
fn synthetic_informative_features_have_large_t_statistics() {
    let d = synth(60, 200, 10, 3);
    let t: Vec<f64> = (0..200)
        .map(|f| welch_t(d.column(f), d.labels()).abs())
        .collect();
    let top = ranking_from_scores(&t).top(20).unwrap();
    let found = (0..10).filter(|&f| top.contains(f)).count();
    assert!(
        found >= 8,
        "{found} of 10 informative features in the t-statistic top 20"
    );
}

#[test]
fn importance_on_pure_noise_is_roughly_uniform() {
    let n_feature = 20;
    let mut total = vec![0.0; n_feature];
    let reps = 30;
    for seed in 0..reps {
        let d = synth(60, n_feature, 0, 1000 + seed);
        let f = fit_forest(
            &d,
            &rows(&d),
            &ForestConfig::with_trees(100),
            &make_stream(seed, 3),
        )
        .unwrap();
        for (acc, v) in total.iter_mut().zip(gini_importance(&f, n_feature)) {
            *acc += v / reps as f64;
        }
    }
    let uniform = 1.0 / n_feature as f64;
    for (i, v) in total.iter().enumerate() {
        assert!(
            (v - uniform).abs() < 0.4 * uniform,
            "feature {i}: mean importance {v}"
        );
    }
}

#[test]
fn importance_top_ranks_are_mostly_informative() {
    let d = synth(60, 200, 10, 4);
    let f = fit_forest(
        &d,
        &rows(&d),
        &ForestConfig::with_trees(300),
        &make_stream(4, 4),
    )
    .unwrap();
    let top = ranking_from_scores(&gini_importance(&f, 200))
        .top(10)
        .unwrap();
    let found = (0..10).filter(|&f| top.contains(f)).count();
    assert!(
        found >= 6,
        "{found} of the top 10 importances are informative"
    );
}

#[test]
fn noise_only_accuracy_is_near_chance() {
    let mut acc = 0.0;
    let reps = 5;
    for seed in 0..reps {
        let mut rng = make_stream(seed, 5);
        let n = 40;
        let columns: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let mut labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        for i in (1..n).rev() {
            labels.swap(i, rng.gen_range(0..=i));
        }
        let d = Dataset::from_columns(columns, labels).unwrap();
        let all = FeatureSubset::new((0..10).collect(), 10).unwrap();
        acc += loo_accuracy(
            &d,
            &all,
            &ForestConfig::with_trees(50),
            &make_stream(seed, 6),
        )
        .unwrap()
            / reps as f64;
    }
    assert!((acc - 0.5).abs() <= 0.15, "mean noise-only accuracy {acc}");
}

#[test]
fn informative_data_is_predictable() {
    let d = synth(40, 30, 5, 9);
    let top = FeatureSubset::new((0..5).collect(), 30).unwrap();
    let acc = loo_accuracy(&d, &top, &ForestConfig::with_trees(50), &make_stream(9, 7)).unwrap();
    assert!(acc >= 0.8, "accuracy on informative features {acc}");
}
