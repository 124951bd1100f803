//! Calibration of the simulated selector against a real one.
//!
//! The pipeline: a uniform-selector threshold `t_uniform`, per-feature selection counts
//! of the real selector, `n_useful` as the number of features counted above the
//! threshold, the stability of the real selector, a search for the `p` whose simulated
//! stability matches it, and a re-estimation of `n_useful` with the simulator in place
//! of the real selector. Only the counting and the stability target touch the real
//! selector.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{run_ensemble, weak_rankings, EnsembleConfig};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::selectors::{FeatureSelector, SimulatedSelector, UniformSelector};
use crate::stability::{estimate_stability, DEFAULT_M_STABILITY};
use crate::types::{ExecutionCounter, ExecutionCounts, SimulatorParams};

pub const REPORT_SCHEMA: &str = "stabsim-report/1";

/// `p = 0.1, 0.2, ..., 0.9`.
pub fn default_p_grid() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

/// Simulated runs of a calibration stay below
/// `m_stability * (k_p + m_ensemble) * SIMULATED_RUN_CONSTANT` plus the
/// `m_stability * sum(curve sizes)` runs of the reported curve.
pub const SIMULATED_RUN_CONSTANT: u64 = 4;

/// Problem size shared by all simulator instances in one calibration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimensions {
    pub n_feature: usize,
    pub n_target: usize,
}

impl Dimensions {
    pub fn new(n_feature: usize, n_target: usize) -> Result<Self> {
        if n_target == 0 || n_target > n_feature {
            return Err(Error::invalid(format!(
                "need 0 < n_target ({n_target}) <= n_feature ({n_feature})"
            )));
        }
        Ok(Self {
            n_feature,
            n_target,
        })
    }

    pub fn params(&self, n_useful: usize, p: f64) -> Result<SimulatorParams> {
        SimulatorParams::new(self.n_feature, self.n_target, n_useful, p)
    }

    /// An estimated `n_useful` moved into the simulator's valid range `[n_target, n_feature]`.
    pub fn clamp_n_useful(&self, n_useful: usize) -> usize {
        n_useful.clamp(self.n_target, self.n_feature)
    }
}

/// `c_i`: how many of `m_ensemble` runs (run `i` on `rng.derive(i)`) put feature `i`
/// in their top `n_target`.
pub fn collect_counts<S: FeatureSelector + ?Sized>(
    selector: &S,
    m_ensemble: usize,
    n_target: usize,
    rng: &RngStream,
    counter: &ExecutionCounter,
) -> Result<Vec<usize>> {
    if m_ensemble == 0 {
        return Err(Error::invalid("m_ensemble must be >= 1"));
    }
    let rankings = weak_rankings(selector, m_ensemble, rng, counter)?;
    let mut counts = vec![0usize; selector.n_feature()];
    for r in &rankings {
        for &f in r.top(n_target)?.members() {
            counts[f] += 1;
        }
    }
    Ok(counts)
}

/// Largest per-feature count over `m_ensemble` uniform-selector runs.
pub fn uniform_threshold(
    n_feature: usize,
    n_target: usize,
    m_ensemble: usize,
    rng: &RngStream,
) -> Result<usize> {
    Dimensions::new(n_feature, n_target)?;
    let counts = collect_counts(
        &UniformSelector { n_feature },
        m_ensemble,
        n_target,
        rng,
        &ExecutionCounter::new(),
    )?;
    Ok(counts.into_iter().max().unwrap_or(0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdStats {
    pub values: Vec<usize>,
    pub mean: f64,
    pub std: f64,
}

/// `reps` independent thresholds; repetition `r` uses `rng.derive(r)`.
pub fn uniform_threshold_distribution(
    n_feature: usize,
    n_target: usize,
    m_ensemble: usize,
    reps: usize,
    rng: &RngStream,
) -> Result<ThresholdStats> {
    if reps == 0 {
        return Err(Error::invalid("need at least one threshold repetition"));
    }
    let values = (0..reps)
        .into_par_iter()
        .map(|r| uniform_threshold(n_feature, n_target, m_ensemble, &rng.derive(r as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mean = values.iter().sum::<usize>() as f64 / reps as f64;
    let var = if reps > 1 {
        values
            .iter()
            .map(|&v| (v as f64 - mean).powi(2))
            .sum::<f64>()
            / (reps - 1) as f64
    } else {
        0.0
    };
    Ok(ThresholdStats {
        values,
        mean,
        std: var.sqrt(),
    })
}

/// Number of features whose count is strictly above `t_uniform`.
pub fn estimate_n_useful(counts: &[usize], t_uniform: usize) -> usize {
    counts.iter().filter(|&&c| c > t_uniform).count()
}

/// Stability of the simulated ensemble of size `m_ensemble`.
///
/// Replica `r` always uses `rng.derive(r)`, so evaluations at different `p` or
/// ensemble sizes share random numbers.
pub fn simulated_stability(
    params: &SimulatorParams,
    m_ensemble: usize,
    m_stability: usize,
    rng: &RngStream,
    counter: &ExecutionCounter,
) -> Result<f64> {
    let selector = SimulatedSelector::new(*params)?;
    let config = EnsembleConfig::new(m_ensemble, params.n_target)?;
    Ok(estimate_stability(
        |_, stream| run_ensemble(&selector, &config, stream, counter),
        m_stability,
        rng,
    )?
    .j)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub p: f64,
    pub j: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PEstimate {
    pub p_hat: f64,
    pub grid: Vec<GridPoint>,
}

/// Grid search for the `p` whose simulated stability is closest to `stability_target`.
/// Ties go to the smaller `p`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_p(
    stability_target: f64,
    n_useful: usize,
    dims: Dimensions,
    grid: &[f64],
    m_ensemble: usize,
    m_stability: usize,
    rng: &RngStream,
    counter: &ExecutionCounter,
) -> Result<PEstimate> {
    if grid.is_empty() {
        return Err(Error::invalid("p grid is empty"));
    }
    if grid
        .windows(2)
        .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
    {
        return Err(Error::invalid("p grid must be strictly ascending"));
    }
    let points = grid
        .iter()
        .map(|&p| {
            let params = dims.params(n_useful, p)?;
            let j = simulated_stability(&params, m_ensemble, m_stability, rng, counter)?;
            Ok(GridPoint { p, j })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = points[0];
    for pt in &points[1..] {
        if (pt.j - stability_target).abs() < (best.j - stability_target).abs() {
            best = *pt;
        }
    }
    Ok(PEstimate {
        p_hat: best.p,
        grid: points,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinarySearchConfig {
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for BinarySearchConfig {
    fn default() -> Self {
        Self {
            tolerance: 0.01,
            max_iter: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinarySearchResult {
    pub p_hat: f64,
    pub j: f64,
    pub converged: bool,
    /// Every evaluated `(p, J)` in evaluation order.
    pub trace: Vec<GridPoint>,
}

/// Bisection on `p` in `[0, 1]`, relying on stability increasing with `p`.
///
/// Stops once `|J(p) - target| <= tolerance` or after `max_iter` midpoints. Targets
/// outside `[J(0), J(1)]` return the nearer end, flagged as not converged.
#[allow(clippy::too_many_arguments)]
pub fn estimate_p_binary_search(
    stability_target: f64,
    n_useful: usize,
    dims: Dimensions,
    search: BinarySearchConfig,
    m_ensemble: usize,
    m_stability: usize,
    rng: &RngStream,
    counter: &ExecutionCounter,
) -> Result<BinarySearchResult> {
    if search.tolerance.is_nan() || search.tolerance <= 0.0 {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let mut trace = Vec::new();
    let mut eval = |p: f64| -> Result<GridPoint> {
        let params = dims.params(n_useful, p)?;
        let j = simulated_stability(&params, m_ensemble, m_stability, rng, counter)?;
        let pt = GridPoint { p, j };
        trace.push(pt);
        Ok(pt)
    };
    let close = |pt: &GridPoint| (pt.j - stability_target).abs() <= search.tolerance;

    let low = eval(0.0)?;
    if close(&low) || stability_target < low.j {
        let converged = close(&low);
        return Ok(BinarySearchResult {
            p_hat: 0.0,
            j: low.j,
            converged,
            trace,
        });
    }
    let high = eval(1.0)?;
    if close(&high) || stability_target > high.j {
        let converged = close(&high);
        return Ok(BinarySearchResult {
            p_hat: 1.0,
            j: high.j,
            converged,
            trace,
        });
    }

    let (mut lo, mut hi) = (0.0, 1.0);
    let mut best = if (low.j - stability_target).abs() <= (high.j - stability_target).abs() {
        low
    } else {
        high
    };
    for _ in 0..search.max_iter {
        let mid = eval((lo + hi) / 2.0)?;
        if (mid.j - stability_target).abs() < (best.j - stability_target).abs() {
            best = mid;
        }
        if close(&mid) {
            return Ok(BinarySearchResult {
                p_hat: mid.p,
                j: mid.j,
                converged: true,
                trace,
            });
        }
        if mid.j < stability_target {
            lo = mid.p;
        } else {
            hi = mid.p;
        }
    }
    Ok(BinarySearchResult {
        p_hat: best.p,
        j: best.j,
        converged: false,
        trace,
    })
}

/// Re-runs the `n_useful` estimator with the simulator `f_{n_useful, p}` in place of
/// the real selector: fresh threshold on `rng.derive(0)`, fresh counts on `rng.derive(1)`.
pub fn verify_n_useful(
    n_useful: usize,
    p: f64,
    dims: Dimensions,
    m_ensemble: usize,
    rng: &RngStream,
    counter: &ExecutionCounter,
) -> Result<usize> {
    let params = dims.params(n_useful, p)?;
    let t_uniform = uniform_threshold(dims.n_feature, dims.n_target, m_ensemble, &rng.derive(0))?;
    let counts = collect_counts(
        &SimulatedSelector::new(params)?,
        m_ensemble,
        dims.n_target,
        &rng.derive(1),
        counter,
    )?;
    Ok(estimate_n_useful(&counts, t_uniform))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub n_useful_star: usize,
    /// Re-estimates in order; the starting value is not included.
    pub trajectory: Vec<usize>,
    pub converged: bool,
}

/// Slack used when none is given: exact agreement for a single pass, `|Δ| <= 2` when iterating.
pub fn default_slack(max_iter: usize) -> usize {
    if max_iter <= 1 {
        0
    } else {
        2
    }
}

/// Iterates `n <- A[f_{n, p}]` until a re-estimate is within `slack` of its input or
/// `max_iter` passes have run. Pass `i` uses `rng.derive(i)`. Values below `n_target`
/// are raised to `n_target` before simulating.
#[allow(clippy::too_many_arguments)]
pub fn fixed_point_iterate(
    start: usize,
    p: f64,
    dims: Dimensions,
    m_ensemble: usize,
    max_iter: usize,
    slack: usize,
    rng: &RngStream,
    counter: &ExecutionCounter,
) -> Result<FixedPoint> {
    if max_iter == 0 {
        return Err(Error::invalid("max_iter must be >= 1"));
    }
    let mut current = start;
    let mut trajectory = Vec::with_capacity(max_iter);
    let mut converged = false;
    for i in 0..max_iter {
        let next = verify_n_useful(
            dims.clamp_n_useful(current),
            p,
            dims,
            m_ensemble,
            &rng.derive(i as u64),
            counter,
        )?;
        trajectory.push(next);
        let done = next.abs_diff(current) <= slack;
        current = next;
        if done {
            converged = true;
            break;
        }
    }
    Ok(FixedPoint {
        n_useful_star: current,
        trajectory,
        converged,
    })
}

/// Stability of the real ensemble computed the expensive way: `m_stability` replicas of
/// each ensemble size, every replica running the real selector `m_ensemble` times.
pub fn naive_ensemble_stability<S: FeatureSelector + ?Sized>(
    selector: &S,
    n_target: usize,
    m_ensembles: &[usize],
    m_stability: usize,
    rng: &RngStream,
    counter: &ExecutionCounter,
) -> Result<Vec<CurvePoint>> {
    m_ensembles
        .iter()
        .map(|&m| {
            let config = EnsembleConfig::new(m, n_target)?;
            let run = estimate_stability(
                |_, stream| run_ensemble(selector, &config, stream, counter),
                m_stability,
                &rng.derive(m as u64),
            )?;
            Ok(CurvePoint {
                m_ensemble: m,
                j: run.j,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub m_ensemble: usize,
    pub j: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub n_target: usize,
    pub m_ensemble: usize,
    pub m_stability: usize,
    pub p_grid: Vec<f64>,
    /// Ensemble size of the real selector whose stability `p` is matched against.
    pub stability_ensemble_size: usize,
    pub t_reps: usize,
    pub fixed_point_max_iter: usize,
    /// `None` picks [`default_slack`].
    pub fixed_point_slack: Option<usize>,
    /// Ensemble sizes for the final simulated stability curve.
    pub curve_m_ensembles: Vec<usize>,
    pub binary_search: Option<BinarySearchConfig>,
}

impl CalibrationConfig {
    pub fn new(n_target: usize, m_ensemble: usize) -> Self {
        Self {
            n_target,
            m_ensemble,
            m_stability: DEFAULT_M_STABILITY,
            p_grid: default_p_grid(),
            stability_ensemble_size: 1,
            t_reps: 1,
            fixed_point_max_iter: 1,
            fixed_point_slack: None,
            curve_m_ensembles: vec![1, 5, 10, 20, 30, 40, 50],
            binary_search: None,
        }
    }

    pub fn validate(&self, n_feature: usize) -> Result<()> {
        Dimensions::new(n_feature, self.n_target)?;
        if self.m_ensemble == 0 || self.stability_ensemble_size == 0 {
            return Err(Error::invalid("ensemble sizes must be >= 1"));
        }
        if self.m_stability < 2 {
            return Err(Error::invalid("m_stability must be >= 2"));
        }
        if self.t_reps == 0 || self.fixed_point_max_iter == 0 {
            return Err(Error::invalid(
                "t_reps and fixed_point_max_iter must be >= 1",
            ));
        }
        if self.curve_m_ensembles.contains(&0) {
            return Err(Error::invalid("curve ensemble sizes must be >= 1"));
        }
        if self.p_grid.is_empty() || self.p_grid.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid("p grid must be non-empty and within [0, 1]"));
        }
        Ok(())
    }

    /// Real-selector runs a calibration performs.
    pub fn expected_real_runs(&self) -> u64 {
        (self.m_ensemble + self.m_stability * self.stability_ensemble_size) as u64
    }

    /// Real-selector runs needed to measure the curve directly.
    pub fn naive_real_runs(&self) -> u64 {
        (self.m_stability * self.curve_m_ensembles.iter().sum::<usize>()) as u64
    }

    pub fn simulated_run_bound(&self) -> u64 {
        let search = (self.m_stability * (self.p_grid.len() + self.m_ensemble)) as u64
            * SIMULATED_RUN_CONSTANT;
        search + self.curve_runs()
    }

    /// Simulated runs spent on the reported stability curve.
    pub fn curve_runs(&self) -> u64 {
        (self.m_stability * self.curve_m_ensembles.iter().sum::<usize>()) as u64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutionSummary {
    pub real_runs: u64,
    pub simulated_runs: u64,
    pub expected_real_runs: u64,
    pub naive_real_runs: u64,
    pub simulated_run_bound: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub t_uniform: usize,
    pub t_uniform_mean: f64,
    pub t_uniform_std: f64,
    pub n_useful_hat: usize,
    /// `n_useful_hat` raised to `n_target` when needed, as used by the simulator.
    pub n_useful_sim: usize,
    pub p_hat: f64,
    pub n_useful_v: usize,
    pub fixed_point: FixedPoint,
    pub stability_target: f64,
    pub grid: Vec<GridPoint>,
    pub binary_search: Option<BinarySearchResult>,
    pub curve: Vec<CurvePoint>,
    pub counts: Vec<usize>,
    pub execution: ExecutionSummary,
    pub config: CalibrationConfig,
}

/// Stream labels of the calibration stages, children of the calibration stream.
pub mod streams {
    pub const THRESHOLD: u64 = 1;
    pub const COUNTS: u64 = 2;
    pub const STABILITY_TARGET: u64 = 3;
    pub const P_SEARCH: u64 = 4;
    pub const VERIFICATION: u64 = 5;
    pub const CURVE: u64 = 6;
}

/// End-to-end calibration against `real`.
///
/// Runs the real selector exactly `m_ensemble + m_stability * stability_ensemble_size`
/// times and fails with [`Error::Accounting`] otherwise.
pub fn full_calibration<S: FeatureSelector + ?Sized>(
    real: &S,
    config: &CalibrationConfig,
    rng: &RngStream,
    counter: &ExecutionCounter,
) -> Result<CalibrationReport> {
    let n_feature = real.n_feature();
    config.validate(n_feature)?;
    let dims = Dimensions::new(n_feature, config.n_target)?;
    let before = counter.snapshot();

    let thresholds = uniform_threshold_distribution(
        n_feature,
        config.n_target,
        config.m_ensemble,
        config.t_reps,
        &rng.derive(streams::THRESHOLD),
    )?;
    let t_uniform = thresholds.values[0];

    let counts = collect_counts(
        real,
        config.m_ensemble,
        config.n_target,
        &rng.derive(streams::COUNTS),
        counter,
    )?;
    let n_useful_hat = estimate_n_useful(&counts, t_uniform);
    let n_useful_sim = dims.clamp_n_useful(n_useful_hat);

    let target_config = EnsembleConfig::new(config.stability_ensemble_size, config.n_target)?;
    let stability_target = estimate_stability(
        |_, stream| run_ensemble(real, &target_config, stream, counter),
        config.m_stability,
        &rng.derive(streams::STABILITY_TARGET),
    )?
    .j;

    let search_rng = rng.derive(streams::P_SEARCH);
    let p_est = estimate_p(
        stability_target,
        n_useful_sim,
        dims,
        &config.p_grid,
        config.stability_ensemble_size,
        config.m_stability,
        &search_rng,
        counter,
    )?;
    let binary_search = config
        .binary_search
        .map(|search| {
            estimate_p_binary_search(
                stability_target,
                n_useful_sim,
                dims,
                search,
                config.stability_ensemble_size,
                config.m_stability,
                &search_rng,
                counter,
            )
        })
        .transpose()?;
    let p_hat = p_est.p_hat;

    let slack = config
        .fixed_point_slack
        .unwrap_or_else(|| default_slack(config.fixed_point_max_iter));
    let fixed_point = fixed_point_iterate(
        n_useful_sim,
        p_hat,
        dims,
        config.m_ensemble,
        config.fixed_point_max_iter,
        slack,
        &rng.derive(streams::VERIFICATION),
        counter,
    )?;
    let n_useful_v = fixed_point.trajectory[0];

    let curve_params = dims.params(n_useful_sim, p_hat)?;
    let curve_rng = rng.derive(streams::CURVE);
    let curve = config
        .curve_m_ensembles
        .iter()
        .map(|&m| {
            Ok(CurvePoint {
                m_ensemble: m,
                j: simulated_stability(&curve_params, m, config.m_stability, &curve_rng, counter)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let after = counter.snapshot();
    let used = ExecutionCounts {
        real_runs: after.real_runs - before.real_runs,
        simulated_runs: after.simulated_runs - before.simulated_runs,
    };
    if used.real_runs != config.expected_real_runs() {
        return Err(Error::Accounting(format!(
            "calibration ran the real selector {} times, expected {}",
            used.real_runs,
            config.expected_real_runs()
        )));
    }

    Ok(CalibrationReport {
        t_uniform,
        t_uniform_mean: thresholds.mean,
        t_uniform_std: thresholds.std,
        n_useful_hat,
        n_useful_sim,
        p_hat,
        n_useful_v,
        fixed_point,
        stability_target,
        grid: p_est.grid,
        binary_search,
        curve,
        counts,
        execution: ExecutionSummary {
            real_runs: used.real_runs,
            simulated_runs: used.simulated_runs,
            expected_real_runs: config.expected_real_runs(),
            naive_real_runs: config.naive_real_runs(),
            simulated_run_bound: config.simulated_run_bound(),
        },
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::make_stream;
    use crate::selectors::GroundTruthSelector;

    fn dims(n_feature: usize, n_target: usize) -> Dimensions {
        Dimensions::new(n_feature, n_target).unwrap()
    }

    #[test]
    fn threshold_edge_cases() {
        let rng = make_stream(0, 0);
        assert_eq!(uniform_threshold(100, 5, 1, &rng).unwrap(), 1);
        assert_eq!(uniform_threshold(12, 12, 7, &rng).unwrap(), 7);
        assert!(uniform_threshold(10, 11, 7, &rng).is_err());
    }

    #[test]
    fn threshold_distribution_is_concentrated() {
        let stats = uniform_threshold_distribution(2000, 20, 50, 1000, &make_stream(4, 0)).unwrap();
        assert_eq!(stats.values.len(), 1000);
        assert!(
            stats.std / stats.mean < 0.2,
            "{} ± {}",
            stats.mean,
            stats.std
        );
        assert!(stats.mean > 3.0 && stats.mean < 7.0);
    }

    #[test]
    fn n_useful_counting() {
        assert_eq!(estimate_n_useful(&[5, 3, 7], 4), 2);
        assert_eq!(estimate_n_useful(&[1, 2, 4], 4), 0);
        // monotone non-increasing in the threshold
        let counts = [0, 3, 3, 5, 9, 1];
        let seq: Vec<usize> = (0..10).map(|t| estimate_n_useful(&counts, t)).collect();
        assert!(seq.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn counts_conserve_mass() {
        let counter = ExecutionCounter::new();
        let rng = make_stream(6, 0);
        let uni = UniformSelector { n_feature: 40 };
        let one = collect_counts(&uni, 1, 7, &rng, &counter).unwrap();
        assert_eq!(one.iter().filter(|&&c| c == 1).count(), 7);
        assert!(one.iter().all(|&c| c <= 1));
        let many = collect_counts(&uni, 13, 7, &rng, &counter).unwrap();
        assert_eq!(many.iter().sum::<usize>(), 13 * 7);

        let prm = SimulatorParams::new(40, 5, 5, 1.0).unwrap();
        let sim =
            collect_counts(&SimulatedSelector::new(prm).unwrap(), 9, 5, &rng, &counter).unwrap();
        assert!(sim[..5].iter().all(|&c| c == 9));
        assert!(sim[5..].iter().all(|&c| c == 0));
    }

    #[test]
    fn exact_grid_match_and_upper_end() {
        let counter = ExecutionCounter::new();
        let d = dims(400, 10);
        let rng = make_stream(8, 0);
        let grid = [0.3, 0.6, 0.9];
        let first = estimate_p(0.0, 30, d, &grid, 1, 10, &rng, &counter).unwrap();
        let j_mid = first.grid[1].j;
        let exact = estimate_p(j_mid, 30, d, &grid, 1, 10, &rng, &counter).unwrap();
        assert_eq!(exact.p_hat, 0.6);
        let top = estimate_p(1.0, 30, d, &grid, 1, 10, &rng, &counter).unwrap();
        assert_eq!(top.p_hat, 0.9);
        assert!(estimate_p(0.1, 30, d, &[], 1, 10, &rng, &counter).is_err());
        assert!(estimate_p(0.1, 30, d, &[0.5, 0.2], 1, 10, &rng, &counter).is_err());
    }

    #[test]
    fn grid_ties_prefer_smaller_p() {
        let counter = ExecutionCounter::new();
        // n_useful == n_target and p in {0.9999, 1}: both rank S' on top almost surely,
        // giving J = 1 at both points.
        let d = dims(50, 5);
        let est = estimate_p(
            1.0,
            5,
            d,
            &[0.99999, 1.0],
            1,
            5,
            &make_stream(1, 1),
            &counter,
        )
        .unwrap();
        assert_eq!(est.grid[0].j, est.grid[1].j);
        assert_eq!(est.p_hat, 0.99999);
    }

    #[test]
    fn binary_search_boundaries() {
        let counter = ExecutionCounter::new();
        let d = dims(2000, 20);
        let rng = make_stream(3, 0);
        let search = BinarySearchConfig {
            tolerance: 1e-4,
            max_iter: 8,
        };
        let below = estimate_p_binary_search(0.0, 60, d, search, 1, 10, &rng, &counter).unwrap();
        assert_eq!((below.p_hat, below.converged), (0.0, false));
        let above = estimate_p_binary_search(0.99, 60, d, search, 1, 10, &rng, &counter).unwrap();
        assert_eq!((above.p_hat, above.converged), (1.0, false));
        let bad = BinarySearchConfig {
            tolerance: 0.0,
            max_iter: 8,
        };
        assert!(estimate_p_binary_search(0.1, 60, d, bad, 1, 10, &rng, &counter).is_err());
    }

    #[test]
    fn verification_of_perfect_selector() {
        let counter = ExecutionCounter::new();
        let v = verify_n_useful(20, 1.0, dims(2000, 20), 50, &make_stream(2, 0), &counter).unwrap();
        assert_eq!(v, 20);
        assert_eq!(counter.simulated_runs(), 50);
    }

    #[test]
    fn fixed_point_contracts() {
        let counter = ExecutionCounter::new();
        let d = dims(2000, 20);
        let rng = make_stream(12, 0);
        let once = fixed_point_iterate(60, 0.7, d, 50, 1, 0, &rng, &counter).unwrap();
        assert_eq!(once.trajectory.len(), 1);
        let v = verify_n_useful(60, 0.7, d, 50, &rng.derive(0), &counter).unwrap();
        assert_eq!(once.trajectory[0], v);
        let settled = fixed_point_iterate(20, 1.0, d, 50, 5, 0, &rng, &counter).unwrap();
        assert_eq!(settled.trajectory, vec![20]);
        assert!(settled.converged);
        assert!(fixed_point_iterate(20, 1.0, d, 50, 0, 0, &rng, &counter).is_err());
    }

    #[test]
    fn calibration_accounting() {
        let counter = ExecutionCounter::new();
        let truth = GroundTruthSelector {
            params: SimulatorParams::new(300, 10, 30, 0.8).unwrap(),
        };
        let mut cfg = CalibrationConfig::new(10, 12);
        cfg.m_stability = 6;
        cfg.curve_m_ensembles = vec![1, 4];
        let report = full_calibration(&truth, &cfg, &make_stream(5, 0), &counter).unwrap();
        assert_eq!(report.execution.real_runs, 12 + 6);
        assert_eq!(counter.real_runs(), 18);
        assert_eq!(report.execution.naive_real_runs, 6 * 5);
        assert_eq!(report.counts.iter().sum::<usize>(), 12 * 10);
        assert_eq!(report.grid.len(), 9);
        assert!(report.execution.simulated_runs <= report.execution.simulated_run_bound);

        cfg.stability_ensemble_size = 3;
        let report = full_calibration(&truth, &cfg, &make_stream(5, 0), &counter).unwrap();
        assert_eq!(report.execution.real_runs, 12 + 6 * 3);
    }
}
