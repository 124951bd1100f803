//! Subcommand implementations. Each returns its outputs as values so they can be
//! checked without spawning the binary.

use std::fmt::Write as _;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use stabsim::data::{load_csv, synth_generate, Dataset, LabelColumn, SynthConfig};
use stabsim::ensemble::{mean_rank_order, weak_rankings};
use stabsim::estimation::{
    full_calibration, naive_ensemble_stability, simulated_stability, BinarySearchConfig,
    CalibrationConfig, CalibrationReport, CurvePoint,
};
use stabsim::forest::{fit_forest, predict, ForestConfig};
use stabsim::selectors::{GroundTruthSelector, RealSelector};
use stabsim::theory::{theorem_check, FirstPickInputs, TheoremCheck};
use stabsim::{make_stream, ExecutionCounter, RngStream, SimulatorParams};

use crate::args::*;
use crate::UsageError;

pub const SCHEMA: &str = stabsim::estimation::REPORT_SCHEMA;
pub const TOOL_VERSION: &str = concat!("stabsim ", env!("CARGO_PKG_VERSION"));

/// Top-level stream ids under the master seed.
mod streams {
    pub const DATA: u64 = 1;
    pub const RUN: u64 = 2;
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Serialize)]
pub struct Metadata {
    pub rng: &'static str,
    pub stream_layout: &'static str,
    pub split: &'static str,
    pub forest_defaults: &'static str,
}

pub fn metadata() -> Metadata {
    Metadata {
        rng: stabsim::rng::GENERATOR,
        stream_layout: "data on (seed, 1); run on (seed, 2); replicas, weak selectors and trees on derived child streams",
        split: "leave-one-out; remaining rows shuffled per fold (unstratified) and dealt alternately into train1/train2",
        forest_defaults: "max_depth unbounded, min_samples_split 2, bootstrap on, mtry floor(sqrt(n_feature))",
    }
}

/// Every JSON report shares this envelope.
#[derive(Debug, Serialize)]
pub struct Envelope<C: Serialize, R: Serialize> {
    pub schema: &'static str,
    pub tool_version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub run_config: C,
    pub metadata: Metadata,
    #[serde(flatten)]
    pub result: R,
}

fn envelope<C: Serialize, R: Serialize>(
    command: &'static str,
    seed: u64,
    run_config: C,
    result: R,
) -> Envelope<C, R> {
    Envelope {
        schema: SCHEMA,
        tool_version: TOOL_VERSION,
        command,
        seed,
        run_config,
        metadata: metadata(),
        result,
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// CSV with a header and a trailing newline.
fn csv_text(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Csv {
        path: String,
        label: String,
        has_header: bool,
    },
    Synthetic {
        config: SynthConfig,
    },
}

pub fn synth_config(flags: &SynthFlags) -> Result<SynthConfig> {
    let mut cfg = match &flags.synth_config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading synthetic config {}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("bad synthetic config: {e}")))?
        }
        None => SynthConfig {
            n_sample: 60,
            n_feature: 500,
            n_informative: 10,
            n_class: 2,
            noise_level: 1.0,
            discretize_levels: None,
        },
    };
    if let Some(v) = flags.synth_n_sample {
        cfg.n_sample = v;
    }
    if let Some(v) = flags.synth_n_feature {
        cfg.n_feature = v;
    }
    if let Some(v) = flags.synth_n_informative {
        cfg.n_informative = v;
    }
    if let Some(v) = flags.synth_n_class {
        cfg.n_class = v;
    }
    if let Some(v) = flags.synth_noise {
        cfg.noise_level = v;
    }
    if flags.synth_discretize.is_some() {
        cfg.discretize_levels = flags.synth_discretize;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

/// Loads the single dataset source named on the command line.
pub fn load_data(args: &DataArgs, seed: u64) -> Result<(Dataset, DataSource)> {
    match (&args.data, args.synth.any()) {
        (Some(_), true) => Err(usage("give either --data or --synth-* flags, not both")),
        (None, false) => Err(usage(
            "a dataset is required: --data <csv> or --synth-* flags",
        )),
        (Some(path), false) => {
            let label = match &args.label {
                Some(l) => l.parse::<LabelColumn>().expect("infallible"),
                None => LabelColumn::Last,
            };
            let data = load_csv(path, &label, !args.no_header)
                .with_context(|| format!("loading {}", path.display()))?;
            Ok((
                data,
                DataSource::Csv {
                    path: path.display().to_string(),
                    label: args.label.clone().unwrap_or_else(|| "<last>".into()),
                    has_header: !args.no_header,
                },
            ))
        }
        (None, true) => {
            let config = synth_config(&args.synth)?;
            let data = synth_generate(&config, &mut make_stream(seed, streams::DATA))?;
            Ok((data, DataSource::Synthetic { config }))
        }
    }
}

pub fn forest_config(args: &ForestArgs, n_feature: usize) -> Result<ForestConfig> {
    let cfg = ForestConfig {
        n_tree: args.n_tree,
        mtry: args.mtry,
        normalized_mtry: args.normalized_mtry,
        max_depth: args.max_depth,
        min_samples_split: args.min_samples_split,
        bootstrap: true,
        subsample_fraction: args.subsample,
    };
    cfg.validate(n_feature).map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn run_stream(seed: u64) -> RngStream {
    make_stream(seed, streams::RUN)
}

// ---------------------------------------------------------------- synth

pub fn synth(args: &SynthArgs) -> Result<String> {
    let config = synth_config(&args.synth)?;
    let data = synth_generate(&config, &mut make_stream(args.seed.seed, streams::DATA))?;
    let mut buf = Vec::new();
    data.write_csv(&mut buf)?;
    Ok(String::from_utf8(buf)?)
}

// ---------------------------------------------------- simulate-stability

#[derive(Debug, Clone, Serialize)]
pub struct StabilityRow {
    pub p: f64,
    pub m_ensemble: usize,
    pub m_stability: usize,
    #[serde(rename = "J")]
    pub j: f64,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
pub struct SimulateResult {
    pub rows: Vec<StabilityRow>,
    pub simulated_runs: u64,
}

pub struct SimulateOutput {
    pub rows: Vec<StabilityRow>,
    pub csv: String,
    pub json: String,
}

/// Every `(p, m_ensemble)` cell reuses the same replica streams.
pub fn simulate_stability(args: &SimulateArgs) -> Result<SimulateOutput> {
    if args.p.is_empty() || args.m_ensemble.is_empty() {
        return Err(usage("--p and --m-ensemble need at least one value"));
    }
    let base = SimulatorParams::new(args.n_feature, args.n_target, args.n_useful, args.p[0])
        .map_err(|e| usage(e.to_string()))?;
    let params = args
        .p
        .iter()
        .map(|&p| base.with_p(p).map_err(|e| usage(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    if args.m_ensemble.contains(&0) || args.m_stability < 2 {
        return Err(usage("m_ensemble must be >= 1 and m_stability >= 2"));
    }
    let rng = run_stream(args.seed.seed);
    let counter = ExecutionCounter::new();
    let cells: Vec<(SimulatorParams, usize)> = params
        .iter()
        .flat_map(|prm| args.m_ensemble.iter().map(move |&m| (*prm, m)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|(prm, m)| {
            Ok(StabilityRow {
                p: prm.p,
                m_ensemble: *m,
                m_stability: args.m_stability,
                j: simulated_stability(prm, *m, args.m_stability, &rng, &counter)?,
                seed: args.seed.seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let csv = csv_text(
        &["p", "m_ensemble", "m_stability", "J", "seed"],
        &rows
            .iter()
            .map(|r| {
                vec![
                    r.p.to_string(),
                    r.m_ensemble.to_string(),
                    r.m_stability.to_string(),
                    r.j.to_string(),
                    r.seed.to_string(),
                ]
            })
            .collect::<Vec<_>>(),
    );
    let json = to_json(&envelope(
        "simulate-stability",
        args.seed.seed,
        args,
        SimulateResult {
            rows: rows.clone(),
            simulated_runs: counter.simulated_runs(),
        },
    ))?;
    Ok(SimulateOutput { rows, csv, json })
}

// ------------------------------------------------------------- calibrate

#[derive(Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectorSource {
    Dataset {
        source: DataSource,
        forest: ForestConfig,
        n_sample: usize,
        n_feature: usize,
        n_class: usize,
    },
    GroundTruth {
        params: SimulatorParams,
    },
}

#[derive(Debug, Serialize)]
pub struct CalibrateRunConfig<'a> {
    pub args: &'a CalibrateArgs,
    pub selector: SelectorSource,
}

pub struct CalibrateOutput {
    pub report: CalibrationReport,
    pub json: String,
    pub csv: String,
    pub summary: String,
}

pub fn calibration_config(args: &CalibrateArgs) -> CalibrationConfig {
    CalibrationConfig {
        n_target: args.n_target,
        m_ensemble: args.m_ensemble,
        m_stability: args.m_stability,
        p_grid: args.p_grid.clone(),
        stability_ensemble_size: args.stability_ensemble_size,
        t_reps: args.t_reps,
        fixed_point_max_iter: args.fixed_point_iter,
        fixed_point_slack: args.fixed_point_slack,
        curve_m_ensembles: args.curve.clone(),
        binary_search: args.binary_search_tol.map(|tolerance| BinarySearchConfig {
            tolerance,
            max_iter: args.binary_search_iter,
        }),
    }
}

pub fn calibrate(args: &CalibrateArgs) -> Result<CalibrateOutput> {
    let seed = args.seed.seed;
    let config = calibration_config(args);
    let counter = ExecutionCounter::new();
    let rng = run_stream(seed);

    let (report, selector) = match args.ground_truth_n_useful {
        Some(n_useful) => {
            if args.data.data.is_some() || args.data.synth.any() {
                return Err(usage("--ground-truth-n-useful excludes a dataset source"));
            }
            let params = SimulatorParams::new(
                args.n_feature.unwrap_or_default(),
                args.n_target,
                n_useful,
                args.ground_truth_p.unwrap_or_default(),
            )
            .map_err(|e| usage(e.to_string()))?;
            config
                .validate(params.n_feature)
                .map_err(|e| usage(e.to_string()))?;
            let report =
                full_calibration(&GroundTruthSelector { params }, &config, &rng, &counter)?;
            (report, SelectorSource::GroundTruth { params })
        }
        None => {
            let (data, source) = load_data(&args.data, seed)?;
            let forest = forest_config(&args.forest, data.n_feature())?;
            config
                .validate(data.n_feature())
                .map_err(|e| usage(e.to_string()))?;
            let real = RealSelector::new(&data, forest.clone())?;
            let report = full_calibration(&real, &config, &rng, &counter)?;
            (
                report,
                SelectorSource::Dataset {
                    source,
                    forest,
                    n_sample: data.n_sample(),
                    n_feature: data.n_feature(),
                    n_class: data.n_class(),
                },
            )
        }
    };

    let json = to_json(&envelope(
        "calibrate",
        seed,
        CalibrateRunConfig { args, selector },
        &report,
    ))?;
    let mut rows: Vec<Vec<String>> = report
        .grid
        .iter()
        .map(|g| {
            vec![
                g.p.to_string(),
                config.stability_ensemble_size.to_string(),
                g.j.to_string(),
            ]
        })
        .collect();
    rows.extend(report.curve.iter().map(|c| {
        vec![
            report.p_hat.to_string(),
            c.m_ensemble.to_string(),
            c.j.to_string(),
        ]
    }));
    let csv = csv_text(&["p", "m_ensemble", "J"], &rows);
    let e = &report.execution;
    let mut summary = String::new();
    writeln!(
        summary,
        "real_runs={} (m_ensemble {} + m_stability {} x {}); naive curve would need {} real runs",
        e.real_runs,
        config.m_ensemble,
        config.m_stability,
        config.stability_ensemble_size,
        e.naive_real_runs
    )?;
    writeln!(
        summary,
        "simulated_runs={} (bound {}); t_uniform={} n_useful_hat={} p_hat={} n_useful_v={} stability_target={:.4}",
        e.simulated_runs, e.simulated_run_bound, report.t_uniform, report.n_useful_hat, report.p_hat, report.n_useful_v, report.stability_target
    )?;
    Ok(CalibrateOutput {
        report,
        json,
        csv,
        summary,
    })
}

// --------------------------------------------------------- theorem-check

pub fn theorem(args: &TheoremArgs) -> Result<(TheoremCheck, String)> {
    let inputs = FirstPickInputs::new(args.n_feature, args.n_target, args.n_useful, args.p)
        .map_err(|e| usage(e.to_string()))?;
    if args.trials == 0 {
        return Err(usage("--trials must be >= 1"));
    }
    let check = theorem_check(&inputs, args.trials, &run_stream(args.seed.seed))?;
    let json = to_json(&envelope("theorem-check", args.seed.seed, args, &check))?;
    Ok((check, json))
}

// -------------------------------------------------------- real-stability

pub struct RealStabilityOutput {
    pub curve: Vec<CurvePoint>,
    pub real_runs: u64,
    pub csv: String,
}

pub fn real_stability(args: &RealStabilityArgs) -> Result<RealStabilityOutput> {
    let (data, _) = load_data(&args.data, args.seed.seed)?;
    let forest = forest_config(&args.forest, data.n_feature())?;
    if args.m_ensemble.is_empty() || args.m_ensemble.contains(&0) || args.m_stability < 2 {
        return Err(usage("m_ensemble values must be >= 1 and m_stability >= 2"));
    }
    let real = RealSelector::new(&data, forest)?;
    let counter = ExecutionCounter::new();
    let curve = naive_ensemble_stability(
        &real,
        args.n_target,
        &args.m_ensemble,
        args.m_stability,
        &run_stream(args.seed.seed),
        &counter,
    )?;
    let csv = csv_text(
        &["m_ensemble", "m_stability", "J"],
        &curve
            .iter()
            .map(|c| {
                vec![
                    c.m_ensemble.to_string(),
                    args.m_stability.to_string(),
                    c.j.to_string(),
                ]
            })
            .collect::<Vec<_>>(),
    );
    Ok(RealStabilityOutput {
        curve,
        real_runs: counter.real_runs(),
        csv,
    })
}

// ----------------------------------------------------------------- bench

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub mode: String,
    pub m_ensemble: usize,
    pub m_stability: usize,
    pub seconds: f64,
    pub workers: usize,
}

pub const BENCH_HEADER: [&str; 5] = ["mode", "m_ensemble", "m_stability", "seconds", "workers"];

pub fn bench_csv(rows: &[BenchRow]) -> String {
    csv_text(
        &BENCH_HEADER,
        &rows
            .iter()
            .map(|r| {
                vec![
                    r.mode.clone(),
                    r.m_ensemble.to_string(),
                    r.m_stability.to_string(),
                    format!("{:.6}", r.seconds),
                    r.workers.to_string(),
                ]
            })
            .collect::<Vec<_>>(),
    )
}

/// Times stability estimation per mode and ensemble size. Real mode only fits the
/// selecting forests; no predictor is trained or evaluated.
pub fn bench(args: &BenchArgs, workers: usize) -> Result<Vec<BenchRow>> {
    let (data, _) = load_data(&args.data, args.seed.seed)?;
    let forest = forest_config(&args.forest, data.n_feature())?;
    let params = SimulatorParams::new(data.n_feature(), args.n_target, args.n_useful, args.p)
        .map_err(|e| usage(e.to_string()))?;
    if args.m_ensemble.is_empty() || args.m_ensemble.contains(&0) || args.m_stability < 2 {
        return Err(usage("m_ensemble values must be >= 1 and m_stability >= 2"));
    }
    for mode in &args.modes {
        if mode != "real" && mode != "simulated" {
            return Err(usage(format!("unknown bench mode {mode:?}")));
        }
    }
    let real = RealSelector::new(&data, forest)?;
    let rng = run_stream(args.seed.seed);
    let counter = ExecutionCounter::new();
    let mut rows = Vec::new();
    for mode in &args.modes {
        for &m in &args.m_ensemble {
            let start = Instant::now();
            if mode == "real" {
                naive_ensemble_stability(
                    &real,
                    args.n_target,
                    &[m],
                    args.m_stability,
                    &rng,
                    &counter,
                )?;
            } else {
                simulated_stability(&params, m, args.m_stability, &rng, &counter)?;
            }
            rows.push(BenchRow {
                mode: mode.clone(),
                m_ensemble: m,
                m_stability: args.m_stability,
                seconds: start.elapsed().as_secs_f64(),
                workers,
            });
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------- ntarget-scan

#[derive(Debug, Clone, Serialize)]
pub struct ScanRow {
    pub n_target: usize,
    pub n_tree: usize,
    pub accuracy: f64,
}

/// Leave-one-out accuracy: per fold, an ensemble of `m_ensemble` forests with
/// `n_tree` trees ranks features on `train1`, and a predictor forest trained on
/// `train2` with the top `n_target` features classifies the held-out row.
pub fn ntarget_scan(args: &ScanArgs) -> Result<(Vec<ScanRow>, String)> {
    let seed = args.seed.seed;
    let (data, _) = load_data(&args.data, seed)?;
    let predictor = forest_config(&args.forest, data.n_feature())?;
    if args.n_target.is_empty()
        || args
            .n_target
            .iter()
            .any(|&k| k == 0 || k > data.n_feature())
    {
        return Err(usage("--n-target values must lie in [1, n_feature]"));
    }
    if args.m_ensemble == 0 || args.selector_n_tree.contains(&0) {
        return Err(usage("--m-ensemble and --selector-n-tree must be >= 1"));
    }
    let rng = run_stream(seed);
    let splits = stabsim::data::leave_one_out_splits(&data, &rng.derive(0))?;
    let counter = ExecutionCounter::new();
    let mut rows = Vec::new();
    for (ti, &n_tree) in args.selector_n_tree.iter().enumerate() {
        let selecting = ForestConfig {
            n_tree,
            ..predictor.clone()
        };
        let hits = splits
            .par_iter()
            .enumerate()
            .map(|(fold, split)| -> Result<Vec<bool>> {
                let fold_rng = rng.derive2(1 + ti as u64, fold as u64);
                let selector =
                    RealSelector::new(&data, selecting.clone())?.with_rows(split.train1.clone());
                let rankings =
                    weak_rankings(&selector, args.m_ensemble, &fold_rng.derive(0), &counter)?;
                let order = mean_rank_order(&rankings)?;
                args.n_target
                    .iter()
                    .map(|&k| {
                        let projected = data.select_features(&order[..k])?;
                        let forest = fit_forest(
                            &projected,
                            &split.train2,
                            &predictor,
                            &fold_rng.derive2(1, k as u64),
                        )?;
                        let t = split.test[0];
                        Ok(predict(&forest, &projected.row(t))? == data.labels()[t])
                    })
                    .collect()
            })
            .collect::<Result<Vec<_>>>()?;
        for (ki, &k) in args.n_target.iter().enumerate() {
            let correct = hits.iter().filter(|h| h[ki]).count();
            rows.push(ScanRow {
                n_target: k,
                n_tree,
                accuracy: correct as f64 / splits.len() as f64,
            });
        }
    }
    let csv = csv_text(
        &["n_target", "n_tree", "accuracy"],
        &rows
            .iter()
            .map(|r| {
                vec![
                    r.n_target.to_string(),
                    r.n_tree.to_string(),
                    r.accuracy.to_string(),
                ]
            })
            .collect::<Vec<_>>(),
    );
    Ok((rows, csv))
}

/// JSON value of a report, for schema checks.
pub fn parse_json(text: &str) -> Result<Value> {
    let value: Value = serde_json::from_str(text)?;
    if value.get("schema").and_then(Value::as_str) != Some(SCHEMA) {
        bail!("missing or unexpected schema tag");
    }
    Ok(value)
}
