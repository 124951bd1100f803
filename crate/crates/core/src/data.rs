//! Labelled tabular data: CSV ingestion, a synthetic generator, and
//! leave-one-out splitting.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, LoadError, Result};
use crate::rng::RngStream;

/// Columns with at most this many distinct integral values are considered discrete.
pub const DISCRETE_MAX_LEVELS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Discrete,
    Continuous,
}

/// `n_sample x n_feature` numeric features plus class labels in `0..n_class`.
///
/// Features are stored column-major since split search scans one column at a time.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    columns: Vec<Vec<f64>>,
    labels: Vec<usize>,
    n_class: usize,
    feature_kind: FeatureKind,
    feature_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from columns; infers the feature kind.
    pub fn from_columns(columns: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        let names = (0..columns.len()).map(|j| format!("f{j}")).collect();
        Self::with_names(columns, labels, names)
    }

    pub fn with_names(
        columns: Vec<Vec<f64>>,
        labels: Vec<usize>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if columns.is_empty() || labels.is_empty() {
            return Err(Error::invalid(
                "dataset needs at least one feature and one sample",
            ));
        }
        if let Some((j, c)) = columns
            .iter()
            .enumerate()
            .find(|(_, c)| c.len() != labels.len())
        {
            return Err(Error::invalid(format!(
                "column {j} has {} rows but there are {} labels",
                c.len(),
                labels.len()
            )));
        }
        if columns.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("features must be finite"));
        }
        if feature_names.len() != columns.len() {
            return Err(Error::invalid("one name per feature column is required"));
        }
        let n_class = labels.iter().max().map_or(0, |m| m + 1);
        if n_class < 2 {
            return Err(Error::invalid("at least two classes are required"));
        }
        let feature_kind = infer_kind(&columns);
        Ok(Self {
            columns,
            labels,
            n_class,
            feature_kind,
            feature_names,
        })
    }

    pub fn n_sample(&self) -> usize {
        self.labels.len()
    }

    pub fn n_feature(&self) -> usize {
        self.columns.len()
    }

    pub fn n_class(&self) -> usize {
        self.n_class
    }

    pub fn feature_kind(&self) -> FeatureKind {
        self.feature_kind
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn column(&self, feature: usize) -> &[f64] {
        &self.columns[feature]
    }

    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.columns[feature][row]
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[row]).collect()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Keeps only `features`, in the given order. Labels are shared as-is.
    pub fn select_features(&self, features: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = features.iter().find(|&&f| f >= self.n_feature()) {
            return Err(Error::invalid(format!("feature {bad} out of range")));
        }
        Ok(Dataset {
            columns: features.iter().map(|&f| self.columns[f].clone()).collect(),
            labels: self.labels.clone(),
            n_class: self.n_class,
            feature_kind: self.feature_kind,
            feature_names: features
                .iter()
                .map(|&f| self.feature_names[f].clone())
                .collect(),
        })
    }

    /// Writes the dataset as CSV with a header and the label in a trailing `y` column.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push("y");
        w.write_record(&header).map_err(LoadError::from)?;
        for r in 0..self.n_sample() {
            let mut rec: Vec<String> = self.columns.iter().map(|c| c[r].to_string()).collect();
            rec.push(self.labels[r].to_string());
            w.write_record(&rec).map_err(LoadError::from)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn infer_kind(columns: &[Vec<f64>]) -> FeatureKind {
    let discrete = columns.iter().all(|col| {
        let mut levels: Vec<i64> = Vec::new();
        for &v in col {
            if v.fract() != 0.0 {
                return false;
            }
            let v = v as i64;
            if !levels.contains(&v) {
                levels.push(v);
                if levels.len() > DISCRETE_MAX_LEVELS {
                    return false;
                }
            }
        }
        true
    });
    if discrete {
        FeatureKind::Discrete
    } else {
        FeatureKind::Continuous
    }
}

/// Which CSV column holds the label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
    Last,
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    /// Integers select by position, anything else by header name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

/// Reads a dataset from a UTF-8, comma-separated file.
///
/// Labels are re-encoded to `0..n_class` in order of first appearance.
pub fn load_csv(path: &Path, label: &LabelColumn, has_header: bool) -> Result<Dataset, LoadError> {
    let file = std::fs::File::open(path).map_err(|source| LoadError::MissingFile {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, label, has_header)
}

/// [`load_csv`] over any reader.
pub fn read_csv<R: std::io::Read>(
    input: R,
    label: &LabelColumn,
    has_header: bool,
) -> Result<Dataset, LoadError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let header: Option<Vec<String>> = if has_header {
        Some(reader.headers()?.iter().map(str::to_string).collect())
    } else {
        None
    };

    let mut records = Vec::new();
    for rec in reader.records() {
        records.push(rec?);
    }
    let width = match (&header, records.first()) {
        (Some(h), _) => h.len(),
        (None, Some(r)) => r.len(),
        (None, None) => return Err(LoadError::Empty),
    };
    if records.is_empty() {
        return Err(LoadError::Empty);
    }

    let label_idx = match label {
        LabelColumn::Index(i) if *i < width => *i,
        LabelColumn::Index(i) => return Err(LoadError::UnknownLabelColumn(i.to_string())),
        LabelColumn::Last => width - 1,
        LabelColumn::Name(name) => header
            .as_ref()
            .and_then(|h| h.iter().position(|c| c == name))
            .ok_or_else(|| LoadError::UnknownLabelColumn(name.clone()))?,
    };

    let n_feature = width - 1;
    let mut columns = vec![Vec::with_capacity(records.len()); n_feature];
    let mut labels = Vec::with_capacity(records.len());
    let mut label_codes: HashMap<String, usize> = HashMap::new();

    for (row, rec) in records.iter().enumerate() {
        if rec.len() != width {
            return Err(LoadError::RaggedRow {
                row,
                expected: width,
                found: rec.len(),
            });
        }
        let mut feature = 0;
        for (col, cell) in rec.iter().enumerate() {
            if cell.is_empty() {
                return Err(LoadError::MissingValue { row, col });
            }
            if col == label_idx {
                let next = label_codes.len();
                labels.push(*label_codes.entry(cell.to_string()).or_insert(next));
                continue;
            }
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| LoadError::NonNumeric {
                    row,
                    col,
                    value: cell.to_string(),
                })?;
            columns[feature].push(v);
            feature += 1;
        }
    }

    if label_codes.len() < 2 {
        return Err(LoadError::TooFewClasses(label_codes.len()));
    }
    if n_feature == 0 {
        return Err(LoadError::Empty);
    }
    let names = match header {
        Some(h) => h
            .into_iter()
            .enumerate()
            .filter(|(i, _)| *i != label_idx)
            .map(|(_, n)| n)
            .collect(),
        None => (0..n_feature).map(|j| format!("f{j}")).collect(),
    };
    Ok(Dataset::with_names(columns, labels, names).expect("validated during parsing"))
}

/// Configuration of the synthetic generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_sample: usize,
    pub n_feature: usize,
    /// The first `n_informative` columns carry a class-dependent mean shift.
    pub n_informative: usize,
    #[serde(default = "default_n_class")]
    pub n_class: usize,
    #[serde(default = "default_noise")]
    pub noise_level: f64,
    #[serde(default)]
    pub discretize_levels: Option<usize>,
}

fn default_n_class() -> usize {
    2
}

fn default_noise() -> f64 {
    1.0
}

/// Distance between adjacent class means, in units of `noise_level`.
pub const CLASS_SEPARATION: f64 = 2.5;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sample < 2 || self.n_feature == 0 {
            return Err(Error::invalid(
                "synthetic data needs n_sample >= 2 and n_feature >= 1",
            ));
        }
        if self.n_informative > self.n_feature {
            return Err(Error::invalid("n_informative exceeds n_feature"));
        }
        if self.n_class < 2 || self.n_class > self.n_sample {
            return Err(Error::invalid("need 2 <= n_class <= n_sample"));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(Error::invalid("noise_level must be finite and >= 0"));
        }
        if matches!(self.discretize_levels, Some(l) if l < 2) {
            return Err(Error::invalid("discretize_levels must be >= 2"));
        }
        Ok(())
    }
}

/// Generates a labelled dataset. Labels are balanced across classes and shuffled.
pub fn synth_generate(config: &SynthConfig, rng: &mut RngStream) -> Result<Dataset> {
    config.validate()?;
    let n = config.n_sample;
    let mut labels: Vec<usize> = (0..n).map(|i| i % config.n_class).collect();
    labels.shuffle(rng);

    let sigma = config.noise_level;
    let step = if sigma > 0.0 {
        CLASS_SEPARATION * sigma
    } else {
        1.0
    };
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;

    let mut columns = Vec::with_capacity(config.n_feature);
    for j in 0..config.n_feature {
        let informative = j < config.n_informative;
        let col: Vec<f64> = labels
            .iter()
            .map(|&y| {
                let mean = if informative { y as f64 * step } else { 0.0 };
                mean + noise.sample(rng)
            })
            .collect();
        columns.push(col);
    }
    if let Some(levels) = config.discretize_levels {
        for col in &mut columns {
            *col = discretize(col, levels);
        }
    }
    Dataset::from_columns(columns, labels)
}

/// Quantile-bins a column into `levels` symmetric even integers, e.g. `{-2, 0, 2}`.
pub fn discretize(column: &[f64], levels: usize) -> Vec<f64> {
    let n = column.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| column[a].total_cmp(&column[b]).then(a.cmp(&b)));
    let mut out = vec![0.0; n];
    let mut pos = 0;
    while pos < n {
        // equal values share a bin: use the rank of the first of the run
        let mut end = pos;
        while end + 1 < n && column[order[end + 1]] == column[order[pos]] {
            end += 1;
        }
        let bin = pos * levels / n;
        let value = 2.0 * bin as f64 - (levels as f64 - 1.0);
        for &r in &order[pos..=end] {
            out[r] = value;
        }
        pos = end + 1;
    }
    out
}

/// Row partition for one leave-one-out fold.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    /// Rows used for feature selection.
    pub train1: Vec<usize>,
    /// Rows used to train the predictor.
    pub train2: Vec<usize>,
    pub test: Vec<usize>,
}

/// One split per sample. The remaining rows are shuffled (stream derived per fold) and
/// dealt alternately into `train1` and `train2`.
pub fn leave_one_out_splits(dataset: &Dataset, rng: &RngStream) -> Result<Vec<Split>> {
    let n = dataset.n_sample();
    if n < 3 {
        return Err(Error::invalid(format!(
            "leave-one-out needs at least 3 samples, got {n}"
        )));
    }
    Ok((0..n)
        .map(|i| {
            let mut rest: Vec<usize> = (0..n).filter(|&r| r != i).collect();
            let mut fold_rng = rng.derive(i as u64);
            rest.shuffle(&mut fold_rng);
            let (mut train1, mut train2) = (Vec::new(), Vec::new());
            for (k, r) in rest.into_iter().enumerate() {
                if k % 2 == 0 {
                    train1.push(r);
                } else {
                    train2.push(r);
                }
            }
            Split {
                train1,
                train2,
                test: vec![i],
            }
        })
        .collect())
}

/// Uniformly draws `fraction * rows.len()` rows (rounded, at least one) without replacement.
pub fn subsample_rows<R: Rng + ?Sized>(rows: &[usize], fraction: f64, rng: &mut R) -> Vec<usize> {
    let k = ((fraction * rows.len() as f64).round() as usize).clamp(1, rows.len());
    crate::rng::sample_without_replacement(rows, k, rng).expect("k <= rows.len()")
}
