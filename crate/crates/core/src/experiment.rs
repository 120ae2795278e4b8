//! Multi-seed experiments, alpha sweeps, cross-validation and confidence
//! histograms.
//!
//! Run `r` uses seed `base_seed + r`. Everything random inside a run comes
//! from streams derived from that seed by purpose: `"cim"` for the level
//! memories, `"encode"`/`"ngram"` for encoding ties (train and test use
//! different stream keys), and `"train"` for the initial prototypes and the
//! retraining ties. Every alpha of a run therefore starts from the same
//! encoded data and the same initial prototypes.
//!
//! Outputs are `runs.csv` (one row per alpha and run) and `aggregate.json`
//! (mean and sample standard deviation per alpha), written atomically.
//! Accuracies are reported in percent.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{kfold_split, load_csv, load_csv_with_classes, write_atomic, Dataset, DatasetSchema};
use crate::encoder::{EncodedSet, EncoderSchema};
use crate::error::{HdcError, Result};
use crate::hdvec::{HdRng, Hypervector, DEFAULT_DIM};
use crate::model::{build_prototypes, fit, AssociativeMemory, TrainHistory, TrainSchedule};

pub const DEFAULT_BIN_WIDTH_PCT: f64 = 0.25;

fn default_dim() -> usize {
    DEFAULT_DIM
}

fn default_runs() -> usize {
    1
}

fn default_alphas() -> Vec<f64> {
    vec![0.0]
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_bin_width() -> f64 {
    DEFAULT_BIN_WIDTH_PCT
}

fn default_folds() -> usize {
    10
}

/// Declarative experiment description, usually read from JSON. Relative
/// paths are resolved against the config file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub train: PathBuf,
    #[serde(default)]
    pub test: Option<PathBuf>,
    pub schema: PathBuf,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Confidence thresholds in percentage points.
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub schedule: TrainSchedule,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Run every group (e.g. subject) separately, `runs` times each.
    #[serde(default)]
    pub per_group: bool,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_bin_width")]
    pub bin_width_pct: f64,
    /// Directory for encoded-set caches; no caching when absent.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HdcError::io(path.display().to_string(), e))?;
        let mut cfg: Self = serde_json::from_str(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_relative_to(base);
        }
        Ok(cfg)
    }

    pub fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.train);
        fix(&mut self.schema);
        fix(&mut self.out);
        if let Some(t) = self.test.as_mut() {
            fix(t);
        }
        if let Some(c) = self.cache_dir.as_mut() {
            fix(c);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(HdcError::InvalidArgument("runs must be at least 1".into()));
        }
        if self.alphas.is_empty() {
            return Err(HdcError::InvalidArgument("alpha list is empty".into()));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a >= 0.0) || !a.is_finite()) {
            return Err(HdcError::InvalidArgument(format!("alpha must be a non-negative number, got {a}")));
        }
        if self.dim == 0 {
            return Err(HdcError::InvalidDimension("dimension must be at least 1".into()));
        }
        if !(self.bin_width_pct > 0.0) {
            return Err(HdcError::InvalidArgument("histogram bin width must be positive".into()));
        }
        self.schedule.validate()
    }

    pub fn load_data(&self) -> Result<(DatasetSchema, Dataset, Option<Dataset>)> {
        let schema = DatasetSchema::from_json_file(&self.schema)?;
        let train = load_csv(&self.train, &schema).map_err(|e| context(&self.train, e))?;
        let test = self
            .test
            .as_ref()
            .map(|p| load_csv_with_classes(p, &schema, Some(&train.class_names)).map_err(|e| context(p, e)))
            .transpose()?;
        Ok((schema, train, test))
    }
}

fn context(path: &Path, e: HdcError) -> HdcError {
    match e {
        e @ (HdcError::Parse { .. } | HdcError::Io { .. }) => e,
        other => HdcError::InvalidArgument(format!("{}: {other}", path.display())),
    }
}

/// Encoded samples with their labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedData {
    pub samples: Vec<Hypervector>,
    pub labels: Vec<usize>,
}

impl EncodedData {
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn tag(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

pub fn build_encoder(schema: &DatasetSchema, dim: usize, seed: u64) -> Result<EncoderSchema> {
    EncoderSchema::build(schema.quantizers()?, dim, schema.ngram, seed)
}

/// Encodes a dataset; n-gram schemas yield one sample per window labelled
/// by the window's last record.
pub fn encode_dataset(encoder: &EncoderSchema, ds: &Dataset, seed: u64, split: Split) -> Result<EncodedData> {
    let stream = HdRng::derive(seed, split.tag(), 0).next_u64();
    match encoder.ngram() {
        Some(n) if n > 1 => {
            let ends = ds.window_ends(n);
            if ends.is_empty() {
                return Err(HdcError::InvalidArgument(format!("dataset shorter than one {n}-gram window")));
            }
            Ok(EncodedData {
                samples: encoder.encode_windows(&ds.records, &ends, stream)?,
                labels: ends.iter().map(|&e| ds.labels[e]).collect(),
            })
        }
        _ => Ok(EncodedData { samples: encoder.encode_records(&ds.records, stream)?, labels: ds.labels.clone() }),
    }
}

/// [`encode_dataset`] backed by an on-disk cache keyed by dataset hash,
/// seed, split and dimension.
pub fn encode_dataset_cached(
    encoder: &EncoderSchema,
    ds: &Dataset,
    seed: u64,
    split: Split,
    cache_dir: Option<&Path>,
) -> Result<EncodedData> {
    let Some(dir) = cache_dir else {
        return encode_dataset(encoder, ds, seed, split);
    };
    let hash = ds.provenance_hash();
    let hex: String = hash[..12].iter().map(|b| format!("{b:02x}")).collect();
    let path = dir.join(format!("{hex}-{}-{seed}-{}.hdce", split.tag(), encoder.dim()));
    if let Ok(bytes) = std::fs::read(&path) {
        match EncodedSet::read_from(&mut bytes.as_slice()) {
            Ok(set) if set.dataset_hash == hash && set.seed == seed && set.dim == encoder.dim() => {
                return Ok(EncodedData { samples: set.samples, labels: set.labels });
            }
            _ => warn!("ignoring stale encoding cache {}", path.display()),
        }
    }
    let data = encode_dataset(encoder, ds, seed, split)?;
    let set = EncodedSet { dim: encoder.dim(), seed, dataset_hash: hash, samples: data.samples, labels: data.labels };
    let mut buf = Vec::new();
    set.write_to(&mut buf)?;
    write_atomic(&path, &buf)?;
    Ok(EncodedData { samples: set.samples, labels: set.labels })
}

/// Builds initial prototypes and retrains them; both draw from the run's
/// `"train"` stream.
pub fn train_model(
    data: &EncodedData,
    classes: usize,
    alpha_pct: f64,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<(AssociativeMemory, TrainHistory)> {
    let mut rng = HdRng::derive(seed, "train", 0);
    let am = build_prototypes(&data.samples, &data.labels, classes, &mut rng)?;
    for (class, n) in am.net_counts().iter().enumerate() {
        if *n <= 0 {
            warn!("class {class} starts with net count {n}");
        }
    }
    fit(am, &data.samples, &data.labels, alpha_pct, schedule, &mut rng)
}

/// Initial prototypes only (no retraining), as used by [`train_model`].
pub fn initial_model(data: &EncodedData, classes: usize, seed: u64) -> Result<AssociativeMemory> {
    build_prototypes(&data.samples, &data.labels, classes, &mut HdRng::derive(seed, "train", 0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub alpha: f64,
    pub run: usize,
    pub seed: u64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub test_err: f64,
    pub iters: usize,
    pub best_iter: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample standard deviation (zero for a single value).
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaAggregate {
    pub alpha: f64,
    pub runs: usize,
    pub train_acc: MeanStd,
    pub test_acc: MeanStd,
    pub test_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset_hash: String,
    pub class_names: Vec<String>,
    pub groups: Vec<String>,
    pub rows: Vec<RunRow>,
    pub aggregates: Vec<AlphaAggregate>,
    /// Alpha with the highest mean test accuracy (smallest on ties).
    pub best_alpha: f64,
}

impl RunReport {
    pub fn from_rows(rows: Vec<RunRow>, alphas: &[f64], dataset_hash: String, class_names: Vec<String>, groups: Vec<String>) -> Self {
        let aggregates: Vec<AlphaAggregate> = alphas
            .iter()
            .map(|&alpha| {
                let sel: Vec<&RunRow> = rows.iter().filter(|r| r.alpha == alpha).collect();
                let train: Vec<f64> = sel.iter().map(|r| r.train_acc).collect();
                let test: Vec<f64> = sel.iter().map(|r| r.test_acc).collect();
                let test_acc = MeanStd::of(&test);
                AlphaAggregate {
                    alpha,
                    runs: sel.len(),
                    train_acc: MeanStd::of(&train),
                    test_acc,
                    test_err: 100.0 - test_acc.mean,
                }
            })
            .collect();
        let best_alpha = argmax_alpha(aggregates.iter().map(|a| (a.alpha, a.test_acc.mean)));
        Self { dataset_hash, class_names, groups, rows, aggregates, best_alpha }
    }

    pub fn aggregate(&self, alpha: f64) -> Option<&AlphaAggregate> {
        self.aggregates.iter().find(|a| a.alpha == alpha)
    }

    pub fn runs_csv(&self) -> String {
        let mut s = String::from("alpha,run,seed,train_acc,test_acc,test_err,iters,best_iter\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:?},{},{},{:?},{:?},{:?},{},{}",
                r.alpha, r.run, r.seed, r.train_acc, r.test_acc, r.test_err, r.iters, r.best_iter
            );
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join("runs.csv"), self.runs_csv().as_bytes())?;
        let json = serde_json::to_string_pretty(&self.aggregate_json())? + "\n";
        write_atomic(&dir.join("aggregate.json"), json.as_bytes())
    }

    fn aggregate_json(&self) -> serde_json::Value {
        serde_json::json!({
            "dataset_hash": self.dataset_hash,
            "classes": self.class_names,
            "groups": self.groups,
            "best_alpha": self.best_alpha,
            "alphas": self.aggregates,
        })
    }
}

/// Smallest alpha among those with the highest score.
fn argmax_alpha(scores: impl Iterator<Item = (f64, f64)>) -> f64 {
    let mut best: Option<(f64, f64)> = None;
    for (alpha, score) in scores {
        best = match best {
            Some((ba, bs)) if bs > score || (bs == score && ba <= alpha) => Some((ba, bs)),
            _ => Some((alpha, score)),
        };
    }
    best.map_or(f64::NAN, |(a, _)| a)
}

fn pct(x: f64) -> f64 {
    x * 100.0
}

/// One run: encode with `seed`, then train and evaluate every alpha.
pub fn run_seed(
    schema: &DatasetSchema,
    train: &Dataset,
    test: &Dataset,
    dim: usize,
    alphas: &[f64],
    schedule: &TrainSchedule,
    seed: u64,
    cache_dir: Option<&Path>,
) -> Result<Vec<(f64, AssociativeMemory, TrainHistory, f64)>> {
    let encoder = build_encoder(schema, dim, seed)?;
    let train_data = encode_dataset_cached(&encoder, train, seed, Split::Train, cache_dir)?;
    let test_data = encode_dataset_cached(&encoder, test, seed, Split::Test, cache_dir)?;
    alphas
        .iter()
        .map(|&alpha| {
            let (model, history) = train_model(&train_data, train.classes(), alpha, schedule, seed)?;
            let test_acc = model.accuracy(&test_data.samples, &test_data.labels)?;
            Ok((alpha, model, history, test_acc))
        })
        .collect()
}

/// Every alpha for `runs` seeds on explicit datasets.
pub fn run_on_datasets(
    schema: &DatasetSchema,
    train: &Dataset,
    test: &Dataset,
    config: &ExperimentConfig,
) -> Result<RunReport> {
    config.validate()?;
    let groups = if config.per_group { train.group_names() } else { Vec::new() };
    let jobs: Vec<(usize, Option<&str>)> = if groups.is_empty() {
        (0..config.runs).map(|r| (r, None)).collect()
    } else {
        groups
            .iter()
            .enumerate()
            .flat_map(|(g, name)| (0..config.runs).map(move |r| (g * config.runs + r, Some(name.as_str()))))
            .collect()
    };

    let per_run = jobs
        .par_iter()
        .map(|&(run, group)| {
            let seed = config.base_seed + run as u64;
            let (tr, te) = match group {
                Some(g) => (train.filter_group(g), test.filter_group(g)),
                None => (train.clone(), test.clone()),
            };
            let outcomes =
                run_seed(schema, &tr, &te, config.dim, &config.alphas, &config.schedule, seed, config.cache_dir.as_deref())?;
            let rows: Vec<RunRow> = outcomes
                .into_iter()
                .map(|(alpha, _, history, test_acc)| RunRow {
                    alpha,
                    run,
                    seed,
                    train_acc: pct(history.best_accuracy),
                    test_acc: pct(test_acc),
                    test_err: 100.0 - pct(test_acc),
                    iters: history.len(),
                    best_iter: history.best_iteration,
                })
                .collect();
            info!("run {run} (seed {seed}) done");
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows: Vec<RunRow> = per_run.into_iter().flatten().collect();
    rows.sort_by(|a, b| a.alpha.total_cmp(&b.alpha).then(a.run.cmp(&b.run)));
    Ok(RunReport::from_rows(rows, &config.alphas, train.provenance_hex(), train.class_names.clone(), groups))
}

/// Loads the configured datasets, runs every alpha and seed, and writes the
/// report to `config.out`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let (schema, train, test) = config.load_data()?;
    let test = test.ok_or_else(|| HdcError::InvalidArgument("experiment needs a test set".into()))?;
    let report = run_on_datasets(&schema, &train, &test, config)?;
    report.write(&config.out)?;
    Ok(report)
}

/// [`run_experiment`] over an alpha grid of at least two values.
pub fn sweep_alpha(config: &ExperimentConfig) -> Result<RunReport> {
    if config.alphas.len() < 2 {
        return Err(HdcError::InvalidArgument(format!(
            "an alpha sweep needs at least 2 alphas, got {}",
            config.alphas.len()
        )));
    }
    run_experiment(config)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub alpha: f64,
    pub fold: usize,
    pub run: usize,
    pub seed: u64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub iters: usize,
    pub best_iter: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvAggregate {
    pub alpha: f64,
    pub train_acc: MeanStd,
    pub val_acc: MeanStd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: usize,
    pub rows: Vec<CvRow>,
    pub aggregates: Vec<CvAggregate>,
    /// Highest mean validation accuracy; smallest alpha on ties.
    pub selected_alpha: f64,
}

impl CvReport {
    pub fn aggregate(&self, alpha: f64) -> Option<&CvAggregate> {
        self.aggregates.iter().find(|a| a.alpha == alpha)
    }

    pub fn rows_csv(&self) -> String {
        let mut s = String::from("alpha,fold,run,seed,train_acc,val_acc,iters,best_iter\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:?},{},{},{},{:?},{:?},{},{}",
                r.alpha, r.fold, r.run, r.seed, r.train_acc, r.val_acc, r.iters, r.best_iter
            );
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join("cv_runs.csv"), self.rows_csv().as_bytes())?;
        let json = serde_json::to_string_pretty(&serde_json::json!({
            "folds": self.folds,
            "selected_alpha": self.selected_alpha,
            "alphas": self.aggregates,
        }))? + "\n";
        write_atomic(&dir.join("cv_aggregate.json"), json.as_bytes())
    }
}

/// k-fold cross-validation of the alpha grid on a training set. The fold
/// assignment comes from stream `("kfold", 0)` of the base seed; each
/// (fold, run) pair encodes with seed `base_seed + run`. Aggregates are
/// taken over all (fold, run) pairs.
pub fn cross_validate_dataset(schema: &DatasetSchema, train: &Dataset, config: &ExperimentConfig, k: usize) -> Result<CvReport> {
    config.validate()?;
    if schema.ngram.is_some_and(|n| n > 1) {
        return Err(HdcError::InvalidArgument("cross-validation of n-gram datasets is not supported".into()));
    }
    let folds = kfold_split(train.len(), k, &mut HdRng::derive(config.base_seed, "kfold", 0))?;
    let per_run = (0..config.runs)
        .into_par_iter()
        .map(|run| {
            let seed = config.base_seed + run as u64;
            let encoder = build_encoder(schema, config.dim, seed)?;
            let all = encode_dataset_cached(&encoder, train, seed, Split::Train, config.cache_dir.as_deref())?;
            let mut rows = Vec::new();
            for (f, fold) in folds.iter().enumerate() {
                let fit_set = all.subset(&fold.train);
                let val_set = all.subset(&fold.validation);
                for &alpha in &config.alphas {
                    let (model, history) = train_model(&fit_set, train.classes(), alpha, &config.schedule, seed)?;
                    rows.push(CvRow {
                        alpha,
                        fold: f,
                        run,
                        seed,
                        train_acc: pct(history.best_accuracy),
                        val_acc: pct(model.accuracy(&val_set.samples, &val_set.labels)?),
                        iters: history.len(),
                        best_iter: history.best_iteration,
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<CvRow> = per_run.into_iter().flatten().collect();
    rows.sort_by(|a, b| a.alpha.total_cmp(&b.alpha).then(a.fold.cmp(&b.fold)).then(a.run.cmp(&b.run)));
    let aggregates: Vec<CvAggregate> = config
        .alphas
        .iter()
        .map(|&alpha| {
            let sel: Vec<&CvRow> = rows.iter().filter(|r| r.alpha == alpha).collect();
            CvAggregate {
                alpha,
                train_acc: MeanStd::of(&sel.iter().map(|r| r.train_acc).collect::<Vec<_>>()),
                val_acc: MeanStd::of(&sel.iter().map(|r| r.val_acc).collect::<Vec<_>>()),
            }
        })
        .collect();
    let selected_alpha = argmax_alpha(aggregates.iter().map(|a| (a.alpha, a.val_acc.mean)));
    Ok(CvReport { folds: k, rows, aggregates, selected_alpha })
}

pub fn cross_validate(config: &ExperimentConfig, k: usize) -> Result<CvReport> {
    config.validate()?;
    let (schema, train, _) = config.load_data()?;
    let report = cross_validate_dataset(&schema, &train, config, k)?;
    report.write(&config.out)?;
    Ok(report)
}

/// Counts of confidences (percentage points) in bins `[i w, (i + 1) w)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceHistogram {
    pub bin_width: f64,
    pub counts: Vec<usize>,
    /// Mean confidence of the histogrammed samples (NaN when empty).
    pub mean: f64,
    pub total: usize,
}

impl ConfidenceHistogram {
    /// Bins cover at least `[0, 8)` points, extended to hold the maximum.
    pub fn from_values(values: &[f64], bin_width: f64) -> Self {
        const MIN_SPAN_PCT: f64 = 8.0;
        let max = values.iter().copied().fold(0.0f64, f64::max);
        let span = MIN_SPAN_PCT.max(max + bin_width);
        let bins = (span / bin_width).ceil() as usize;
        let mut counts = vec![0; bins];
        for &v in values {
            let i = ((v / bin_width).floor() as usize).min(bins - 1);
            counts[i] += 1;
        }
        let mean = if values.is_empty() { f64::NAN } else { values.iter().sum::<f64>() / values.len() as f64 };
        Self { bin_width, counts, mean, total: values.len() }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_low,bin_high,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let lo = i as f64 * self.bin_width;
            let _ = writeln!(s, "{lo:?},{:?},{c}", lo + self.bin_width);
        }
        s
    }
}

/// Histogram of the confidence of every correctly classified training
/// sample under `model`, written as CSV to `out`.
pub fn export_confidence_hist(
    model: &AssociativeMemory,
    samples: &[Hypervector],
    labels: &[usize],
    bin_width_pct: f64,
    out: &Path,
) -> Result<ConfidenceHistogram> {
    if !(bin_width_pct > 0.0) {
        return Err(HdcError::InvalidArgument("bin width must be positive".into()));
    }
    let confidences = model.correct_confidences(samples, labels)?;
    if confidences.is_empty() {
        warn!("no correctly classified samples; writing an empty histogram");
    }
    let hist = ConfidenceHistogram::from_values(&confidences, bin_width_pct);
    write_atomic(out, hist.to_csv().as_bytes())?;
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{make_synthetic, synthetic_quantizer, ColumnRef};

    fn synthetic_schema(n: usize) -> DatasetSchema {
        let q = synthetic_quantizer();
        DatasetSchema::new(n, ColumnRef::Index(n), q.v_min, q.v_max, q.step)
    }

    fn config(alphas: Vec<f64>, runs: usize, max_iterations: usize) -> ExperimentConfig {
        ExperimentConfig {
            train: PathBuf::new(),
            test: None,
            schema: PathBuf::new(),
            dim: 1000,
            alphas,
            runs,
            schedule: TrainSchedule { max_iterations, check_every: 5, ..Default::default() },
            base_seed: 100,
            out: PathBuf::new(),
            per_group: false,
            folds: 3,
            bin_width_pct: 0.25,
            cache_dir: None,
        }
    }

    #[test]
    fn mean_std_matches_hand_values() {
        let m = MeanStd::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(MeanStd::of(&[7.0]), MeanStd { mean: 7.0, std: 0.0 });
    }

    #[test]
    fn argmax_prefers_smaller_alpha_on_ties() {
        assert_eq!(argmax_alpha([(0.0, 90.0), (1.0, 95.0), (2.0, 95.0)].into_iter()), 1.0);
        assert_eq!(argmax_alpha([(0.0, 100.0), (1.0, 100.0)].into_iter()), 0.0);
        assert_eq!(argmax_alpha([(0.0, 80.0), (1.0, 79.0), (2.0, 81.0)].into_iter()), 2.0);
    }

    #[test]
    fn single_run_single_iteration_report() {
        let mut rng = HdRng::new(1);
        let train = make_synthetic(2, 4, 5, 6.0, &mut rng).unwrap();
        let test = make_synthetic(2, 4, 3, 6.0, &mut rng).unwrap();
        let cfg = config(vec![0.0], 1, 1);
        let report = run_on_datasets(&synthetic_schema(4), &train, &test, &cfg).unwrap();
        assert_eq!(report.rows.len(), 1);
        let row = &report.rows[0];
        assert_eq!((row.iters, row.best_iter, row.seed), (1, 1, 100));
        assert_eq!(row.test_err, 100.0 - row.test_acc);
        let agg = report.aggregate(0.0).unwrap();
        assert_eq!(agg.test_acc.mean, row.test_acc);
        assert_eq!(agg.test_acc.std, 0.0);
    }

    #[test]
    fn aggregates_recompute_from_rows_and_reports_reproduce() {
        let mut rng = HdRng::new(2);
        let train = make_synthetic(3, 6, 12, 3.0, &mut rng).unwrap();
        let test = make_synthetic(3, 6, 6, 3.0, &mut rng).unwrap();
        let cfg = config(vec![0.0, 2.0], 3, 10);
        let a = run_on_datasets(&synthetic_schema(6), &train, &test, &cfg).unwrap();
        let b = run_on_datasets(&synthetic_schema(6), &train, &test, &cfg).unwrap();
        assert_eq!(a.runs_csv(), b.runs_csv());
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 6);

        // reparse the CSV and recompute the aggregates
        let mut by_alpha: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
        for line in a.runs_csv().lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            by_alpha.entry(cols[0].to_owned()).or_default().push(cols[4].parse().unwrap());
        }
        for agg in &a.aggregates {
            let vals = &by_alpha[&format!("{:?}", agg.alpha)];
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let std = (vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            assert!((mean - agg.test_acc.mean).abs() < 1e-9);
            assert!((std - agg.test_acc.std).abs() < 1e-9);
        }
    }

    #[test]
    fn report_files_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = HdRng::new(3);
        let train = make_synthetic(2, 3, 6, 5.0, &mut rng).unwrap();
        let test = make_synthetic(2, 3, 4, 5.0, &mut rng).unwrap();
        let report = run_on_datasets(&synthetic_schema(3), &train, &test, &config(vec![0.0, 1.0], 2, 3)).unwrap();
        report.write(dir.path()).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("runs.csv")).unwrap();
        assert!(csv.starts_with("alpha,run,seed,train_acc,test_acc,test_err,iters,best_iter\n"));
        assert_eq!(csv.lines().count(), 5);
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("aggregate.json")).unwrap()).unwrap();
        assert_eq!(json["alphas"].as_array().unwrap().len(), 2);
        assert!(json["alphas"][0]["test_acc"]["mean"].is_number());
    }

    #[test]
    fn config_validation() {
        assert!(config(vec![], 1, 1).validate().is_err());
        assert!(config(vec![-0.5], 1, 1).validate().is_err());
        assert!(config(vec![0.0], 0, 1).validate().is_err());
        assert!(config(vec![0.0], 1, 0).validate().is_err());
        let mut cfg = config(vec![0.0], 1, 1);
        cfg.train = "t.csv".into();
        cfg.schema = "s.json".into();
        cfg.resolve_relative_to(Path::new("/data"));
        assert_eq!(cfg.train, PathBuf::from("/data/t.csv"));
    }

    #[test]
    fn config_json_defaults() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"train": "a.csv", "schema": "a.json", "alphas": [0, 4]}"#).unwrap();
        assert_eq!(cfg.dim, 10_000);
        assert_eq!(cfg.schedule, TrainSchedule::default());
        assert_eq!(cfg.runs, 1);
        assert_eq!(cfg.alphas, vec![0.0, 4.0]);
        let partial: ExperimentConfig =
            serde_json::from_str(r#"{"train": "a", "schema": "b", "schedule": {"max_iterations": 500}}"#).unwrap();
        assert_eq!(partial.schedule.max_iterations, 500);
        assert_eq!(partial.schedule.check_every, 100);
    }

    #[test]
    fn cv_on_separable_data_ties_toward_smaller_alpha() {
        let train = make_synthetic(3, 8, 10, 20.0, &mut HdRng::new(4)).unwrap();
        let cfg = config(vec![0.0, 1.0], 1, 5);
        let report = cross_validate_dataset(&synthetic_schema(8), &train, &cfg, 2).unwrap();
        assert_eq!(report.rows.len(), 4);
        assert_eq!(report.aggregate(0.0).unwrap().val_acc.mean, 100.0);
        assert_eq!(report.aggregate(1.0).unwrap().val_acc.mean, 100.0);
        assert_eq!(report.selected_alpha, 0.0);
    }

    #[test]
    fn histogram_bins_and_empty_case() {
        let h = ConfidenceHistogram::from_values(&[0.0, 0.1, 0.25, 7.9, 9.0], 0.25);
        assert_eq!(h.counts.len(), 37);
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.counts[1], 1);
        assert_eq!(h.counts[31], 1);
        assert_eq!(h.counts[36], 1);
        assert_eq!(h.total, 5);
        let empty = ConfidenceHistogram::from_values(&[], 0.25);
        assert_eq!(empty.counts, vec![0; 32]);
        assert!(empty.mean.is_nan());
        assert!(empty.to_csv().lines().skip(1).all(|l| l.ends_with(",0")));
    }

    #[test]
    fn all_wrong_model_yields_zero_histogram() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = HdRng::new(5);
        let a = Hypervector::random(500, &mut rng).unwrap();
        let b = Hypervector::random(500, &mut rng).unwrap();
        let model = AssociativeMemory::from_prototypes(vec![a.clone(), b.clone()], vec![1, 1]).unwrap();
        let out = dir.path().join("hist.csv");
        let h = export_confidence_hist(&model, &[a, b], &[1, 0], 0.25, &out).unwrap();
        assert_eq!(h.total, 0);
        assert!(h.counts.iter().all(|&c| c == 0));
        assert!(std::fs::read_to_string(out).unwrap().starts_with("bin_low,bin_high,count\n0.0,0.25,0\n"));
    }

    #[test]
    fn encoding_cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        // even feature count so the majority has ties to draw
        let ds = make_synthetic(2, 6, 6, 4.0, &mut HdRng::new(6)).unwrap();
        let enc = build_encoder(&synthetic_schema(6), 512, 9).unwrap();
        let fresh = encode_dataset(&enc, &ds, 9, Split::Train).unwrap();
        let first = encode_dataset_cached(&enc, &ds, 9, Split::Train, Some(dir.path())).unwrap();
        let cached = encode_dataset_cached(&enc, &ds, 9, Split::Train, Some(dir.path())).unwrap();
        assert_eq!(fresh, first);
        assert_eq!(fresh, cached);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        assert_ne!(fresh, encode_dataset(&enc, &ds, 9, Split::Test).unwrap());
    }

    #[test]
    fn ngram_datasets_encode_windows() {
        let mut ds = make_synthetic(2, 4, 6, 5.0, &mut HdRng::new(7)).unwrap();
        ds.groups = Some((0..12).map(|i| if i < 6 { "s1".to_string() } else { "s2".to_string() }).collect());
        let mut schema = synthetic_schema(4);
        schema.ngram = Some(4);
        let enc = build_encoder(&schema, 256, 1).unwrap();
        let data = encode_dataset(&enc, &ds, 1, Split::Train).unwrap();
        assert_eq!(data.len(), 6);
        assert_eq!(data.labels, vec![ds.labels[3], ds.labels[4], ds.labels[5], ds.labels[9], ds.labels[10], ds.labels[11]]);
    }

    #[test]
    fn per_group_runs_cover_every_group() {
        let mut rng = HdRng::new(8);
        let mut train = make_synthetic(2, 3, 8, 6.0, &mut rng).unwrap();
        let mut test = make_synthetic(2, 3, 4, 6.0, &mut rng).unwrap();
        train.groups = Some((0..16).map(|i| format!("s{}", i % 2)).collect());
        test.groups = Some((0..8).map(|i| format!("s{}", i % 2)).collect());
        let mut cfg = config(vec![0.0], 2, 2);
        cfg.per_group = true;
        let report = run_on_datasets(&synthetic_schema(3), &train, &test, &cfg).unwrap();
        assert_eq!(report.groups, vec!["s0", "s1"]);
        assert_eq!(report.rows.iter().map(|r| r.run).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    }
}
