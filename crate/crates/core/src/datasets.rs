//! Dataset ingestion, schemas, synthetic fixtures and fold splitting.
//!
//! Datasets are numeric CSV files described by a JSON sidecar:
//!
//! ```json
//! {
//!   "n_features": 21,
//!   "label_column": "label",
//!   "v_min": 0.0, "v_max": 100.0, "step": 5.0,
//!   "ngram": null,
//!   "group_column": null
//! }
//! ```
//!
//! Columns may be referenced by zero-based index or by header name. Every
//! column that is neither the label nor the group column is a feature, in
//! file order. Labels are remapped to dense ids; unless the schema lists the
//! classes explicitly they are ordered numerically when every label parses
//! as a number and lexicographically otherwise.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HdcError, Result};
use crate::hdvec::HdRng;
use crate::memory::QuantizationSchema;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnRef::Index(i) => write!(f, "#{i}"),
            ColumnRef::Name(n) => write!(f, "{n:?}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub n_features: usize,
    pub label_column: ColumnRef,
    pub v_min: f64,
    pub v_max: f64,
    pub step: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ngram: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_column: Option<ColumnRef>,
    /// Overrides the global range for individual features.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_ranges: Option<Vec<QuantizationSchema>>,
    /// Explicit class order; labels outside it are rejected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<String>>,
    /// `None` detects a header from the first row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub has_header: Option<bool>,
}

impl DatasetSchema {
    pub fn new(n_features: usize, label_column: ColumnRef, v_min: f64, v_max: f64, step: f64) -> Self {
        Self {
            n_features,
            label_column,
            v_min,
            v_max,
            step,
            ngram: None,
            group_column: None,
            feature_ranges: None,
            classes: None,
            has_header: None,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HdcError::io(path.display().to_string(), e))?;
        let schema: Self = serde_json::from_str(&text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn write_json_file(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| HdcError::io(path.display().to_string(), e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_features == 0 {
            return Err(HdcError::InvalidArgument("schema declares zero features".into()));
        }
        if self.ngram == Some(0) {
            return Err(HdcError::InvalidArgument("n-gram length must be at least 1".into()));
        }
        if let Some(ranges) = &self.feature_ranges {
            if ranges.len() != self.n_features {
                return Err(HdcError::InvalidArgument(format!(
                    "{} feature ranges for {} features",
                    ranges.len(),
                    self.n_features
                )));
            }
            ranges.iter().try_for_each(QuantizationSchema::validate)?;
        }
        self.global_quantizer().map(|_| ())
    }

    pub fn global_quantizer(&self) -> Result<QuantizationSchema> {
        QuantizationSchema::new(self.v_min, self.v_max, self.step)
    }

    /// Quantizer for every feature.
    pub fn quantizers(&self) -> Result<Vec<QuantizationSchema>> {
        match &self.feature_ranges {
            Some(ranges) => Ok(ranges.clone()),
            None => Ok(vec![self.global_quantizer()?; self.n_features]),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub records: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub groups: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(records: Vec<Vec<f64>>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        let ds = Self { records, labels, class_names, groups: None };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(HdcError::InvalidArgument("dataset has no records".into()));
        }
        if self.records.len() != self.labels.len() {
            return Err(HdcError::InvalidArgument("record and label counts differ".into()));
        }
        let n = self.records[0].len();
        if let Some(i) = self.records.iter().position(|r| r.len() != n) {
            return Err(HdcError::InvalidArgument(format!("record {i} has {} features, expected {n}", self.records[i].len())));
        }
        if let Some(&label) = self.labels.iter().find(|&&y| y >= self.class_names.len()) {
            return Err(HdcError::LabelOutOfRange { label, classes: self.class_names.len() });
        }
        if let Some(g) = &self.groups {
            if g.len() != self.records.len() {
                return Err(HdcError::InvalidArgument("group and record counts differ".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.records.first().map_or(0, Vec::len)
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// SHA-256 over the decoded content (shape, feature bits, labels, class
    /// names, groups), independent of the file's textual formatting.
    pub fn provenance_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update((self.len() as u64).to_le_bytes());
        h.update((self.n_features() as u64).to_le_bytes());
        for r in &self.records {
            for x in r {
                h.update(x.to_bits().to_le_bytes());
            }
        }
        for &y in &self.labels {
            h.update((y as u64).to_le_bytes());
        }
        for name in &self.class_names {
            h.update((name.len() as u64).to_le_bytes());
            h.update(name.as_bytes());
        }
        if let Some(groups) = &self.groups {
            for g in groups {
                h.update((g.len() as u64).to_le_bytes());
                h.update(g.as_bytes());
            }
        }
        h.finalize().into()
    }

    pub fn provenance_hex(&self) -> String {
        self.provenance_hash().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            groups: self.groups.as_ref().map(|g| indices.iter().map(|&i| g[i].clone()).collect()),
        }
    }

    /// Distinct group names in first-seen order.
    pub fn group_names(&self) -> Vec<String> {
        let mut seen = Vec::new();
        if let Some(groups) = &self.groups {
            for g in groups {
                if !seen.contains(g) {
                    seen.push(g.clone());
                }
            }
        }
        seen
    }

    pub fn filter_group(&self, group: &str) -> Self {
        let indices: Vec<usize> = match &self.groups {
            Some(groups) => (0..self.len()).filter(|&i| groups[i] == group).collect(),
            None => (0..self.len()).collect(),
        };
        self.subset(&indices)
    }

    /// End index of every length-`n` window of consecutive records that
    /// stays inside one group, with stride 1. A window takes the label of its
    /// last record.
    pub fn window_ends(&self, n: usize) -> Vec<usize> {
        let n = n.max(1);
        (n - 1..self.len())
            .filter(|&end| match &self.groups {
                Some(g) => g[end + 1 - n..=end].iter().all(|x| *x == g[end]),
                None => true,
            })
            .collect()
    }

    /// Writes the canonical CSV form: header `f0..f{n-1},label[,group]`,
    /// values in shortest round-trip notation, labels as class names.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (0..self.n_features()).map(|j| format!("f{j}")).collect();
        header.push("label".into());
        if self.groups.is_some() {
            header.push("group".into());
        }
        w.write_record(&header)?;
        for (i, r) in self.records.iter().enumerate() {
            let mut row: Vec<String> = r.iter().map(|x| format!("{x:?}")).collect();
            row.push(self.class_names[self.labels[i]].clone());
            if let Some(g) = &self.groups {
                row.push(g[i].clone());
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| HdcError::io(path.display().to_string(), e))
    }

    /// Schema describing [`Dataset::write_csv`] output.
    pub fn canonical_schema(&self, quantizer: QuantizationSchema, ngram: Option<usize>) -> DatasetSchema {
        DatasetSchema {
            n_features: self.n_features(),
            label_column: ColumnRef::Name("label".into()),
            v_min: quantizer.v_min,
            v_max: quantizer.v_max,
            step: quantizer.step,
            ngram,
            group_column: self.groups.as_ref().map(|_| ColumnRef::Name("group".into())),
            feature_ranges: None,
            classes: Some(self.class_names.clone()),
            has_header: Some(true),
        }
    }
}

pub fn load_csv(path: &Path, schema: &DatasetSchema) -> Result<Dataset> {
    load_csv_with_classes(path, schema, None)
}

/// Loads a CSV; `classes`, when given, fixes the label order (e.g. the
/// training set's classes when loading the matching test set).
pub fn load_csv_with_classes(path: &Path, schema: &DatasetSchema, classes: Option<&[String]>) -> Result<Dataset> {
    schema.validate()?;
    let file = File::open(path).map_err(|e| HdcError::io(path.display().to_string(), e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));

    let perr = |row: usize, msg: String| HdcError::Parse { path: PathBuf::from(path), row, msg };
    let mut rows = reader.records().enumerate();

    // Named columns imply a header; with index-only references a first row
    // whose feature cells do not all parse is taken as a header.
    let named = matches!(schema.label_column, ColumnRef::Name(_))
        || matches!(schema.group_column, Some(ColumnRef::Name(_)));
    let mut pending_first: Option<(usize, csv::StringRecord)> = None;
    let mut header: Option<Vec<String>> = None;
    if let Some((i, first)) = rows.next() {
        let first = first?;
        let is_header = schema.has_header.unwrap_or_else(|| named || !feature_cells_numeric(&first, schema));
        if is_header {
            header = Some(first.iter().map(str::to_owned).collect());
        } else {
            pending_first = Some((i, first));
        }
    }

    let resolve = |c: &ColumnRef| -> Result<usize> {
        match c {
            ColumnRef::Index(i) => Ok(*i),
            ColumnRef::Name(name) => header
                .as_ref()
                .and_then(|h| h.iter().position(|x| x == name))
                .ok_or_else(|| perr(1, format!("column {name:?} not found in header"))),
        }
    };
    let label_col = resolve(&schema.label_column)?;
    let group_col = schema.group_column.as_ref().map(resolve).transpose()?;
    let width = schema.n_features + 1 + group_col.is_some() as usize;
    if label_col >= width || group_col.is_some_and(|g| g >= width || g == label_col) {
        return Err(perr(1, format!("label/group columns out of range for {width} columns")));
    }
    if let Some(h) = &header {
        if h.len() != width {
            return Err(perr(1, format!("header has {} columns, schema implies {width}", h.len())));
        }
    }

    let mut records = Vec::new();
    let mut raw_labels = Vec::new();
    let mut groups = Vec::new();
    for item in pending_first.into_iter().map(Ok).chain(rows.map(|(i, r)| r.map(|r| (i, r)))) {
        let (i, row) = item?;
        let line = i + 1;
        if row.len() == 1 && row.get(0) == Some("") {
            continue;
        }
        if row.len() != width {
            return Err(perr(line, format!("expected {width} columns, found {}", row.len())));
        }
        let mut features = Vec::with_capacity(schema.n_features);
        for (c, cell) in row.iter().enumerate() {
            if c == label_col {
                raw_labels.push(cell.to_owned());
            } else if Some(c) == group_col {
                groups.push(cell.to_owned());
            } else {
                let x: f64 = cell
                    .parse()
                    .map_err(|_| perr(line, format!("column {c}: non-numeric value {cell:?}")))?;
                if !x.is_finite() {
                    return Err(perr(line, format!("column {c}: non-finite value {cell:?}")));
                }
                features.push(x);
            }
        }
        records.push(features);
    }
    if records.is_empty() {
        return Err(perr(0, "no data rows".into()));
    }

    let class_names: Vec<String> = match classes.or(schema.classes.as_deref()) {
        Some(c) => c.to_vec(),
        None => sorted_labels(&raw_labels),
    };
    let index: HashMap<&str, usize> = class_names.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let mut labels = Vec::with_capacity(raw_labels.len());
    for (i, raw) in raw_labels.iter().enumerate() {
        let id = index
            .get(canonical_label(raw, &class_names).as_str())
            .ok_or_else(|| perr(i + 1 + header.is_some() as usize, format!("label {raw:?} outside the declared classes")))?;
        labels.push(*id);
    }

    let ds = Dataset {
        records,
        labels,
        class_names,
        groups: group_col.map(|_| groups),
    };
    ds.validate()?;
    Ok(ds)
}

fn feature_cells_numeric(row: &csv::StringRecord, schema: &DatasetSchema) -> bool {
    let skip = |c: usize| {
        schema.label_column == ColumnRef::Index(c) || schema.group_column == Some(ColumnRef::Index(c))
    };
    row.iter().enumerate().filter(|(c, _)| !skip(*c)).all(|(_, cell)| cell.parse::<f64>().is_ok())
}

/// Numeric labels such as `1` and `1.0` refer to the same class.
fn canonical_label(raw: &str, class_names: &[String]) -> String {
    if class_names.iter().any(|c| c == raw) {
        return raw.to_owned();
    }
    match raw.parse::<f64>() {
        Ok(x) => class_names
            .iter()
            .find(|c| c.parse::<f64>().ok() == Some(x))
            .cloned()
            .unwrap_or_else(|| raw.to_owned()),
        Err(_) => raw.to_owned(),
    }
}

fn sorted_labels(raw: &[String]) -> Vec<String> {
    let distinct: BTreeSet<&str> = raw.iter().map(String::as_str).collect();
    let mut out: Vec<String> = distinct.into_iter().map(str::to_owned).collect();
    if out.iter().all(|l| l.parse::<f64>().is_ok()) {
        out.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
        out.dedup_by(|a, b| a.parse::<f64>().ok() == b.parse::<f64>().ok());
    }
    out
}

/// Level-space synthetic data: features take integer values in `[0, 20]`.
///
/// All classes share a random base point; class `k`'s centroid is the base
/// shifted by `separation * u_k` with `u_k` uniform in `[-1, 1]^n`, clamped
/// to the range. Records add independent integer jitter uniform in
/// `[-3, 3]` to the centroid, so the jitter-to-separation ratio shrinks as
/// `separation` grows and `separation = 0` makes all classes identical.
/// Rows are shuffled; every class has exactly `m_per_class` records.
pub fn make_synthetic(classes: usize, n_features: usize, m_per_class: usize, separation: f64, rng: &mut HdRng) -> Result<Dataset> {
    const MAX_LEVEL: f64 = 20.0;
    const JITTER: i64 = 3;
    if classes < 2 {
        return Err(HdcError::InvalidArgument("synthetic data needs at least 2 classes".into()));
    }
    if !(separation >= 0.0) || n_features == 0 || m_per_class == 0 {
        return Err(HdcError::InvalidArgument("separation must be >= 0 and sizes positive".into()));
    }
    let base: Vec<f64> = (0..n_features).map(|_| rng.gen_range(0..=20) as f64).collect();
    let centroids: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            base.iter()
                .map(|b| (b + separation * rng.gen_range(-1.0..=1.0)).clamp(0.0, MAX_LEVEL))
                .collect()
        })
        .collect();
    let mut rows: Vec<(Vec<f64>, usize)> = Vec::with_capacity(classes * m_per_class);
    for (k, c) in centroids.iter().enumerate() {
        for _ in 0..m_per_class {
            let r = c
                .iter()
                .map(|x| (x.round() + rng.gen_range(-JITTER..=JITTER) as f64).clamp(0.0, MAX_LEVEL))
                .collect();
            rows.push((r, k));
        }
    }
    rows.shuffle(rng);
    let (records, labels) = rows.into_iter().unzip();
    Dataset::new(records, labels, (0..classes).map(|k| k.to_string()).collect())
}

/// Quantizer matching [`make_synthetic`] output.
pub fn synthetic_quantizer() -> QuantizationSchema {
    QuantizationSchema { v_min: 0.0, v_max: 20.0, step: 1.0 }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Shuffled k-fold partition of `0..m`; fold sizes differ by at most one
/// (the first `m mod k` folds get the extra index). Index lists are sorted.
pub fn kfold_split(m: usize, k: usize, rng: &mut HdRng) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(HdcError::InvalidArgument(format!("k-fold needs k >= 2, got {k}")));
    }
    if k > m {
        return Err(HdcError::InvalidArgument(format!("cannot split {m} samples into {k} folds")));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(rng);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = m / k + usize::from(f < m % k);
        let mut validation = order[start..start + size].to_vec();
        validation.sort_unstable();
        let mut train: Vec<usize> = order[..start].iter().chain(&order[start + size..]).copied().collect();
        train.sort_unstable();
        folds.push(Fold { train, validation });
        start += size;
    }
    Ok(folds)
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| HdcError::io(dir.display().to_string(), e))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out"),
        std::process::id()
    ));
    let mut f = File::create(&tmp).map_err(|e| HdcError::io(tmp.display().to_string(), e))?;
    f.write_all(contents).map_err(|e| HdcError::io(tmp.display().to_string(), e))?;
    f.sync_all().map_err(|e| HdcError::io(tmp.display().to_string(), e))?;
    std::fs::rename(&tmp, path).map_err(|e| HdcError::io(path.display().to_string(), e))
}
