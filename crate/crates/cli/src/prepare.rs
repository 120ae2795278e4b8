//! Converts upstream dataset layouts into the canonical CSV + schema form.
//!
//! Each converter writes `train.csv`, `test.csv`, `schema.json` and a
//! starter `config.json` into the output directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use hdc_core::datasets::{make_synthetic, synthetic_quantizer, Dataset};
use hdc_core::experiment::ExperimentConfig;
use hdc_core::{HdRng, QuantizationSchema, TrainSchedule};
use rand::seq::SliceRandom;

/// Column names of the UCI cardiotocography feature table.
pub const CTG_FEATURES: [&str; 21] = [
    "LB", "AC", "FM", "UC", "DL", "DS", "DP", "ASTV", "MSTV", "ALTV", "MLTV", "Width", "Min", "Max", "Nmax",
    "Nzeros", "Mode", "Mean", "Median", "Variance", "Tendency",
];
const CTG_TRAIN_FRACTION: f64 = 0.8;

pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub quantizer: QuantizationSchema,
    pub alphas: Vec<f64>,
}

impl Prepared {
    pub fn write(&self, out: &Path, runs: usize) -> Result<()> {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        self.train.write_csv(&out.join("train.csv"))?;
        self.test.write_csv(&out.join("test.csv"))?;
        let schema = self.train.canonical_schema(self.quantizer, None);
        schema.write_json_file(&out.join("schema.json"))?;
        let config = ExperimentConfig {
            train: "train.csv".into(),
            test: Some("test.csv".into()),
            schema: "schema.json".into(),
            dim: hdc_core::DEFAULT_DIM,
            alphas: self.alphas.clone(),
            runs,
            schedule: TrainSchedule::default(),
            base_seed: 0,
            out: PathBuf::from("results"),
            per_group: false,
            folds: 10,
            bin_width_pct: hdc_core::experiment::DEFAULT_BIN_WIDTH_PCT,
            cache_dir: None,
        };
        let text = serde_json::to_string_pretty(&config)? + "\n";
        std::fs::write(out.join("config.json"), text).context("writing config.json")?;
        Ok(())
    }
}

fn quarter_grid(max: f64) -> Vec<f64> {
    (0..=(max / 0.25).round() as usize).map(|i| i as f64 * 0.25).collect()
}

/// Integral labels print without a fractional part ("1.0" and "1." become "1").
fn label_name(raw: &str) -> String {
    match raw.trim().parse::<f64>() {
        Ok(x) if x.fract() == 0.0 && x.abs() < 1e15 => format!("{}", x as i64),
        _ => raw.trim().to_owned(),
    }
}

fn parse_cell(cell: &str, path: &Path, line: usize) -> Result<f64> {
    let x: f64 = cell.trim().parse().with_context(|| format!("{}:{line}: non-numeric value {cell:?}", path.display()))?;
    ensure!(x.is_finite(), "{}:{line}: non-finite value {cell:?}", path.display());
    Ok(x)
}

/// Builds a dataset with numerically sorted class names over `labels`.
fn dataset_from(records: Vec<Vec<f64>>, labels: &[String], classes: &[String], groups: Option<Vec<String>>) -> Result<Dataset> {
    let ids = labels
        .iter()
        .map(|l| classes.iter().position(|c| c == l).with_context(|| format!("label {l:?} missing from training classes")))
        .collect::<Result<Vec<_>>>()?;
    let mut ds = Dataset::new(records, ids, classes.to_vec())?;
    ds.groups = groups;
    ds.validate()?;
    Ok(ds)
}

fn class_list(labels: &[String]) -> Vec<String> {
    let mut classes: Vec<String> = labels.to_vec();
    classes.sort_by(|a, b| match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y),
        _ => a.cmp(b),
    });
    classes.dedup();
    classes
}

/// CTG feature table exported to CSV (UCI sheet with an `NSP` column, or a
/// table whose label column is `fetal_health`). Rows without a label are
/// skipped. The data are split 80/20 by a seeded shuffle and every feature
/// is min-max scaled to `[0, 100]` with training-split statistics.
pub fn ctg(input: &Path, seed: u64) -> Result<Prepared> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(input)
        .with_context(|| format!("opening {}", input.display()))?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let find = |name: &str| header.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (label_col, feature_cols): (usize, Vec<usize>) = if let Some(l) = find("NSP") {
        let cols = CTG_FEATURES
            .iter()
            .map(|f| find(f).with_context(|| format!("column {f} not found in {}", input.display())))
            .collect::<Result<Vec<_>>>()?;
        (l, cols)
    } else if let Some(l) = find("fetal_health") {
        (l, (0..header.len()).filter(|&c| c != l).collect())
    } else {
        bail!("{}: expected an NSP or fetal_health label column", input.display());
    };
    ensure!(feature_cols.len() == 21, "expected 21 CTG features, found {}", feature_cols.len());

    let mut rows: Vec<(Vec<f64>, String)> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let label = rec.get(label_col).unwrap_or("").trim();
        if label.is_empty() {
            continue;
        }
        let features = feature_cols
            .iter()
            .map(|&c| parse_cell(rec.get(c).unwrap_or(""), input, line))
            .collect::<Result<Vec<_>>>()?;
        rows.push((features, label_name(label)));
    }
    ensure!(rows.len() >= 2, "{}: fewer than two labelled rows", input.display());

    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut HdRng::derive(seed, "ctg-split", 0));
    let n_train = (rows.len() as f64 * CTG_TRAIN_FRACTION).ceil() as usize;
    let (train_idx, test_idx) = order.split_at(n_train);

    let n = feature_cols.len();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for &i in train_idx {
        for (j, &x) in rows[i].0.iter().enumerate() {
            lo[j] = lo[j].min(x);
            hi[j] = hi[j].max(x);
        }
    }
    let scale = |r: &[f64]| -> Vec<f64> {
        r.iter()
            .enumerate()
            .map(|(j, &x)| if hi[j] > lo[j] { (100.0 * (x - lo[j]) / (hi[j] - lo[j])).clamp(0.0, 100.0) } else { 0.0 })
            .collect()
    };
    let all_labels: Vec<String> = train_idx.iter().map(|&i| rows[i].1.clone()).collect();
    let classes = class_list(&all_labels);
    let build = |idx: &[usize]| {
        let records = idx.iter().map(|&i| scale(&rows[i].0)).collect();
        let labels: Vec<String> = idx.iter().map(|&i| rows[i].1.clone()).collect();
        dataset_from(records, &labels, &classes, None)
    };
    Ok(Prepared {
        train: build(train_idx)?,
        test: build(test_idx)?,
        quantizer: QuantizationSchema::new(0.0, 100.0, 5.0)?,
        alphas: (0..=6).map(f64::from).collect(),
    })
}

/// Headerless comma-separated rows of features followed by the label.
fn read_label_last(path: &Path, scale: f64) -> Result<(Vec<Vec<f64>>, Vec<String>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut records = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.with_context(|| format!("{}:{}", path.display(), i + 1))?;
        let cells: Vec<&str> = rec.iter().filter(|c| !c.is_empty()).collect();
        if cells.is_empty() {
            continue;
        }
        let (label, features) = cells.split_last().expect("non-empty row");
        records.push(features.iter().map(|c| Ok(parse_cell(c, path, i + 1)? * scale)).collect::<Result<Vec<_>>>()?);
        labels.push(label_name(label));
    }
    ensure!(!records.is_empty(), "{}: no rows", path.display());
    Ok((records, labels))
}

/// ISOLET `isolet1+2+3+4.data` / `isolet5.data`: features in `[-1, 1]`
/// scaled by 100.
pub fn isolet(train: &Path, test: &Path) -> Result<Prepared> {
    let (tr, tr_labels) = read_label_last(train, 100.0)?;
    let (te, te_labels) = read_label_last(test, 100.0)?;
    let classes = class_list(&tr_labels);
    Ok(Prepared {
        train: dataset_from(tr, &tr_labels, &classes, None)?,
        test: dataset_from(te, &te_labels, &classes, None)?,
        quantizer: QuantizationSchema::new(-100.0, 100.0, 10.0)?,
        alphas: quarter_grid(1.5),
    })
}

fn read_whitespace(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .map(|l| l.split_whitespace().map(str::to_owned).collect::<Vec<_>>())
        .filter(|r| !r.is_empty())
        .collect())
}

fn ucihar_split(dir: &Path, split: &str) -> Result<(Vec<Vec<f64>>, Vec<String>, Option<Vec<String>>)> {
    let base = dir.join(split);
    let x_path = base.join(format!("X_{split}.txt"));
    let x = read_whitespace(&x_path)?;
    let y: Vec<String> = read_whitespace(&base.join(format!("y_{split}.txt")))?
        .into_iter()
        .map(|r| label_name(&r[0]))
        .collect();
    ensure!(x.len() == y.len(), "{split}: {} feature rows but {} labels", x.len(), y.len());
    let records = x
        .iter()
        .enumerate()
        .map(|(i, r)| r.iter().map(|c| Ok(parse_cell(c, &x_path, i + 1)? * 100.0)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let subject_path = base.join(format!("subject_{split}.txt"));
    let groups = if subject_path.exists() {
        let s: Vec<String> = read_whitespace(&subject_path)?.into_iter().map(|r| r[0].clone()).collect();
        ensure!(s.len() == records.len(), "{split}: subject list length differs from feature rows");
        Some(s)
    } else {
        None
    };
    Ok((records, y, groups))
}

/// "UCI HAR Dataset" directory: `{train,test}/X_*.txt`, `y_*.txt` and,
/// when present, `subject_*.txt` as the group column. Features in `[-1, 1]`
/// are scaled by 100.
pub fn ucihar(dir: &Path) -> Result<Prepared> {
    let (tr, tr_labels, tr_groups) = ucihar_split(dir, "train")?;
    let (te, te_labels, te_groups) = ucihar_split(dir, "test")?;
    let classes = class_list(&tr_labels);
    Ok(Prepared {
        train: dataset_from(tr, &tr_labels, &classes, tr_groups)?,
        test: dataset_from(te, &te_labels, &classes, te_groups)?,
        quantizer: QuantizationSchema::new(-100.0, 100.0, 10.0)?,
        alphas: quarter_grid(1.5),
    })
}

/// Level-space synthetic train and test sets drawn from the same centroids.
pub fn synthetic(classes: usize, features: usize, train_per_class: usize, test_per_class: usize, separation: f64, seed: u64) -> Result<Prepared> {
    let all = make_synthetic(classes, features, train_per_class + test_per_class, separation, &mut HdRng::new(seed))?;
    let mut seen = vec![0usize; classes];
    let (mut train_idx, mut test_idx) = (Vec::new(), Vec::new());
    for (i, &y) in all.labels.iter().enumerate() {
        if seen[y] < train_per_class {
            train_idx.push(i);
        } else {
            test_idx.push(i);
        }
        seen[y] += 1;
    }
    ensure!(!test_idx.is_empty(), "test set would be empty");
    Ok(Prepared {
        train: all.subset(&train_idx),
        test: all.subset(&test_idx),
        quantizer: synthetic_quantizer(),
        alphas: vec![0.0, 1.0, 2.0],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_names_drop_integral_fraction() {
        assert_eq!(label_name("1."), "1");
        assert_eq!(label_name(" 3.0 "), "3");
        assert_eq!(label_name("2.5"), "2.5");
        assert_eq!(label_name("walk"), "walk");
    }

    #[test]
    fn classes_sort_numerically() {
        let l: Vec<String> = ["10", "2", "1", "2"].iter().map(|s| s.to_string()).collect();
        assert_eq!(class_list(&l), vec!["1", "2", "10"]);
    }

    #[test]
    fn ctg_split_and_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ctg.csv");
        let mut text = String::from("FileName,");
        text += &CTG_FEATURES.join(",");
        text += ",CLASS,NSP\n";
        for i in 0..10 {
            let feats: Vec<String> = (0..21).map(|j| format!("{}", i * (j + 1))).collect();
            text += &format!("f{i},{},{},{}\n", feats.join(","), i % 10 + 1, i % 3 + 1);
        }
        text += ",,,,\n";
        std::fs::write(&path, text).unwrap();
        let p = ctg(&path, 0).unwrap();
        assert_eq!((p.train.len(), p.test.len()), (8, 2));
        assert_eq!(p.train.class_names, vec!["1", "2", "3"]);
        for r in &p.train.records {
            assert!(r.iter().all(|x| (0.0..=100.0).contains(x)));
        }
        let col0: Vec<f64> = p.train.records.iter().map(|r| r[0]).collect();
        assert!(col0.contains(&0.0) && col0.contains(&100.0));
    }

    #[test]
    fn ctg_sizes_match_uci_counts() {
        assert_eq!((2126.0 * CTG_TRAIN_FRACTION).ceil() as usize, 1701);
    }

    #[test]
    fn isolet_scaling_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        let tr = dir.path().join("tr.data");
        let te = dir.path().join("te.data");
        std::fs::write(&tr, "-1, 0.5, 1.\n0.25, -0.5, 2.\n").unwrap();
        std::fs::write(&te, "1, 1, 2.\n").unwrap();
        let p = isolet(&tr, &te).unwrap();
        assert_eq!(p.train.records, vec![vec![-100.0, 50.0], vec![25.0, -50.0]]);
        assert_eq!(p.train.class_names, vec!["1", "2"]);
        assert_eq!(p.test.labels, vec![1]);
    }

    #[test]
    fn ucihar_layout() {
        let dir = tempfile::tempdir().unwrap();
        for split in ["train", "test"] {
            let d = dir.path().join(split);
            std::fs::create_dir_all(&d).unwrap();
            std::fs::write(d.join(format!("X_{split}.txt")), "  1.0000000e-001 -2.5000000e-001\n -1 1\n").unwrap();
            std::fs::write(d.join(format!("y_{split}.txt")), "5\n1\n").unwrap();
            std::fs::write(d.join(format!("subject_{split}.txt")), "3\n7\n").unwrap();
        }
        let p = ucihar(dir.path()).unwrap();
        assert_eq!(p.train.records[0], vec![10.0, -25.0]);
        assert_eq!(p.train.labels, vec![1, 0]);
        assert_eq!(p.train.groups, Some(vec!["3".to_string(), "7".to_string()]));
    }

    #[test]
    fn synthetic_split_sizes() {
        let p = synthetic(3, 4, 5, 2, 8.0, 1).unwrap();
        assert_eq!(p.train.class_counts(), vec![5, 5, 5]);
        assert_eq!(p.test.class_counts(), vec![2, 2, 2]);
    }
}
