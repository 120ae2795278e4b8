//! `hdc`: train, evaluate and sweep binary HDC classifiers.

mod prepare;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hdc_core::datasets::{load_csv_with_classes, write_atomic, DatasetSchema};
use hdc_core::experiment::{
    build_encoder, cross_validate, encode_dataset, export_confidence_hist, initial_model, run_experiment, sweep_alpha,
    train_model, ExperimentConfig, RunReport, Split,
};
use hdc_core::{AssociativeMemory, EncoderSchema};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "hdc", version, about = "Binary hyperdimensional computing classifier")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Flags that take precedence over the config file.
#[derive(Args, Default)]
struct Overrides {
    /// Experiment config (JSON)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Hypervector dimension
    #[arg(long, global = true)]
    dim: Option<usize>,
    /// Confidence threshold(s) in percentage points, comma separated
    #[arg(long, global = true, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    #[arg(long, global = true)]
    runs: Option<usize>,
    #[arg(long = "max-iters", global = true)]
    max_iters: Option<usize>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model (first alpha, base seed) and save it to the output directory
    Train,
    /// Classify a CSV with a model directory written by `train`
    Infer {
        /// Directory holding encoder.hden, model.hdam and model.json
        #[arg(long)]
        model: PathBuf,
        /// CSV in the model's schema
        #[arg(long)]
        input: PathBuf,
    },
    /// Every alpha and run of the config; writes runs.csv and aggregate.json
    Run,
    /// Like `run`, for a grid of at least two alphas; marks the best alpha
    Sweep,
    /// k-fold cross-validation of the alpha grid on the training set
    Cv {
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Confidence histogram of correctly classified training samples
    Hist {
        #[arg(long, value_enum, default_value_t = Stage::Trained)]
        stage: Stage,
        /// Bin width in percentage points
        #[arg(long)]
        bin_width: Option<f64>,
    },
    /// Convert an upstream dataset into CSV + schema + starter config
    Prepare {
        #[command(subcommand)]
        dataset: PrepareCmd,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Stage {
    Initial,
    Trained,
}

#[derive(Subcommand)]
enum PrepareCmd {
    /// CTG feature table exported to CSV (NSP or fetal_health label column)
    Ctg {
        #[arg(long)]
        input: PathBuf,
    },
    /// ISOLET isolet1+2+3+4.data and isolet5.data
    Isolet {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// "UCI HAR Dataset" directory
    Ucihar {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Level-space synthetic data
    Synthetic {
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 16)]
        features: usize,
        #[arg(long, default_value_t = 40)]
        train_per_class: usize,
        #[arg(long, default_value_t = 20)]
        test_per_class: usize,
        #[arg(long, default_value_t = 4.0)]
        separation: f64,
    },
}

impl Overrides {
    fn load(&self) -> Result<ExperimentConfig> {
        let path = self.config.as_ref().context("--config is required for this command")?;
        let mut cfg = ExperimentConfig::from_json_file(path).with_context(|| format!("loading {}", path.display()))?;
        if let Some(s) = self.seed {
            cfg.base_seed = s;
        }
        if let Some(d) = self.dim {
            cfg.dim = d;
        }
        if let Some(a) = &self.alpha {
            cfg.alphas = a.clone();
        }
        if let Some(r) = self.runs {
            cfg.runs = r;
        }
        if let Some(m) = self.max_iters {
            cfg.schedule.max_iterations = m;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Sidecar for a saved model.
#[derive(Serialize, Deserialize)]
struct ModelMeta {
    class_names: Vec<String>,
    schema: DatasetSchema,
    alpha: f64,
    seed: u64,
    dataset_hash: String,
    best_iteration: usize,
    train_accuracy: f64,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train => train(&cli.overrides.load()?),
        Command::Infer { model, input } => infer(&model, &input, cli.overrides.out.as_deref()),
        Command::Run => {
            let report = run_experiment(&cli.overrides.load()?)?;
            print_report(&report, false);
            Ok(())
        }
        Command::Sweep => {
            let report = sweep_alpha(&cli.overrides.load()?)?;
            print_report(&report, true);
            Ok(())
        }
        Command::Cv { folds } => {
            let cfg = cli.overrides.load()?;
            let report = cross_validate(&cfg, folds.unwrap_or(cfg.folds))?;
            println!("alpha\tval_acc\t\ttrain_acc");
            for a in &report.aggregates {
                let mark = if a.alpha == report.selected_alpha { " *" } else { "" };
                println!(
                    "{:.2}\t{:.2} ± {:.2}\t{:.2} ± {:.2}{mark}",
                    a.alpha, a.val_acc.mean, a.val_acc.std, a.train_acc.mean, a.train_acc.std
                );
            }
            println!("selected alpha: {}", report.selected_alpha);
            Ok(())
        }
        Command::Hist { stage, bin_width } => hist(&cli.overrides.load()?, stage, bin_width),
        Command::Prepare { dataset } => {
            let out = cli.overrides.out.clone().context("--out is required for prepare")?;
            let seed = cli.overrides.seed.unwrap_or(0);
            let runs = cli.overrides.runs.unwrap_or(50);
            let prepared = match dataset {
                PrepareCmd::Ctg { input } => prepare::ctg(&input, seed)?,
                PrepareCmd::Isolet { train, test } => prepare::isolet(&train, &test)?,
                PrepareCmd::Ucihar { dir } => prepare::ucihar(&dir)?,
                PrepareCmd::Synthetic { classes, features, train_per_class, test_per_class, separation } => {
                    prepare::synthetic(classes, features, train_per_class, test_per_class, separation, seed)?
                }
            };
            prepared.write(&out, runs)?;
            println!(
                "wrote {} ({} train / {} test samples, {} features, {} classes)",
                out.display(),
                prepared.train.len(),
                prepared.test.len(),
                prepared.train.n_features(),
                prepared.train.classes()
            );
            Ok(())
        }
    }
}

fn print_report(report: &RunReport, mark_best: bool) {
    println!("alpha\ttrain_acc\ttest_acc\ttest_err");
    for a in &report.aggregates {
        let mark = if mark_best && a.alpha == report.best_alpha { " *" } else { "" };
        println!(
            "{:.2}\t{:.2} ± {:.2}\t{:.2} ± {:.2}\t{:.2}{mark}",
            a.alpha, a.train_acc.mean, a.train_acc.std, a.test_acc.mean, a.test_acc.std, a.test_err
        );
    }
}

fn train(cfg: &ExperimentConfig) -> Result<()> {
    let (schema, train_set, test_set) = cfg.load_data()?;
    let alpha = cfg.alphas[0];
    let seed = cfg.base_seed;
    let encoder = build_encoder(&schema, cfg.dim, seed)?;
    let data = encode_dataset(&encoder, &train_set, seed, Split::Train)?;
    let (model, history) = train_model(&data, train_set.classes(), alpha, &cfg.schedule, seed)?;
    println!(
        "alpha {alpha}: {} iterations, best train accuracy {:.2}% at iteration {}",
        history.len(),
        history.best_accuracy * 100.0,
        history.best_iteration
    );
    if let Some(test_set) = &test_set {
        let t = encode_dataset(&encoder, test_set, seed, Split::Test)?;
        println!("test accuracy {:.2}%", model.accuracy(&t.samples, &t.labels)? * 100.0);
    }

    let mut buf = Vec::new();
    encoder.write_to(&mut buf)?;
    write_atomic(&cfg.out.join("encoder.hden"), &buf)?;
    buf.clear();
    model.write_to(&mut buf, true)?;
    write_atomic(&cfg.out.join("model.hdam"), &buf)?;
    let meta = ModelMeta {
        class_names: train_set.class_names.clone(),
        schema,
        alpha,
        seed,
        dataset_hash: train_set.provenance_hex(),
        best_iteration: history.best_iteration,
        train_accuracy: history.best_accuracy,
    };
    write_atomic(&cfg.out.join("model.json"), (serde_json::to_string_pretty(&meta)? + "\n").as_bytes())?;
    let mut csv = String::from("iteration,accuracy,error_updates,low_confidence_updates\n");
    for (i, s) in history.iterations.iter().enumerate() {
        csv += &format!("{},{:?},{},{}\n", i + 1, s.accuracy, s.error_updates, s.low_confidence_updates);
    }
    write_atomic(&cfg.out.join("history.csv"), csv.as_bytes())?;
    println!("model written to {}", cfg.out.display());
    Ok(())
}

fn read_file<T>(path: &Path, read: impl FnOnce(&mut &[u8]) -> hdc_core::Result<T>) -> Result<T> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    read(&mut bytes.as_slice()).with_context(|| format!("decoding {}", path.display()))
}

fn infer(model_dir: &Path, input: &Path, out: Option<&Path>) -> Result<()> {
    let meta: ModelMeta = serde_json::from_slice(
        &std::fs::read(model_dir.join("model.json")).with_context(|| format!("reading {}/model.json", model_dir.display()))?,
    )?;
    let encoder = read_file(&model_dir.join("encoder.hden"), |r| EncoderSchema::read_from(r))?;
    let model = read_file(&model_dir.join("model.hdam"), |r| AssociativeMemory::read_from(r))?;
    if model.classes() != meta.class_names.len() {
        bail!("model has {} classes but model.json lists {}", model.classes(), meta.class_names.len());
    }
    let ds = load_csv_with_classes(input, &meta.schema, Some(&meta.class_names))?;
    let data = encode_dataset(&encoder, &ds, meta.seed, Split::Test)?;
    let mut csv = String::from("index,prediction,label,confidence_pct\n");
    let mut correct = 0;
    for (i, (q, &y)) in data.samples.iter().zip(&data.labels).enumerate() {
        let p = model.predict(q)?;
        correct += usize::from(p.label == y);
        csv += &format!("{i},{},{},{:?}\n", meta.class_names[p.label], meta.class_names[y], p.confidence_pct());
    }
    let dest = out.map_or_else(|| model_dir.join("predictions.csv"), |o| o.join("predictions.csv"));
    write_atomic(&dest, csv.as_bytes())?;
    println!(
        "accuracy {:.2}% on {} samples; predictions written to {}",
        100.0 * correct as f64 / data.len() as f64,
        data.len(),
        dest.display()
    );
    Ok(())
}

fn hist(cfg: &ExperimentConfig, stage: Stage, bin_width: Option<f64>) -> Result<()> {
    let (schema, train_set, _) = cfg.load_data()?;
    let seed = cfg.base_seed;
    let encoder = build_encoder(&schema, cfg.dim, seed)?;
    let data = encode_dataset(&encoder, &train_set, seed, Split::Train)?;
    let width = bin_width.unwrap_or(cfg.bin_width_pct);
    for &alpha in &cfg.alphas {
        let (model, name) = match stage {
            Stage::Initial => (initial_model(&data, train_set.classes(), seed)?, "hist_initial.csv".to_string()),
            Stage::Trained => (
                train_model(&data, train_set.classes(), alpha, &cfg.schedule, seed)?.0,
                format!("hist_alpha{alpha}.csv"),
            ),
        };
        let path = cfg.out.join(&name);
        let h = export_confidence_hist(&model, &data.samples, &data.labels, width, &path)?;
        println!("{}: {} correct samples, mean confidence {:.3} pct", path.display(), h.total, h.mean);
        if matches!(stage, Stage::Initial) {
            break;
        }
    }
    Ok(())
}
