use std::path::Path;

use hdc_core::datasets::{load_csv, make_synthetic, synthetic_quantizer, Dataset};
use hdc_core::experiment::{
    build_encoder, cross_validate, encode_dataset, run_experiment, sweep_alpha, train_model, ExperimentConfig, Split,
};
use hdc_core::{AssociativeMemory, EncoderSchema, HdRng, TrainSchedule};

fn write_dataset(dir: &Path, name: &str, ds: &Dataset) {
    ds.write_csv(&dir.join(name)).unwrap();
}

fn setup(dir: &Path, ngram: Option<usize>) -> ExperimentConfig {
    let mut rng = HdRng::new(11);
    let mut train = make_synthetic(3, 6, 20, 5.0, &mut rng).unwrap();
    let mut test = make_synthetic(3, 6, 8, 5.0, &mut rng).unwrap();
    if ngram.is_some() {
        train.groups = Some((0..train.len()).map(|i| format!("g{}", i / 30)).collect());
        test.groups = Some((0..test.len()).map(|i| format!("g{}", i / 12)).collect());
    }
    write_dataset(dir, "train.csv", &train);
    write_dataset(dir, "test.csv", &test);
    train.canonical_schema(synthetic_quantizer(), ngram).write_json_file(&dir.join("schema.json")).unwrap();
    let cfg = format!(
        r#"{{"train": "train.csv", "test": "test.csv", "schema": "schema.json", "dim": 1024,
            "alphas": [0, 1.5], "runs": 3, "base_seed": 5, "out": "out",
            "schedule": {{"max_iterations": 30, "check_every": 10}}}}"#
    );
    std::fs::write(dir.join("config.json"), cfg).unwrap();
    ExperimentConfig::from_json_file(&dir.join("config.json")).unwrap()
}

#[test]
fn csv_round_trip_preserves_provenance_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), None);
    let schema = hdc_core::datasets::DatasetSchema::from_json_file(&cfg.schema).unwrap();
    let a = load_csv(&cfg.train, &schema).unwrap();
    a.write_csv(&dir.path().join("again.csv")).unwrap();
    let b = load_csv(&dir.path().join("again.csv"), &schema).unwrap();
    assert_eq!(a.provenance_hash(), b.provenance_hash());
    assert_eq!(a, b);
}

#[test]
fn experiment_reports_are_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = setup(dir.path(), None);
    let first = run_experiment(&cfg).unwrap();
    let csv_a = std::fs::read(dir.path().join("out/runs.csv")).unwrap();
    let json_a = std::fs::read(dir.path().join("out/aggregate.json")).unwrap();
    cfg.out = dir.path().join("out2");
    let second = run_experiment(&cfg).unwrap();
    assert_eq!(first, second);
    assert_eq!(csv_a, std::fs::read(dir.path().join("out2/runs.csv")).unwrap());
    assert_eq!(json_a, std::fs::read(dir.path().join("out2/aggregate.json")).unwrap());
    assert_eq!(first.rows.len(), 6);
    assert!(first.rows.iter().all(|r| r.iters <= 30 && r.best_iter >= 1 && r.best_iter <= r.iters));
    assert!(first.rows.iter().map(|r| r.seed).all(|s| (5..8).contains(&s)));
}

#[test]
fn sweep_and_cv_through_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = setup(dir.path(), None);
    let report = sweep_alpha(&cfg).unwrap();
    assert!(cfg.alphas.contains(&report.best_alpha));
    cfg.runs = 1;
    let cv = cross_validate(&cfg, 3).unwrap();
    assert_eq!(cv.rows.len(), 3 * 2);
    assert!(dir.path().join("out/cv_aggregate.json").exists());
    cfg.alphas = vec![1.0];
    assert!(sweep_alpha(&cfg).is_err());
}

#[test]
fn ngram_groups_run_per_group() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = setup(dir.path(), Some(3));
    cfg.per_group = true;
    cfg.runs = 1;
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.groups, vec!["g0", "g1"]);
    assert_eq!(report.rows.len(), 2 * 2);
}

#[test]
fn saved_model_and_encoder_reproduce_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), None);
    let (schema, train, test) = cfg.load_data().unwrap();
    let test = test.unwrap();
    let enc = build_encoder(&schema, 1024, 3).unwrap();
    let data = encode_dataset(&enc, &train, 3, Split::Train).unwrap();
    let schedule = TrainSchedule { max_iterations: 20, check_every: 10, ..Default::default() };
    let (model, _) = train_model(&data, train.classes(), 2.0, &schedule, 3).unwrap();

    let mut enc_bytes = Vec::new();
    enc.write_to(&mut enc_bytes).unwrap();
    let mut model_bytes = Vec::new();
    model.write_to(&mut model_bytes, false).unwrap();
    let enc2 = EncoderSchema::read_from(&mut enc_bytes.as_slice()).unwrap();
    let model2 = AssociativeMemory::read_from(&mut model_bytes.as_slice()).unwrap();
    assert!(!model2.has_bundles());

    let a = encode_dataset(&enc, &test, 3, Split::Test).unwrap();
    let b = encode_dataset(&enc2, &test, 3, Split::Test).unwrap();
    assert_eq!(a, b);
    assert_eq!(model.infer(&a.samples).unwrap(), model2.infer(&b.samples).unwrap());
}

#[test]
fn bad_inputs_surface_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = setup(dir.path(), None);
    std::fs::write(dir.path().join("test.csv"), "f0,f1,f2,f3,f4,f5,label\n1,2,3,4,5,6,9\n").unwrap();
    let err = run_experiment(&cfg).unwrap_err().to_string();
    assert!(err.contains("label"), "{err}");
    cfg.test = Some(dir.path().join("missing.csv"));
    assert!(run_experiment(&cfg).unwrap_err().to_string().contains("missing.csv"));
}
