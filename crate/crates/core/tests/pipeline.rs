use std::fs;
use std::path::Path;
use std::sync::Arc;

use boxal_core::data_io::{
    load_manifest, read_report, read_report_csv, save_manifest, write_report, write_synthetic,
    Dataset, ReportFormat, SyntheticSpec,
};
use boxal_core::engine::{run_experiment, ExperimentConfig, ExperimentReport, SimulatedOracle};
use boxal_core::predictors::SyntheticPredictor;
use boxal_core::sampling::{StrategyConfig, StrategyKind};

const BOTH: [ReportFormat; 2] = [ReportFormat::Csv, ReportFormat::Json];

fn spec() -> SyntheticSpec {
    SyntheticSpec {
        train_images: 20,
        test_images: 5,
        image_size: 48,
        seed: 21,
        ..Default::default()
    }
}

fn config(kind: StrategyKind, rounds: usize) -> ExperimentConfig {
    ExperimentConfig {
        strategy: StrategyConfig {
            kind,
            sample_size: 5,
            seed: 9,
        },
        rounds,
        initial_size: 5,
        passes: 8,
        ..Default::default()
    }
}

fn run(manifest: &Path, config: ExperimentConfig) -> ExperimentReport {
    let ds = Arc::new(Dataset::open(manifest).unwrap());
    let p = SyntheticPredictor::new(ds.clone(), Default::default()).unwrap();
    let mut oracle = SimulatedOracle::new(ds.clone());
    run_experiment(config, ds, "manifest.json", p, &mut oracle).unwrap()
}

#[test]
fn generated_dataset_reloads_identically() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_synthetic(dir.path(), &spec()).unwrap();
    let manifest = load_manifest(&path).unwrap();
    let again = dir.path().join("again.json");
    save_manifest(&again, &manifest).unwrap();
    assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());

    let other = tempfile::tempdir().unwrap();
    let path2 = write_synthetic(other.path(), &spec()).unwrap();
    assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    assert_eq!(
        fs::read(dir.path().join("images/00001.png")).unwrap(),
        fs::read(other.path().join("images/00001.png")).unwrap()
    );
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_synthetic(dir.path().join("data"), &spec()).unwrap();
    for kind in [StrategyKind::Random, StrategyKind::McUncertainty] {
        let a = run(&manifest, config(kind, 3));
        let b = run(&manifest, config(kind, 3));
        write_report(&a, dir.path().join("a"), &BOTH).unwrap();
        write_report(&b, dir.path().join("b"), &BOTH).unwrap();
        for f in ["report.csv", "report.json"] {
            assert_eq!(
                fs::read(dir.path().join("a").join(f)).unwrap(),
                fs::read(dir.path().join("b").join(f)).unwrap(),
                "{f}"
            );
        }
        let counts: Vec<_> = a.rows.iter().map(|r| r.labeled_count).collect();
        assert_eq!(counts, [5, 10, 15, 20]);

        let back = read_report(dir.path().join("a")).unwrap();
        assert_eq!(back.rows, a.rows);
        assert_eq!(back.config, a.config);
        let csv = fs::read_to_string(dir.path().join("a/report.csv")).unwrap();
        let rows = read_report_csv(&csv).unwrap();
        assert_eq!(rows.len(), a.rows.len());
        for (c, j) in rows.iter().zip(&a.rows) {
            assert_eq!(c.dsc.to_bits(), j.dsc.to_bits());
            assert_eq!(c.cost_percent.to_bits(), j.cost_percent.to_bits());
            assert_eq!(c.labeled_fraction.to_bits(), j.labeled_fraction.to_bits());
        }
        assert_eq!(rows.last().unwrap().cost_percent, 8.8);
    }
}

#[test]
fn zero_rounds_writes_a_single_row() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_synthetic(dir.path().join("data"), &spec()).unwrap();
    let report = run(&manifest, config(StrategyKind::Random, 0));
    write_report(&report, dir.path().join("out"), &BOTH).unwrap();
    let csv = fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().starts_with("0,5,0.25,"));
}

#[test]
fn different_seeds_differ() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_synthetic(dir.path().join("data"), &spec()).unwrap();
    let a = run(&manifest, config(StrategyKind::Random, 2));
    let mut c = config(StrategyKind::Random, 2);
    c.strategy.seed = 10;
    let b = run(&manifest, c);
    assert_ne!(a.rows[0].sampled_ids, b.rows[0].sampled_ids);
}
