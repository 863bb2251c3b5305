//! Compares random and uncertainty sampling on synthetic datasets.
//!
//! ```text
//! cargo run --release -p boxal-core --example strategy_curves -- \
//!     [--seeds N] [--sample N] [--rounds N] [--size PX] [--cells A..B] [--aggregation mean|max|sum]
//!     [--kappa-easy K] [--verbose]
//! ```
//!
//! For each seed it prints whether the uncertainty curve stays at or above
//! the random curve from round 2 on, and the labeled count at which each
//! strategy first reaches a DSC of 0.80.

use std::sync::Arc;
use std::time::Instant;

use boxal_core::data_io::{generate_synthetic, Dataset, SyntheticSpec, EASY, HARD};
use boxal_core::engine::{run_experiment, ExperimentConfig, RoundRecord, SimulatedOracle};
use boxal_core::predictors::{SyntheticPredictor, SyntheticPredictorParams};
use boxal_core::sampling::{StrategyConfig, StrategyKind};
use boxal_core::uncertainty::Aggregation;

struct Args {
    seeds: u64,
    sample: usize,
    rounds: usize,
    size: u32,
    cells: (usize, usize),
    verbose: bool,
    aggregation: Aggregation,
    kappa_easy: f64,
}

fn parse() -> Args {
    let mut a = Args {
        seeds: 5,
        sample: 10,
        rounds: 19,
        size: 96,
        cells: (3, 8),
        verbose: false,
        aggregation: Aggregation::Mean,
        kappa_easy: 25.0,
    };
    let mut it = std::env::args().skip(1);
    while let Some(flag) = it.next() {
        let mut val = || it.next().expect("missing value");
        match flag.as_str() {
            "--seeds" => a.seeds = val().parse().unwrap(),
            "--sample" => a.sample = val().parse().unwrap(),
            "--rounds" => a.rounds = val().parse().unwrap(),
            "--size" => a.size = val().parse().unwrap(),
            "--cells" => {
                let v = val();
                let (lo, hi) = v.split_once("..").expect("A..B");
                a.cells = (lo.parse().unwrap(), hi.parse().unwrap());
            }
            "--verbose" => a.verbose = true,
            "--kappa-easy" => a.kappa_easy = val().parse().unwrap(),
            "--aggregation" => {
                a.aggregation = serde_json::from_value(serde_json::Value::String(val())).unwrap()
            }
            other => panic!("unknown flag {other}"),
        }
    }
    a
}

fn first_reaching(rows: &[RoundRecord], dsc: f64) -> Option<usize> {
    rows.iter().find(|r| r.dsc >= dsc).map(|r| r.labeled_count)
}

fn main() {
    let args = parse();
    let start = Instant::now();
    let mut dominating = 0;
    let mut reach = [0.0, 0.0];
    for seed in 0..args.seeds {
        let spec = SyntheticSpec {
            seed,
            image_size: args.size,
            min_cells: args.cells.0,
            max_cells: args.cells.1,
            ..Default::default()
        };
        let ds = Arc::new(Dataset::from_manifest(generate_synthetic(&spec).unwrap(), "").unwrap());
        let mut curves = Vec::new();
        for kind in [StrategyKind::Random, StrategyKind::McUncertainty] {
            let config = ExperimentConfig {
                strategy: StrategyConfig {
                    kind,
                    sample_size: args.sample,
                    seed,
                },
                rounds: args.rounds,
                initial_size: args.sample,
                aggregation: args.aggregation,
                ..Default::default()
            };
            let mut params = SyntheticPredictorParams::default();
            params.kappa.insert(EASY.into(), args.kappa_easy);
            let predictor = SyntheticPredictor::new(ds.clone(), params).unwrap();
            let mut oracle = SimulatedOracle::new(ds.clone());
            let report = run_experiment(config, ds.clone(), "synthetic", predictor, &mut oracle)
                .unwrap_or_else(|a| panic!("{}", a.error));
            curves.push(report.rows);
        }
        let (random, mc) = (&curves[0], &curves[1]);
        let dominates = random.iter().zip(mc).skip(2).all(|(r, m)| m.dsc >= r.dsc);
        dominating += dominates as usize;
        let (ra, ma) = (first_reaching(random, 0.8), first_reaching(mc, 0.8));
        reach[0] += ra.unwrap_or(usize::MAX) as f64;
        reach[1] += ma.unwrap_or(usize::MAX) as f64;
        println!("seed {seed}: dominates {dominates}  reach 0.80 random {ra:?} mc {ma:?}");
        if args.verbose {
            for (r, m) in random.iter().zip(mc) {
                let hard = m
                    .sampled_ids
                    .iter()
                    .filter(|&&id| ds.image(id).unwrap().stratum.as_deref() == Some(HARD))
                    .count();
                println!(
                    "  round {:2} labeled {:3}  random {:.4}  mc {:.4} (hard picks {hard:2}) {}",
                    r.round,
                    r.labeled_count,
                    r.dsc,
                    m.dsc,
                    if m.dsc >= r.dsc { "" } else { "<" }
                );
            }
        }
    }
    let n = args.seeds as f64;
    println!(
        "dominating seeds {dominating}/{}  mean labeled to 0.80: random {:.1} mc {:.1}  ({:.1?})",
        args.seeds,
        reach[0] / n,
        reach[1] / n,
        start.elapsed()
    );
}
