use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;

use boxal_core::data_io::{
    read_report, read_report_csv, write_report, write_synthetic, Dataset, ExperimentReport,
    ReportFormat, SyntheticSpec,
};
use boxal_core::engine::{
    run_experiment, ExperimentConfig, OracleMode, PredictorConfig, SimulatedOracle,
    BOX_TO_MASK_TIME_PERCENT,
};
use boxal_core::predictors::{Predictor, SyntheticPredictor, SyntheticPredictorParams};
use boxal_core::sampling::{StrategyConfig, StrategyKind};
use boxal_core::uncertainty::{Aggregation, DEFAULT_IOU_THRESHOLD};
use boxal_core::Error;
use boxal_service::{api, conformance, predictor_api, server, HttpPredictor, Session, SessionOptions};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "boxal", version, about = "Box-supervised active learning for cell segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic cell dataset (manifest + PNGs).
    Generate(GenerateArgs),
    /// Run a full experiment with the simulated oracle.
    Run(RunArgs),
    /// Serve a queued-oracle experiment for human annotators.
    Serve(ServeArgs),
    /// Serve the builtin predictor over the /v1 protocol.
    ServePredictor(ServePredictorArgs),
    /// Validate a report directory and print it.
    Report(ReportArgs),
    /// Check a predictor server against the /v1 protocol.
    Conformance(ConformanceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct CellRange(usize, usize);

impl FromStr for CellRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s
            .split_once("..")
            .ok_or_else(|| format!("expected A..B, got {s:?}"))?;
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
        Ok(CellRange(parse(a)?, parse(b)?))
    }
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    /// Total images, split into train and test.
    #[arg(long)]
    images: usize,
    /// Test images out of `--images` [default: 2/7 of the total].
    #[arg(long)]
    test_images: Option<usize>,
    /// Cells per image, inclusive.
    #[arg(long, default_value = "3..8")]
    cells: CellRange,
    #[arg(long, default_value_t = 0.5)]
    hard_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Side length of the square images in pixels.
    #[arg(long, default_value_t = 96)]
    image_size: u32,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrategyArg {
    Random,
    McUncertainty,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AggregationArg {
    Mean,
    Max,
    Sum,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
        }
    }
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Path to manifest.json.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum, default_value = "mc-uncertainty")]
    strategy: StrategyArg,
    /// Rounds after the initial one.
    #[arg(long, default_value_t = 8)]
    rounds: usize,
    #[arg(long, default_value_t = 10)]
    sample_size: usize,
    /// Size of the round-0 random draw [default: --sample-size].
    #[arg(long)]
    initial_size: Option<usize>,
    /// Stochastic forward passes per image when scoring.
    #[arg(long, default_value_t = 8)]
    passes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    iou_threshold: f64,
    #[arg(long, value_enum, default_value = "mean")]
    aggregation: AggregationArg,
    /// Box annotation time as a percentage of mask annotation time.
    #[arg(long, default_value_t = BOX_TO_MASK_TIME_PERCENT)]
    box_mask_time_percent: f64,
    /// `builtin` or the base URL of a /v1 predictor server.
    #[arg(long, default_value = "builtin")]
    predictor: String,
    /// JSON file with builtin predictor parameters.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "csv,json")]
    format: Vec<FormatArg>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    #[arg(long, env = "BOXAL_PORT", default_value_t = 8080)]
    port: u16,
    /// Append-only state journal; replayed on restart.
    #[arg(long)]
    journal: Option<PathBuf>,
    /// Directory that receives the report after every round.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServePredictorArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    #[arg(long, env = "BOXAL_PORT", default_value_t = 8081)]
    port: u16,
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
}

#[derive(Debug, Args)]
struct ConformanceArgs {
    #[arg(long)]
    predictor_url: String,
    /// Manifest the predictor server was started with.
    #[arg(long)]
    dataset: PathBuf,
}

#[derive(Debug)]
struct Failure {
    kind: String,
    error: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            kind: e.kind().to_string(),
            error: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

fn failure(kind: &str, error: impl Into<String>) -> Failure {
    Failure {
        kind: kind.to_string(),
        error: error.into(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", json!({ "error": first, "kind": "usage" }));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Run(a) => run(a),
        Command::Serve(a) => serve(a),
        Command::ServePredictor(a) => serve_predictor(a),
        Command::Report(a) => report(a),
        Command::Conformance(a) => run_conformance(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", json!({ "error": f.error, "kind": f.kind }));
            ExitCode::FAILURE
        }
    }
}

fn generate(a: GenerateArgs) -> Result<(), Failure> {
    let test_images = a.test_images.unwrap_or(a.images * 2 / 7);
    if test_images >= a.images {
        return Err(failure(
            "invalid_argument",
            format!("--test-images {test_images} leaves no training images out of {}", a.images),
        ));
    }
    let spec = SyntheticSpec {
        train_images: a.images - test_images,
        test_images,
        min_cells: a.cells.0,
        max_cells: a.cells.1,
        hard_fraction: a.hard_fraction,
        image_size: a.image_size,
        seed: a.seed,
    };
    let path = write_synthetic(&a.out, &spec)?;
    println!("{}", path.display());
    Ok(())
}

fn load_params(path: Option<&Path>) -> Result<SyntheticPredictorParams, Failure> {
    let Some(path) = path else {
        return Ok(SyntheticPredictorParams::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| failure("io", format!("{}: {e}", path.display())))?;
    let params: SyntheticPredictorParams = serde_json::from_str(&text)
        .map_err(|e| failure("invalid_argument", format!("{}: {e}", path.display())))?;
    params.validate()?;
    Ok(params)
}

/// Builds the config and predictor an experiment command asks for.
fn experiment_setup(
    a: &ExperimentArgs,
    oracle: OracleMode,
) -> Result<(ExperimentConfig, Arc<Dataset>, Box<dyn Predictor>), Failure> {
    let dataset = Arc::new(Dataset::open(&a.dataset)?);
    let (predictor_config, predictor): (PredictorConfig, Box<dyn Predictor>) =
        if a.predictor == "builtin" {
            let params = load_params(a.params.as_deref())?;
            let p = SyntheticPredictor::new(dataset.clone(), params.clone())?;
            (PredictorConfig::Builtin { params }, Box::new(p))
        } else if a.predictor.starts_with("http://") || a.predictor.starts_with("https://") {
            if a.params.is_some() {
                return Err(failure(
                    "invalid_argument",
                    "--params only applies to the builtin predictor",
                ));
            }
            let p = HttpPredictor::new(&a.predictor);
            p.health()?;
            let url = p.base_url().to_string();
            (PredictorConfig::External { url }, Box::new(p))
        } else {
            return Err(failure(
                "invalid_argument",
                format!("--predictor must be `builtin` or an http(s) URL, got {:?}", a.predictor),
            ));
        };
    let config = ExperimentConfig {
        strategy: StrategyConfig {
            kind: match a.strategy {
                StrategyArg::Random => StrategyKind::Random,
                StrategyArg::McUncertainty => StrategyKind::McUncertainty,
            },
            sample_size: a.sample_size,
            seed: a.seed,
        },
        rounds: a.rounds,
        initial_size: a.initial_size.unwrap_or(a.sample_size),
        passes: a.passes,
        iou_threshold: a.iou_threshold,
        aggregation: match a.aggregation {
            AggregationArg::Mean => Aggregation::Mean,
            AggregationArg::Max => Aggregation::Max,
            AggregationArg::Sum => Aggregation::Sum,
        },
        box_to_mask_time_percent: a.box_mask_time_percent,
        oracle,
        predictor: predictor_config,
    };
    config.validate(dataset.train_ids().len())?;
    Ok((config, dataset, predictor))
}

fn run(a: RunArgs) -> Result<(), Failure> {
    let (config, dataset, predictor) = experiment_setup(&a.experiment, OracleMode::Simulated)?;
    let formats: Vec<ReportFormat> = a.format.iter().map(|&f| f.into()).collect();
    let label = a.experiment.dataset.display().to_string();
    let mut oracle = SimulatedOracle::new(dataset.clone());
    match run_experiment(config, dataset, &label, predictor, &mut oracle) {
        Ok(report) => {
            write_report(&report, &a.out, &formats)?;
            let last = report.rows.last();
            println!(
                "{}",
                json!({
                    "out": a.out.display().to_string(),
                    "rounds": report.rows.len(),
                    "labeled_count": last.map(|r| r.labeled_count),
                    "dsc": last.map(|r| r.dsc),
                    "cost_percent": last.map(|r| r.cost_percent),
                })
            );
            Ok(())
        }
        Err(aborted) => {
            if !aborted.report.rows.is_empty() {
                write_report(&aborted.report, &a.out, &formats)?;
            }
            Err(aborted.error.into())
        }
    }
}

fn serve(a: ServeArgs) -> Result<(), Failure> {
    let (config, dataset, predictor) = experiment_setup(&a.experiment, OracleMode::Queued)?;
    let session = Session::open(SessionOptions {
        config,
        dataset,
        dataset_label: a.experiment.dataset.display().to_string(),
        predictor,
        journal: a.journal,
        out: a.out,
    })?;
    let router = api::router(Arc::new(session));
    server::run(router, SocketAddr::new(a.host, a.port), |addr| {
        eprintln!("serving experiment on http://{addr}");
    })?;
    Ok(())
}

fn serve_predictor(a: ServePredictorArgs) -> Result<(), Failure> {
    let dataset = Arc::new(Dataset::open(&a.dataset)?);
    let params = load_params(a.params.as_deref())?;
    let predictor = SyntheticPredictor::new(dataset, params)?;
    let router = predictor_api::router(Box::new(predictor));
    server::run(router, SocketAddr::new(a.host, a.port), |addr| {
        eprintln!("serving predictor on http://{addr}");
    })?;
    Ok(())
}

fn report(a: ReportArgs) -> Result<(), Failure> {
    let json_path = a.input.join("report.json");
    let text = if json_path.exists() {
        let report = read_report(&a.input)?;
        match a.format {
            FormatArg::Csv => report.to_csv()?,
            FormatArg::Json => report.to_json()?,
        }
    } else {
        let csv_path = a.input.join("report.csv");
        let FormatArg::Csv = a.format else {
            return Err(failure("report", format!("{} is missing", json_path.display())));
        };
        let csv = std::fs::read_to_string(&csv_path)
            .map_err(|e| failure("io", format!("{}: {e}", csv_path.display())))?;
        let rows = read_report_csv(&csv)?;
        let report = ExperimentReport {
            dataset: String::new(),
            config: ExperimentConfig::default(),
            rows,
            wall_clock_ms: Vec::new(),
        };
        report.to_csv()?
    };
    print!("{text}");
    Ok(())
}

fn run_conformance(a: ConformanceArgs) -> Result<(), Failure> {
    let dataset = Dataset::open(&a.dataset)?;
    let checks = conformance::run(&a.predictor_url, &dataset);
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed()).count();
    if failed > 0 {
        return Err(failure(
            "conformance",
            format!("{failed} of {} checks failed", checks.len()),
        ));
    }
    Ok(())
}
