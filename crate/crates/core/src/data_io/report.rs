//! Experiment reports.
//!
//! A report directory holds:
//!
//! - `report.csv`: one row per round, columns [`CSV_HEADER`];
//! - `report.json`: `{"dataset", "config", "rows"}` with the full config echo
//!   and the sampled ids of every round;
//! - `timings.json`: wall-clock milliseconds per round.
//!
//! Timings live in their own file so that the first two are a pure function
//! of (config, dataset) and can be compared byte for byte.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::ExperimentConfig;
use crate::sampling::StrategyKind;
use crate::{Error, Result};

pub const CSV_HEADER: &str = "round,labeled_count,labeled_fraction,dsc,cost_percent,strategy,seed";

const CSV_FILE: &str = "report.csv";
const JSON_FILE: &str = "report.json";
const TIMINGS_FILE: &str = "timings.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub sampled_ids: Vec<u64>,
    pub labeled_count: usize,
    pub labeled_fraction: f64,
    pub dsc: f64,
    pub cost_percent: f64,
    pub strategy: StrategyKind,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CsvRow {
    round: usize,
    labeled_count: usize,
    labeled_fraction: f64,
    dsc: f64,
    cost_percent: f64,
    strategy: StrategyKind,
    seed: u64,
}

impl From<&RoundRecord> for CsvRow {
    fn from(r: &RoundRecord) -> Self {
        CsvRow {
            round: r.round,
            labeled_count: r.labeled_count,
            labeled_fraction: r.labeled_fraction,
            dsc: r.dsc,
            cost_percent: r.cost_percent,
            strategy: r.strategy,
            seed: r.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    /// Manifest the experiment ran on, as given on the command line.
    pub dataset: String,
    pub config: ExperimentConfig,
    pub rows: Vec<RoundRecord>,
    #[serde(skip)]
    pub wall_clock_ms: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct Timings {
    wall_clock_ms: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidArgument(format!(
                "unknown report format {other:?} (expected csv or json)"
            ))),
        }
    }
}

impl ExperimentReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(CsvRow::from(row))?;
        }
        let body = w.into_inner().map_err(|e| Error::Report(e.to_string()))?;
        let body = String::from_utf8(body).map_err(|e| Error::Report(e.to_string()))?;
        Ok(format!("{CSV_HEADER}\n{body}"))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    fn check_rows(&self) -> Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            if row.round != i {
                return Err(Error::Report(format!(
                    "rows[{i}] has round {}, rows must be ordered from round 0",
                    row.round
                )));
            }
        }
        Ok(())
    }
}

/// Writes the requested formats (plus `timings.json`) into `dir`, creating it.
pub fn write_report(report: &ExperimentReport, dir: impl AsRef<Path>, formats: &[ReportFormat]) -> Result<()> {
    let dir = dir.as_ref();
    report.check_rows()?;
    fs::create_dir_all(dir).map_err(Error::at(dir))?;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(Error::at(path))
    };
    for format in formats {
        match format {
            ReportFormat::Csv => write(CSV_FILE, report.to_csv()?)?,
            ReportFormat::Json => write(JSON_FILE, report.to_json()?)?,
        }
    }
    let timings = Timings {
        wall_clock_ms: report.wall_clock_ms.clone(),
    };
    write(TIMINGS_FILE, serde_json::to_string(&timings)? + "\n")
}

/// Parses a report CSV back into rows; `sampled_ids` is not part of the CSV
/// and comes back empty.
pub fn read_report_csv(text: &str) -> Result<Vec<RoundRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(Error::Report(format!(
                "unexpected CSV header {:?}",
                other.unwrap_or("")
            )))
        }
    }
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize::<CsvRow>()
        .map(|row| {
            let row = row?;
            Ok(RoundRecord {
                round: row.round,
                sampled_ids: Vec::new(),
                labeled_count: row.labeled_count,
                labeled_fraction: row.labeled_fraction,
                dsc: row.dsc,
                cost_percent: row.cost_percent,
                strategy: row.strategy,
                seed: row.seed,
            })
        })
        .collect()
}

/// Loads `report.json` (and `timings.json` when present). If `report.csv`
/// exists it must agree with the JSON rows exactly.
pub fn read_report(dir: impl AsRef<Path>) -> Result<ExperimentReport> {
    let dir = dir.as_ref();
    let path = dir.join(JSON_FILE);
    let text = fs::read_to_string(&path).map_err(Error::at(&path))?;
    let mut report: ExperimentReport = serde_json::from_str(&text)
        .map_err(|e| Error::Report(format!("{}: {e}", path.display())))?;
    report.check_rows()?;
    let timings = dir.join(TIMINGS_FILE);
    if timings.exists() {
        let text = fs::read_to_string(&timings).map_err(Error::at(&timings))?;
        let t: Timings = serde_json::from_str(&text)
            .map_err(|e| Error::Report(format!("{}: {e}", timings.display())))?;
        report.wall_clock_ms = t.wall_clock_ms;
    }
    let csv_path = dir.join(CSV_FILE);
    if csv_path.exists() {
        let text = fs::read_to_string(&csv_path).map_err(Error::at(&csv_path))?;
        let rows = read_report_csv(&text)?;
        let expected: Vec<CsvRow> = report.rows.iter().map(CsvRow::from).collect();
        let got: Vec<CsvRow> = rows.iter().map(CsvRow::from).collect();
        if expected != got {
            return Err(Error::Report(format!(
                "{} disagrees with {}",
                csv_path.display(),
                path.display()
            )));
        }
    }
    Ok(report)
}
