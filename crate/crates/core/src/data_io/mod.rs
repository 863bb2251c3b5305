//! Dataset manifests, synthetic data and experiment reports.

mod manifest;
mod report;
mod synthetic;

pub use manifest::{
    load_manifest, save_manifest, AnnotationEntry, Category, Dataset, DatasetManifest,
    GroundTruth, ImageEntry, Split,
};
pub use report::{
    read_report, read_report_csv, write_report, ExperimentReport, ReportFormat, RoundRecord,
    CSV_HEADER,
};
pub use synthetic::{generate_synthetic, render_image, write_synthetic, SyntheticSpec, EASY, HARD};
