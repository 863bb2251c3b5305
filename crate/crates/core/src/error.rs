use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid bounding box [{x1}, {y1}, {x2}, {y2}]: {reason}")]
    InvalidBox {
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
        reason: &'static str,
    },

    #[error("incompatible mask grids: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(u32, u32, u32, u32),

    #[error("invalid run-length encoding: {0}")]
    InvalidRle(String),

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("duplicate pass index {0}")]
    DuplicatePass(usize),

    #[error("score vector is all zeros and cannot be normalized")]
    ZeroScores,

    #[error("cannot draw {requested} ids from a pool of {available}")]
    SampleTooLarge { requested: usize, available: usize },

    #[error("unknown model tag {0:?}")]
    UnknownTag(String),

    #[error("unknown image id {0}")]
    UnknownImage(u64),

    #[error("missing ground truth for test image {0}")]
    MissingGroundTruth(u64),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("report: {0}")]
    Report(String),

    #[error("predictor unavailable: {0}")]
    PredictorUnavailable(String),

    #[error("predictor protocol violation: {0}")]
    Protocol(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("experiment is finished")]
    Finished,

    #[error("{path}: {source}")]
    Path {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("image encoding: {0}")]
    Image(String),
}

impl Error {
    pub(crate) fn at(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Path { path, source }
    }

    /// Short, stable identifier for the error class (used in CLI output).
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidBox { .. } => "invalid_box",
            Error::ShapeMismatch(..) => "shape_mismatch",
            Error::InvalidRle(_) => "invalid_rle",
            Error::Empty(_) => "empty_input",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::DuplicatePass(_) => "duplicate_pass",
            Error::ZeroScores => "zero_scores",
            Error::SampleTooLarge { .. } => "sample_too_large",
            Error::UnknownTag(_) => "unknown_tag",
            Error::UnknownImage(_) => "unknown_image",
            Error::MissingGroundTruth(_) => "missing_ground_truth",
            Error::Manifest(_) => "manifest",
            Error::Report(_) => "report",
            Error::PredictorUnavailable(_) => "predictor_unavailable",
            Error::Protocol(_) => "protocol",
            Error::Invariant(_) => "invariant",
            Error::Finished => "finished",
            Error::Path { .. } | Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
            Error::Image(_) => "image",
        }
    }
}
