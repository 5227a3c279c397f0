use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image header: {0}")]
    CorruptHeader(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("degenerate eye annotation: eyes {distance:.3} px apart")]
    DegenerateEyes { distance: f64 },
    #[error("invalid eye annotation: {0}")]
    InvalidAnnotation(String),
    #[error("invalid crop parameters: {0}")]
    InvalidCropParams(String),
    #[error("invalid gabor kernel spec: {0}")]
    InvalidKernel(String),
    #[error("kernel {kernel_w}x{kernel_h} larger than image {image_w}x{image_h}")]
    KernelLargerThanImage {
        kernel_w: usize,
        kernel_h: usize,
        image_w: usize,
        image_h: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("class {0} has no samples")]
    EmptyClass(usize),
    #[error("at least two classes are required")]
    SingleClass,
    #[error("PCA rank {requested} exceeds the usable maximum {max}")]
    RankDeficient { requested: usize, max: usize },
    #[error("target dimension {requested} exceeds C - 1 = {max}")]
    TargetTooLarge { requested: usize, max: usize },
    #[error("linear algebra failure: {0}")]
    Numerical(String),
    #[error("invalid kernel parameters: {0}")]
    InvalidSvmKernel(String),
    #[error("SMO hit the iteration cap of {iterations} (best dual objective {dual_objective})")]
    NoConvergence {
        iterations: usize,
        dual_objective: f64,
    },
    #[error("operation requires a linear kernel")]
    NonLinearKernel,
    #[error("invalid training set: {0}")]
    InvalidTrainSet(String),
    #[error("cosine distance undefined for a zero vector")]
    ZeroVector,
    #[error("unknown subject: {0}")]
    UnknownSubject(String),
    #[error("empty gallery")]
    EmptyGallery,
    #[error("score set is empty")]
    EmptyScores,
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),
    #[error("dataset is empty: {0}")]
    EmptyDataset(PathBuf),
    #[error("protocol F+L+R requires views.csv under {0}")]
    MissingViewTags(PathBuf),
    #[error("subject {subject} has {available} usable images in view {view}, need at least {required}")]
    InsufficientImages {
        subject: String,
        view: String,
        available: usize,
        required: usize,
    },
    #[error("no eye annotation for {0}")]
    MissingAnnotation(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("model file version {found} does not match supported version {expected}")]
    VersionMismatch { found: u8, expected: u8 },
    #[error("corrupt model file: {0}")]
    CorruptFile(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable variant name used for machine-readable error reporting.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::FileNotFound(_) => "FileNotFound",
            Error::UnsupportedFormat(_) => "UnsupportedFormat",
            Error::CorruptHeader(_) => "CorruptHeader",
            Error::InvalidImage(_) => "InvalidImage",
            Error::DegenerateEyes { .. } => "DegenerateEyes",
            Error::InvalidAnnotation(_) => "InvalidAnnotation",
            Error::InvalidCropParams(_) => "InvalidCropParams",
            Error::InvalidKernel(_) => "InvalidKernel",
            Error::KernelLargerThanImage { .. } => "KernelLargerThanImage",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::EmptyClass(_) => "EmptyClass",
            Error::SingleClass => "SingleClass",
            Error::RankDeficient { .. } => "RankDeficient",
            Error::TargetTooLarge { .. } => "TargetTooLarge",
            Error::Numerical(_) => "Numerical",
            Error::InvalidSvmKernel(_) => "InvalidSvmKernel",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::NonLinearKernel => "NonLinearKernel",
            Error::InvalidTrainSet(_) => "InvalidTrainSet",
            Error::ZeroVector => "ZeroVector",
            Error::UnknownSubject(_) => "UnknownSubject",
            Error::EmptyGallery => "EmptyGallery",
            Error::EmptyScores => "EmptyScores",
            Error::InvalidThresholds(_) => "InvalidThresholds",
            Error::EmptyDataset(_) => "EmptyDataset",
            Error::MissingViewTags(_) => "MissingViewTags",
            Error::InsufficientImages { .. } => "InsufficientImages",
            Error::MissingAnnotation(_) => "MissingAnnotation",
            Error::Config(_) => "Config",
            Error::VersionMismatch { .. } => "VersionMismatch",
            Error::CorruptFile(_) => "CorruptFile",
            Error::Csv(_) => "Csv",
            Error::Json(_) => "Json",
            Error::Io(_) => "IoError",
        }
    }
}
