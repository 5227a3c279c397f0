//! Multiview face verification: Gabor filter-bank features, canonical
//! covariate reduction, SVM / nearest-neighbor scoring and FAR/FRR/EER
//! evaluation.

pub mod error;
pub mod eval;
pub mod gabor;
pub mod knn;
pub mod pipeline;
pub mod preprocess;
pub mod subspace;
pub mod svm;
pub mod synthetic;

pub use error::{Error, Result};
pub use eval::{EvalReport, Protocol, ScoreSet};
pub use gabor::{FeatureExtractor, FeatureVector, GaborBank, GaborBankConfig, GaborKernelSpec, Kernel2d};
pub use knn::{Gallery, Metric};
pub use pipeline::{ExperimentConfig, Method, TrainedModel, View};
pub use preprocess::{CropParams, EyeAnnotation, Image, Point};
pub use subspace::{CanonicalProjection, FitParams, LabeledDataset};
pub use svm::{KernelSpec, SvmModel, SvmParams, TrainSet};
