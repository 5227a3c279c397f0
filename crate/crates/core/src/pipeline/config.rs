//! Flat `key = value` experiment configuration.
//!
//! Blank lines and `#` comments are ignored. Every key has a default; unknown
//! keys are rejected.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::Protocol;
use crate::gabor::GaborBankConfig;
use crate::preprocess::CropParams;
use crate::subspace::FitParams;
use crate::svm::SvmParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "svm-rbf")]
    SvmRbf,
    #[serde(rename = "svm-linear")]
    SvmLinear,
    #[serde(rename = "nn-euclidean")]
    NnEuclidean,
    #[serde(rename = "nn-cosine")]
    NnCosine,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::SvmRbf,
        Method::SvmLinear,
        Method::NnEuclidean,
        Method::NnCosine,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::SvmRbf => "svm-rbf",
            Method::SvmLinear => "svm-linear",
            Method::NnEuclidean => "nn-euclidean",
            Method::NnCosine => "nn-cosine",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset_root: PathBuf,
    pub output_dir: PathBuf,
    pub protocol: Protocol,
    pub frontal_count: usize,
    pub left_count: usize,
    pub right_count: usize,
    /// Fraction of each subject/view stratum used for training, rounded up.
    pub train_fraction: f64,
    pub register: bool,
    pub equalize: bool,
    pub crop: CropParams,
    pub gabor: GaborBankConfig,
    pub rho: usize,
    pub subspace: FitParams,
    pub method: Method,
    pub svm: SvmParams,
    /// RBF width; `None` derives it from the training projections.
    pub svm_sigma: Option<f64>,
    /// Pick C and σ by 5-fold cross-validation on the training partition.
    pub svm_grid: bool,
    pub knn_k: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset_root: PathBuf::from("data"),
            output_dir: PathBuf::from("runs"),
            protocol: Protocol::Frontal,
            frontal_count: 6,
            left_count: 6,
            right_count: 6,
            train_fraction: 0.5,
            register: true,
            equalize: true,
            crop: CropParams::default(),
            gabor: GaborBankConfig::default(),
            rho: 4,
            subspace: FitParams::default(),
            method: Method::SvmRbf,
            svm: SvmParams::default(),
            svm_sigma: None,
            svm_grid: false,
            knn_k: 1,
            seed: 42,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

fn parse_auto<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value.eq_ignore_ascii_case("auto") {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn show_auto<T: fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "auto".to_string(), |v| v.to_string())
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        let mut cfg = Self::parse_str(&text)?;
        // relative dataset/output paths resolve against the config file
        if let Some(base) = path.parent() {
            if cfg.dataset_root.is_relative() {
                cfg.dataset_root = base.join(&cfg.dataset_root);
            }
            if cfg.output_dir.is_relative() {
                cfg.output_dir = base.join(&cfg.output_dir);
            }
        }
        Ok(cfg)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dataset_root" => self.dataset_root = PathBuf::from(value),
            "output_dir" => self.output_dir = PathBuf::from(value),
            "protocol" => self.protocol = value.parse()?,
            "frontal_count" => self.frontal_count = parse(key, value)?,
            "left_count" => self.left_count = parse(key, value)?,
            "right_count" => self.right_count = parse(key, value)?,
            "train_fraction" => self.train_fraction = parse(key, value)?,
            "register" => self.register = parse_bool(key, value)?,
            "equalize" => self.equalize = parse_bool(key, value)?,
            "crop_width" => self.crop.target_width = parse(key, value)?,
            "crop_height" => self.crop.target_height = parse(key, value)?,
            "inter_eye_distance" => self.crop.inter_eye_distance = parse(key, value)?,
            "eye_row" => self.crop.eye_row = parse(key, value)?,
            "gabor_frequencies" => self.gabor.frequencies = parse(key, value)?,
            "gabor_orientations" => self.gabor.orientations = parse(key, value)?,
            "gabor_sigma_scale" => self.gabor.sigma_scale = parse(key, value)?,
            "gabor_window_sigmas" => self.gabor.window_sigmas = parse(key, value)?,
            "literal_frequencies" => self.gabor.literal_frequencies = parse_bool(key, value)?,
            "rho" => self.rho = parse(key, value)?,
            "pca_rank" => self.subspace.r = parse_auto(key, value)?,
            "target_dim" => self.subspace.k = parse_auto(key, value)?,
            "ridge_eps" => self.subspace.eps = parse(key, value)?,
            "method" => self.method = value.parse()?,
            "svm_c" => self.svm.c = parse(key, value)?,
            "svm_sigma" => self.svm_sigma = parse_auto(key, value)?,
            "svm_tol" => self.svm.tol = parse(key, value)?,
            "svm_max_iter" => self.svm.max_iter = parse(key, value)?,
            "svm_grid" => self.svm_grid = parse_bool(key, value)?,
            "knn_k" => self.knn_k = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let views = match self.protocol {
            Protocol::Frontal => vec![("frontal_count", self.frontal_count)],
            Protocol::Multiview => vec![
                ("frontal_count", self.frontal_count),
                ("left_count", self.left_count),
                ("right_count", self.right_count),
            ],
        };
        for (key, count) in views {
            if count < 2 {
                return Err(Error::Config(format!("{key} must be >= 2 (one train, one test)")));
            }
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must lie in (0, 1)".into()));
        }
        if self.rho == 0 {
            return Err(Error::Config("rho must be >= 1".into()));
        }
        if self.knn_k == 0 {
            return Err(Error::Config("knn_k must be >= 1".into()));
        }
        if let Some(s) = self.svm_sigma {
            if !(s > 0.0) {
                return Err(Error::Config("svm_sigma must be > 0".into()));
            }
        }
        if !(self.svm.c > 0.0 && self.svm.tol > 0.0) {
            return Err(Error::Config("svm_c and svm_tol must be > 0".into()));
        }
        if !(self.subspace.eps >= 0.0) {
            return Err(Error::Config("ridge_eps must be >= 0".into()));
        }
        if self.gabor.frequencies == 0 || self.gabor.orientations == 0 {
            return Err(Error::Config("gabor bank must be non-empty".into()));
        }
        self.crop.validate()
    }

    /// Every key with its resolved value, sorted, one `key = value` per line.
    pub fn canonical(&self) -> String {
        let mut pairs = vec![
            ("dataset_root", self.dataset_root.display().to_string()),
            ("protocol", self.protocol.to_string()),
            ("frontal_count", self.frontal_count.to_string()),
            ("left_count", self.left_count.to_string()),
            ("right_count", self.right_count.to_string()),
            ("train_fraction", self.train_fraction.to_string()),
            ("register", self.register.to_string()),
            ("equalize", self.equalize.to_string()),
            ("crop_width", self.crop.target_width.to_string()),
            ("crop_height", self.crop.target_height.to_string()),
            ("inter_eye_distance", self.crop.inter_eye_distance.to_string()),
            ("eye_row", self.crop.eye_row.to_string()),
            ("gabor_frequencies", self.gabor.frequencies.to_string()),
            ("gabor_orientations", self.gabor.orientations.to_string()),
            ("gabor_sigma_scale", self.gabor.sigma_scale.to_string()),
            ("gabor_window_sigmas", self.gabor.window_sigmas.to_string()),
            ("literal_frequencies", self.gabor.literal_frequencies.to_string()),
            ("rho", self.rho.to_string()),
            ("pca_rank", show_auto(self.subspace.r)),
            ("target_dim", show_auto(self.subspace.k)),
            ("ridge_eps", self.subspace.eps.to_string()),
            ("method", self.method.to_string()),
            ("svm_c", self.svm.c.to_string()),
            ("svm_sigma", show_auto(self.svm_sigma)),
            ("svm_tol", self.svm.tol.to_string()),
            ("svm_max_iter", self.svm.max_iter.to_string()),
            ("svm_grid", self.svm_grid.to_string()),
            ("knn_k", self.knn_k.to_string()),
            ("seed", self.seed.to_string()),
        ];
        pairs.sort();
        pairs
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// First 16 hex digits of the SHA-256 of [`Self::canonical`].
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(format!("run-{}", self.hash()))
    }
}
