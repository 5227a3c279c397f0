//! End-to-end experiment: ingest, split, preprocess, extract, reduce, train,
//! score and report.

pub mod config;
pub mod dataset;
pub mod model;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{build_scores, emit_report, evaluate, EvalReport};
use crate::gabor::{default_bank, write_feature_dump, FeatureDumpHeader, FeatureExtractor, FeatureVector, FEATURE_LAYOUT};
use crate::knn::{Gallery, Metric};
use crate::preprocess::{geometric_normalize, histogram_equalize, load_image, save_image, Image};
use crate::subspace::{fit, LabeledDataset};
use crate::svm::{default_rbf_sigma, grid_search, train, KernelSpec, TrainSet};

pub use config::{ExperimentConfig, Method};
pub use dataset::{ingest, split, DatasetManifest, ImageEntry, Split, View};
pub use model::{load_model, save_model, Classifier, TrainedModel};

/// `(subject id, feature vector)` pairs.
pub type Labeled = Vec<(String, Vec<f64>)>;

pub const MODEL_FILE: &str = "model.fpm";
pub const CONFIG_FILE: &str = "config.txt";
pub const SPLIT_FILE: &str = "split.csv";

/// Load one image and apply registration / equalization as configured.
pub fn preprocess_entry(entry: &ImageEntry, config: &ExperimentConfig) -> Result<Image> {
    let img = load_image(&entry.path)?;
    let img = if config.register {
        let eyes = entry
            .eyes
            .as_ref()
            .ok_or_else(|| Error::MissingAnnotation(entry.record_id()))?;
        geometric_normalize(&img, eyes, &config.crop)?
    } else {
        img
    };
    Ok(if config.equalize { histogram_equalize(&img) } else { img })
}

/// Preprocess in parallel, keeping input order. All outputs must share one
/// size.
pub fn preprocess_entries(entries: &[ImageEntry], config: &ExperimentConfig) -> Result<Vec<Image>> {
    let images: Vec<Image> = entries
        .par_iter()
        .map(|e| preprocess_entry(e, config))
        .collect::<Result<_>>()?;
    if let Some(first) = images.first() {
        if let Some((e, img)) = entries
            .iter()
            .zip(&images)
            .find(|(_, i)| (i.width(), i.height()) != (first.width(), first.height()))
        {
            return Err(Error::InvalidImage(format!(
                "{} is {}x{}, expected {}x{} (enable registration or resize the dataset)",
                e.record_id(),
                img.width(),
                img.height(),
                first.width(),
                first.height()
            )));
        }
    }
    Ok(images)
}

pub fn extract_images(images: &[Image], config: &ExperimentConfig) -> Result<Vec<FeatureVector>> {
    let Some(first) = images.first() else {
        return Ok(Vec::new());
    };
    let bank = default_bank(&config.gabor)?;
    let extractor = FeatureExtractor::new(bank, config.rho, first.width(), first.height())?;
    images.par_iter().map(|img| extractor.extract(img)).collect()
}

/// Preprocess and extract, labelled by subject.
pub fn features_for(entries: &[ImageEntry], config: &ExperimentConfig) -> Result<Labeled> {
    let images = preprocess_entries(entries, config)?;
    let feats = extract_images(&images, config)?;
    Ok(entries
        .iter()
        .zip(feats)
        .map(|(e, f)| (e.subject_id.clone(), f.values))
        .collect())
}

fn sorted_subjects(samples: &[(String, Vec<f64>)]) -> Vec<String> {
    let mut s: Vec<String> = samples.iter().map(|(s, _)| s.clone()).collect();
    s.sort();
    s.dedup();
    s
}

const GRID_CS: [f64; 4] = [0.1, 1.0, 10.0, 100.0];
const GRID_SIGMA_FACTORS: [f64; 3] = [0.5, 1.0, 2.0];
const GRID_FOLDS: usize = 5;

/// Fit the projection on `train` and train the configured verifier.
pub fn train_on_features(train_set: &[(String, Vec<f64>)], config: &ExperimentConfig) -> Result<TrainedModel> {
    let subjects = sorted_subjects(train_set);
    let labels: Vec<usize> = train_set
        .iter()
        .map(|(s, _)| subjects.binary_search(s).expect("subject listed"))
        .collect();
    let data = LabeledDataset::from_labeled(train_set.iter().map(|(_, x)| x.clone()).collect(), &labels)?;
    let projection = fit(&data, &config.subspace)?;
    let projected: Vec<Vec<f64>> = train_set
        .iter()
        .map(|(_, x)| projection.project(x))
        .collect::<Result<_>>()?;

    let classifier = match config.method {
        Method::NnEuclidean | Method::NnCosine => Classifier::Nn {
            gallery: Gallery::new(
                train_set
                    .iter()
                    .zip(&projected)
                    .map(|((s, _), y)| (s.clone(), y.clone()))
                    .collect(),
            )?,
            metric: if config.method == Method::NnCosine {
                Metric::Cosine
            } else {
                Metric::Euclidean
            },
            k: config.knn_k,
        },
        Method::SvmRbf | Method::SvmLinear => {
            let kernel = if config.method == Method::SvmLinear {
                KernelSpec::Linear
            } else {
                KernelSpec::Rbf {
                    sigma: config.svm_sigma.unwrap_or_else(|| default_rbf_sigma(&projected)),
                }
            };
            let models = subjects
                .par_iter()
                .enumerate()
                .map(|(ci, subject)| {
                    let y: Vec<f64> = labels.iter().map(|&l| if l == ci { 1.0 } else { -1.0 }).collect();
                    let ts = TrainSet::new(projected.clone(), y)?;
                    let (kernel, params) = if config.svm_grid {
                        let kernels: Vec<KernelSpec> = match kernel {
                            KernelSpec::Rbf { sigma } => GRID_SIGMA_FACTORS
                                .iter()
                                .map(|f| KernelSpec::Rbf { sigma: sigma * f })
                                .collect(),
                            other => vec![other],
                        };
                        let choice = grid_search(&ts, &kernels, &GRID_CS, GRID_FOLDS, &config.svm, config.seed)?;
                        (choice.kernel, crate::svm::SvmParams { c: choice.c, ..config.svm })
                    } else {
                        (kernel, config.svm)
                    };
                    Ok((subject.clone(), train(&ts, &kernel, &params)?))
                })
                .collect::<Result<Vec<_>>>()?;
            Classifier::Svm(models)
        }
    };
    Ok(TrainedModel {
        method: config.method,
        protocol: config.protocol,
        projection,
        classifier,
    })
}

/// Every test probe claims every enrolled subject once.
pub fn evaluate_model(model: &TrainedModel, test_set: &[(String, Vec<f64>)]) -> Result<EvalReport> {
    let probes: Labeled = test_set
        .iter()
        .map(|(s, x)| Ok((s.clone(), model.projection.project(x)?)))
        .collect::<Result<_>>()?;
    let scorer = |p: &[f64], claimed: &str| model.score_projected(p, claimed);
    let scores = build_scores(&scorer, &model.subjects(), &probes)?;
    evaluate(model.method.as_str(), model.protocol, &scores)
}

/// Shared tail of the image route: fit on `train`, report on `test`.
pub fn run_on_features(
    train_set: &[(String, Vec<f64>)],
    test_set: &[(String, Vec<f64>)],
    config: &ExperimentConfig,
) -> Result<(TrainedModel, EvalReport)> {
    let model = train_on_features(train_set, config)?;
    let report = evaluate_model(&model, test_set)?;
    Ok((model, report))
}

pub fn load_split(config: &ExperimentConfig) -> Result<Split> {
    config.validate()?;
    let manifest = ingest(&config.dataset_root)?;
    split(&manifest, config)
}

fn write_split_csv(split: &Split, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["subject_id", "image_id", "view", "partition"])?;
    for (part, entries) in [("train", &split.train), ("test", &split.test)] {
        for e in entries {
            w.write_record([e.subject_id.as_str(), e.image_id.as_str(), e.view.as_str(), part])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Outcome of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub run_dir: PathBuf,
    pub report: EvalReport,
}

/// Full run. Outputs land in `output_dir/run-<config hash>`; they are built
/// in a scratch directory and renamed into place only on success.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    let split = load_split(config)?;
    let run_dir = config.run_dir();
    fs::create_dir_all(&config.output_dir)?;
    let scratch = config
        .output_dir
        .join(format!(".run-{}.partial-{}", config.hash(), std::process::id()));
    if scratch.exists() {
        fs::remove_dir_all(&scratch)?;
    }
    fs::create_dir_all(&scratch)?;
    let result = (|| -> Result<EvalReport> {
        fs::write(scratch.join(CONFIG_FILE), config.canonical())?;
        write_split_csv(&split, &scratch.join(SPLIT_FILE))?;
        let train_set = features_for(&split.train, config)?;
        let test_set = features_for(&split.test, config)?;
        let (model, report) = run_on_features(&train_set, &test_set, config)?;
        save_model(&model, &scratch.join(MODEL_FILE))?;
        emit_report(&report, &scratch)?;
        Ok(report)
    })();
    match result {
        Ok(report) => {
            if run_dir.exists() {
                fs::remove_dir_all(&run_dir)?;
            }
            fs::rename(&scratch, &run_dir)?;
            Ok(RunOutput { run_dir, report })
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&scratch);
            Err(e)
        }
    }
}

/// Write every selected image after preprocessing to
/// `<run dir>/preprocessed/<subject>/<image>.pgm`.
pub fn preprocess_stage(config: &ExperimentConfig) -> Result<PathBuf> {
    let split = load_split(config)?;
    let entries: Vec<ImageEntry> = split.train.into_iter().chain(split.test).collect();
    let images = preprocess_entries(&entries, config)?;
    let out = config.run_dir().join("preprocessed");
    let scratch = config.run_dir().join(".preprocessed.partial");
    if scratch.exists() {
        fs::remove_dir_all(&scratch)?;
    }
    let result = entries.iter().zip(&images).try_for_each(|(e, img)| {
        let dir = scratch.join(&e.subject_id);
        fs::create_dir_all(&dir)?;
        save_image(img, &dir.join(format!("{}.pgm", e.image_id)))
    });
    finish_dir(result, &scratch, &out)?;
    Ok(out)
}

/// Write `features.bin` / `features.json` for train then test images.
pub fn extract_stage(config: &ExperimentConfig) -> Result<PathBuf> {
    let split = load_split(config)?;
    let entries: Vec<(ImageEntry, &str)> = split
        .train
        .into_iter()
        .map(|e| (e, "train"))
        .chain(split.test.into_iter().map(|e| (e, "test")))
        .collect();
    let plain: Vec<ImageEntry> = entries.iter().map(|(e, _)| e.clone()).collect();
    let images = preprocess_entries(&plain, config)?;
    let feats = extract_images(&images, config)?;
    let (w, h) = images.first().map_or((0, 0), |i| (i.width(), i.height()));
    let header = FeatureDumpHeader {
        dim: feats.first().map_or(0, FeatureVector::dim),
        count: feats.len(),
        layout: FEATURE_LAYOUT.to_string(),
        rho: config.rho,
        image_width: w,
        image_height: h,
        bank: config.gabor,
        records: entries
            .iter()
            .map(|(e, part)| format!("{}/{}/{}", e.record_id(), e.view, part))
            .collect(),
    };
    let dir = config.run_dir();
    fs::create_dir_all(&dir)?;
    let bin = dir.join("features.bin");
    let json = dir.join("features.json");
    let (bin_tmp, json_tmp) = (dir.join("features.bin.partial"), dir.join("features.json.partial"));
    match write_feature_dump(&bin_tmp, &json_tmp, &header, &feats) {
        Ok(()) => {
            fs::rename(&bin_tmp, &bin)?;
            fs::rename(&json_tmp, &json)?;
            Ok(bin)
        }
        Err(e) => {
            let _ = fs::remove_file(&bin_tmp);
            let _ = fs::remove_file(&json_tmp);
            Err(e)
        }
    }
}

/// Train on the training partition and save the bundle.
pub fn train_stage(config: &ExperimentConfig) -> Result<PathBuf> {
    let split = load_split(config)?;
    let train_set = features_for(&split.train, config)?;
    let model = train_on_features(&train_set, config)?;
    let dir = config.run_dir();
    fs::create_dir_all(&dir)?;
    fs::write(dir.join(CONFIG_FILE), config.canonical())?;
    let path = dir.join(MODEL_FILE);
    save_model(&model, &path)?;
    Ok(path)
}

/// Score the test partition with a saved bundle and write the reports.
pub fn evaluate_stage(config: &ExperimentConfig, model_path: Option<&Path>) -> Result<EvalReport> {
    let dir = config.run_dir();
    let path = model_path.map_or_else(|| dir.join(MODEL_FILE), Path::to_path_buf);
    let model = load_model(&path)?;
    let split = load_split(config)?;
    let test_set = features_for(&split.test, config)?;
    let report = evaluate_model(&model, &test_set)?;
    emit_report(&report, &dir)?;
    Ok(report)
}

fn finish_dir(result: Result<()>, scratch: &Path, out: &Path) -> Result<()> {
    match result {
        Ok(()) => {
            if out.exists() {
                fs::remove_dir_all(out)?;
            }
            if scratch.exists() {
                fs::rename(scratch, out)?;
            } else {
                fs::create_dir_all(out)?;
            }
            Ok(())
        }
        Err(e) => {
            let _ = fs::remove_dir_all(scratch);
            Err(e)
        }
    }
}
