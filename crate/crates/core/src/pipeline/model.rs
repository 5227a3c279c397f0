//! Trained verifier and its on-disk bundle.
//!
//! Bundle layout: `FPMB`, one version byte, a length-prefixed JSON header,
//! the projection block, the classifier blocks, then a SHA-256 of everything
//! before it.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::Protocol;
use crate::knn::{nn_score, Gallery, Metric};
use crate::subspace::{read_f64s, read_json_header, write_f64s, write_json_header, CanonicalProjection};
use crate::svm::SvmModel;

use super::config::Method;

pub const BUNDLE_MAGIC: &[u8; 4] = b"FPMB";
pub const BUNDLE_VERSION: u8 = 1;
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    /// One genuine-vs-rest machine per subject, sorted by subject id.
    Svm(Vec<(String, SvmModel)>),
    Nn { gallery: Gallery, metric: Metric, k: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub method: Method,
    pub protocol: Protocol,
    pub projection: CanonicalProjection,
    pub classifier: Classifier,
}

impl TrainedModel {
    /// Enrolled subject ids, sorted.
    pub fn subjects(&self) -> Vec<String> {
        match &self.classifier {
            Classifier::Svm(models) => models.iter().map(|(s, _)| s.clone()).collect(),
            Classifier::Nn { gallery, .. } => gallery.subjects(),
        }
    }

    /// Score an already projected probe against `claimed`.
    pub fn score_projected(&self, probe: &[f64], claimed: &str) -> Result<f64> {
        match &self.classifier {
            Classifier::Svm(models) => {
                let idx = models
                    .binary_search_by(|(s, _)| s.as_str().cmp(claimed))
                    .map_err(|_| Error::UnknownSubject(claimed.to_string()))?;
                models[idx].1.decision_value(probe)
            }
            Classifier::Nn { gallery, metric, k } => Ok(nn_score(gallery, probe, claimed, *metric, *k)?.score),
        }
    }

    /// Project raw features, then score.
    pub fn score(&self, features: &[f64], claimed: &str) -> Result<f64> {
        self.score_projected(&self.projection.project(features)?, claimed)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        buf.extend_from_slice(BUNDLE_MAGIC);
        buf.push(BUNDLE_VERSION);
        let header = match &self.classifier {
            Classifier::Svm(models) => BundleHeader {
                method: self.method,
                protocol: self.protocol.to_string(),
                subjects: models.iter().map(|(s, _)| s.clone()).collect(),
                nn: None,
            },
            Classifier::Nn { gallery, metric, k } => BundleHeader {
                method: self.method,
                protocol: self.protocol.to_string(),
                subjects: gallery.templates().iter().map(|(s, _)| s.clone()).collect(),
                nn: Some(NnHeader {
                    metric: *metric,
                    k: *k,
                    dim: gallery.dim(),
                }),
            },
        };
        write_json_header(&mut buf, &header)?;
        self.projection.write_to(&mut buf)?;
        match &self.classifier {
            Classifier::Svm(models) => {
                for (_, m) in models {
                    m.write_to(&mut buf)?;
                }
            }
            Classifier::Nn { gallery, .. } => {
                for (_, t) in gallery.templates() {
                    write_f64s(&mut buf, t)?;
                }
            }
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < BUNDLE_MAGIC.len() + 1 + CHECKSUM_LEN || &bytes[..4] != BUNDLE_MAGIC {
            return Err(Error::CorruptFile("not a model bundle".into()));
        }
        if bytes[4] != BUNDLE_VERSION {
            return Err(Error::VersionMismatch {
                found: bytes[4],
                expected: BUNDLE_VERSION,
            });
        }
        let (body, checksum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
        if Sha256::digest(body).as_slice() != checksum {
            return Err(Error::CorruptFile("checksum mismatch".into()));
        }
        let mut r = Cursor::new(&body[5..]);
        let parsed = Self::read_body(&mut r).map_err(|e| match e {
            Error::Io(io) => Error::CorruptFile(format!("truncated bundle: {io}")),
            other => other,
        })?;
        if (r.position() as usize) != body.len() - 5 {
            return Err(Error::CorruptFile("trailing bytes in bundle".into()));
        }
        Ok(parsed)
    }

    fn read_body<R: Read>(r: &mut R) -> Result<Self> {
        let h: BundleHeader = read_json_header(r)?;
        let protocol: Protocol = h.protocol.parse()?;
        let projection = CanonicalProjection::read_from(r)?;
        let classifier = match h.nn {
            None => {
                let mut models = Vec::with_capacity(h.subjects.len());
                for s in h.subjects {
                    models.push((s, SvmModel::read_from(r)?));
                }
                Classifier::Svm(models)
            }
            Some(nn) => {
                let mut templates = Vec::with_capacity(h.subjects.len());
                for s in h.subjects {
                    templates.push((s, read_f64s(r, nn.dim)?));
                }
                Classifier::Nn {
                    gallery: Gallery::new(templates)?,
                    metric: nn.metric,
                    k: nn.k,
                }
            }
        };
        Ok(Self {
            method: h.method,
            protocol,
            projection,
            classifier,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct BundleHeader {
    method: Method,
    protocol: String,
    /// Per machine for SVMs, per template for galleries.
    subjects: Vec<String>,
    nn: Option<NnHeader>,
}

#[derive(Serialize, Deserialize)]
struct NnHeader {
    metric: Metric,
    k: usize,
    dim: usize,
}

/// Write via a sibling temp file and rename, so a failed save leaves nothing.
pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    let bytes = model.to_bytes()?;
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    TrainedModel::from_bytes(&bytes)
}
