//! Dataset discovery and the seeded train/test split.
//!
//! Layout: one directory per subject holding `.pgm` / `.png` images, plus
//! optional `views.csv` and `eyes.csv` at the root.
//!
//! `views.csv` has either the columns `image_id,view` (the id is the file
//! stem) or `subject_id,image_id,view`. Untagged images are frontal.
//! `eyes.csv` has `subject_id,image_id,lx,ly,rx,ry` (eye centres in pixels,
//! `l` being the eye with the smaller x).

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::Protocol;
use crate::preprocess::{EyeAnnotation, Point};

use super::config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum View {
    F,
    L,
    R,
}

impl View {
    pub fn as_str(&self) -> &'static str {
        match self {
            View::F => "F",
            View::L => "L",
            View::R => "R",
        }
    }

    pub fn for_protocol(protocol: Protocol) -> &'static [View] {
        match protocol {
            Protocol::Frontal => &[View::F],
            Protocol::Multiview => &[View::F, View::L, View::R],
        }
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for View {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "F" => Ok(View::F),
            "L" => Ok(View::L),
            "R" => Ok(View::R),
            other => Err(Error::Config(format!("unknown view tag {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageEntry {
    pub subject_id: String,
    /// File stem.
    pub image_id: String,
    pub path: PathBuf,
    pub view: View,
    pub eyes: Option<EyeAnnotation>,
}

impl ImageEntry {
    pub fn record_id(&self) -> String {
        format!("{}/{}", self.subject_id, self.image_id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    /// Sorted by subject id, then file name.
    pub images: Vec<ImageEntry>,
    pub has_view_tags: bool,
}

impl DatasetManifest {
    pub fn subjects(&self) -> Vec<String> {
        let mut s: Vec<String> = self.images.iter().map(|e| e.subject_id.clone()).collect();
        s.dedup();
        s
    }

    pub fn check_protocol(&self, protocol: Protocol) -> Result<()> {
        if protocol == Protocol::Multiview && !self.has_view_tags {
            return Err(Error::MissingViewTags(self.root.clone()));
        }
        Ok(())
    }
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("png"))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

#[derive(Default)]
struct ViewTags {
    by_subject: HashMap<(String, String), View>,
    by_stem: HashMap<String, View>,
}

impl ViewTags {
    fn get(&self, subject: &str, image: &str) -> Option<View> {
        self.by_subject
            .get(&(subject.to_string(), image.to_string()))
            .or_else(|| self.by_stem.get(image))
            .copied()
    }
}

fn read_views(path: &Path) -> Result<ViewTags> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (image_col, view_col) = match (col("image_id"), col("view")) {
        (Some(i), Some(v)) => (i, v),
        _ => {
            return Err(Error::Config(format!(
                "{}: expected columns image_id,view or subject_id,image_id,view",
                path.display()
            )))
        }
    };
    let subject_col = col("subject_id");
    let mut tags = ViewTags::default();
    for rec in rdr.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("").to_string();
        let view: View = field(view_col).parse()?;
        match subject_col {
            Some(s) => tags.by_subject.insert((field(s), field(image_col)), view),
            None => tags.by_stem.insert(field(image_col), view),
        };
    }
    Ok(tags)
}

#[derive(Deserialize)]
struct EyeRow {
    subject_id: String,
    image_id: String,
    #[serde(alias = "left_x")]
    lx: f64,
    #[serde(alias = "left_y")]
    ly: f64,
    #[serde(alias = "right_x")]
    rx: f64,
    #[serde(alias = "right_y")]
    ry: f64,
}

fn read_eyes(path: &Path) -> Result<HashMap<(String, String), EyeAnnotation>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut out = HashMap::new();
    for row in rdr.deserialize() {
        let row: EyeRow = row?;
        out.insert(
            (row.subject_id.clone(), row.image_id.clone()),
            EyeAnnotation {
                subject_id: row.subject_id,
                image_id: row.image_id,
                left_eye: Point::new(row.lx, row.ly),
                right_eye: Point::new(row.rx, row.ry),
            },
        );
    }
    Ok(out)
}

/// Walk `root` and build the manifest. Images are not decoded here.
pub fn ingest(root: &Path) -> Result<DatasetManifest> {
    if !root.is_dir() {
        return Err(Error::FileNotFound(root.to_path_buf()));
    }
    let views_path = root.join("views.csv");
    let has_view_tags = views_path.is_file();
    let views = if has_view_tags {
        read_views(&views_path)?
    } else {
        ViewTags::default()
    };
    let eyes_path = root.join("eyes.csv");
    let eyes = if eyes_path.is_file() {
        read_eyes(&eyes_path)?
    } else {
        HashMap::new()
    };

    let mut subject_dirs: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subject_dirs.sort();

    let mut images = Vec::new();
    for dir in subject_dirs {
        let subject_id = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && is_image(p))
            .collect();
        files.sort();
        for path in files {
            let image_id = stem(&path);
            let key = (subject_id.clone(), image_id.clone());
            images.push(ImageEntry {
                view: views.get(&subject_id, &image_id).unwrap_or(View::F),
                eyes: eyes.get(&key).cloned(),
                subject_id: subject_id.clone(),
                image_id,
                path,
            });
        }
    }
    if images.is_empty() {
        return Err(Error::EmptyDataset(root.to_path_buf()));
    }
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        images,
        has_view_tags,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<ImageEntry>,
    pub test: Vec<ImageEntry>,
}

// Independent stream per (seed, subject, view) so a stratum's shuffle does
// not depend on which other subjects are present.
fn stratum_rng(seed: u64, subject: &str, view: View) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(subject.as_bytes());
    h.update([0u8]);
    h.update(view.as_str().as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Number of training images for a stratum of `n`: `ceil(n · fraction)`,
/// kept within `[1, n - 1]`.
pub fn train_count(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).ceil() as usize).clamp(1, n.saturating_sub(1).max(1))
}

/// Per subject and per protocol view: take the first `count` images of that
/// view in file-name order, shuffle them with the seeded stream and cut.
pub fn split(manifest: &DatasetManifest, config: &ExperimentConfig) -> Result<Split> {
    manifest.check_protocol(config.protocol)?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for subject in manifest.subjects() {
        for &view in View::for_protocol(config.protocol) {
            let want = match view {
                View::F => config.frontal_count,
                View::L => config.left_count,
                View::R => config.right_count,
            };
            let mut stratum: Vec<&ImageEntry> = manifest
                .images
                .iter()
                .filter(|e| e.subject_id == subject && e.view == view)
                .take(want)
                .collect();
            if stratum.len() < 2 {
                return Err(Error::InsufficientImages {
                    subject: subject.clone(),
                    view: view.to_string(),
                    available: stratum.len(),
                    required: 2,
                });
            }
            let n_train = train_count(stratum.len(), config.train_fraction);
            stratum.shuffle(&mut stratum_rng(config.seed, &subject, view));
            let (tr, te) = stratum.split_at(n_train);
            train.extend(tr.iter().map(|&e| e.clone()));
            test.extend(te.iter().map(|&e| e.clone()));
        }
    }
    let order = |a: &ImageEntry, b: &ImageEntry| (&a.subject_id, &a.path).cmp(&(&b.subject_id, &b.path));
    train.sort_by(order);
    test.sort_by(order);
    Ok(Split { train, test })
}
