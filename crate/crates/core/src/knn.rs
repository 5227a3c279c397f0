//! Nearest-neighbor verification baselines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    Cosine,
}

/// `‖a - b‖₂` or `1 - a·b / (‖a‖‖b‖)`.
pub fn distance(metric: Metric, a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    match metric {
        Metric::Euclidean => Ok(a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()),
        Metric::Cosine => {
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                return Err(Error::ZeroVector);
            }
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            Ok(1.0 - dot / (na * nb))
        }
    }
}

/// Enrolled templates, kept in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gallery {
    templates: Vec<(String, Vec<f64>)>,
}

impl Gallery {
    pub fn new(templates: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let dim = templates.first().ok_or(Error::EmptyGallery)?.1.len();
        if let Some((_, t)) = templates.iter().find(|(_, t)| t.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: t.len(),
            });
        }
        Ok(Self { templates })
    }

    pub fn templates(&self) -> &[(String, Vec<f64>)] {
        &self.templates
    }

    pub fn dim(&self) -> usize {
        self.templates[0].1.len()
    }

    pub fn contains(&self, subject: &str) -> bool {
        self.templates.iter().any(|(s, _)| s == subject)
    }

    /// Distinct subject ids, sorted.
    pub fn subjects(&self) -> Vec<String> {
        let mut s: Vec<String> = self.templates.iter().map(|(s, _)| s.clone()).collect();
        s.sort();
        s.dedup();
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnScore {
    /// Negated distance to the claimed subject (higher = more genuine).
    pub score: f64,
    pub best_match: String,
}

/// Verification score of `probe` against `claimed_subject`.
///
/// With `k = 1` the score is minus the distance to the nearest template of
/// the claimed subject; larger `k` averages the `k` nearest of that subject's
/// templates. `best_match` is the overall nearest template's subject, ties
/// going to the lexicographically smaller id and then the earlier template.
pub fn nn_score(gallery: &Gallery, probe: &[f64], claimed_subject: &str, metric: Metric, k: usize) -> Result<NnScore> {
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    if !gallery.contains(claimed_subject) {
        return Err(Error::UnknownSubject(claimed_subject.to_string()));
    }
    let mut claimed = Vec::new();
    let mut best: Option<(f64, &str)> = None;
    for (subject, template) in gallery.templates() {
        let d = distance(metric, probe, template)?;
        if subject == claimed_subject {
            claimed.push(d);
        }
        let better = match best {
            None => true,
            Some((bd, bs)) => d < bd || (d == bd && subject.as_str() < bs),
        };
        if better {
            best = Some((d, subject));
        }
    }
    claimed.sort_by(f64::total_cmp);
    let take = k.min(claimed.len());
    let mean = claimed[..take].iter().sum::<f64>() / take as f64;
    Ok(NnScore {
        score: -mean,
        best_match: best.map(|(_, s)| s.to_string()).unwrap_or_default(),
    })
}
