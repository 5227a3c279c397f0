//! Verification metrics: FAR/FRR threshold sweeps, equal error rate and
//! ROC/DET/summary CSV emission.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Genuine and impostor trial scores; higher means more likely genuine.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
}

impl ScoreSet {
    pub fn new(genuine: Vec<f64>, impostor: Vec<f64>) -> Result<Self> {
        let s = Self { genuine, impostor };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.genuine.is_empty() || self.impostor.is_empty() {
            return Err(Error::EmptyScores);
        }
        if self.genuine.iter().chain(&self.impostor).any(|s| !s.is_finite()) {
            return Err(Error::InvalidThresholds("non-finite score".into()));
        }
        Ok(())
    }

    /// `-∞`, midpoints between consecutive distinct pooled scores, `+∞`.
    pub fn sweep_thresholds(&self) -> Vec<f64> {
        let mut pooled: Vec<f64> = self.genuine.iter().chain(&self.impostor).copied().collect();
        pooled.sort_by(f64::total_cmp);
        pooled.dedup();
        let mut t = Vec::with_capacity(pooled.len() + 1);
        t.push(f64::NEG_INFINITY);
        t.extend(pooled.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
        t.push(f64::INFINITY);
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    /// Percent of impostor scores `>= threshold`.
    pub far: f64,
    /// Percent of genuine scores `< threshold`.
    pub frr: f64,
}

/// FAR/FRR at each threshold (accept iff `score >= t`).
pub fn far_frr_curve(scores: &ScoreSet, thresholds: &[f64]) -> Result<Vec<CurvePoint>> {
    scores.validate()?;
    if thresholds.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidThresholds("thresholds must be sorted ascending".into()));
    }
    let mut genuine = scores.genuine.clone();
    let mut impostor = scores.impostor.clone();
    genuine.sort_by(f64::total_cmp);
    impostor.sort_by(f64::total_cmp);
    let (ng, ni) = (genuine.len() as f64, impostor.len() as f64);
    Ok(thresholds
        .iter()
        .map(|&t| {
            let rejected_genuine = genuine.partition_point(|&s| s < t);
            let rejected_impostor = impostor.partition_point(|&s| s < t);
            CurvePoint {
                threshold: t,
                far: 100.0 * (impostor.len() - rejected_impostor) as f64 / ni,
                frr: 100.0 * rejected_genuine as f64 / ng,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EerPoint {
    /// Percent.
    pub eer: f64,
    pub threshold: f64,
    /// False when FAR - FRR never changes sign along the curve; `eer` is then
    /// the mean of FAR and FRR at the closest approach.
    pub crossed: bool,
}

fn interpolate_threshold(a: f64, b: f64, w: f64) -> f64 {
    match (a.is_finite(), b.is_finite()) {
        (true, true) => a + w * (b - a),
        (true, false) => a,
        (false, true) => b,
        (false, false) => 0.0,
    }
}

/// Equal error rate by linear interpolation between the two curve points
/// bracketing `FAR = FRR`.
pub fn eer(curve: &[CurvePoint]) -> Result<EerPoint> {
    if curve.is_empty() {
        return Err(Error::EmptyScores);
    }
    let diff = |p: &CurvePoint| p.far - p.frr;
    if let Some(p) = curve.iter().find(|p| diff(p) == 0.0) {
        return Ok(EerPoint {
            eer: p.far,
            threshold: p.threshold,
            crossed: true,
        });
    }
    for w in curve.windows(2) {
        let (d0, d1) = (diff(&w[0]), diff(&w[1]));
        if (d0 > 0.0 && d1 < 0.0) || (d0 < 0.0 && d1 > 0.0) {
            let t = d0 / (d0 - d1);
            let far = w[0].far + t * (w[1].far - w[0].far);
            let frr = w[0].frr + t * (w[1].frr - w[0].frr);
            return Ok(EerPoint {
                eer: (far + frr) / 2.0,
                threshold: interpolate_threshold(w[0].threshold, w[1].threshold, t),
                crossed: true,
            });
        }
    }
    let closest = curve
        .iter()
        .min_by(|a, b| diff(a).abs().total_cmp(&diff(b).abs()))
        .expect("non-empty curve");
    Ok(EerPoint {
        eer: (closest.far + closest.frr) / 2.0,
        threshold: closest.threshold,
        crossed: false,
    })
}

/// Curve point used to report FAR and FRR alongside the EER: smallest
/// `|FAR - FRR|`, then closest mean error to the EER, then lowest threshold.
pub fn operating_point(curve: &[CurvePoint], eer_value: f64) -> Option<CurvePoint> {
    curve.iter().copied().min_by(|a, b| {
        let ka = ((a.far - a.frr).abs(), ((a.far + a.frr) / 2.0 - eer_value).abs());
        let kb = ((b.far - b.frr).abs(), ((b.far + b.frr) / 2.0 - eer_value).abs());
        ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Protocol {
    /// Frontal views only.
    #[serde(rename = "F")]
    Frontal,
    /// Frontal, left-rotated and right-rotated views.
    #[serde(rename = "F+L+R")]
    Multiview,
}

impl Protocol {
    pub fn as_str(&self) -> &'static str {
        match self {
            Protocol::Frontal => "F",
            Protocol::Multiview => "F+L+R",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "F" => Ok(Protocol::Frontal),
            "F+L+R" | "FLR" => Ok(Protocol::Multiview),
            other => Err(Error::Config(format!("unknown protocol {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub protocol: Protocol,
    pub frr_at_eer: f64,
    pub far_at_eer: f64,
    pub eer: f64,
    /// `100 - eer`.
    pub recognition_rate: f64,
    pub eer_threshold: f64,
    pub curve: Vec<CurvePoint>,
}

/// Sweep, EER and the reported operating point in one go.
pub fn evaluate(method: &str, protocol: Protocol, scores: &ScoreSet) -> Result<EvalReport> {
    let curve = far_frr_curve(scores, &scores.sweep_thresholds())?;
    let e = eer(&curve)?;
    let op = operating_point(&curve, e.eer).expect("non-empty curve");
    Ok(EvalReport {
        method: method.to_string(),
        protocol,
        frr_at_eer: op.frr,
        far_at_eer: op.far,
        eer: e.eer,
        recognition_rate: 100.0 - e.eer,
        eer_threshold: e.threshold,
        curve,
    })
}

/// Anything that can score a probe against a claimed identity.
pub trait Scorer {
    fn score(&self, probe: &[f64], claimed: &str) -> Result<f64>;
}

impl<F> Scorer for F
where
    F: Fn(&[f64], &str) -> Result<f64>,
{
    fn score(&self, probe: &[f64], claimed: &str) -> Result<f64> {
        self(probe, claimed)
    }
}

/// One genuine trial per probe (claim = true id) and one impostor trial per
/// other enrolled subject.
pub fn build_scores<S: Scorer + ?Sized>(
    scorer: &S,
    enrolled: &[String],
    probes: &[(String, Vec<f64>)],
) -> Result<ScoreSet> {
    let mut set = ScoreSet::default();
    for (truth, probe) in probes {
        if !enrolled.contains(truth) {
            return Err(Error::UnknownSubject(truth.clone()));
        }
        for claim in enrolled {
            let s = scorer.score(probe, claim)?;
            if claim == truth {
                set.genuine.push(s);
            } else {
                set.impostor.push(s);
            }
        }
    }
    Ok(set)
}

fn pct(v: f64) -> String {
    format!("{v:.4}")
}

/// File stem `<method>_<protocol>`.
pub fn report_stem(report: &EvalReport) -> String {
    format!("{}_{}", report.method, report.protocol)
}

/// Write `<stem>_roc.csv`, `<stem>_det.csv` and `<stem>_summary.csv`.
pub fn emit_report(report: &EvalReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let stem = report_stem(report);
    let roc = dir.join(format!("{stem}_roc.csv"));
    let det = dir.join(format!("{stem}_det.csv"));
    let summary = dir.join(format!("{stem}_summary.csv"));

    let mut w = csv::Writer::from_path(&roc)?;
    w.write_record(["far_percent", "tar_percent"])?;
    for p in &report.curve {
        w.write_record([pct(p.far), pct(100.0 - p.frr)])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(&det)?;
    w.write_record(["far_percent", "frr_percent"])?;
    for p in &report.curve {
        w.write_record([pct(p.far), pct(p.frr)])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(&summary)?;
    w.write_record(["method", "frr_percent", "far_percent", "recognition_rate_percent", "eer_percent"])?;
    w.write_record([
        format!("{} ({})", report.method, report.protocol),
        pct(report.frr_at_eer),
        pct(report.far_at_eer),
        pct(report.recognition_rate),
        pct(report.eer),
    ])?;
    w.flush()?;
    Ok(vec![roc, det, summary])
}
