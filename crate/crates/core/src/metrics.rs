use std::fmt::Write as _;

use hoitg_meshkit::{mesh::dist2, Point};
use hoitg_scenegen::{contact_map_gt, CONTACT_THRESHOLD};
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

/// Header line stating the Chamfer variant.
pub const CHAMFER_NOTE: &str = "Chamfer: symmetric vertex-to-vertex, mean of both directed nearest-neighbor means, halved, in cm";

fn directed_mean(a: &[Point], b: &[Point]) -> f64 {
    let sum: f64 = a
        .iter()
        .map(|p| b.iter().map(|q| dist2(p, q)).fold(f64::INFINITY, f64::min).sqrt())
        .sum();
    sum / a.len() as f64
}

/// Symmetric Chamfer distance in centimeters for clouds given in meters.
pub fn chamfer(a: &[Point], b: &[Point]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(ModelError::Parameter("chamfer needs two non-empty clouds".into()));
    }
    Ok(50.0 * (directed_mean(a, b) + directed_mean(b, a)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn f1_score(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Precision and recall of a predicted contact map against `gt`.
///
/// With no predicted positives, precision is 1 when the ground truth has none
/// either and 0 otherwise. With no ground-truth positives recall is 1.
pub fn contact_scores(pred: &[bool], gt: &[bool]) -> Result<ContactScore> {
    if pred.len() != gt.len() {
        return Err(ModelError::Parameter(format!("contact maps of length {} and {}", pred.len(), gt.len())));
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(gt) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let precision = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else if fn_ == 0 {
        1.0
    } else {
        0.0
    };
    let recall = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 1.0 };
    Ok(ContactScore {
        precision,
        recall,
        f1: f1_score(precision, recall),
    })
}

/// Contact map of the predicted meshes at `threshold`, scored against `gt`.
pub fn contact_pr(human: &[Point], object: &[Point], gt: &[bool], threshold: f64) -> Result<ContactScore> {
    if human.len() != gt.len() {
        return Err(ModelError::Parameter(format!(
            "{} human vertices for a contact map of length {}",
            human.len(),
            gt.len()
        )));
    }
    contact_scores(&contact_map_gt(human, object, threshold), gt)
}

pub fn contact_pr_default(human: &[Point], object: &[Point], gt: &[bool]) -> Result<ContactScore> {
    contact_pr(human, object, gt, CONTACT_THRESHOLD)
}

// ── reports ──────────────────────────────────────────────────────────

/// Metrics of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub cd_human: f64,
    pub cd_object: f64,
    pub contact: ContactScore,
}

pub fn sample_metrics(
    human: &[Point],
    object: &[Point],
    gt_human: &[Point],
    gt_object: &[Point],
    gt_contact: &[bool],
) -> Result<SampleMetrics> {
    Ok(SampleMetrics {
        cd_human: chamfer(human, gt_human)?,
        cd_object: chamfer(object, gt_object)?,
        contact: contact_pr_default(human, object, gt_contact)?,
    })
}

/// Dataset-level means of per-sample metrics. `f1` is recomputed from the mean
/// precision and recall.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub cd_human: f64,
    pub cd_object: f64,
    pub contact_precision: f64,
    pub contact_recall: f64,
    pub f1: f64,
    pub samples: usize,
}

impl MetricsReport {
    pub fn aggregate(samples: &[SampleMetrics]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self::default();
        }
        let mean = |f: &dyn Fn(&SampleMetrics) -> f64| samples.iter().map(f).sum::<f64>() / n as f64;
        let p = mean(&|s| s.contact.precision);
        let r = mean(&|s| s.contact.recall);
        Self {
            cd_human: mean(&|s| s.cd_human),
            cd_object: mean(&|s| s.cd_object),
            contact_precision: p,
            contact_recall: r,
            f1: f1_score(p, r),
            samples: n,
        }
    }
}

/// Aligned plain-text table of named reports.
pub fn format_table(rows: &[(String, MetricsReport)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(8);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>12}  {:>13}  {:>9}  {:>9}  {:>7}  {:>7}",
        "run", "CD_human(cm)", "CD_object(cm)", "contact_p", "contact_r", "f1", "samples"
    );
    for (name, r) in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>12.3}  {:>13.3}  {:>9.3}  {:>9.3}  {:>7.3}  {:>7}",
            name, r.cd_human, r.cd_object, r.contact_precision, r.contact_recall, r.f1, r.samples
        );
    }
    out
}
