use serde::{Deserialize, Serialize};

use crate::bounds::{ap_lower, ap_upper};
use crate::error::{Error, Result};
use crate::loss::plain_score;
use crate::metrics::{average_precision_with_se, ranking_error_with_se, ScoreSet};
use crate::priors::ClassStats;

use super::data::Dataset;
use super::model::Model;
use super::train::EpochLoss;

/// Audit tolerance in units of the combined standard error.
pub const AUDIT_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class_id: u32,
    pub n_plus: u64,
    pub n_minus: u64,
    pub alpha: f64,
    pub ap: f64,
    pub ranking_error: f64,
    pub det_error: f64,
    pub ap_lower: f64,
    pub ap_upper: f64,
    /// `sqrt(se_ap^2 + se_R^2)`.
    pub std_error: f64,
    pub within_bounds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub per_class: Vec<ClassReport>,
    /// Classes without positives in the evaluated split.
    pub absent: Vec<u32>,
    pub mean_ap: f64,
    pub loss_curve: Vec<EpochLoss>,
}

impl TrainReport {
    pub fn loss_curve_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss\n");
        for e in &self.loss_curve {
            out.push_str(&format!("{},{}\n", e.epoch, e.mean_loss));
        }
        out
    }

    /// Unweighted mean AP over the given classes that are present.
    pub fn mean_ap_over(&self, classes: &[u32]) -> f64 {
        let aps: Vec<f64> = self.per_class.iter().filter(|c| classes.contains(&c.class_id)).map(|c| c.ap).collect();
        aps.iter().sum::<f64>() / aps.len() as f64
    }
}

/// Per-class scores of every sample, `scores[c][i]`.
fn score_matrix(model: &Model, data: &Dataset) -> Vec<Vec<f64>> {
    let k = model.num_classes();
    let mut scores = vec![Vec::with_capacity(data.len()); k];
    for i in 0..data.len() {
        for (c, f) in model.logits(data.row(i)).into_iter().enumerate() {
            scores[c].push(plain_score(f));
        }
    }
    scores
}

/// Scores every class one-vs-rest; negatives include background.
pub fn evaluate(model: &Model, data: &Dataset, stats: &[ClassStats], loss_curve: &[EpochLoss]) -> Result<TrainReport> {
    let k = data.num_classes();
    if model.num_classes() != k || model.input_dim() != data.dim() || stats.len() != k {
        return Err(Error::validation("model", "model, dataset and class statistics disagree on shape"));
    }
    let scores = score_matrix(model, data);
    let mut per_class = Vec::with_capacity(k);
    let mut absent = Vec::new();
    for (c, class_scores) in scores.into_iter().enumerate() {
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for (s, &label) in class_scores.into_iter().zip(data.labels()) {
            if label as usize == c {
                pos.push(s);
            } else {
                neg.push(s);
            }
        }
        if pos.is_empty() || neg.is_empty() {
            absent.push(c as u32);
            continue;
        }
        let set = ScoreSet::new(pos, neg)?;
        let alpha = stats[c].alpha();
        let ap = average_precision_with_se(&set, alpha)?;
        let r = ranking_error_with_se(&set)?;
        let lower = ap_lower(alpha, r.value)?;
        let upper = ap_upper(alpha, r.value)?;
        let std_error = ap.std_error.hypot(r.std_error);
        let tol = AUDIT_SIGMAS * std_error;
        per_class.push(ClassReport {
            class_id: c as u32,
            n_plus: stats[c].n_plus(),
            n_minus: stats[c].n_minus(),
            alpha,
            ap: ap.value,
            ranking_error: r.value,
            det_error: 1.0 - ap.value,
            ap_lower: lower,
            ap_upper: upper,
            std_error,
            within_bounds: lower - tol <= ap.value && ap.value <= upper + tol,
        });
    }
    let mean_ap = per_class.iter().map(|c| c.ap).sum::<f64>() / per_class.len().max(1) as f64;
    Ok(TrainReport {
        per_class,
        absent,
        mean_ap,
        loss_curve: loss_curve.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditFailure {
    pub class_id: u32,
    pub ap: f64,
    pub ranking_error: f64,
    pub ap_lower: f64,
    pub ap_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditResult {
    pub passed: bool,
    pub failures: Vec<AuditFailure>,
}

/// Checks every class's AP against the bounds at its measured ranking error.
pub fn bound_audit(report: &TrainReport) -> AuditResult {
    let failures: Vec<AuditFailure> = report
        .per_class
        .iter()
        .filter(|c| !c.within_bounds)
        .map(|c| AuditFailure {
            class_id: c.class_id,
            ap: c.ap,
            ranking_error: c.ranking_error,
            ap_lower: c.ap_lower,
            ap_upper: c.ap_upper,
        })
        .collect();
    AuditResult {
        passed: failures.is_empty(),
        failures,
    }
}
