//! Synthetic long-tail training sandbox.
//!
//! Generates Zipf-distributed Gaussian classes plus background, trains
//! per-class binary heads with BCE or ECM, and audits each class's AP against
//! the ranking-error bounds.

mod data;
mod evaluate;
mod model;
mod train;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::priors::ClassStats;

pub use data::{generate, largest_remainder, Dataset, SyntheticConfig, BACKGROUND_SPREAD};
pub use evaluate::{bound_audit, evaluate, AuditFailure, AuditResult, ClassReport, TrainReport, AUDIT_SIGMAS};
pub use model::{Activations, Gradients, Model, ModelKind};
pub use train::{
    dataset_stats, measure_background_ratio, train, EpochLoss, LossKind, LossPlan, TrainConfig, TrainOutcome,
};

/// A full sandbox run: data, training recipe, and evaluation split.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub synthetic: SyntheticConfig,
    pub train: TrainConfig,
    /// Fraction held out for evaluation; zero evaluates on the training set.
    pub holdout_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointAudit {
    pub epoch: usize,
    pub mean_ap: f64,
    pub audit: AuditResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub background_ratio: f64,
    pub report: TrainReport,
    pub audit: AuditResult,
    pub checkpoints: Vec<CheckpointAudit>,
}

/// Indices of the bottom third of classes by training count, rounded up.
pub fn rare_tercile(stats: &[ClassStats]) -> Vec<u32> {
    let mut order: Vec<usize> = (0..stats.len()).collect();
    order.sort_by_key(|&c| (stats[c].n_plus(), std::cmp::Reverse(c)));
    order.truncate(stats.len().div_ceil(3));
    let mut ids: Vec<u32> = order.into_iter().map(|c| c as u32).collect();
    ids.sort_unstable();
    ids
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let data = generate(&config.synthetic)?;
    let (train_set, eval_set) = if config.holdout_fraction > 0.0 {
        data.split(config.holdout_fraction, config.synthetic.seed ^ 0x5eed)?
    } else {
        (data.clone(), data)
    };
    let tcfg = &config.train;
    let ratio = measure_background_ratio(&train_set, tcfg.batch_size, tcfg.background_probe_batches, tcfg.seed)?;
    let stats = dataset_stats(&train_set, ratio)?;
    let plan = LossPlan::from_stats(&stats, tcfg)?;
    let outcome = train(&train_set, tcfg, &plan)?;

    let checkpoints = outcome
        .checkpoints
        .par_iter()
        .enumerate()
        .map(|(epoch, model)| {
            let report = evaluate(model, &eval_set, &stats, &[])?;
            Ok(CheckpointAudit {
                epoch,
                mean_ap: report.mean_ap,
                audit: bound_audit(&report),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = evaluate(&outcome.model, &eval_set, &stats, &outcome.loss_curve)?;
    let audit = bound_audit(&report);
    Ok(ExperimentResult {
        config: config.clone(),
        background_ratio: ratio,
        report,
        audit,
        checkpoints,
    })
}

impl ExperimentResult {
    pub fn rare_mean_ap(&self) -> Result<f64> {
        let stats: Vec<ClassStats> = self
            .report
            .per_class
            .iter()
            .map(|c| ClassStats::new(c.n_plus, c.n_minus))
            .collect::<Result<_>>()?;
        if stats.len() != self.config.synthetic.num_classes {
            return Err(Error::validation("report", "some classes are absent from the evaluation split"));
        }
        Ok(self.report.mean_ap_over(&rare_tercile(&stats)))
    }
}
