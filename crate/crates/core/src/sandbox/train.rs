use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{slope_m, SlopeMode};
use crate::error::{Error, Result};
use crate::loss::{ecm_loss, focal_ecm_loss, FocalParams, Label, LossEval};
use crate::margins::{optimal_margins, weights, MarginWeights};
use crate::priors::{all_stats, background_count, ClassCounts, ClassStats};

use super::data::Dataset;
use super::model::{Model, ModelKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Bce,
    Ecm,
    FocalEcm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: LossKind,
    /// Per-class loss scale; `unit` leaves it at one.
    pub m_mode: SlopeMode,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub model: ModelKind,
    pub temperature_head: bool,
    pub temperature: f64,
    pub focal: FocalParams,
    /// Mini-batches inspected when measuring the background ratio.
    pub background_probe_batches: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossKind::Ecm,
            m_mode: SlopeMode::Unit,
            epochs: 30,
            learning_rate: 0.1,
            batch_size: 256,
            model: ModelKind::Linear,
            temperature_head: false,
            temperature: 20.0,
            focal: FocalParams::default(),
            background_probe_batches: 10,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::validation("learning_rate", "must be nonnegative and finite"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size", "must be positive"));
        }
        if let ModelKind::Mlp { hidden: 0 } = self.model {
            return Err(Error::validation("model", "hidden layer needs at least one unit"));
        }
        if self.temperature_head && !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::validation("temperature", "must be positive"));
        }
        if self.background_probe_batches == 0 {
            return Err(Error::validation("background_probe_batches", "must be positive"));
        }
        FocalParams::new(self.focal.gamma, self.focal.alpha)?;
        Ok(())
    }
}

/// Background-to-foreground ratio over the first mini-batches of a seeded shuffle.
pub fn measure_background_ratio(data: &Dataset, batch_size: usize, batches: usize, seed: u64) -> Result<f64> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let bg_label = data.background_label();
    let (mut bg, mut fg) = (0usize, 0usize);
    for &i in order.iter().take(batch_size.saturating_mul(batches)) {
        if data.labels()[i] == bg_label {
            bg += 1;
        } else {
            fg += 1;
        }
    }
    if fg == 0 {
        return Err(Error::validation("dataset", "probe batches contain no foreground samples"));
    }
    Ok(bg as f64 / fg as f64)
}

/// Per-class surrogate weights and loss scales used by the trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossPlan {
    pub kind: LossKind,
    pub weights: Vec<MarginWeights>,
    pub scales: Vec<f64>,
    pub focal: FocalParams,
}

impl LossPlan {
    /// BCE uses unit weights and scale; the ECM variants take margins and slopes from `stats`.
    pub fn from_stats(stats: &[ClassStats], config: &TrainConfig) -> Result<Self> {
        let (weights, scales) = match config.loss {
            LossKind::Bce => (vec![MarginWeights::unit(); stats.len()], vec![1.0; stats.len()]),
            LossKind::Ecm | LossKind::FocalEcm => {
                let w = stats.iter().map(|s| weights(&optimal_margins(s))).collect();
                let m = stats.iter().map(|s| slope_m(s.alpha(), config.m_mode)).collect::<Result<_>>()?;
                (w, m)
            }
        };
        Ok(LossPlan {
            kind: config.loss,
            weights,
            scales,
            focal: config.focal,
        })
    }

    fn eval(&self, class: usize, logit: f64, label: Label) -> Result<LossEval> {
        let w = &self.weights[class];
        let m = self.scales[class];
        match self.kind {
            LossKind::Bce | LossKind::Ecm => ecm_loss(logit, label, w, m),
            LossKind::FocalEcm => focal_ecm_loss(logit, label, w, m, self.focal),
        }
    }
}

/// Class statistics with background inflated by the measured batch ratio.
pub fn dataset_stats(data: &Dataset, background_ratio: f64) -> Result<Vec<ClassStats>> {
    let counts = ClassCounts::from_counts(&data.class_counts());
    let bg = background_count(&counts, background_ratio)?;
    Ok(all_stats(&counts, bg)?.into_iter().map(|(_, s)| s).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub mean_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub loss_curve: Vec<EpochLoss>,
    /// Parameters at the end of every epoch.
    pub checkpoints: Vec<Model>,
}

/// Mini-batch gradient descent on the summed per-class binary losses.
///
/// The loss curve records, per epoch, the mean over samples of each sample's
/// loss at the parameters in force when its batch was processed.
pub fn train(data: &Dataset, config: &TrainConfig, plan: &LossPlan) -> Result<TrainOutcome> {
    config.validate()?;
    let k = data.num_classes();
    if plan.weights.len() != k || plan.scales.len() != k {
        return Err(Error::validation("margins", format!("expected {k} classes, plan covers {}", plan.weights.len())));
    }
    if data.is_empty() {
        return Err(Error::validation("dataset", "no samples to train on"));
    }
    let temperature = config.temperature_head.then_some(config.temperature);
    let mut model = Model::new(data.dim(), k, config.model, temperature, config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut loss_curve = Vec::with_capacity(config.epochs);
    let mut checkpoints = Vec::with_capacity(config.epochs);
    let mut dlogits = vec![0.0; k];

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grads = model.zero_gradients();
            for &i in batch {
                let x = data.row(i);
                let label = data.labels()[i] as usize;
                let act = model.forward(x);
                for (c, (grad, &logit)) in dlogits.iter_mut().zip(&act.logits).enumerate() {
                    let side = if label == c { Label::Positive } else { Label::Negative };
                    let eval = plan.eval(c, logit, side).map_err(|_| diverged(epoch))?;
                    epoch_loss += eval.value;
                    *grad = eval.grad_logit;
                }
                model.backward(x, &act, &dlogits, &mut grads);
            }
            model.apply(&grads, config.learning_rate / batch.len() as f64);
        }
        let mean_loss = epoch_loss / data.len() as f64;
        if !mean_loss.is_finite() || !model.parameters_finite() {
            return Err(diverged(epoch));
        }
        loss_curve.push(EpochLoss { epoch, mean_loss });
        checkpoints.push(model.clone());
    }
    Ok(TrainOutcome {
        model,
        loss_curve,
        checkpoints,
    })
}

fn diverged(epoch: usize) -> Error {
    Error::numerical(format!("training diverged at epoch {epoch}: non-finite loss or parameters"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sandbox::data::{generate, SyntheticConfig};

    fn small() -> Dataset {
        generate(&SyntheticConfig { total_samples: 800, num_classes: 4, seed: 3, ..Default::default() }).unwrap()
    }

    fn plan_for(data: &Dataset, config: &TrainConfig) -> LossPlan {
        let ratio = measure_background_ratio(data, config.batch_size, config.background_probe_batches, config.seed).unwrap();
        LossPlan::from_stats(&dataset_stats(data, ratio).unwrap(), config).unwrap()
    }

    #[test]
    fn zero_learning_rate_keeps_init() {
        let data = small();
        let config = TrainConfig { learning_rate: 0.0, epochs: 3, ..Default::default() };
        let out = train(&data, &config, &plan_for(&data, &config)).unwrap();
        let init = Model::new(data.dim(), 4, config.model, None, config.seed);
        assert_eq!(out.model, init);
        assert_eq!(out.checkpoints.len(), 3);
    }

    #[test]
    fn unit_weight_ecm_matches_bce() {
        let data = small();
        let bce = TrainConfig { loss: LossKind::Bce, epochs: 4, ..Default::default() };
        let ecm = TrainConfig { loss: LossKind::Ecm, ..bce.clone() };
        let mut plan = plan_for(&data, &ecm);
        plan.weights = vec![MarginWeights::new(2.0, 2.0).unwrap(); 4];
        plan.scales = vec![1.0; 4];
        let a = train(&data, &bce, &plan_for(&data, &bce)).unwrap();
        let b = train(&data, &ecm, &plan).unwrap();
        assert_eq!(a.loss_curve, b.loss_curve);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn plan_must_cover_classes() {
        let data = small();
        let config = TrainConfig::default();
        let mut plan = plan_for(&data, &config);
        plan.weights.pop();
        assert!(train(&data, &config, &plan).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let data = small();
        let config = TrainConfig { learning_rate: 1e308, epochs: 5, ..Default::default() };
        let err = train(&data, &config, &plan_for(&data, &config)).unwrap_err();
        assert!(err.to_string().contains("diverged at epoch"), "{err}");
    }

    #[test]
    fn background_ratio_probe() {
        let data = generate(&SyntheticConfig { background_fraction: 0.75, ..Default::default() }).unwrap();
        let r = measure_background_ratio(&data, 256, 20, 1).unwrap();
        assert!((r - 3.0).abs() / 3.0 < 0.05, "{r}");
    }
}
