use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Background samples are spread this many times wider than class samples.
pub const BACKGROUND_SPREAD: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub num_classes: usize,
    pub total_samples: usize,
    pub zipf_exponent: f64,
    pub feature_dim: usize,
    pub class_separation: f64,
    pub noise_sigma: f64,
    pub background_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_classes: 20,
            total_samples: 20_000,
            zipf_exponent: 1.5,
            feature_dim: 16,
            class_separation: 2.0,
            noise_sigma: 1.0,
            background_fraction: 0.5,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::validation("num_classes", "need at least 2 classes"));
        }
        if self.feature_dim < 2 {
            return Err(Error::validation("feature_dim", "need at least 2 dimensions"));
        }
        if !(self.zipf_exponent.is_finite() && self.zipf_exponent >= 0.0) {
            return Err(Error::validation("zipf_exponent", "must be nonnegative"));
        }
        if !(self.class_separation.is_finite() && self.class_separation > 0.0) {
            return Err(Error::validation("class_separation", "must be positive"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma > 0.0) {
            return Err(Error::validation("noise_sigma", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.background_fraction) {
            return Err(Error::validation("background_fraction", "must lie in [0, 1)"));
        }
        let foreground = self.foreground_samples();
        if self.num_classes > foreground {
            return Err(Error::validation(
                "num_classes",
                format!("{} classes cannot share {foreground} foreground samples", self.num_classes),
            ));
        }
        Ok(())
    }

    pub fn foreground_samples(&self) -> usize {
        (self.total_samples as f64 * (1.0 - self.background_fraction)).round() as usize
    }

    /// Per-class counts from `p_c ~ c^-zipf` by largest-remainder rounding.
    pub fn class_counts(&self) -> Vec<usize> {
        largest_remainder(&zipf_weights(self.num_classes, self.zipf_exponent), self.foreground_samples())
    }
}

fn zipf_weights(k: usize, exponent: f64) -> Vec<f64> {
    (1..=k).map(|c| (c as f64).powf(-exponent)).collect()
}

/// Splits `total` proportionally to `weights`; leftover units go to the largest remainders.
pub fn largest_remainder(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // Ties go to the lower class index.
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Row-major features with one label per row; label `num_classes` marks background.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<u32>,
    dim: usize,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<u32>, dim: usize, num_classes: usize) -> Result<Self> {
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(Error::validation("features", "shape does not match labels and dimension"));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize > num_classes) {
            return Err(Error::validation("labels", format!("label {bad} exceeds background label {num_classes}")));
        }
        Ok(Dataset {
            features,
            labels,
            dim,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn background_label(&self) -> u32 {
        self.num_classes as u32
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Foreground instance count per class.
    pub fn class_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.num_classes];
        for &l in &self.labels {
            if (l as usize) < self.num_classes {
                counts[l as usize] += 1;
            }
        }
        counts
    }

    pub fn background_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == self.background_label()).count()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            features,
            labels,
            dim: self.dim,
            num_classes: self.num_classes,
        }
    }

    /// Stratified split; roughly `fraction` of every label goes to the second part.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::validation("holdout_fraction", "must lie in [0, 1)"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut train = Vec::new();
        let mut held = Vec::new();
        for label in 0..=self.num_classes as u32 {
            let mut idx: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == label).collect();
            idx.shuffle(&mut rng);
            let cut = (idx.len() as f64 * fraction).round() as usize;
            held.extend_from_slice(&idx[..cut]);
            train.extend_from_slice(&idx[cut..]);
        }
        train.sort_unstable();
        held.sort_unstable();
        Ok((self.subset(&train), self.subset(&held)))
    }
}

/// Draws class means at distance `class_separation` from the origin along distinct random directions.
fn class_means(config: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..config.num_classes)
        .map(|_| {
            let dir: Vec<f64> = (0..config.feature_dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            dir.iter().map(|v| v / norm * config.class_separation).collect()
        })
        .collect()
}

/// Generates the dataset, shuffled, deterministically from `config.seed`.
pub fn generate(config: &SyntheticConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let means = class_means(config, &mut rng);
    let counts = config.class_counts();
    let background = config.total_samples - config.foreground_samples();
    let d = config.feature_dim;

    let mut rows: Vec<(u32, Vec<f64>)> = Vec::with_capacity(config.total_samples);
    for (c, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            let x = means[c]
                .iter()
                .map(|m| m + config.noise_sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            rows.push((c as u32, x));
        }
    }
    let spread = BACKGROUND_SPREAD * config.noise_sigma;
    for _ in 0..background {
        let x = (0..d).map(|_| spread * rng.sample::<f64, _>(StandardNormal)).collect();
        rows.push((config.num_classes as u32, x));
    }
    rows.shuffle(&mut rng);

    let mut features = Vec::with_capacity(rows.len() * d);
    let mut labels = Vec::with_capacity(rows.len());
    for (label, x) in rows {
        labels.push(label);
        features.extend(x);
    }
    Dataset::new(features, labels, d, config.num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn largest_remainder_example() {
        let cfg = SyntheticConfig {
            num_classes: 3,
            total_samples: 600,
            zipf_exponent: 1.0,
            background_fraction: 0.0,
            ..Default::default()
        };
        // Quotas 327.27, 163.64, 109.09: the spare unit goes to the .64 remainder.
        assert_eq!(cfg.class_counts(), vec![327, 164, 109]);
    }

    #[test]
    fn uniform_prior_counts() {
        let cfg = SyntheticConfig {
            num_classes: 7,
            total_samples: 100,
            zipf_exponent: 0.0,
            background_fraction: 0.0,
            ..Default::default()
        };
        let counts = cfg.class_counts();
        assert_eq!(counts.iter().sum::<usize>(), 100);
        assert!(counts.iter().all(|&c| c == 14 || c == 15));
    }

    #[test]
    fn default_counts_sum() {
        let cfg = SyntheticConfig::default();
        let counts = cfg.class_counts();
        assert_eq!(counts.iter().sum::<usize>(), 10_000);
        assert!(counts.windows(2).all(|w| w[0] >= w[1]));
        assert!(*counts.last().unwrap() > 0);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SyntheticConfig { total_samples: 500, num_classes: 4, seed: 11, ..Default::default() };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a, b);
        let c = generate(&SyntheticConfig { seed: 12, ..cfg.clone() }).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.background_count(), 250);
        assert_eq!(a.class_counts().iter().sum::<u64>(), 250);
    }

    #[test]
    fn too_many_classes() {
        let cfg = SyntheticConfig { total_samples: 10, num_classes: 8, ..Default::default() };
        assert!(matches!(generate(&cfg), Err(Error::Validation { field: "num_classes", .. })));
    }

    #[test]
    fn stratified_split() {
        let cfg = SyntheticConfig { total_samples: 1000, num_classes: 3, seed: 2, ..Default::default() };
        let data = generate(&cfg).unwrap();
        let (train, held) = data.split(0.2, 5).unwrap();
        assert_eq!(train.len() + held.len(), 1000);
        assert_eq!(held.background_count(), 100);
    }
}
