//! The ECM surrogate score and loss, its focal-weighted variant, and the
//! plain binary cross-entropy baseline.
//!
//! The surrogate score is a weighted sigmoid of the logit `f`,
//!
//! ```text
//! s_hat = w+ e^f / (w+ e^f + w- e^-f) = sigmoid(2f - ln(w- / w+))
//! ```
//!
//! so every loss here is a softplus of `z = 2f - ln(w- / w+)` and is
//! evaluated in logit space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::margins::MarginWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Positive,
    Negative,
}

/// Loss value and its derivative with respect to the logit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossEval {
    pub value: f64,
    pub grad_logit: f64,
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `1 / (1 + e^-x)` without overflow.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// The unweighted score `e^f / (e^f + e^-f)`.
pub fn plain_score(f: f64) -> f64 {
    sigmoid(2.0 * f)
}

fn check_logit(f: f64) -> Result<()> {
    if !f.is_finite() {
        return Err(Error::validation("logit", format!("must be finite, got {f}")));
    }
    Ok(())
}

fn check_scale(m: f64) -> Result<()> {
    if !(m.is_finite() && m > 0.0) {
        return Err(Error::validation("m", format!("must be positive and finite, got {m}")));
    }
    Ok(())
}

fn surrogate_logit(f: f64, w: &MarginWeights) -> f64 {
    2.0 * f - w.log_ratio()
}

pub fn surrogate_score(f: f64, w: &MarginWeights) -> Result<f64> {
    check_logit(f)?;
    Ok(sigmoid(surrogate_logit(f, w)))
}

/// Logit where the surrogate score equals one half, `(ln w- - ln w+) / 2`.
pub fn decision_logit(w: &MarginWeights) -> f64 {
    0.5 * w.log_ratio()
}

/// `-m ln s_hat` for positives and `-m ln(1 - s_hat)` for negatives.
pub fn ecm_loss(f: f64, label: Label, w: &MarginWeights, m: f64) -> Result<LossEval> {
    check_logit(f)?;
    check_scale(m)?;
    let z = surrogate_logit(f, w);
    Ok(match label {
        Label::Positive => LossEval {
            value: m * softplus(-z),
            grad_logit: -2.0 * m * sigmoid(-z),
        },
        Label::Negative => LossEval {
            value: m * softplus(z),
            grad_logit: 2.0 * m * sigmoid(z),
        },
    })
}

/// Focal modulation applied to the ECM terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalParams {
    pub gamma: f64,
    pub alpha: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        FocalParams { gamma: 2.0, alpha: 0.25 }
    }
}

impl FocalParams {
    pub fn new(gamma: f64, alpha: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::validation("focal_gamma", format!("must be nonnegative, got {gamma}")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::validation("focal_alpha", format!("must lie in (0, 1), got {alpha}")));
        }
        Ok(FocalParams { gamma, alpha })
    }
}

/// Positives: `alpha (1 - s_hat)^gamma * ecm`; negatives: `(1 - alpha) s_hat^gamma * ecm`.
pub fn focal_ecm_loss(f: f64, label: Label, w: &MarginWeights, m: f64, focal: FocalParams) -> Result<LossEval> {
    let base = ecm_loss(f, label, w, m)?;
    let z = surrogate_logit(f, w);
    let s = sigmoid(z);
    let q = sigmoid(-z);
    let FocalParams { gamma, alpha } = focal;
    Ok(match label {
        Label::Positive => {
            let modulation = alpha * q.powf(gamma);
            LossEval {
                value: modulation * base.value,
                grad_logit: -2.0 * modulation * (gamma * s * base.value + m * q),
            }
        }
        Label::Negative => {
            let modulation = (1.0 - alpha) * s.powf(gamma);
            LossEval {
                value: modulation * base.value,
                grad_logit: 2.0 * modulation * (gamma * q * base.value + m * s),
            }
        }
    })
}

/// Binary cross-entropy on the plain score `sigmoid(2f)`.
pub fn bce_loss(f: f64, label: Label) -> Result<LossEval> {
    ecm_loss(f, label, &MarginWeights::unit(), 1.0)
}

/// Whether a score violates its margin: `s <= gamma+` for positives, `1 - s <= gamma-` for negatives.
pub fn margin_error(score: f64, gamma: f64, label: Label) -> bool {
    match label {
        Label::Positive => score <= gamma,
        Label::Negative => 1.0 - score <= gamma,
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::LN_2;

    use super::*;

    fn w(p: f64, n: f64) -> MarginWeights {
        MarginWeights::new(p, n).unwrap()
    }

    #[test]
    fn surrogate_examples() {
        assert_eq!(surrogate_score(0.0, &w(3.0, 3.0)).unwrap(), 0.5);
        assert!((surrogate_score(0.0, &w(2.0, 1.0)).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let ws = w(5.0 / 3.0, 2.5);
        assert!((surrogate_score(decision_logit(&ws), &ws).unwrap() - 0.5).abs() < 1e-12);
        assert!(surrogate_score(f64::NAN, &ws).is_err());
    }

    #[test]
    fn decision_logit_examples() {
        assert_eq!(decision_logit(&w(1.7, 1.7)), 0.0);
        let f = decision_logit(&w(5.0 / 3.0, 2.5));
        assert!((f - 0.5 * 1.5_f64.ln()).abs() < 1e-15);
        assert!((plain_score(f) - 0.6).abs() < 1e-12);
        let f = decision_logit(&w(1.01, 101.0));
        assert!((f - 10.0_f64.ln()).abs() < 1e-12);
        assert!((plain_score(f) - 100.0 / 101.0).abs() < 1e-12);
    }

    #[test]
    fn ecm_examples() {
        let ws = w(5.0 / 3.0, 2.5);
        for label in [Label::Positive, Label::Negative] {
            let e = ecm_loss(decision_logit(&ws), label, &ws, 1.0).unwrap();
            assert!((e.value - LN_2).abs() < 1e-12);
        }
        let e = ecm_loss(0.0, Label::Positive, &w(2.0, 2.0), 1.0).unwrap();
        assert!((e.value - LN_2).abs() < 1e-15);
        assert_eq!(e.grad_logit, -1.0);
        let e = ecm_loss(50.0, Label::Positive, &ws, 1.0).unwrap();
        assert!(e.value < 1e-20 && e.value >= 0.0 && e.grad_logit.is_finite());
        assert!(ecm_loss(0.0, Label::Positive, &ws, 0.0).is_err());
        assert!(ecm_loss(f64::INFINITY, Label::Positive, &ws, 1.0).is_err());
    }

    #[test]
    fn focal_examples() {
        let ws = w(1.25, 5.0);
        let half = FocalParams::new(0.0, 0.5).unwrap();
        for f in [-2.0, 0.3, 4.0] {
            for label in [Label::Positive, Label::Negative] {
                let base = ecm_loss(f, label, &ws, 1.3).unwrap();
                let focal = focal_ecm_loss(f, label, &ws, 1.3, half).unwrap();
                assert_eq!(focal.value, 0.5 * base.value);
                assert!((focal.grad_logit - 0.5 * base.grad_logit).abs() < 1e-15);
            }
        }
        let e = focal_ecm_loss(decision_logit(&ws), Label::Positive, &ws, 1.0, FocalParams::default()).unwrap();
        assert!((e.value - 0.25 * 0.25 * LN_2).abs() < 1e-12);
        assert!((e.value - 0.043_321_698_784_996_6).abs() < 1e-12);
        let e = focal_ecm_loss(50.0, Label::Positive, &ws, 1.0, FocalParams::default()).unwrap();
        assert!(e.value < 1e-20);
        assert!(FocalParams::new(-1.0, 0.25).is_err());
        assert!(FocalParams::new(2.0, 1.0).is_err());
    }

    #[test]
    fn bce_examples() {
        let e = bce_loss(0.0, Label::Positive).unwrap();
        assert!((e.value - LN_2).abs() < 1e-15);
        assert_eq!(e.grad_logit, -1.0);
        assert!((bce_loss(-3.0, Label::Positive).unwrap().value - 6.002_475_685_137_73).abs() < 1e-12);
        for f in [-4.0, -0.1, 0.0, 2.5] {
            for label in [Label::Positive, Label::Negative] {
                assert_eq!(bce_loss(f, label).unwrap(), ecm_loss(f, label, &w(2.0, 2.0), 1.0).unwrap());
            }
        }
    }

    #[test]
    fn margin_error_examples() {
        assert!(margin_error(0.55, 0.6, Label::Positive));
        assert!(!margin_error(0.7, 0.6, Label::Positive));
        assert!(!margin_error(0.3, 0.4, Label::Negative));
        assert!(margin_error(0.65, 0.4, Label::Negative));
    }
}
