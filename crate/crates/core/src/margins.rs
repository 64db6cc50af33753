//! Effective class margins.
//!
//! Minimizing `n+^(-1/2) / g+ + n-^(-1/2) / g-` subject to `g+ + g- = 1`
//! gives `g+ = n-^(1/4) / (n+^(1/4) + n-^(1/4))` and its complement. The
//! surrogate score uses the reciprocals as weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::priors::ClassStats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    gamma_plus: f64,
    gamma_minus: f64,
}

impl Margins {
    /// Builds the pair `(gamma_plus, 1 - gamma_plus)`.
    pub fn from_gamma_plus(gamma_plus: f64) -> Result<Self> {
        if !(gamma_plus > 0.0 && gamma_plus < 1.0) {
            return Err(Error::validation("gamma_plus", format!("must lie in (0, 1), got {gamma_plus}")));
        }
        Ok(Margins {
            gamma_plus,
            gamma_minus: 1.0 - gamma_plus,
        })
    }

    pub fn gamma_plus(&self) -> f64 {
        self.gamma_plus
    }

    pub fn gamma_minus(&self) -> f64 {
        self.gamma_minus
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginWeights {
    w_plus: f64,
    w_minus: f64,
}

impl MarginWeights {
    /// Weights for an arbitrary positive pair; only the ratio matters to the surrogate.
    pub fn new(w_plus: f64, w_minus: f64) -> Result<Self> {
        for (field, w) in [("w_plus", w_plus), ("w_minus", w_minus)] {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::validation(field, format!("must be positive and finite, got {w}")));
            }
        }
        Ok(MarginWeights { w_plus, w_minus })
    }

    /// Equal weights; the surrogate reduces to the plain sigmoid.
    pub fn unit() -> Self {
        MarginWeights {
            w_plus: 2.0,
            w_minus: 2.0,
        }
    }

    pub fn w_plus(&self) -> f64 {
        self.w_plus
    }

    pub fn w_minus(&self) -> f64 {
        self.w_minus
    }

    /// `ln(w_minus / w_plus)`, the logit shift applied by the surrogate.
    pub fn log_ratio(&self) -> f64 {
        self.w_minus.ln() - self.w_plus.ln()
    }
}

pub fn optimal_margins(stats: &ClassStats) -> Margins {
    // Going through the count ratio makes scaling both counts by k an exact no-op.
    let q = (stats.n_plus() as f64 / stats.n_minus() as f64).powf(0.25);
    let gamma_plus = (1.0 + q).recip();
    debug_assert!(gamma_plus > 0.0 && gamma_plus < 1.0);
    Margins {
        gamma_plus,
        gamma_minus: q / (1.0 + q),
    }
}

/// `n+^(-1/2) / gamma_plus + n-^(-1/2) / (1 - gamma_plus)`.
pub fn margin_objective(gamma_plus: f64, stats: &ClassStats) -> Result<f64> {
    if !(gamma_plus > 0.0 && gamma_plus < 1.0) {
        return Err(Error::validation("gamma_plus", format!("must lie in (0, 1), got {gamma_plus}")));
    }
    Ok(objective_unchecked(gamma_plus, stats))
}

fn objective_unchecked(gamma_plus: f64, stats: &ClassStats) -> f64 {
    (stats.n_plus() as f64).sqrt().recip() / gamma_plus + (stats.n_minus() as f64).sqrt().recip() / (1.0 - gamma_plus)
}

/// Brute-force argmin of [`margin_objective`] over `gamma_plus in {step, 2 step, ..., 1 - step}`.
pub fn margins_grid_oracle(stats: &ClassStats, step: f64) -> Result<Margins> {
    if !(step > 0.0 && step <= 1e-2) {
        return Err(Error::validation("step", format!("must lie in (0, 0.01], got {step}")));
    }
    let count = (1.0 / step).round() as usize;
    let best = (1..count)
        .map(|k| k as f64 * step)
        .filter(|&g| g < 1.0)
        .map(|g| (g, objective_unchecked(g, stats)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(g, _)| g)
        .ok_or_else(|| Error::validation("step", "grid is empty"))?;
    Margins::from_gamma_plus(best)
}

pub fn weights(margins: &Margins) -> MarginWeights {
    MarginWeights {
        w_plus: margins.gamma_plus.recip(),
        w_minus: margins.gamma_minus.recip(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(p: u64, n: u64) -> ClassStats {
        ClassStats::new(p, n).unwrap()
    }

    #[test]
    fn closed_form_examples() {
        let m = optimal_margins(&stats(16, 81));
        assert!((m.gamma_plus() - 0.6).abs() < 1e-12);
        assert!((m.gamma_minus() - 0.4).abs() < 1e-12);
        let m = optimal_margins(&stats(37, 37));
        assert_eq!((m.gamma_plus(), m.gamma_minus()), (0.5, 0.5));
        let m = optimal_margins(&stats(1, 100_000_000));
        assert!((m.gamma_plus() - 100.0 / 101.0).abs() < 1e-12);
    }

    #[test]
    fn objective_examples() {
        assert_eq!(margin_objective(0.5, &stats(1, 1)).unwrap(), 4.0);
        let at_opt = margin_objective(0.6, &stats(16, 81)).unwrap();
        assert!((at_opt - 25.0 / 36.0).abs() < 1e-15);
        let at_half = margin_objective(0.5, &stats(16, 81)).unwrap();
        assert!((at_half - (0.5 + 2.0 / 9.0)).abs() < 1e-15);
        assert!(at_half > at_opt);
        assert!(margin_objective(0.0, &stats(1, 1)).is_err());
        assert!(margin_objective(1.0, &stats(1, 1)).is_err());
    }

    #[test]
    fn grid_oracle_examples() {
        let g = margins_grid_oracle(&stats(16, 81), 1e-3).unwrap();
        assert!((g.gamma_plus() - 0.6).abs() <= 1e-3 + 1e-12);
        let g = margins_grid_oracle(&stats(9, 9), 1e-3).unwrap();
        assert!((g.gamma_plus() - 0.5).abs() <= 1e-3 + 1e-12);
        let g = margins_grid_oracle(&stats(1, 10_000), 1e-3).unwrap();
        assert!((g.gamma_plus() - 10.0 / 11.0).abs() <= 1e-3);
        assert!(margins_grid_oracle(&stats(1, 1), 0.5).is_err());
        assert!(margins_grid_oracle(&stats(1, 1), 0.0).is_err());
    }

    #[test]
    fn weight_examples() {
        let w = weights(&Margins::from_gamma_plus(0.6).unwrap());
        assert!((w.w_plus() - 5.0 / 3.0).abs() < 1e-15 && (w.w_minus() - 2.5).abs() < 1e-14);
        let w = weights(&Margins::from_gamma_plus(0.5).unwrap());
        assert_eq!((w.w_plus(), w.w_minus()), (2.0, 2.0));
        let w = weights(&optimal_margins(&stats(1, 100_000_000)));
        assert!((w.w_plus() - 1.01).abs() < 1e-12 && (w.w_minus() - 101.0).abs() < 1e-10);
    }

    #[test]
    fn weights_validate() {
        assert!(MarginWeights::new(0.0, 1.0).is_err());
        assert!(MarginWeights::new(1.0, f64::INFINITY).is_err());
        assert!(Margins::from_gamma_plus(1.0).is_err());
    }
}
