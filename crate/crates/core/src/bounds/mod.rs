//! Closed-form bounds relating average precision to the pairwise ranking
//! error, the linear detection-error slope, and the binary error bound.
//!
//! For a class with negative-to-positive ratio `alpha` and ranking error `R`:
//!
//! ```text
//! max(1 - sqrt(2 alpha R / 3), (8/9) / (1 + 2 alpha R)) <= AP <= 1 + alpha ln(1 - R / (1 + alpha))
//! ```
//!
//! Detection error is `1 - AP`, so the det bounds are the AP bounds mirrored.

mod variational;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{ranking_error, ScoreSet};

pub use variational::{
    lower_bound_feasible, variational_max_oracle, variational_min_oracle, GFunction, MinOracleOptions,
};

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::validation("alpha", format!("must be positive and finite, got {alpha}")));
    }
    Ok(())
}

fn check_ranking_error(r: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::validation("ranking_error", format!("must lie in [0, 1], got {r}")));
    }
    Ok(())
}

/// `1 + alpha * ln(1 - R / (1 + alpha))`.
pub fn ap_upper(alpha: f64, r: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_ranking_error(r)?;
    Ok(1.0 + alpha * (-r / (1.0 + alpha)).ln_1p())
}

/// The two branches of the AP lower bound, `(1 - sqrt(2 alpha R / 3), (8/9) / (1 + 2 alpha R))`.
pub fn ap_lower_branches(alpha: f64, r: f64) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    check_ranking_error(r)?;
    let ar = alpha * r;
    Ok((1.0 - (2.0 * ar / 3.0).sqrt(), (8.0 / 9.0) / (1.0 + 2.0 * ar)))
}

pub fn ap_lower(alpha: f64, r: f64) -> Result<f64> {
    let (sqrt_branch, rational_branch) = ap_lower_branches(alpha, r)?;
    Ok(sqrt_branch.max(rational_branch))
}

/// Which linear coefficient to use for `det ~= m * R`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopeMode {
    /// `m = 1`.
    Unit,
    /// `alpha ln((1 + alpha) / alpha)`, the det lower bound at `R = 1`.
    Lower,
    /// `(1/9 + 2 alpha) / (1 + 2 alpha)`, the rational det upper-bound branch at `R = 1`.
    #[default]
    Upper,
    /// Chord from the origin to the point where the two det upper-bound branches meet.
    Meet,
}

impl std::str::FromStr for SlopeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit" => Ok(SlopeMode::Unit),
            "lower" => Ok(SlopeMode::Lower),
            "upper" => Ok(SlopeMode::Upper),
            "meet" => Ok(SlopeMode::Meet),
            other => Err(Error::validation(
                "mode",
                format!("expected one of unit, lower, upper, meet; got `{other}`"),
            )),
        }
    }
}

/// Detection-error upper bound `min(sqrt(2 alpha R / 3), 1 - (8/9) / (1 + 2 alpha R))`.
fn det_upper_unchecked(alpha: f64, r: f64) -> f64 {
    let ar = alpha * r;
    (2.0 * ar / 3.0).sqrt().min(1.0 - (8.0 / 9.0) / (1.0 + 2.0 * ar))
}

/// Ranking error where `sqrt(2 alpha R / 3) = 1 - (8/9) / (1 + 2 alpha R)`, by bisection on (0, 1].
///
/// The branch difference is negative near zero and first changes sign at
/// `alpha R = 1/6`. When `alpha < 1/6` there is no sign change inside the
/// interval and `1` is returned.
pub fn branch_meet_point(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let diff = |r: f64| {
        let ar = alpha * r;
        (2.0 * ar / 3.0).sqrt() - (1.0 - (8.0 / 9.0) / (1.0 + 2.0 * ar))
    };
    if diff(1.0) < 0.0 {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if diff(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn slope_m(alpha: f64, mode: SlopeMode) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(match mode {
        SlopeMode::Unit => 1.0,
        SlopeMode::Lower => alpha * (1.0 / alpha).ln_1p(),
        SlopeMode::Upper => (1.0 / 9.0 + 2.0 * alpha) / (1.0 + 2.0 * alpha),
        SlopeMode::Meet => {
            let r = branch_meet_point(alpha)?;
            det_upper_unchecked(alpha, r) / r
        }
    })
}

/// AP and detection-error bounds at one `(alpha, R)` point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundEnvelope {
    pub alpha: f64,
    pub ranking_error: f64,
    pub ap_lower: f64,
    pub ap_upper: f64,
    pub det_lower: f64,
    pub det_upper: f64,
    pub slope_m: f64,
    pub slope_mode: SlopeMode,
}

pub fn envelope(alpha: f64, r: f64, mode: SlopeMode) -> Result<BoundEnvelope> {
    let ap_lower = ap_lower(alpha, r)?;
    let ap_upper = ap_upper(alpha, r)?;
    Ok(BoundEnvelope {
        alpha,
        ranking_error: r,
        ap_lower,
        ap_upper,
        det_lower: 1.0 - ap_upper,
        det_upper: 1.0 - ap_lower,
        slope_m: slope_m(alpha, mode)?,
        slope_mode: mode,
    })
}

/// Envelopes over `R = 0, 0.01, ..., 1`.
pub fn envelope_curve(alpha: f64, mode: SlopeMode) -> Result<Vec<BoundEnvelope>> {
    (0..=100).map(|i| envelope(alpha, i as f64 / 100.0, mode)).collect()
}

pub fn envelope_curve_csv(curve: &[BoundEnvelope]) -> String {
    let mut out = String::from("r,ap_lower,ap_upper,det_lower,det_upper\n");
    for e in curve {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.ranking_error, e.ap_lower, e.ap_upper, e.det_lower, e.det_upper
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryBoundCheck {
    pub ranking_error: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Checks `R <= P(s_pos <= t) + P(s_neg > t)` on the empirical distributions.
pub fn binary_bound_check(set: &ScoreSet, t: f64) -> Result<BinaryBoundCheck> {
    let r = ranking_error(set)?;
    let missed = set.positives().iter().filter(|&&s| s <= t).count() as f64 / set.positives().len() as f64;
    let false_alarms = set.negatives().iter().filter(|&&s| s > t).count() as f64 / set.negatives().len() as f64;
    let rhs = missed + false_alarms;
    Ok(BinaryBoundCheck {
        ranking_error: r,
        rhs,
        holds: r <= rhs + 1e-12,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upper_examples() {
        assert!((ap_upper(1.0, 0.5).unwrap() - 0.712_317_927_548_219_1).abs() < 1e-15);
        assert!((ap_upper(1.0, 1.0).unwrap() - 0.306_852_819_440_054_7).abs() < 1e-15);
        for alpha in [1e-3, 1.0, 1e6] {
            assert_eq!(ap_upper(alpha, 0.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn lower_examples() {
        let (a, b) = ap_lower_branches(1.0, 1.0 / 6.0).unwrap();
        assert!((a - 2.0 / 3.0).abs() <= 1e-12 && (b - 2.0 / 3.0).abs() <= 1e-12);
        assert_eq!(ap_lower(3.0, 0.0).unwrap(), 1.0);
        let v = ap_lower(1.0, 0.5).unwrap();
        assert!((v - 4.0 / 9.0).abs() < 1e-15);
        assert!(1.0 - (1.0_f64 / 3.0).sqrt() < v);
    }

    #[test]
    fn domain_errors() {
        assert!(ap_upper(-1.0, 0.5).is_err());
        assert!(ap_upper(0.0, 0.5).is_err());
        assert!(ap_lower(1.0, 1.5).is_err());
        assert!(ap_lower(1.0, -0.1).is_err());
        assert!(slope_m(f64::NAN, SlopeMode::Upper).is_err());
    }

    #[test]
    fn envelope_examples() {
        let e = envelope(1.0, 0.0, SlopeMode::Upper).unwrap();
        assert_eq!((e.det_lower, e.det_upper), (0.0, 0.0));
        assert_eq!((e.ap_lower, e.ap_upper), (1.0, 1.0));
        let e = envelope(1.0, 0.5, SlopeMode::Upper).unwrap();
        assert!((e.det_upper - 5.0 / 9.0).abs() < 1e-15);
        assert!(e.ap_lower <= e.ap_upper);
        assert_eq!(e.det_lower, 1.0 - e.ap_upper);
        assert_eq!(envelope_curve(2.0, SlopeMode::Unit).unwrap().len(), 101);
    }

    #[test]
    fn slope_examples() {
        assert!((slope_m(1.0, SlopeMode::Lower).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((slope_m(1.0, SlopeMode::Upper).unwrap() - 19.0 / 27.0).abs() < 1e-15);
        assert_eq!(slope_m(7.0, SlopeMode::Unit).unwrap(), 1.0);
        for mode in [SlopeMode::Lower, SlopeMode::Upper] {
            assert!((slope_m(1e6, mode).unwrap() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn branches_meet_at_one_sixth() {
        for alpha in [0.2, 1.0, 10.0, 1e3] {
            let r = branch_meet_point(alpha).unwrap();
            // The sign change is a flat crossing, so bisection resolves it to ~cbrt(eps).
            assert!((alpha * r - 1.0 / 6.0).abs() < 1e-4, "alpha {alpha}: alpha*R = {}", alpha * r);
        }
        assert_eq!(branch_meet_point(0.1).unwrap(), 1.0);
        assert!((slope_m(0.1, SlopeMode::Meet).unwrap() - (0.2_f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn binary_bound_examples() {
        let set = ScoreSet::new(vec![0.9, 0.4], vec![0.5, 0.1]).unwrap();
        let c = binary_bound_check(&set, 0.45).unwrap();
        assert_eq!((c.rhs, c.ranking_error, c.holds), (1.0, 0.25, true));
        let c = binary_bound_check(&set, 0.7).unwrap();
        assert_eq!((c.rhs, c.holds), (0.5, true));
        let sep = ScoreSet::new(vec![0.8, 0.9], vec![0.1, 0.2]).unwrap();
        let c = binary_bound_check(&sep, 0.5).unwrap();
        assert_eq!((c.rhs, c.ranking_error, c.holds), (0.0, 0.0, true));
    }

    #[test]
    fn slope_mode_parse() {
        assert_eq!("meet".parse::<SlopeMode>().unwrap(), SlopeMode::Meet);
        assert!("median".parse::<SlopeMode>().is_err());
    }
}
