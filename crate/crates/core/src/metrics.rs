//! Probabilistic precision, recall, average precision and pairwise ranking
//! error over finite score samples.
//!
//! Recall and precision use a strict threshold, `s > t`. The AP estimator and
//! the PR curve evaluate at sample scores and count the sample itself
//! (`s >= t`), which is the finite-sample form of integrating precision over
//! the positive score distribution. No interpolation is applied.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest pair count the quadratic ranking-error oracle accepts.
pub const BRUTEFORCE_PAIR_LIMIT: u128 = 100_000_000;

/// Positive and negative scores for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    positives: Vec<f64>,
    negatives: Vec<f64>,
}

impl ScoreSet {
    pub fn new(positives: Vec<f64>, negatives: Vec<f64>) -> Result<Self> {
        for (side, scores) in [("positives", &positives), ("negatives", &negatives)] {
            if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
                return Err(Error::validation(
                    "score",
                    format!("{side} contain {bad}, scores must lie in [0, 1]"),
                ));
            }
        }
        Ok(Self::new_unchecked(positives, negatives))
    }

    // Folds -0.0 into 0.0 so that sorting and IEEE equality agree.
    pub(crate) fn new_unchecked(mut positives: Vec<f64>, mut negatives: Vec<f64>) -> Self {
        for s in positives.iter_mut().chain(negatives.iter_mut()) {
            *s += 0.0;
        }
        ScoreSet {
            positives,
            negatives,
        }
    }

    pub fn positives(&self) -> &[f64] {
        &self.positives
    }

    pub fn negatives(&self) -> &[f64] {
        &self.negatives
    }

    /// The same samples with the roles of positives and negatives exchanged.
    pub fn swapped(&self) -> Self {
        ScoreSet {
            positives: self.negatives.clone(),
            negatives: self.positives.clone(),
        }
    }

    /// Applies `f` to every score; `f` must map [0, 1] into [0, 1].
    pub fn map_scores(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        ScoreSet::new(
            self.positives.iter().map(|&s| f(s)).collect(),
            self.negatives.iter().map(|&s| f(s)).collect(),
        )
    }

    fn require_positives(&self) -> Result<()> {
        if self.positives.is_empty() {
            return Err(Error::validation("positives", "score set has no positive samples"));
        }
        Ok(())
    }

    fn require_both(&self) -> Result<()> {
        self.require_positives()?;
        if self.negatives.is_empty() {
            return Err(Error::validation("negatives", "score set has no negative samples"));
        }
        Ok(())
    }
}

/// How pairs with equal positive and negative scores count toward the ranking error.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieMode {
    /// A tie is half a misranked pair.
    #[default]
    HalfCredit,
    /// Only strictly inverted pairs count.
    Strict,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::validation("alpha", format!("must be positive and finite, got {alpha}")));
    }
    Ok(())
}

fn sorted_ascending(scores: &[f64]) -> Vec<f64> {
    let mut v = scores.to_vec();
    v.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    v
}


fn count_at_or_above(sorted: &[f64], t: f64) -> usize {
    sorted.len() - sorted.partition_point(|&s| s < t)
}

fn tail_fraction(scores: &[f64], t: f64) -> f64 {
    scores.iter().filter(|&&s| s > t).count() as f64 / scores.len() as f64
}

/// Fraction of positives scoring strictly above `t`.
pub fn recall_at(set: &ScoreSet, t: f64) -> Result<f64> {
    set.require_positives()?;
    Ok(tail_fraction(&set.positives, t))
}

/// `r(t) / (r(t) + alpha * P(s_neg > t))`.
pub fn precision_at(set: &ScoreSet, t: f64, alpha: f64) -> Result<f64> {
    set.require_both()?;
    check_alpha(alpha)?;
    let recall = tail_fraction(&set.positives, t);
    let false_pos = tail_fraction(&set.negatives, t);
    let denom = recall + alpha * false_pos;
    if denom == 0.0 {
        return Err(Error::UndefinedPrecision { threshold: t });
    }
    Ok(recall / denom)
}

fn precision_from_counts(pos: usize, n_pos: usize, neg: usize, n_neg: usize, alpha: f64) -> f64 {
    let recall = pos as f64 / n_pos as f64;
    recall / (recall + alpha * (neg as f64 / n_neg as f64))
}

// Precision at each positive's own score, descending score order.
fn positive_precisions(set: &ScoreSet, alpha: f64) -> Vec<f64> {
    let pos = sorted_ascending(&set.positives);
    let neg = sorted_ascending(&set.negatives);
    pos.iter()
        .map(|&s| {
            precision_from_counts(
                count_at_or_above(&pos, s),
                pos.len(),
                count_at_or_above(&neg, s),
                neg.len(),
                alpha,
            )
        })
        .rev()
        .collect()
}

/// Mean over positive samples of the precision at that sample's score.
pub fn average_precision(set: &ScoreSet, alpha: f64) -> Result<f64> {
    Ok(average_precision_with_se(set, alpha)?.value)
}

/// An estimate with its finite-sample standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// AP together with the standard error of the mean of per-positive precisions.
pub fn average_precision_with_se(set: &ScoreSet, alpha: f64) -> Result<Estimate> {
    set.require_both()?;
    check_alpha(alpha)?;
    let precisions = positive_precisions(set, alpha);
    let (mean, var) = mean_and_variance(&precisions);
    Ok(Estimate {
        value: mean.clamp(0.0, 1.0),
        std_error: (var / precisions.len() as f64).sqrt(),
    })
}

fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, ss / (n - 1.0))
}

/// Integer pair counts behind the ranking error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PairCounts {
    inverted: u128,
    tied: u128,
    total: u128,
}

impl PairCounts {
    fn error(self, mode: TieMode) -> f64 {
        match mode {
            TieMode::HalfCredit => (2 * self.inverted + self.tied) as f64 / (2 * self.total) as f64,
            TieMode::Strict => self.inverted as f64 / self.total as f64,
        }
    }
}

/// Probability that a negative outscores a positive, ties counted as half.
pub fn ranking_error(set: &ScoreSet) -> Result<f64> {
    ranking_error_with(set, TieMode::HalfCredit)
}

/// Sort-and-search ranking error in `O(n log n)`.
pub fn ranking_error_with(set: &ScoreSet, mode: TieMode) -> Result<f64> {
    set.require_both()?;
    let neg = sorted_ascending(&set.negatives);
    let mut inverted = 0u128;
    let mut tied = 0u128;
    for &s in &set.positives {
        let le = neg.partition_point(|&n| n <= s);
        let lt = neg.partition_point(|&n| n < s);
        inverted += (neg.len() - le) as u128;
        tied += (le - lt) as u128;
    }
    let counts = PairCounts {
        inverted,
        tied,
        total: set.positives.len() as u128 * neg.len() as u128,
    };
    Ok(counts.error(mode))
}

/// Quadratic oracle for [`ranking_error`]; returns bit-identical values.
pub fn ranking_error_bruteforce(set: &ScoreSet) -> Result<f64> {
    ranking_error_bruteforce_with(set, TieMode::HalfCredit)
}

pub fn ranking_error_bruteforce_with(set: &ScoreSet, mode: TieMode) -> Result<f64> {
    set.require_both()?;
    let total = set.positives.len() as u128 * set.negatives.len() as u128;
    if total > BRUTEFORCE_PAIR_LIMIT {
        return Err(Error::Resource(format!(
            "{total} pairs exceeds the brute-force limit of {BRUTEFORCE_PAIR_LIMIT}"
        )));
    }
    let mut inverted = 0u128;
    let mut tied = 0u128;
    for &p in &set.positives {
        for &n in &set.negatives {
            if p < n {
                inverted += 1;
            } else if p == n {
                tied += 1;
            }
        }
    }
    Ok(PairCounts { inverted, tied, total }.error(mode))
}

/// Half-credit ranking error with its DeLong-style standard error.
pub fn ranking_error_with_se(set: &ScoreSet) -> Result<Estimate> {
    set.require_both()?;
    let pos = sorted_ascending(&set.positives);
    let neg = sorted_ascending(&set.negatives);
    let placement = |sorted: &[f64], s: f64, above: bool| -> f64 {
        let le = sorted.partition_point(|&x| x <= s);
        let lt = sorted.partition_point(|&x| x < s);
        let strict = if above { sorted.len() - le } else { lt };
        (strict as f64 + 0.5 * (le - lt) as f64) / sorted.len() as f64
    };
    // Per-positive fraction of negatives above it, per-negative fraction of positives below it.
    let pos_place: Vec<f64> = pos.iter().map(|&s| placement(&neg, s, true)).collect();
    let neg_place: Vec<f64> = neg.iter().map(|&s| placement(&pos, s, false)).collect();
    let (_, var_p) = mean_and_variance(&pos_place);
    let (_, var_n) = mean_and_variance(&neg_place);
    Ok(Estimate {
        value: ranking_error(set)?,
        std_error: (var_p / pos.len() as f64 + var_n / neg.len() as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Recall and precision at every distinct sample score, descending threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecallCurve {
    pub points: Vec<PrPoint>,
}

/// Evaluates the curve at each distinct score, counting samples with `s >= t`.
pub fn pr_curve(set: &ScoreSet, alpha: f64) -> Result<PrecisionRecallCurve> {
    set.require_both()?;
    check_alpha(alpha)?;
    let pos = sorted_ascending(&set.positives);
    let neg = sorted_ascending(&set.negatives);
    let mut thresholds: Vec<f64> = pos.iter().chain(neg.iter()).copied().collect();
    thresholds.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    thresholds.dedup();
    let points = thresholds
        .into_iter()
        .map(|t| {
            let p = count_at_or_above(&pos, t);
            let n = count_at_or_above(&neg, t);
            PrPoint {
                threshold: t,
                recall: p as f64 / pos.len() as f64,
                precision: precision_from_counts(p, pos.len(), n, neg.len(), alpha),
            }
        })
        .collect();
    Ok(PrecisionRecallCurve { points })
}

impl PrecisionRecallCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,recall,precision\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.threshold, p.recall, p.precision));
        }
        out
    }
}

#[derive(Debug, Deserialize)]
struct ScoreRow {
    score: f64,
    label: u8,
}

/// Reads a `score,label` CSV where label 1 marks a positive and 0 a negative.
pub fn parse_scores_csv(text: &str) -> Result<ScoreSet> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| input_error(&e))?.clone();
    if headers.len() != 2 || headers.get(0).map(str::trim) != Some("score") || headers.get(1).map(str::trim) != Some("label") {
        return Err(Error::Input {
            location: "line 1".into(),
            message: "expected header `score,label`".into(),
        });
    }
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for (i, row) in reader.deserialize::<ScoreRow>().enumerate() {
        let row = row.map_err(|e| input_error(&e))?;
        let line = i + 2;
        if !(0.0..=1.0).contains(&row.score) {
            return Err(Error::Input {
                location: format!("line {line}"),
                message: format!("score {} outside [0, 1]", row.score),
            });
        }
        match row.label {
            1 => positives.push(row.score),
            0 => negatives.push(row.score),
            other => {
                return Err(Error::Input {
                    location: format!("line {line}"),
                    message: format!("label must be 0 or 1, got {other}"),
                })
            }
        }
    }
    Ok(ScoreSet::new_unchecked(positives, negatives))
}

pub fn load_scores_csv(path: impl AsRef<Path>) -> Result<ScoreSet> {
    parse_scores_csv(&std::fs::read_to_string(path)?)
}

fn input_error(e: &csv::Error) -> Error {
    Error::Input {
        location: e.position().map_or_else(|| "unknown position".into(), |p| format!("line {}", p.line())),
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ScoreSet {
        ScoreSet::new(vec![0.9, 0.4], vec![0.5, 0.1]).unwrap()
    }

    fn separated() -> ScoreSet {
        ScoreSet::new(vec![0.8, 0.9, 0.95], vec![0.1, 0.2, 0.3, 0.7]).unwrap()
    }

    #[test]
    fn rejects_out_of_range_scores() {
        assert!(ScoreSet::new(vec![1.2], vec![0.1]).is_err());
        assert!(ScoreSet::new(vec![f64::NAN], vec![0.1]).is_err());
    }

    #[test]
    fn recall_examples() {
        assert_eq!(recall_at(&toy(), 0.45).unwrap(), 0.5);
        assert_eq!(recall_at(&toy(), 1.0).unwrap(), 0.0);
        assert_eq!(recall_at(&toy(), -1.0).unwrap(), 1.0);
        let empty = ScoreSet::new(vec![], vec![0.3]).unwrap();
        assert!(recall_at(&empty, 0.5).is_err());
    }

    #[test]
    fn precision_examples() {
        assert_eq!(precision_at(&toy(), 0.45, 1.0).unwrap(), 0.5);
        assert_eq!(precision_at(&toy(), 0.45, 3.0).unwrap(), 0.25);
        assert_eq!(precision_at(&toy(), 0.6, 7.0).unwrap(), 1.0);
        assert!(matches!(
            precision_at(&toy(), 0.95, 1.0),
            Err(Error::UndefinedPrecision { .. })
        ));
        assert!(precision_at(&toy(), 0.5, 0.0).is_err());
    }

    #[test]
    fn ap_examples() {
        // Precisions 1 and 2/3 at the two positives.
        let ap = average_precision(&toy(), 1.0).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
        for alpha in [0.01, 1.0, 1e4] {
            assert_eq!(average_precision(&separated(), alpha).unwrap(), 1.0);
        }
        assert!(average_precision(&ScoreSet::new(vec![0.1], vec![]).unwrap(), 1.0).is_err());
    }

    #[test]
    fn ranking_examples() {
        assert_eq!(ranking_error(&toy()).unwrap(), 0.25);
        assert_eq!(ranking_error(&separated()).unwrap(), 0.0);
        let tie = ScoreSet::new(vec![0.5], vec![0.5]).unwrap();
        assert_eq!(ranking_error(&tie).unwrap(), 0.5);
        assert_eq!(ranking_error_with(&tie, TieMode::Strict).unwrap(), 0.0);
        let inv = ScoreSet::new(vec![0.3], vec![0.7]).unwrap();
        assert_eq!(ranking_error_bruteforce(&inv).unwrap(), 1.0);
        assert_eq!(ranking_error_bruteforce(&toy()).unwrap(), 0.25);
    }

    #[test]
    fn signed_zero_ties() {
        let set = ScoreSet::new(vec![-0.0, 0.0], vec![0.0]).unwrap();
        assert_eq!(ranking_error(&set).unwrap(), ranking_error_bruteforce(&set).unwrap());
        assert_eq!(ranking_error(&set).unwrap(), 0.5);
    }

    #[test]
    fn bruteforce_guard() {
        let set = ScoreSet::new(vec![0.5; 10_001], vec![0.5; 10_000]).unwrap();
        assert!(matches!(ranking_error_bruteforce(&set), Err(Error::Resource(_))));
    }

    #[test]
    fn pr_curve_examples() {
        let curve = pr_curve(&toy(), 1.0).unwrap();
        let got: Vec<(f64, f64, f64)> = curve.points.iter().map(|p| (p.threshold, p.recall, p.precision)).collect();
        assert_eq!(got.len(), 4);
        assert_eq!(got[0], (0.9, 0.5, 1.0));
        assert_eq!(got[1], (0.5, 0.5, 0.5));
        assert!((got[2].2 - 2.0 / 3.0).abs() < 1e-15 && got[2].1 == 1.0);
        assert_eq!(got[3], (0.1, 1.0, 0.5));

        let curve = pr_curve(&separated(), 2.0).unwrap();
        for p in curve.points.iter().filter(|p| p.threshold >= 0.8) {
            assert_eq!(p.precision, 1.0);
        }

        let single = ScoreSet::new(vec![0.7], vec![0.2]).unwrap();
        let curve = pr_curve(&single, 1.0).unwrap();
        assert_eq!(curve.points[0], PrPoint { threshold: 0.7, recall: 1.0, precision: 1.0 });
    }

    #[test]
    fn ranking_se_is_zero_for_constant_placements() {
        let est = ranking_error_with_se(&separated()).unwrap();
        assert_eq!(est, Estimate { value: 0.0, std_error: 0.0 });
    }

    #[test]
    fn scores_csv() {
        let set = parse_scores_csv("score,label\n0.9,1\n0.5,0\n0.4,1\n0.1,0\n").unwrap();
        assert_eq!(set, toy());
        let err = parse_scores_csv("score,label\n0.9,1\n1.5,0\n").unwrap_err();
        assert!(matches!(err, Error::Input { ref location, .. } if location == "line 3"));
        assert!(parse_scores_csv("score,label\n0.9,2\n").is_err());
        assert!(parse_scores_csv("s,l\n0.9,1\n").is_err());
    }
}
