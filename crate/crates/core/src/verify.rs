//! Seeded property suites behind `ecm verify`.
//!
//! Every trial draws from its own ChaCha stream (`seed`, stream = trial
//! index), so a report depends only on `(suite, trials, seed)` and not on
//! how many worker threads run it.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    ap_lower, ap_lower_branches, ap_upper, binary_bound_check, lower_bound_feasible, slope_m,
    variational_max_oracle, variational_min_oracle, MinOracleOptions, SlopeMode,
};
use crate::error::{Error, Result};
use crate::loss::{decision_logit, ecm_loss, focal_ecm_loss, plain_score, surrogate_score, FocalParams, Label, LossEval};
use crate::margins::{margins_grid_oracle, optimal_margins, weights, MarginWeights, Margins};
use crate::metrics::{
    average_precision_with_se, ranking_error_bruteforce_with, ranking_error_with, ranking_error_with_se, ScoreSet,
    TieMode,
};
use crate::priors::ClassStats;

/// At most this many failing trials are described in a report.
const MAX_DETAILS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Bounds,
    Oracles,
    Gradients,
    Estimators,
    Binary,
    Margins,
    Decision,
    Slope,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::Bounds,
        Suite::Oracles,
        Suite::Gradients,
        Suite::Estimators,
        Suite::Binary,
        Suite::Margins,
        Suite::Decision,
        Suite::Slope,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Bounds => "bounds",
            Suite::Oracles => "oracles",
            Suite::Gradients => "gradients",
            Suite::Estimators => "estimators",
            Suite::Binary => "binary",
            Suite::Margins => "margins",
            Suite::Decision => "decision",
            Suite::Slope => "slope",
        }
    }

    /// `all` expands to every suite.
    pub fn parse_list(s: &str) -> Result<Vec<Suite>> {
        if s == "all" {
            return Ok(Suite::ALL.to_vec());
        }
        Suite::ALL
            .iter()
            .copied()
            .find(|suite| suite.name() == s)
            .map(|suite| vec![suite])
            .ok_or_else(|| {
                let names: Vec<&str> = Suite::ALL.iter().map(|s| s.name()).collect();
                Error::validation("suite", format!("unknown suite `{s}`; expected all or one of {}", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: usize,
    pub failures: usize,
    pub passed: bool,
    /// Suite-specific summary numbers, such as the worst observed error.
    pub summary: BTreeMap<String, f64>,
    pub details: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub trials: usize,
    pub seed: u64,
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Outcome of one trial: failure messages plus named values to fold into the summary.
#[derive(Default)]
struct Trial {
    checks: usize,
    failures: Vec<String>,
    maxima: Vec<(&'static str, f64)>,
}

impl Trial {
    fn check(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures.push(describe());
        }
    }

    fn track(&mut self, name: &'static str, value: f64) {
        self.maxima.push((name, value));
    }
}

fn collect(suite: Suite, trials: Vec<Trial>) -> SuiteReport {
    let mut summary: BTreeMap<String, f64> = BTreeMap::new();
    let mut checks = 0;
    let mut failures = 0;
    let mut details = Vec::new();
    for t in trials {
        checks += t.checks;
        failures += t.failures.len();
        for msg in t.failures {
            if details.len() < MAX_DETAILS {
                details.push(msg);
            }
        }
        for (name, v) in t.maxima {
            let slot = summary.entry(name.to_string()).or_insert(f64::NEG_INFINITY);
            *slot = slot.max(v);
        }
    }
    SuiteReport {
        suite,
        checks,
        failures,
        passed: failures == 0,
        summary,
        details,
    }
}

fn run_trials(suite: Suite, trials: usize, seed: u64, f: impl Fn(usize, &mut ChaCha8Rng) -> Trial + Sync) -> SuiteReport {
    let results: Vec<Trial> = (0..trials)
        .into_par_iter()
        .map(|i| f(i, &mut trial_rng(seed, i)))
        .collect();
    collect(suite, results)
}

pub fn run_suite(suite: Suite, trials: usize, seed: u64) -> SuiteReport {
    match suite {
        Suite::Bounds => sandwich(trials, seed),
        Suite::Oracles => oracles(),
        Suite::Gradients => gradients(trials, seed),
        Suite::Estimators => estimators(trials, seed),
        Suite::Binary => binary(trials, seed),
        Suite::Margins => margin_optimality(trials, seed),
        Suite::Decision => decision(trials, seed),
        Suite::Slope => slope_bracket(trials, seed),
    }
}

pub fn run(suites: &[Suite], trials: usize, seed: u64) -> VerifyReport {
    let suites: Vec<SuiteReport> = suites.iter().map(|&s| run_suite(s, trials, seed)).collect();
    VerifyReport {
        trials,
        seed,
        passed: suites.iter().all(|s| s.passed),
        suites,
    }
}

/// Ratios cycled through by the sandwich suite.
pub const SANDWICH_ALPHAS: [f64; 4] = [0.1, 1.0, 10.0, 1e3];

/// Monte Carlo AP stays inside the ranking-error bounds, up to 3 combined standard errors.
pub fn sandwich(trials: usize, seed: u64) -> SuiteReport {
    run_trials(Suite::Bounds, trials, seed, |i, rng| {
        let mut t = Trial::default();
        let alpha = SANDWICH_ALPHAS[i % SANDWICH_ALPHAS.len()];
        let beta = |rng: &mut ChaCha8Rng| Beta::new(rng.random_range(0.5..5.0), rng.random_range(0.5..5.0)).unwrap();
        let pos_dist = beta(rng);
        let neg_dist = beta(rng);
        let n_pos = rng.random_range(500..=2000);
        let n_neg = rng.random_range(500..=2000);
        let pos: Vec<f64> = (0..n_pos).map(|_| pos_dist.sample(rng)).collect();
        let neg: Vec<f64> = (0..n_neg).map(|_| neg_dist.sample(rng)).collect();
        let set = ScoreSet::new(pos, neg).expect("beta samples lie in [0, 1]");
        let ap = average_precision_with_se(&set, alpha).expect("both sides nonempty");
        let r = ranking_error_with_se(&set).expect("both sides nonempty");
        let sigma = ap.std_error.hypot(r.std_error);
        let lower = ap_lower(alpha, r.value).unwrap();
        let upper = ap_upper(alpha, r.value).unwrap();
        t.check(ap.value >= lower - 3.0 * sigma, || {
            format!("trial {i}: alpha {alpha} R {:.6} AP {:.6} below lower bound {lower:.6} (sigma {sigma:.2e})", r.value, ap.value)
        });
        t.check(ap.value <= upper + 3.0 * sigma, || {
            format!("trial {i}: alpha {alpha} R {:.6} AP {:.6} above upper bound {upper:.6} (sigma {sigma:.2e})", r.value, ap.value)
        });
        if sigma > 0.0 {
            t.track("max_sigmas_below_lower", (lower - ap.value) / sigma);
            t.track("max_sigmas_above_upper", (ap.value - upper) / sigma);
        }
        t
    })
}

pub const ORACLE_ALPHAS: [f64; 4] = [0.5, 1.0, 5.0, 50.0];
pub const ORACLE_TAUS: [f64; 5] = [0.05, 1.0 / 6.0, 0.3, 0.5, 0.9];
pub const ORACLE_TOL: f64 = 1e-3;

/// Variational oracles against the closed-form AP bounds.
pub fn oracles() -> SuiteReport {
    let grid: Vec<(f64, f64)> = ORACLE_ALPHAS
        .iter()
        .flat_map(|&a| ORACLE_TAUS.iter().map(move |&t| (a, t)))
        .collect();
    let trials = grid
        .par_iter()
        .map(|&(alpha, tau)| {
            let mut t = Trial::default();
            let closed_min = ap_lower(alpha, tau).unwrap();
            match variational_min_oracle(alpha, tau, MinOracleOptions::default()) {
                Ok(v) if lower_bound_feasible(alpha, tau) => {
                    t.track("max_min_oracle_error", (v - closed_min).abs());
                    t.check((v - closed_min).abs() <= ORACLE_TOL, || {
                        format!("min oracle ({alpha}, {tau}): {v} vs closed form {closed_min}")
                    });
                }
                Ok(v) => t.check(v >= closed_min - ORACLE_TOL, || {
                    format!("min oracle ({alpha}, {tau}): box-constrained value {v} below unconstrained bound {closed_min}")
                }),
                Err(e) => t.check(false, || format!("min oracle ({alpha}, {tau}): {e}")),
            }
            let closed_max = ap_upper(alpha, tau).unwrap();
            match variational_max_oracle(alpha, tau, 2000) {
                Ok(v) => {
                    t.track("max_max_oracle_error", (v - closed_max).abs());
                    t.check((v - closed_max).abs() <= ORACLE_TOL, || {
                        format!("max oracle ({alpha}, {tau}): {v} vs closed form {closed_max}")
                    });
                }
                Err(e) => t.check(false, || format!("max oracle ({alpha}, {tau}): {e}")),
            }
            t
        })
        .collect();
    collect(Suite::Oracles, trials)
}

fn random_weights(rng: &mut ChaCha8Rng) -> MarginWeights {
    let n_plus = 10f64.powf(rng.random_range(0.0..9.0)).round() as u64;
    let n_minus = 10f64.powf(rng.random_range(0.0..9.0)).round() as u64;
    weights(&optimal_margins(&ClassStats::new(n_plus.max(1), n_minus.max(1)).unwrap()))
}

fn random_label(rng: &mut ChaCha8Rng) -> Label {
    if rng.random_bool(0.5) {
        Label::Positive
    } else {
        Label::Negative
    }
}

/// Relative gradient error, or absolute error when the gradient is below 1e-3.
fn gradient_error(analytic: f64, numeric: f64) -> (f64, bool) {
    let diff = (analytic - numeric).abs();
    if analytic.abs() < 1e-3 {
        (diff, diff <= 1e-9)
    } else {
        let rel = diff / analytic.abs();
        (rel, rel <= 1e-6)
    }
}

/// Central-difference check of a loss gradient with step 1e-5.
pub fn finite_difference_check(loss: impl Fn(f64) -> Result<LossEval>, f: f64) -> Result<(f64, bool)> {
    let h = 1e-5;
    let numeric = (loss(f + h)?.value - loss(f - h)?.value) / (2.0 * h);
    Ok(gradient_error(loss(f)?.grad_logit, numeric))
}

/// Analytic ECM and focal-ECM gradients against finite differences, plus saturation stability.
pub fn gradients(trials: usize, seed: u64) -> SuiteReport {
    run_trials(Suite::Gradients, trials, seed, |i, rng| {
        let mut t = Trial::default();
        let f = rng.random_range(-10.0..=10.0);
        let w = random_weights(rng);
        let label = random_label(rng);
        let m = 2.0 * (1.0 - rng.random::<f64>()); // (0, 2]
        let focal = FocalParams::new(rng.random_range(0.0..4.0), rng.random_range(0.01..0.99)).unwrap();

        let (err, ok) = finite_difference_check(|x| ecm_loss(x, label, &w, m), f).unwrap();
        t.track("max_ecm_gradient_error", err);
        t.check(ok, || format!("trial {i}: ecm gradient error {err:e} at f {f}, {label:?}, w {w:?}, m {m}"));
        let (err, ok) = finite_difference_check(|x| focal_ecm_loss(x, label, &w, m, focal), f).unwrap();
        t.track("max_focal_gradient_error", err);
        t.check(ok, || format!("trial {i}: focal gradient error {err:e} at f {f}, {label:?}, w {w:?}, m {m}, {focal:?}"));

        let far = [-1e4, -1e3, -50.0, 50.0, 1e3, 1e4][i % 6];
        for eval in [ecm_loss(far, label, &w, m), focal_ecm_loss(far, label, &w, m, focal)] {
            let ok = matches!(eval, Ok(e) if e.value.is_finite() && e.grad_logit.is_finite() && e.value >= 0.0);
            t.check(ok, || format!("trial {i}: non-finite loss at f {far}: {eval:?}"));
        }
        t
    })
}

/// Draws a score set of up to 200 samples per side; half the sets use a coarse grid to force ties.
pub fn random_score_set(rng: &mut ChaCha8Rng) -> ScoreSet {
    let tied = rng.random_bool(0.5);
    let draw = |n: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n)
            .map(|_| if tied { rng.random_range(0..=20) as f64 / 20.0 } else { rng.random::<f64>() })
            .collect()
    };
    let n_pos = rng.random_range(1..=200);
    let n_neg = rng.random_range(1..=200);
    let pos = draw(n_pos, rng);
    let neg = draw(n_neg, rng);
    ScoreSet::new(pos, neg).expect("scores drawn in [0, 1]")
}

/// Sorted ranking-error estimator against the quadratic oracle, bit for bit.
pub fn estimators(trials: usize, seed: u64) -> SuiteReport {
    run_trials(Suite::Estimators, trials, seed, |i, rng| {
        let mut t = Trial::default();
        let set = random_score_set(rng);
        for mode in [TieMode::HalfCredit, TieMode::Strict] {
            let fast = ranking_error_with(&set, mode).unwrap();
            let slow = ranking_error_bruteforce_with(&set, mode).unwrap();
            t.check(fast.to_bits() == slow.to_bits(), || {
                format!("trial {i}: {mode:?} sorted {fast:e} != brute force {slow:e}")
            });
        }
        let r = ranking_error_with(&set, TieMode::HalfCredit).unwrap();
        let swapped = ranking_error_with(&set.swapped(), TieMode::HalfCredit).unwrap();
        t.check((r + swapped - 1.0).abs() <= 1e-12, || format!("trial {i}: R {r} and swapped {swapped} do not sum to 1"));
        t
    })
}

/// `R <= P(s_pos <= t) + P(s_neg > t)` at every sample score and its neighbours.
pub fn binary(trials: usize, seed: u64) -> SuiteReport {
    run_trials(Suite::Binary, trials, seed, |i, rng| {
        let mut t = Trial::default();
        let set = random_score_set(rng);
        let mut candidates: Vec<f64> = set.positives().iter().chain(set.negatives()).copied().collect();
        candidates.sort_by(f64::total_cmp);
        candidates.dedup();
        for s in candidates {
            for threshold in [s - 1e-9, s, s + 1e-9] {
                let check = binary_bound_check(&set, threshold).unwrap();
                t.track("max_slack_violation", check.ranking_error - check.rhs);
                t.check(check.holds, || {
                    format!("trial {i}: t {threshold}: R {} > rhs {}", check.ranking_error, check.rhs)
                });
            }
        }
        t
    })
}

pub const MARGIN_GRID_STEP: f64 = 1e-3;

/// Closed-form margins against a grid search over the margin objective.
pub fn margin_optimality(trials: usize, seed: u64) -> SuiteReport {
    let mut report = run_trials(Suite::Margins, trials, seed, |i, rng| {
        let mut t = Trial::default();
        let n_plus = (10f64.powf(rng.random_range(0.0..9.0)).round() as u64).max(1);
        let n_minus = (10f64.powf(rng.random_range(0.0..9.0)).round() as u64).max(1);
        let stats = ClassStats::new(n_plus, n_minus).unwrap();
        let closed = optimal_margins(&stats);
        let grid = margins_grid_oracle(&stats, MARGIN_GRID_STEP).unwrap();
        let gap = (closed.gamma_plus() - grid.gamma_plus()).abs();
        t.track("max_grid_gap", gap);
        t.check(gap <= MARGIN_GRID_STEP + 1e-12, || {
            format!("trial {i}: ({n_plus}, {n_minus}) closed {} vs grid {}", closed.gamma_plus(), grid.gamma_plus())
        });
        t
    });
    let exact = optimal_margins(&ClassStats::new(16, 81).unwrap());
    let err = (exact.gamma_plus() - 0.6).abs();
    report.checks += 1;
    report.summary.insert("exact_case_error".into(), err);
    if err > 1e-12 {
        report.failures += 1;
        report.passed = false;
        report.details.push(format!("(16, 81) gave gamma+ {}", exact.gamma_plus()));
    }
    report
}

/// The plain sigmoid at the surrogate decision logit equals gamma+.
pub fn decision(trials: usize, seed: u64) -> SuiteReport {
    run_trials(Suite::Decision, trials, seed, |i, rng| {
        let mut t = Trial::default();
        let gamma = rng.random_range(1e-3..1.0 - 1e-3);
        let margins = Margins::from_gamma_plus(gamma).unwrap();
        let w = weights(&margins);
        let f = decision_logit(&w);
        let err = (plain_score(f) - margins.gamma_plus()).abs();
        t.track("max_boundary_error", err);
        t.check(err <= 1e-12, || format!("trial {i}: gamma+ {gamma} but sigmoid at boundary {}", plain_score(f)));
        let at_boundary = surrogate_score(f, &w).unwrap();
        t.check((at_boundary - 0.5).abs() <= 1e-12, || format!("trial {i}: surrogate at boundary {at_boundary}"));
        t
    })
}

/// Sampled ratios for the slope bracket, log-uniform in [1e-3, 1e3].
pub fn slope_sample(rng: &mut ChaCha8Rng) -> f64 {
    10f64.powf(rng.random_range(-3.0..=3.0))
}

/// `slope(lower) <= slope(meet) <= slope(upper)` and both ends approach 1 for large ratios.
pub fn slope_bracket(trials: usize, seed: u64) -> SuiteReport {
    let mut report = run_trials(Suite::Slope, trials, seed, |i, rng| {
        let mut t = Trial::default();
        let alpha = slope_sample(rng);
        let lower = slope_m(alpha, SlopeMode::Lower).unwrap();
        let meet = slope_m(alpha, SlopeMode::Meet).unwrap();
        let upper = slope_m(alpha, SlopeMode::Upper).unwrap();
        t.check(lower <= upper + 1e-9, || format!("trial {i}: alpha {alpha}: lower {lower} > upper {upper}"));
        t.check(lower <= meet + 1e-9, || format!("trial {i}: alpha {alpha}: meet {meet} < lower {lower}"));
        t.check(meet <= upper + 1e-9, || format!("trial {i}: alpha {alpha}: meet {meet} > upper {upper}"));
        t.track("max_meet_excess_over_upper", meet - upper);
        t
    });
    for mode in [SlopeMode::Lower, SlopeMode::Upper] {
        let v = slope_m(1e6, mode).unwrap();
        report.checks += 1;
        report.summary.insert(format!("{mode:?}_at_1e6").to_lowercase(), v);
        if (v - 1.0).abs() > 1e-5 {
            report.failures += 1;
            report.passed = false;
            report.details.push(format!("{mode:?} slope at alpha 1e6 is {v}"));
        }
    }
    report
}

/// Both lower-bound branches at `alpha R = 1/6`.
pub fn meet_point_values() -> (f64, f64) {
    ap_lower_branches(1.0, 1.0 / 6.0).expect("valid domain")
}
