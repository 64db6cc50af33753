//! Numerical extremal problems behind the AP bounds.
//!
//! Over `g: [0, 1] -> [0, 1]` with `integral g = tau`, the objective
//! `integral x / (x + alpha g(x)) dx` is AP written as a function of the
//! false-positive mass per recall level. Both oracles discretize `g` on `N`
//! uniform bins and use the midpoint rule.

use crate::error::{Error, Result};

use super::check_alpha;

/// Tolerance on the mean constraint after projection.
const MEAN_TOL: f64 = 1e-12;

/// A discretized `g` on uniform bins with its mean constraint `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct GFunction {
    grid: Vec<f64>,
    tau: f64,
}

impl GFunction {
    pub fn new(grid: Vec<f64>, tau: f64) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::validation("grid", "must have at least one bin"));
        }
        if let Some(bad) = grid.iter().find(|g| !(0.0..=1.0).contains(*g)) {
            return Err(Error::validation("grid", format!("value {bad} outside [0, 1]")));
        }
        let mean = grid.iter().sum::<f64>() / grid.len() as f64;
        if (mean - tau).abs() > 1e-9 {
            return Err(Error::validation("grid", format!("mean {mean} differs from tau {tau}")));
        }
        Ok(GFunction { grid, tau })
    }

    /// `g = 0` below `1 - tau` and `g = 1` above, with one fractional bin at the step.
    pub fn step(tau: f64, bins: usize) -> Result<Self> {
        check_tau(tau)?;
        let mass = tau * bins as f64;
        let full = (mass.floor() as usize).min(bins);
        let mut grid = vec![0.0; bins];
        for g in grid.iter_mut().skip(bins - full) {
            *g = 1.0;
        }
        let frac = mass - full as f64;
        if full < bins && frac > 0.0 {
            grid[bins - full - 1] = frac;
        }
        GFunction::new(grid, tau)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn bins(&self) -> usize {
        self.grid.len()
    }

    /// Midpoint-rule value of `integral x / (x + alpha g(x)) dx`.
    pub fn objective(&self, alpha: f64) -> f64 {
        let n = self.grid.len();
        self.grid
            .iter()
            .enumerate()
            .map(|(i, &g)| integrand(midpoint(i, n), alpha, g))
            .sum::<f64>()
            / n as f64
    }
}

fn midpoint(i: usize, n: usize) -> f64 {
    (i as f64 + 0.5) / n as f64
}

fn integrand(x: f64, alpha: f64, g: f64) -> f64 {
    x / (x + alpha * g)
}

fn check_tau(tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::validation("tau", format!("must lie in [0, 1], got {tau}")));
    }
    Ok(())
}

fn check_bins(bins: usize) -> Result<()> {
    if bins < 100 {
        return Err(Error::validation("grid_size", format!("need at least 100 bins, got {bins}")));
    }
    Ok(())
}

/// Whether the unconstrained minimizer of the AP objective respects `g <= 1`.
///
/// The stationary solution is `g(x) = (sqrt(x) s - x) / alpha` on `[0, kappa]`,
/// with `kappa = sqrt(6 alpha tau)`, `s = sqrt(kappa)` when `alpha tau < 1/6`,
/// and `kappa = 1`, `s = 1.5 (alpha tau + 1/2)` otherwise. Only where its
/// peak stays at or below one does the closed-form lower bound solve the
/// box-constrained problem.
pub fn lower_bound_feasible(alpha: f64, tau: f64) -> bool {
    let at = alpha * tau;
    let peak = if at < 1.0 / 6.0 {
        (6.0 * at).sqrt() / (4.0 * alpha)
    } else {
        let s = 1.5 * (at + 0.5);
        if s <= 2.0 {
            s * s / (4.0 * alpha)
        } else {
            (s - 1.0) / alpha
        }
    };
    peak <= 1.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinOracleOptions {
    pub bins: usize,
    pub max_iterations: usize,
    /// Stop once the relative objective change falls below this.
    pub rel_tol: f64,
}

impl Default for MinOracleOptions {
    fn default() -> Self {
        MinOracleOptions {
            bins: 2000,
            max_iterations: 100_000,
            rel_tol: 1e-10,
        }
    }
}

/// Projects `y` onto `{0 <= g <= 1, mean(g) = tau}` in the metric weighted by `h`.
///
/// The solution is `clip(y_i - mu / h_i, 0, 1)` for the scalar shift `mu`
/// that meets the mean, found by bisection.
fn project(y: &[f64], h: &[f64], tau: f64) -> Vec<f64> {
    let n = y.len() as f64;
    let at = |mu: f64| -> Vec<f64> {
        y.iter().zip(h).map(|(&yi, &hi)| (yi - mu / hi).clamp(0.0, 1.0)).collect()
    };
    let mean = |g: &[f64]| g.iter().sum::<f64>() / n;
    let mut lo = y.iter().zip(h).map(|(&yi, &hi)| hi * (yi - 1.0)).fold(f64::INFINITY, f64::min);
    let mut hi = y.iter().zip(h).map(|(&yi, &hi)| hi * yi).fold(f64::NEG_INFINITY, f64::max);
    // mean(at(mu)) decreases from 1 at `lo` to 0 at `hi`.
    let mut best = at(lo);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let g = at(mid);
        let m = mean(&g);
        if (m - tau).abs() <= MEAN_TOL {
            return g;
        }
        if m > tau {
            lo = mid;
        } else {
            hi = mid;
        }
        best = g;
        if hi - lo <= f64::EPSILON * lo.abs().max(hi.abs()) {
            break;
        }
    }
    // The bisection can stall on a plateau of clipped bins; spread the residual over free bins.
    let residual = tau * n - best.iter().sum::<f64>();
    let free: Vec<usize> = (0..best.len())
        .filter(|&i| if residual > 0.0 { best[i] < 1.0 } else { best[i] > 0.0 })
        .collect();
    if !free.is_empty() {
        let share = residual / free.len() as f64;
        for i in free {
            best[i] = (best[i] + share).clamp(0.0, 1.0);
        }
    }
    best
}

/// Minimizes the discretized AP objective at fixed ranking error `tau`.
///
/// Runs projected gradient descent in the metric given by the diagonal
/// Hessian of the (separable) objective, with Armijo backtracking. The
/// iterate stays feasible throughout.
pub fn variational_min_oracle(alpha: f64, tau: f64, options: MinOracleOptions) -> Result<f64> {
    check_alpha(alpha)?;
    check_tau(tau)?;
    check_bins(options.bins)?;
    if tau == 0.0 {
        return Ok(1.0);
    }
    let n = options.bins;
    let xs: Vec<f64> = (0..n).map(|i| midpoint(i, n)).collect();
    let objective = |g: &[f64]| -> f64 {
        xs.iter().zip(g).map(|(&x, &gi)| integrand(x, alpha, gi)).sum::<f64>() / n as f64
    };

    let mut g = vec![tau; n];
    let mut value = objective(&g);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut grad_norm = f64::INFINITY;

    for _ in 0..options.max_iterations {
        for i in 0..n {
            let d = xs[i] + alpha * g[i];
            grad[i] = -alpha * xs[i] / (d * d);
            hess[i] = (2.0 * alpha * alpha * xs[i] / (d * d * d)).max(1e-12);
        }
        let newton: Vec<f64> = (0..n).map(|i| g[i] - grad[i] / hess[i]).collect();
        let target = project(&newton, &hess, tau);
        let step: Vec<f64> = target.iter().zip(&g).map(|(t, gi)| t - gi).collect();
        grad_norm = step.iter().map(|s| s * s).sum::<f64>().sqrt();
        let slope: f64 = grad.iter().zip(&step).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        if slope >= 0.0 {
            // No descent direction left: the iterate is stationary.
            return Ok(value);
        }

        let mut t = 1.0;
        let mut candidate: Vec<f64>;
        let mut next;
        loop {
            candidate = g.iter().zip(&step).map(|(gi, s)| (gi + t * s).clamp(0.0, 1.0)).collect();
            next = objective(&candidate);
            if next <= value + 1e-4 * t * slope || t < 1e-12 {
                break;
            }
            t *= 0.5;
        }
        let change = (value - next).abs() / next.abs().max(f64::MIN_POSITIVE);
        if next <= value {
            g = candidate;
            value = next;
        }
        if change < options.rel_tol {
            return Ok(value);
        }
    }
    Err(Error::NonConvergence {
        iterations: options.max_iterations,
        objective: value,
        grad_norm,
        last_iterate: g,
    })
}

/// Objective of the step maximizer `g = 1 on [1 - tau, 1]`, after checking it is locally optimal.
///
/// Every feasible transfer of `1 / N` between two bins is tried; any move
/// that raises the objective is reported as an error naming the bin pair.
pub fn variational_max_oracle(alpha: f64, tau: f64, bins: usize) -> Result<f64> {
    check_alpha(alpha)?;
    check_bins(bins)?;
    let step = GFunction::step(tau, bins)?;
    let value = step.objective(alpha);
    let delta = 1.0 / bins as f64;
    let g = step.grid();

    // Objective change is separable: removing delta from bin i and adding it to bin j.
    let mut removals: Vec<(f64, usize)> = Vec::new();
    let mut additions: Vec<(f64, usize)> = Vec::new();
    for (i, &gi) in g.iter().enumerate() {
        let x = midpoint(i, bins);
        let here = integrand(x, alpha, gi);
        if gi - delta >= 0.0 {
            removals.push(((integrand(x, alpha, gi - delta) - here) / bins as f64, i));
        }
        if gi + delta <= 1.0 {
            additions.push(((integrand(x, alpha, gi + delta) - here) / bins as f64, i));
        }
    }
    let by_gain = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0);
    removals.sort_by(by_gain);
    additions.sort_by(by_gain);

    let tol = 1e-12 * value.abs().max(1.0);
    for &(gain_from, from) in removals.iter().take(2) {
        if let Some(&(gain_to, to)) = additions.iter().find(|(_, j)| *j != from) {
            let change = gain_from + gain_to;
            if change > tol {
                return Err(Error::numerical(format!(
                    "moving {delta} from bin {from} to bin {to} raises the objective by {change:e}"
                )));
            }
        }
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn closed_lower(alpha: f64, tau: f64) -> f64 {
        let at = alpha * tau;
        (1.0 - (2.0 * at / 3.0).sqrt()).max((8.0 / 9.0) / (1.0 + 2.0 * at))
    }

    #[test]
    fn feasibility_of_closed_form_minimizer() {
        for alpha in [0.5, 1.0, 5.0, 50.0] {
            for tau in [0.05, 1.0 / 6.0, 0.3, 0.5] {
                assert!(lower_bound_feasible(alpha, tau), "({alpha}, {tau})");
            }
            assert!(!lower_bound_feasible(alpha, 0.9), "({alpha}, 0.9)");
        }
    }

    #[test]
    fn step_has_exact_mass() {
        let g = GFunction::step(0.3337, 2000).unwrap();
        assert!((g.grid().iter().sum::<f64>() / 2000.0 - 0.3337).abs() < 1e-12);
        assert_eq!(g.grid()[1999], 1.0);
        assert_eq!(g.grid()[0], 0.0);
        assert_eq!(GFunction::step(1.0, 100).unwrap().grid(), &[1.0; 100][..]);
    }

    #[test]
    fn gfunction_validates() {
        assert!(GFunction::new(vec![0.5, 1.5], 1.0).is_err());
        assert!(GFunction::new(vec![0.5, 0.5], 0.4).is_err());
        let g = GFunction::new(vec![0.0; 10], 0.0).unwrap();
        assert_eq!(g.objective(3.0), 1.0);
    }

    #[test]
    fn projection_meets_mean() {
        let y = [-0.5, 0.2, 0.9, 1.7, 0.4];
        let h = [1.0, 2.0, 0.5, 3.0, 1.0];
        for tau in [0.0, 0.1, 0.35, 0.8, 1.0] {
            let g = project(&y, &h, tau);
            let mean = g.iter().sum::<f64>() / 5.0;
            assert!((mean - tau).abs() < 1e-10, "tau {tau}: mean {mean}");
            assert!(g.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn min_oracle_examples() {
        let opts = MinOracleOptions::default();
        let v = variational_min_oracle(1.0, 1.0 / 6.0, opts).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-3, "{v}");
        let v = variational_min_oracle(1.0, 0.5, opts).unwrap();
        assert!((v - 4.0 / 9.0).abs() < 1e-3, "{v}");
        assert_eq!(variational_min_oracle(1.0, 0.0, opts).unwrap(), 1.0);
    }

    #[test]
    fn min_oracle_never_beats_the_unconstrained_minimum() {
        // Here the unconstrained minimizer would need g > 1, so the box binds.
        let v = variational_min_oracle(1.0, 0.9, MinOracleOptions::default()).unwrap();
        assert!(v >= closed_lower(1.0, 0.9) - 1e-3, "{v}");
    }

    #[test]
    fn min_oracle_rejects_small_grids() {
        let opts = MinOracleOptions { bins: 10, ..Default::default() };
        assert!(variational_min_oracle(1.0, 0.5, opts).is_err());
    }

    #[test]
    fn min_oracle_reports_non_convergence() {
        let opts = MinOracleOptions { max_iterations: 1, rel_tol: 0.0, ..Default::default() };
        match variational_min_oracle(5.0, 0.3, opts) {
            Err(Error::NonConvergence { last_iterate, iterations, .. }) => {
                assert_eq!(iterations, 1);
                assert_eq!(last_iterate.len(), 2000);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn max_oracle_examples() {
        let v = variational_max_oracle(1.0, 0.5, 2000).unwrap();
        assert!((v - (1.0 + (0.75_f64).ln())).abs() < 1e-3, "{v}");
        let v = variational_max_oracle(1.0, 1e-3, 2000).unwrap();
        assert!((v - 1.0).abs() < 1e-3);
        let v = variational_max_oracle(5.0, 0.2, 2000).unwrap();
        assert!((v - (1.0 + 5.0 * (1.0 - 0.2 / 6.0_f64).ln())).abs() < 1e-3, "{v}");
    }
}
