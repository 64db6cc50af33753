//! Deterministic fixtures shared by the benchmarks.

use ecm_core::ScoreSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Positives skewed toward high scores, negatives toward low ones, with `ties`
/// distinct levels when nonzero.
pub fn score_set(n_pos: usize, n_neg: usize, ties: u32, seed: u64) -> ScoreSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |bias: f64| {
        let u: f64 = rng.random::<f64>().powf(bias);
        if ties > 0 {
            (u * ties as f64).round() / ties as f64
        } else {
            u
        }
    };
    let pos = (0..n_pos).map(|_| draw(0.5)).collect();
    let neg = (0..n_neg).map(|_| draw(2.0)).collect();
    ScoreSet::new(pos, neg).expect("scores lie in [0, 1]")
}
