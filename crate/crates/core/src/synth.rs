//! Synthetic interaction generators for tests and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::interactions::InteractionMatrix;

/// Random binary matrix with independent Bernoulli(`density`) entries.
pub fn random_interactions(
    num_users: usize,
    num_items: usize,
    density: f64,
    seed: u64,
) -> InteractionMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..num_users)
        .map(|_| {
            (0..num_items as u32)
                .filter(|_| rng.random::<f64>() < density)
                .collect()
        })
        .collect();
    InteractionMatrix::from_rows(num_items, rows).expect("generated rows are in range")
}

/// Zipf-skewed dataset: item `i` carries weight `(i + 1)^-exponent`, and
/// every user draws `items_per_user` distinct items without replacement,
/// proportionally to those weights (Gumbel top-k sampling).
pub fn zipf_interactions(
    num_users: usize,
    num_items: usize,
    items_per_user: usize,
    exponent: f64,
    seed: u64,
) -> InteractionMatrix {
    assert!(items_per_user <= num_items, "cannot draw more items than exist");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let log_weights: Vec<f64> = (0..num_items)
        .map(|i| -exponent * ((i + 1) as f64).ln())
        .collect();
    let mut keys: Vec<(f64, u32)> = vec![(0.0, 0); num_items];
    let rows = (0..num_users)
        .map(|_| {
            for (i, key) in keys.iter_mut().enumerate() {
                let u: f64 = rng.random();
                let gumbel = -(-u.ln()).ln();
                *key = (log_weights[i] + gumbel, i as u32);
            }
            keys.sort_unstable_by(|a, b| b.0.total_cmp(&a.0));
            keys[..items_per_user].iter().map(|&(_, i)| i).collect()
        })
        .collect();
    InteractionMatrix::from_rows(num_items, rows).expect("generated rows are in range")
}
