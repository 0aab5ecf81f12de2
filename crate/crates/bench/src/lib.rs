//! Seeded input generators shared by the benchmarks.

use marrow_core::ProbabilityMatrix;
use ndarray::{Array2, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` (predicted, actual) label pairs over `k` classes.
pub fn label_pairs(n: usize, k: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (rng.random_range(0..k), rng.random_range(0..k))).unzip()
}

/// Row-normalized random probabilities with labels covering every class.
pub fn scored_sample(n: usize, k: usize, seed: u64) -> (ProbabilityMatrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probs = Array2::from_shape_fn((n, k), |_| rng.random::<f64>() + 1e-3);
    for mut row in probs.rows_mut() {
        let s = row.sum();
        row /= s;
    }
    let labels = (0..n).map(|i| i % k).collect();
    (probs, labels)
}

/// A batch of NHWC pixels in [-1, 1].
pub fn pixel_batch(n: usize, size: usize, seed: u64) -> Array4<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array4::from_shape_fn((n, size, size, 3), |_| rng.random_range(-1.0..=1.0))
}
