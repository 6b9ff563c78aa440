#![allow(dead_code)]

use ndarray::{Array2, ArrayView2};
use prompt_story::{EmbeddingMatrix, PromptLayout};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, amp: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-amp..amp))
}

/// Random layout over `m >= 32` tokens with 1..=5 frames.
pub fn random_layout(rng: &mut ChaCha8Rng, m: usize) -> PromptLayout {
    let budget = m - 2;
    let n = rng.random_range(1..=5usize);
    let identity = rng.random_range(1..=6usize);
    let mut frames = Vec::with_capacity(n);
    let mut used = identity;
    for k in 0..n {
        let left_for_rest = n - k - 1;
        let max = (budget - used - left_for_rest).min(5);
        let len = rng.random_range(1..=max);
        used += len;
        frames.push(len);
    }
    PromptLayout::from_segment_lengths(identity, &frames, m).unwrap()
}

pub fn random_embedding(seed: u64, m: usize, d: usize) -> EmbeddingMatrix {
    let mut r = rng(seed);
    let layout = random_layout(&mut r, m);
    let data = uniform(&mut r, m, d, 1.0);
    EmbeddingMatrix::new(data, layout, "test").unwrap()
}

/// Singular values in descending order from nalgebra.
pub fn singular_values(x: ArrayView2<'_, f64>) -> Vec<f64> {
    let m = nalgebra::DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[[i, j]]);
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn frobenius(x: ArrayView2<'_, f64>) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
