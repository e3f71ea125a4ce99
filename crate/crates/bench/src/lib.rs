//! Synthetic-data helpers shared by the benchmarks.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use mcsort::dataset::{CriterionScale, Direction, PerformanceTable};

/// A learnable random table: performances are uniform on [0, 1] and classes
/// are assigned by splitting the alternatives into `q` equal bands of mean
/// performance, so a monotone additive model separates them.
pub fn synthetic_table(
    n_alternatives: usize,
    n_criteria: usize,
    q: usize,
    seed: u64,
) -> PerformanceTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n_alternatives)
        .map(|_| (0..n_criteria).map(|_| rng.random::<f64>()).collect())
        .collect();
    let mut order: Vec<usize> = (0..n_alternatives).collect();
    let mean = |row: &[f64]| row.iter().sum::<f64>() / row.len() as f64;
    order.sort_by(|&a, &b| mean(&rows[a]).total_cmp(&mean(&rows[b])));
    let mut labels = vec![0usize; n_alternatives];
    for (rank, &idx) in order.iter().enumerate() {
        labels[idx] = 1 + (rank * q) / n_alternatives;
    }
    PerformanceTable::from_mapped_labels(
        (0..n_alternatives).map(|i| format!("a{i}")).collect(),
        rows,
        labels,
        (0..n_criteria).map(|j| format!("g{j}")).collect(),
        (1..=q as i64).collect(),
    )
    .unwrap()
}

/// Matching scales for [`synthetic_table`] rows: unit range, gain-type.
pub fn unit_scales(n_criteria: usize, gamma: usize) -> Vec<CriterionScale> {
    (0..n_criteria)
        .map(|_| CriterionScale::new(0.0, 1.0, Direction::Gain, gamma).unwrap())
        .collect()
}
