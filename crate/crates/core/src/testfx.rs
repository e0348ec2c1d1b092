//! Shared fixtures for unit tests: the two bundled example instances and
//! seeded random generators.

use rand::Rng;
use std::ops::RangeInclusive;

use crate::prob::{
    CompressionChannel, CostMatrix, GenerationChannel, LabelPrior, ProblemInstance,
};

/// Binary symmetric instance: uniform labels, crossover `p1`, two compressed
/// letters, 0–1 cost.
pub fn binary_instance(p1: f64) -> ProblemInstance {
    let prior = LabelPrior::uniform(2);
    let gen = GenerationChannel::new(vec![vec![1.0 - p1, p1], vec![p1, 1.0 - p1]]).unwrap();
    ProblemInstance::new(prior, gen, 2, None).unwrap()
}

/// 3 labels with prior (1/4, 1/4, 1/2), 3 data letters, 2 compressed
/// letters, and a cost table that makes mistakes on the heavy label nearly
/// free (0.0001).
pub fn skewed_prior_instance() -> ProblemInstance {
    let prior = LabelPrior::new(vec![0.25, 0.25, 0.5]).unwrap();
    let gen = GenerationChannel::new(vec![
        vec![0.9, 0.1, 0.0],
        vec![0.1, 0.9, 0.0],
        vec![0.05, 0.05, 0.9],
    ])
    .unwrap();
    let cost = CostMatrix::new(vec![
        vec![0.0, 1.0, 1.0],
        vec![1.0, 0.0, 1.0],
        vec![0.0001, 0.0001, 0.0],
    ])
    .unwrap();
    ProblemInstance::new(prior, gen, 2, Some(cost)).unwrap()
}

/// Same channel as [`skewed_prior_instance`] but with plain 0–1 cost.
pub fn skewed_prior_instance_zero_one_cost() -> ProblemInstance {
    let prior = LabelPrior::new(vec![0.25, 0.25, 0.5]).unwrap();
    let gen = GenerationChannel::new(vec![
        vec![0.9, 0.1, 0.0],
        vec![0.1, 0.9, 0.0],
        vec![0.05, 0.05, 0.9],
    ])
    .unwrap();
    ProblemInstance::new(prior, gen, 2, None).unwrap()
}

/// 3 uniform labels, 4 data letters, 3 compressed letters, with a cost
/// parameter `c` weighting mistakes on the first label.
pub fn parametric_cost_instance(c: f64) -> ProblemInstance {
    let prior = LabelPrior::new(vec![
        0.3333333333333333,
        0.3333333333333333,
        0.3333333333333333,
    ])
    .unwrap();
    let gen = GenerationChannel::new(vec![
        vec![0.995, 0.001, 0.002, 0.002],
        vec![0.001, 0.996, 0.001, 0.002],
        vec![0.002, 0.002, 0.994, 0.002],
    ])
    .unwrap();
    let cost = CostMatrix::new(vec![
        vec![0.0, c, c],
        vec![1.0, 0.0, 1.0],
        vec![1.0, 1.0, 0.0],
    ])
    .unwrap();
    ProblemInstance::new(prior, gen, 3, Some(cost)).unwrap()
}

/// The parametric instance with 0–1 cost instead of its cost table.
pub fn parametric_cost_instance_zero_one() -> ProblemInstance {
    let prior = LabelPrior::new(vec![
        0.3333333333333333,
        0.3333333333333333,
        0.3333333333333333,
    ])
    .unwrap();
    let gen = GenerationChannel::new(vec![
        vec![0.995, 0.001, 0.002, 0.002],
        vec![0.001, 0.996, 0.001, 0.002],
        vec![0.002, 0.002, 0.994, 0.002],
    ])
    .unwrap();
    ProblemInstance::new(prior, gen, 3, None).unwrap()
}

/// Dirichlet(1) sample with the last entry adjusted so the sum is exactly 1
/// up to f64 rounding.
pub fn random_distribution(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().ln()).collect();
    let sum: f64 = raw.iter().sum();
    let mut out: Vec<f64> = raw.iter().map(|&x| x / sum).collect();
    let head: f64 = out.iter().take(n - 1).sum();
    out[n - 1] = 1.0 - head;
    out
}

pub fn random_rows(rng: &mut impl Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows).map(|_| random_distribution(rng, cols)).collect()
}

pub fn random_compression(rng: &mut impl Rng, n: usize, l: usize) -> CompressionChannel {
    CompressionChannel::new(random_rows(rng, n, l)).unwrap()
}

pub fn random_instance(
    rng: &mut impl Rng,
    labels: RangeInclusive<usize>,
    data: RangeInclusive<usize>,
    compressed: RangeInclusive<usize>,
) -> ProblemInstance {
    let m = rng.gen_range(labels);
    let n = rng.gen_range(data);
    let l = rng.gen_range(compressed);
    let prior = LabelPrior::new(random_distribution(rng, m)).unwrap();
    let gen = GenerationChannel::new(random_rows(rng, m, n)).unwrap();
    // Random nonnegative cost with zero diagonal.
    let cost = CostMatrix::new(
        (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| if i == j { 0.0 } else { rng.gen_range(0.1..2.0) })
                    .collect()
            })
            .collect(),
    )
    .unwrap();
    ProblemInstance::new(prior, gen, l, Some(cost)).unwrap()
}

pub fn random_instance_zero_one(
    rng: &mut impl Rng,
    labels: RangeInclusive<usize>,
    data: RangeInclusive<usize>,
    compressed: RangeInclusive<usize>,
) -> ProblemInstance {
    let m = rng.gen_range(labels);
    let n = rng.gen_range(data);
    let l = rng.gen_range(compressed);
    let prior = LabelPrior::new(random_distribution(rng, m)).unwrap();
    let gen = GenerationChannel::new(random_rows(rng, m, n)).unwrap();
    ProblemInstance::new(prior, gen, l, None).unwrap()
}
