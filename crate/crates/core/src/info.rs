//! Entropy and mutual information for discrete distributions, in bits.
//!
//! All logarithms are base 2. Zero-probability terms are skipped (the
//! 0·log 0 = 0 convention); no epsilon is ever added to a probability.

use crate::error::{Error, Result};

/// Absolute tolerance for "sums to one" checks on distributions and
/// channel rows.
pub const SUM_TOL: f64 = 1e-12;

/// Shannon entropy H(p) in bits.
pub fn entropy(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum()
}

/// Binary entropy H2(p) in bits.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// Kullback-Leibler divergence D(p ‖ q) in bits.
///
/// Returns `f64::INFINITY` when q assigns zero mass to a point where p is
/// positive.
pub fn kl_divergence_bits(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return f64::INFINITY;
            }
            total += a * (a / b).log2();
        }
    }
    total
}

fn check_distribution(name: &str, probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::Validation(format!("{name} is empty")));
    }
    for (idx, &p) in probs.iter().enumerate() {
        if !(0.0..=1.0).contains(&p) || !p.is_finite() {
            return Err(Error::Validation(format!(
                "{name} entry {idx} is {p}, expected a probability in [0, 1]"
            )));
        }
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SUM_TOL {
        return Err(Error::Validation(format!(
            "{name} sums to {sum}, expected 1 within {SUM_TOL}"
        )));
    }
    Ok(())
}

/// Mutual information I(input; output) in bits for a source distribution and
/// a row-stochastic channel (one row per input letter).
///
/// Validates that the input is a distribution and that every channel row is a
/// distribution of the same width; rejects rather than renormalizes.
pub fn mutual_information(input: &[f64], channel: &[Vec<f64>]) -> Result<f64> {
    check_distribution("input distribution", input)?;
    if channel.len() != input.len() {
        return Err(Error::Validation(format!(
            "channel has {} rows but input has {} entries",
            channel.len(),
            input.len()
        )));
    }
    let width = channel.first().map(|r| r.len()).unwrap_or(0);
    for (j, row) in channel.iter().enumerate() {
        if row.len() != width {
            return Err(Error::Validation(format!(
                "channel row {j} has {} entries, expected {width}",
                row.len()
            )));
        }
        check_distribution(&format!("channel row {j}"), row)?;
    }
    Ok(mutual_information_raw(input, channel))
}

/// The double-sum I = Σ_j Σ_k p_j Q_jk log2(Q_jk / q_k) without input
/// validation, defined for any nonnegative matrix.
///
/// Used internally where the matrix is constructed to be stochastic, and by
/// finite-difference probes that perturb single entries. Tiny negative
/// rounding residue is clamped to zero so the reported value respects
/// I ≥ 0.
pub(crate) fn mutual_information_raw(input: &[f64], channel: &[Vec<f64>]) -> f64 {
    let width = channel.first().map(|r| r.len()).unwrap_or(0);
    let mut marginal = vec![0.0; width];
    for (j, row) in channel.iter().enumerate() {
        for (k, &q) in row.iter().enumerate() {
            marginal[k] += input[j] * q;
        }
    }
    let mut total = 0.0;
    for (j, row) in channel.iter().enumerate() {
        if input[j] <= 0.0 {
            continue;
        }
        for (k, &q) in row.iter().enumerate() {
            if q > 0.0 && marginal[k] > 0.0 {
                total += input[j] * q * (q / marginal[k]).log2();
            }
        }
    }
    total.max(0.0)
}

/// Analytic gradient of [`mutual_information_raw`] with respect to each
/// channel entry: ∂I/∂Q_jk = p_j · log2(Q_jk / q_k).
///
/// Requires a strictly positive channel (all entries > 0).
pub(crate) fn mutual_information_gradient(input: &[f64], channel: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let width = channel.first().map(|r| r.len()).unwrap_or(0);
    let mut marginal = vec![0.0; width];
    for (j, row) in channel.iter().enumerate() {
        for (k, &q) in row.iter().enumerate() {
            marginal[k] += input[j] * q;
        }
    }
    channel
        .iter()
        .enumerate()
        .map(|(j, row)| {
            row.iter()
                .enumerate()
                .map(|(k, &q)| input[j] * (q / marginal[k]).log2())
                .collect()
        })
        .collect()
}
