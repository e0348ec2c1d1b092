//! Independent verification layer: exhaustive grid search over compression
//! channels, Monte Carlo cost estimation, and finite-difference gradient
//! checks. These are the ground truth the solver is compared against; they
//! deliberately share no code path with it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::info::{mutual_information_gradient, mutual_information_raw};
use crate::prob::{data_marginal, CompressionChannel, DecoderMap, ProblemInstance};

/// Largest instance (data letters × compressed letters) the grid search
/// accepts.
pub const GRID_VARIABLE_CAP: usize = 6;
/// Largest number of grid channels the search will enumerate.
pub const GRID_POINT_CAP: u128 = 100_000_000;
/// Feasibility slack for grid points.
pub const GRID_FEASIBILITY_TOL: f64 = 1e-9;

/// Best feasible channel found on the simplex grid.
#[derive(Debug, Clone)]
pub struct GridBest {
    pub mi_bits: f64,
    pub channel: CompressionChannel,
}

#[derive(Debug, Clone)]
pub struct GridSearchReport {
    pub step: f64,
    /// Present iff at least one grid channel was feasible.
    pub best: Option<GridBest>,
    pub feasible_count: usize,
    pub evaluated_count: usize,
}

impl GridSearchReport {
    pub fn best_mi(&self) -> Option<f64> {
        self.best.as_ref().map(|b| b.mi_bits)
    }
}

fn grid_rows(step: f64, l: usize) -> Result<Vec<Vec<f64>>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::Validation(format!(
            "step is {step}, expected in (0, 1]"
        )));
    }
    let resolution = (1.0 / step).round();
    if (resolution * step - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!(
            "step {step} does not divide 1 exactly"
        )));
    }
    let r = resolution as usize;
    // All compositions of r into l nonnegative parts.
    let mut rows = Vec::new();
    let mut counts = vec![0usize; l];
    compositions(r, 0, &mut counts, &mut rows, step);
    Ok(rows)
}

fn compositions(
    remaining: usize,
    pos: usize,
    counts: &mut Vec<usize>,
    out: &mut Vec<Vec<f64>>,
    step: f64,
) {
    if pos == counts.len() - 1 {
        counts[pos] = remaining;
        let mut row: Vec<f64> = counts.iter().map(|&c| c as f64 * step).collect();
        let head: f64 = row.iter().take(row.len() - 1).sum();
        let last = row.len() - 1;
        row[last] = 1.0 - head;
        out.push(row);
        return;
    }
    for c in 0..=remaining {
        counts[pos] = c;
        compositions(remaining - c, pos + 1, counts, out, step);
    }
}

fn guard_size(instance: &ProblemInstance, rows_per_letter: usize) -> Result<usize> {
    let n = instance.data_count();
    let l = instance.compressed_size();
    if n * l > GRID_VARIABLE_CAP {
        return Err(Error::TooLarge(format!(
            "grid search handles at most {GRID_VARIABLE_CAP} channel entries; this instance has {n}×{l}"
        )));
    }
    let total = (rows_per_letter as u128).checked_pow(n as u32);
    match total {
        Some(t) if t <= GRID_POINT_CAP => Ok(t as usize),
        _ => Err(Error::TooLarge(format!(
            "{rows_per_letter}^{n} grid channels exceed the cap of {GRID_POINT_CAP}"
        ))),
    }
}

struct GridScan<'a> {
    instance: &'a ProblemInstance,
    px: Vec<f64>,
    joint: Vec<Vec<f64>>,
}

impl<'a> GridScan<'a> {
    fn new(instance: &'a ProblemInstance) -> Self {
        Self {
            instance,
            px: data_marginal(instance),
            joint: instance.joint(),
        }
    }

    /// P(y_i, x̃_k) column for letter k of a candidate channel.
    fn letter_weights(&self, rows: &[&Vec<f64>], k: usize) -> Vec<f64> {
        let m = self.instance.label_count();
        (0..m)
            .map(|i| {
                rows.iter()
                    .enumerate()
                    .map(|(j, row)| self.joint[i][j] * row[k])
                    .sum()
            })
            .collect()
    }

    /// Cost of a candidate under the minimum-cost decoder.
    fn min_cost(&self, rows: &[&Vec<f64>]) -> f64 {
        let m = self.instance.label_count();
        let l = self.instance.compressed_size();
        let cost = self.instance.cost();
        let mut total = 0.0;
        for k in 0..l {
            let w = self.letter_weights(rows, k);
            let best = (0..m)
                .map(|dec| (0..m).map(|i| w[i] * cost.entry(i, dec)).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            total += best;
        }
        total
    }

    /// Cost of a candidate under a fixed decoder, plus its worst
    /// consistency violation.
    fn decoder_cost_and_violation(&self, rows: &[&Vec<f64>], decoder: &DecoderMap) -> (f64, f64) {
        let m = self.instance.label_count();
        let l = self.instance.compressed_size();
        let cost = self.instance.cost();
        let mut total = 0.0;
        let mut violation = 0.0_f64;
        for k in 0..l {
            let w = self.letter_weights(rows, k);
            let declared: f64 = (0..m).map(|i| w[i] * cost.entry(i, decoder.label(k))).sum();
            total += declared;
            for alt in 0..m {
                if alt == decoder.label(k) {
                    continue;
                }
                let other: f64 = (0..m).map(|i| w[i] * cost.entry(i, alt)).sum();
                violation = violation.max(declared - other);
            }
        }
        (total, violation)
    }

    fn mi(&self, rows: &[&Vec<f64>]) -> f64 {
        let owned: Vec<Vec<f64>> = rows.iter().map(|r| (*r).clone()).collect();
        mutual_information_raw(&self.px, &owned)
    }
}

fn scan_grid(
    instance: &ProblemInstance,
    step: f64,
    mut feasible: impl FnMut(&GridScan, &[&Vec<f64>]) -> bool,
) -> Result<GridSearchReport> {
    let l = instance.compressed_size();
    let n = instance.data_count();
    let candidates = grid_rows(step, l)?;
    let total = guard_size(instance, candidates.len())?;

    let scan = GridScan::new(instance);
    let mut indices = vec![0usize; n];
    let mut feasible_count = 0usize;
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let rows: Vec<&Vec<f64>> = indices.iter().map(|&i| &candidates[i]).collect();
        if feasible(&scan, &rows) {
            feasible_count += 1;
            let mi = scan.mi(&rows);
            if best.as_ref().map_or(true, |(b, _)| mi < *b) {
                best = Some((mi, indices.clone()));
            }
        }
        // Odometer over row choices.
        let mut pos = n;
        let mut done = true;
        while pos > 0 {
            pos -= 1;
            if indices[pos] + 1 < candidates.len() {
                indices[pos] += 1;
                indices.iter_mut().skip(pos + 1).for_each(|v| *v = 0);
                done = false;
                break;
            }
        }
        if done {
            break;
        }
    }

    let best = match best {
        Some((mi, indices)) => Some(GridBest {
            mi_bits: mi,
            channel: CompressionChannel::new(
                indices.iter().map(|&i| candidates[i].clone()).collect(),
            )?,
        }),
        None => None,
    };
    Ok(GridSearchReport {
        step,
        best,
        feasible_count,
        evaluated_count: total,
    })
}

/// Exhaustive search over all channels whose rows lie on the simplex grid
/// with the given step. A channel is feasible when its minimum-cost decoder
/// meets the budget; the report carries the lowest mutual information among
/// feasible channels.
pub fn grid_search(instance: &ProblemInstance, budget: f64, step: f64) -> Result<GridSearchReport> {
    scan_grid(instance, step, |scan, rows| {
        scan.min_cost(rows) <= budget + GRID_FEASIBILITY_TOL
    })
}

/// Grid search restricted to one decoder-consistent subproblem: a channel is
/// feasible when the fixed decoder meets the budget and is optimal for the
/// channel within [`GRID_FEASIBILITY_TOL`].
pub fn grid_search_for_decoder(
    instance: &ProblemInstance,
    decoder: &DecoderMap,
    budget: f64,
    step: f64,
) -> Result<GridSearchReport> {
    if decoder.len() != instance.compressed_size() {
        return Err(Error::Validation(format!(
            "decoder maps {} letters but the instance has compressed_size {}",
            decoder.len(),
            instance.compressed_size()
        )));
    }
    scan_grid(instance, step, |scan, rows| {
        let (cost, violation) = scan.decoder_cost_and_violation(rows, decoder);
        cost <= budget + GRID_FEASIBILITY_TOL && violation <= GRID_FEASIBILITY_TOL
    })
}

/// Monte Carlo estimate of the expected decoding cost by sampling
/// label → data → compressed-letter chains.
///
/// Returns `(estimate, standard_error)`. Reproducible bit-for-bit for a
/// given seed: the generator is ChaCha8, seeded portably.
pub fn monte_carlo_error(
    instance: &ProblemInstance,
    channel: &CompressionChannel,
    decoder: &DecoderMap,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if samples == 0 {
        return Err(Error::Validation("need at least one sample".into()));
    }
    if channel.data_count() != instance.data_count()
        || decoder.len() != channel.compressed_count()
    {
        return Err(Error::Validation(
            "channel/decoder dimensions do not match the instance".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prior = instance.prior().probs();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let y = sample_index(&mut rng, prior);
        let x = sample_index(&mut rng, &instance.generation().rows()[y]);
        let k = sample_index(&mut rng, &channel.rows()[x]);
        let c = instance.cost().entry(y, decoder.label(k));
        sum += c;
        sum_sq += c * c;
    }
    let n = samples as f64;
    let mean = sum / n;
    let std_err = if samples > 1 {
        let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok((mean, std_err))
}

fn sample_index(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Compare the analytic mutual-information gradient against central finite
/// differences, entry by entry. Returns the maximum relative error
/// (|analytic − numeric| / max(1, |analytic|)).
///
/// The channel must be strictly interior: every entry at least `10·h`.
pub fn gradient_check(
    instance: &ProblemInstance,
    channel: &CompressionChannel,
    h: f64,
) -> Result<f64> {
    if !(h > 0.0 && h < 0.1) {
        return Err(Error::Validation(format!(
            "difference step is {h}, expected in (0, 0.1)"
        )));
    }
    if channel.data_count() != instance.data_count() {
        return Err(Error::Validation(
            "channel does not match the instance".into(),
        ));
    }
    for (j, row) in channel.rows().iter().enumerate() {
        for &q in row {
            if q < 10.0 * h {
                return Err(Error::Validation(format!(
                    "channel row {j} has entry {q} below 10·h = {}; move the point inward or shrink h",
                    10.0 * h
                )));
            }
        }
    }
    let px = data_marginal(instance);
    let analytic = mutual_information_gradient(&px, channel.rows());
    let mut worst = 0.0_f64;
    let mut work: Vec<Vec<f64>> = channel.rows().to_vec();
    for j in 0..channel.data_count() {
        for k in 0..channel.compressed_count() {
            let orig = work[j][k];
            work[j][k] = orig + h;
            let plus = mutual_information_raw(&px, &work);
            work[j][k] = orig - h;
            let minus = mutual_information_raw(&px, &work);
            work[j][k] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let denom = analytic[j][k].abs().max(1.0);
            worst = worst.max((analytic[j][k] - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
