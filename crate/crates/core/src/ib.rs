//! Information Bottleneck baseline.
//!
//! Self-consistent alternating iterations for the functional
//! I(X;X̃) − β·I(Y;X̃): update P(x̃|x) ∝ P(x̃)·exp(−β·KL(P(y|x) ‖ P(y|x̃))),
//! then refresh the cluster marginal P(x̃) and the cluster posteriors
//! P(y|x̃). The iterations find local optima, so each solve runs several
//! random restarts plus a barycenter start and keeps the best objective.
//! KL divergences use base-2 logs, consistent with the rest of the crate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::info::{kl_divergence_bits, mutual_information_raw};
use crate::prob::{
    data_marginal, expected_cost, induced_decoder, CompressionChannel, ProblemInstance,
};

#[derive(Debug, Clone, Copy)]
pub struct IbOptions {
    pub seed: u64,
    /// Random restarts in addition to the barycenter start.
    pub restarts: usize,
    pub max_iterations: usize,
    /// Convergence threshold on the maximum entry change per sweep.
    pub tolerance: f64,
}

impl Default for IbOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            restarts: 10,
            max_iterations: 10_000,
            tolerance: 1e-9,
        }
    }
}

/// A converged (or best-effort) IB channel for one β.
#[derive(Debug, Clone)]
pub struct IbSolution {
    pub channel: CompressionChannel,
    pub beta: f64,
    pub mi_x: f64,
    pub mi_y: f64,
    pub converged: bool,
    pub restarts_used: usize,
}

#[derive(Debug, Clone)]
pub struct IbSweepPoint {
    pub beta: f64,
    pub mi_x: f64,
    pub cost: f64,
    pub converged: bool,
}

/// The default β schedule: 0 plus 40 logarithmically spaced points from
/// 0.01 to 1000.
pub fn default_beta_grid() -> Vec<f64> {
    let mut grid = vec![0.0];
    let (lo, hi, count) = (0.01_f64, 1000.0_f64, 40);
    for i in 0..count {
        let t = i as f64 / (count - 1) as f64;
        grid.push(10f64.powf(lo.log10() + t * (hi.log10() - lo.log10())));
    }
    grid
}

struct IbContext<'a> {
    instance: &'a ProblemInstance,
    px: Vec<f64>,
    /// P(y|x) per data letter (rows of length m); the prior for letters
    /// that never occur.
    posterior_given_x: Vec<Vec<f64>>,
    joint: Vec<Vec<f64>>,
    l: usize,
}

impl<'a> IbContext<'a> {
    fn new(instance: &'a ProblemInstance) -> Self {
        let px = data_marginal(instance);
        let joint = instance.joint();
        let m = instance.label_count();
        let n = instance.data_count();
        let posterior_given_x = (0..n)
            .map(|j| {
                if px[j] > 0.0 {
                    (0..m).map(|i| joint[i][j] / px[j]).collect()
                } else {
                    instance.prior().probs().to_vec()
                }
            })
            .collect();
        Self {
            instance,
            px,
            posterior_given_x,
            joint,
            l: instance.compressed_size(),
        }
    }

    /// One sweep of the self-consistent equations. Returns the max entry
    /// change.
    fn sweep(&self, beta: f64, q: &mut Vec<Vec<f64>>) -> f64 {
        let n = self.px.len();
        let m = self.instance.label_count();
        // Cluster marginal and cluster posteriors P(y|x̃).
        let mut cluster = vec![0.0; self.l];
        for (j, row) in q.iter().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                cluster[k] += self.px[j] * v;
            }
        }
        let mut posterior_given_cluster = vec![vec![0.0; m]; self.l];
        for k in 0..self.l {
            if cluster[k] > 0.0 {
                for i in 0..m {
                    let mass: f64 = (0..n).map(|j| self.joint[i][j] * q[j][k]).sum();
                    posterior_given_cluster[k][i] = mass / cluster[k];
                }
            } else {
                posterior_given_cluster[k] = self.instance.prior().probs().to_vec();
            }
        }

        let mut max_change = 0.0_f64;
        let mut logits = vec![0.0; self.l];
        for j in 0..n {
            for k in 0..self.l {
                let mut logit = if cluster[k] > 0.0 {
                    cluster[k].ln()
                } else {
                    f64::NEG_INFINITY
                };
                if beta > 0.0 && logit.is_finite() {
                    let kl =
                        kl_divergence_bits(&self.posterior_given_x[j], &posterior_given_cluster[k]);
                    logit = if kl.is_finite() {
                        logit - beta * kl
                    } else {
                        f64::NEG_INFINITY
                    };
                }
                logits[k] = logit;
            }
            let peak = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut row = vec![0.0; self.l];
            if peak.is_finite() {
                let mut total = 0.0;
                for k in 0..self.l {
                    row[k] = (logits[k] - peak).exp();
                    total += row[k];
                }
                row.iter_mut().for_each(|v| *v /= total);
            } else {
                row.iter_mut().for_each(|v| *v = 1.0 / self.l as f64);
            }
            for k in 0..self.l {
                max_change = max_change.max((row[k] - q[j][k]).abs());
            }
            q[j] = row;
        }
        max_change
    }

    fn objective(&self, beta: f64, q: &[Vec<f64>]) -> (f64, f64, f64) {
        let mi_x = mutual_information_raw(&self.px, q);
        let composite: Vec<Vec<f64>> = self
            .instance
            .generation()
            .rows()
            .iter()
            .map(|grow| {
                (0..self.l)
                    .map(|k| grow.iter().zip(q).map(|(&g, qrow)| g * qrow[k]).sum())
                    .collect()
            })
            .collect();
        let mi_y = mutual_information_raw(self.instance.prior().probs(), &composite);
        (mi_x - beta * mi_y, mi_x, mi_y)
    }
}

/// Rows drawn uniformly from the simplex (Dirichlet(1), by normalized
/// exponentials).
fn random_simplex_rows(rng: &mut impl rand::Rng, n: usize, l: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..l).map(|_| -rng.gen::<f64>().ln()).collect();
            let sum: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / sum).collect()
        })
        .collect()
}

fn normalize_rows_exactly(mut rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    for row in rows.iter_mut() {
        let head: f64 = row.iter().take(row.len() - 1).sum();
        let last = row.len() - 1;
        row[last] = (1.0 - head).max(0.0);
    }
    rows
}

/// Run the IB iterations for one β, best of all restarts by the IB
/// objective. Bit-reproducible for a fixed seed.
pub fn ib_solve(instance: &ProblemInstance, beta: f64, options: &IbOptions) -> Result<IbSolution> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::Validation(format!(
            "beta is {beta}, expected nonnegative"
        )));
    }
    let ctx = IbContext::new(instance);
    let n = instance.data_count();
    let l = instance.compressed_size();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);

    let mut starts: Vec<Vec<Vec<f64>>> = vec![vec![vec![1.0 / l as f64; l]; n]];
    for _ in 0..options.restarts {
        starts.push(random_simplex_rows(&mut rng, n, l));
    }

    let mut best: Option<(f64, Vec<Vec<f64>>, bool, f64, f64)> = None;
    for start in starts {
        let mut q = start;
        let mut converged = false;
        for _ in 0..options.max_iterations {
            let change = ctx.sweep(beta, &mut q);
            if change <= options.tolerance {
                converged = true;
                break;
            }
        }
        let (objective, mi_x, mi_y) = ctx.objective(beta, &q);
        let replace = match &best {
            None => true,
            Some((obj, ..)) => objective < *obj,
        };
        if replace {
            best = Some((objective, q, converged, mi_x, mi_y));
        }
    }
    let (_, q, converged, mi_x, mi_y) = best.expect("at least the barycenter start ran");
    let channel = CompressionChannel::new(normalize_rows_exactly(q))?;
    Ok(IbSolution {
        channel,
        beta,
        mi_x,
        mi_y,
        converged,
        restarts_used: options.restarts + 1,
    })
}

/// Evaluate the IB baseline across a β grid: for each β, the rate I(X;X̃)
/// and the expected cost of the IB channel under its minimum-cost decoder.
/// Non-converged points are kept and flagged.
pub fn ib_sweep(
    instance: &ProblemInstance,
    betas: &[f64],
    options: &IbOptions,
) -> Result<Vec<IbSweepPoint>> {
    for (i, &b) in betas.iter().enumerate() {
        if !b.is_finite() || b < 0.0 {
            return Err(Error::Validation(format!("beta {i} is {b}")));
        }
        if i > 0 && b < betas[i - 1] {
            return Err(Error::Validation(format!(
                "beta grid must be non-decreasing (entry {i} is {b} after {})",
                betas[i - 1]
            )));
        }
    }
    let mut points = Vec::with_capacity(betas.len());
    for &beta in betas {
        let solution = ib_solve(instance, beta, options)?;
        let decoder = induced_decoder(instance, &solution.channel)?;
        let cost = expected_cost(instance, &solution.channel, &decoder)?;
        points.push(IbSweepPoint {
            beta,
            mi_x: solution.mi_x,
            cost,
            converged: solution.converged,
        });
    }
    Ok(points)
}
