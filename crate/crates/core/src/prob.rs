//! Finite-probability domain types and exact decoding arithmetic.
//!
//! The model is a label → data → compressed-data chain: a prior over `m`
//! labels, an m×n generation channel, and an n×l compression channel. A
//! decoder assigns each compressed letter a label; the minimum-cost decoder
//! (MAP under 0–1 cost) and its expected cost are computed here.
//!
//! Every distribution and channel row must sum to 1 within [`SUM_TOL`];
//! violations are rejected at construction, never silently normalized.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::info::SUM_TOL;

/// Column-sum tolerance for posterior matrices.
pub const POSTERIOR_TOL: f64 = 1e-10;

fn check_row(name: &str, idx: usize, row: &[f64]) -> Result<()> {
    for (col, &p) in row.iter().enumerate() {
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(Error::Validation(format!(
                "{name} row {idx} entry {col} is {p}, expected a probability in [0, 1]"
            )));
        }
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > SUM_TOL {
        return Err(Error::Validation(format!(
            "{name} row {idx} sums to {sum}, expected 1 within {SUM_TOL}"
        )));
    }
    Ok(())
}

/// Prior distribution over labels. All entries are strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelPrior {
    probs: Vec<f64>,
}

impl LabelPrior {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Validation("prior is empty".into()));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p <= 0.0 || p > 1.0 {
                return Err(Error::Validation(format!(
                    "prior entry {i} is {p}, expected strictly positive (drop zero-probability labels first)"
                )));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::Validation(format!(
                "prior sums to {sum}, expected 1 within {SUM_TOL}"
            )));
        }
        Ok(Self { probs })
    }

    /// Uniform prior over `m` labels.
    pub fn uniform(m: usize) -> Self {
        let mut probs = vec![1.0 / m as f64; m];
        let head: f64 = probs.iter().take(m - 1).sum();
        probs[m - 1] = 1.0 - head;
        Self { probs }
    }

    // Limiting-case constructor that skips the positivity check. Only for
    // unit tests probing degenerate priors.
    #[cfg(test)]
    pub(crate) fn new_allowing_zero(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// The m×n channel from labels to data letters, one row per label.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationChannel {
    matrix: Vec<Vec<f64>>,
}

impl GenerationChannel {
    pub fn new(matrix: Vec<Vec<f64>>) -> Result<Self> {
        if matrix.is_empty() || matrix[0].is_empty() {
            return Err(Error::Validation("generation channel is empty".into()));
        }
        let width = matrix[0].len();
        for (i, row) in matrix.iter().enumerate() {
            if row.len() != width {
                return Err(Error::Validation(format!(
                    "generation row {i} has {} entries, expected {width}",
                    row.len()
                )));
            }
            check_row("generation", i, row)?;
        }
        Ok(Self { matrix })
    }

    pub fn label_count(&self) -> usize {
        self.matrix.len()
    }

    pub fn data_count(&self) -> usize {
        self.matrix[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.matrix
    }
}

/// The n×l compression channel Q(k|j), one row per data letter. This is the
/// decision variable of the compression design problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompressionChannel {
    matrix: Vec<Vec<f64>>,
}

impl CompressionChannel {
    pub fn new(matrix: Vec<Vec<f64>>) -> Result<Self> {
        if matrix.is_empty() || matrix[0].is_empty() {
            return Err(Error::Validation("compression channel is empty".into()));
        }
        let width = matrix[0].len();
        for (j, row) in matrix.iter().enumerate() {
            if row.len() != width {
                return Err(Error::Validation(format!(
                    "compression row {j} has {} entries, expected {width}",
                    row.len()
                )));
            }
            check_row("compression", j, row)?;
        }
        Ok(Self { matrix })
    }

    /// The lossless channel: identity mapping with l = n.
    pub fn identity(n: usize) -> Self {
        let matrix = (0..n)
            .map(|j| {
                let mut row = vec![0.0; n];
                row[j] = 1.0;
                row
            })
            .collect();
        Self { matrix }
    }

    /// The uninformative channel: every row equal to the same distribution.
    pub fn constant(n: usize, row: Vec<f64>) -> Result<Self> {
        Self::new(vec![row; n])
    }

    pub fn data_count(&self) -> usize {
        self.matrix.len()
    }

    pub fn compressed_count(&self) -> usize {
        self.matrix[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.matrix
    }

    pub fn entry(&self, j: usize, k: usize) -> f64 {
        self.matrix[j][k]
    }
}

/// Nonnegative m×m decoding costs c(true label, decoded label) with zero
/// diagonal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostMatrix {
    matrix: Vec<Vec<f64>>,
}

impl CostMatrix {
    pub fn new(matrix: Vec<Vec<f64>>) -> Result<Self> {
        let m = matrix.len();
        if m == 0 {
            return Err(Error::Validation("cost matrix is empty".into()));
        }
        for (i, row) in matrix.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Validation(format!(
                    "cost row {i} has {} entries, expected {m} (matrix must be square)",
                    row.len()
                )));
            }
            for (j, &c) in row.iter().enumerate() {
                if !c.is_finite() || c < 0.0 {
                    return Err(Error::Validation(format!(
                        "cost row {i} entry {j} is {c}, expected nonnegative"
                    )));
                }
                if i == j && c != 0.0 {
                    return Err(Error::Validation(format!(
                        "cost diagonal entry {i} is {c}, expected 0"
                    )));
                }
            }
        }
        Ok(Self { matrix })
    }

    /// The 0–1 cost: 1 for every wrong label, 0 on the diagonal. Expected
    /// cost under it is the decoding error probability.
    pub fn zero_one(m: usize) -> Self {
        let matrix = (0..m)
            .map(|i| (0..m).map(|j| if i == j { 0.0 } else { 1.0 }).collect())
            .collect();
        Self { matrix }
    }

    pub fn label_count(&self) -> usize {
        self.matrix.len()
    }

    pub fn entry(&self, true_label: usize, decoded: usize) -> f64 {
        self.matrix[true_label][decoded]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.matrix
    }
}

/// A fixed decoding rule: entry k is the label index assigned to compressed
/// letter k.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct DecoderMap {
    assignment: Vec<usize>,
}

impl DecoderMap {
    pub fn new(assignment: Vec<usize>, label_count: usize) -> Result<Self> {
        if assignment.is_empty() {
            return Err(Error::Validation("decoder map is empty".into()));
        }
        for (k, &y) in assignment.iter().enumerate() {
            if y >= label_count {
                return Err(Error::Validation(format!(
                    "decoder entry {k} is label index {y}, expected < {label_count}"
                )));
            }
        }
        Ok(Self { assignment })
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn label(&self, k: usize) -> usize {
        self.assignment[k]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Serialize as a comma-free list of label names, e.g. `y1|y3`.
    pub fn format_with_labels(&self, labels: &[String]) -> String {
        self.assignment
            .iter()
            .map(|&y| labels[y].as_str())
            .collect::<Vec<_>>()
            .join("|")
    }
}

impl fmt::Display for DecoderMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.assignment.iter().map(|y| format!("{y}")).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// A complete problem instance: prior, generation channel, compressed
/// alphabet size, and decoding costs (0–1 by default).
#[derive(Debug, Clone, Serialize)]
pub struct ProblemInstance {
    labels: Vec<String>,
    data_letters: Vec<String>,
    prior: LabelPrior,
    generation: GenerationChannel,
    compressed_size: usize,
    cost: CostMatrix,
}

impl ProblemInstance {
    pub fn new(
        prior: LabelPrior,
        generation: GenerationChannel,
        compressed_size: usize,
        cost: Option<CostMatrix>,
    ) -> Result<Self> {
        let labels = (1..=prior.len()).map(|i| format!("y{i}")).collect();
        let data_letters = (1..=generation.data_count())
            .map(|j| format!("x{j}"))
            .collect();
        Self::with_names(labels, data_letters, prior, generation, compressed_size, cost)
    }

    pub fn with_names(
        labels: Vec<String>,
        data_letters: Vec<String>,
        prior: LabelPrior,
        generation: GenerationChannel,
        compressed_size: usize,
        cost: Option<CostMatrix>,
    ) -> Result<Self> {
        let m = prior.len();
        let n = generation.data_count();
        if generation.label_count() != m {
            return Err(Error::Validation(format!(
                "generation has {} rows but prior has {m} labels",
                generation.label_count()
            )));
        }
        if labels.len() != m {
            return Err(Error::Validation(format!(
                "{} label names for {m} labels",
                labels.len()
            )));
        }
        if data_letters.len() != n {
            return Err(Error::Validation(format!(
                "{} data letter names for {n} data letters",
                data_letters.len()
            )));
        }
        if compressed_size == 0 {
            return Err(Error::Validation(
                "compressed_size must be a positive integer".into(),
            ));
        }
        let cost = cost.unwrap_or_else(|| CostMatrix::zero_one(m));
        if cost.label_count() != m {
            return Err(Error::Validation(format!(
                "cost matrix is {0}×{0} but there are {m} labels",
                cost.label_count()
            )));
        }
        Ok(Self {
            labels,
            data_letters,
            prior,
            generation,
            compressed_size,
            cost,
        })
    }

    pub fn label_count(&self) -> usize {
        self.prior.len()
    }

    pub fn data_count(&self) -> usize {
        self.generation.data_count()
    }

    pub fn compressed_size(&self) -> usize {
        self.compressed_size
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn data_letters(&self) -> &[String] {
        &self.data_letters
    }

    pub fn prior(&self) -> &LabelPrior {
        &self.prior
    }

    pub fn generation(&self) -> &GenerationChannel {
        &self.generation
    }

    pub fn cost(&self) -> &CostMatrix {
        &self.cost
    }

    /// Joint probabilities P(y_i, x_j) as an m×n matrix.
    pub fn joint(&self) -> Vec<Vec<f64>> {
        self.prior
            .probs()
            .iter()
            .zip(self.generation.rows())
            .map(|(&p, row)| row.iter().map(|&g| p * g).collect())
            .collect()
    }

    /// Hex digest identifying the instance contents, for output metadata.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = serde_json::to_string(self).expect("instance serialization");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let out = hasher.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Load an instance from its JSON document form.
    ///
    /// `cost_params` supplies values for string tokens appearing in the cost
    /// matrix (e.g. a parametric cost `"c"`).
    pub fn from_json_str(text: &str, cost_params: &BTreeMap<String, f64>) -> Result<Self> {
        let raw: RawInstance = serde_json::from_str(text)?;
        raw.resolve(cost_params)
    }

    pub fn from_json_file(path: &Path, cost_params: &BTreeMap<String, f64>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text, cost_params)
    }
}

#[derive(Deserialize)]
struct RawInstance {
    labels: Vec<String>,
    prior: Vec<f64>,
    data_letters: Vec<String>,
    generation: Vec<Vec<f64>>,
    compressed_size: usize,
    #[serde(default)]
    cost: Option<Vec<Vec<CostEntry>>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CostEntry {
    Number(f64),
    Token(String),
}

impl RawInstance {
    fn resolve(self, cost_params: &BTreeMap<String, f64>) -> Result<ProblemInstance> {
        let prior = LabelPrior::new(self.prior)?;
        let generation = GenerationChannel::new(self.generation)?;
        let cost = match self.cost {
            None => None,
            Some(rows) => {
                let mut resolved = Vec::with_capacity(rows.len());
                for (i, row) in rows.into_iter().enumerate() {
                    let mut out = Vec::with_capacity(row.len());
                    for entry in row {
                        match entry {
                            CostEntry::Number(x) => out.push(x),
                            CostEntry::Token(tok) => match cost_params.get(&tok) {
                                Some(&x) => out.push(x),
                                None => {
                                    return Err(Error::Validation(format!(
                                        "cost row {i} uses parameter \"{tok}\" with no value; pass --cost-param {tok}=<value>"
                                    )))
                                }
                            },
                        }
                    }
                    resolved.push(out);
                }
                Some(CostMatrix::new(resolved)?)
            }
        };
        ProblemInstance::with_names(
            self.labels,
            self.data_letters,
            prior,
            generation,
            self.compressed_size,
            cost,
        )
    }
}

/// Marginal distribution p(x_j) = Σ_i P(y_i) P(x_j|y_i) over data letters.
pub fn data_marginal(instance: &ProblemInstance) -> Vec<f64> {
    let n = instance.data_count();
    let mut out = vec![0.0; n];
    for (p, row) in instance.prior.probs().iter().zip(instance.generation.rows()) {
        for (j, &g) in row.iter().enumerate() {
            out[j] += p * g;
        }
    }
    out
}

/// Posterior label probabilities given each compressed letter.
///
/// Columns for compressed letters with zero marginal probability are flagged
/// undefined (their stored values fall back to the prior); such letters are
/// never emitted, and any decoder assignment for them is consistent.
#[derive(Debug, Clone)]
pub struct Posterior {
    columns: Vec<Vec<f64>>,
    defined: Vec<bool>,
}

impl Posterior {
    pub fn compressed_count(&self) -> usize {
        self.columns.len()
    }

    /// P(y_i | x̃_k) for defined columns; the prior for undefined ones.
    pub fn column(&self, k: usize) -> &[f64] {
        &self.columns[k]
    }

    pub fn value(&self, label: usize, k: usize) -> f64 {
        self.columns[k][label]
    }

    pub fn is_defined(&self, k: usize) -> bool {
        self.defined[k]
    }
}

fn check_compression_dims(
    instance: &ProblemInstance,
    compression: &CompressionChannel,
) -> Result<()> {
    if compression.data_count() != instance.data_count() {
        return Err(Error::Validation(format!(
            "compression has {} rows but the instance has {} data letters",
            compression.data_count(),
            instance.data_count()
        )));
    }
    Ok(())
}

/// Joint probabilities P(y_i, x̃_k) as an m×l matrix.
fn label_compressed_joint(
    instance: &ProblemInstance,
    compression: &CompressionChannel,
) -> Vec<Vec<f64>> {
    let joint = instance.joint();
    let l = compression.compressed_count();
    joint
        .iter()
        .map(|jrow| {
            (0..l)
                .map(|k| {
                    jrow.iter()
                        .zip(compression.rows())
                        .map(|(&jx, qrow)| jx * qrow[k])
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// Bayes posterior P(y_i | x̃_k) for every compressed letter.
pub fn posterior(
    instance: &ProblemInstance,
    compression: &CompressionChannel,
) -> Result<Posterior> {
    check_compression_dims(instance, compression)?;
    let joint_lc = label_compressed_joint(instance, compression);
    let l = compression.compressed_count();
    let mut columns = Vec::with_capacity(l);
    let mut defined = Vec::with_capacity(l);
    for k in 0..l {
        let marginal: f64 = joint_lc.iter().map(|row| row[k]).sum();
        if marginal > 0.0 {
            columns.push(joint_lc.iter().map(|row| row[k] / marginal).collect());
            defined.push(true);
        } else {
            columns.push(instance.prior.probs().to_vec());
            defined.push(false);
        }
    }
    Ok(Posterior { columns, defined })
}

/// The minimum-posterior-expected-cost decoder for a compression channel.
///
/// Under 0–1 cost this is the MAP decoder. Ties break to the lowest label
/// index; compressed letters that are never emitted also take the lowest
/// label index (any assignment is consistent for them).
pub fn induced_decoder(
    instance: &ProblemInstance,
    compression: &CompressionChannel,
) -> Result<DecoderMap> {
    check_compression_dims(instance, compression)?;
    let joint_lc = label_compressed_joint(instance, compression);
    let m = instance.label_count();
    let l = compression.compressed_count();
    let mut assignment = Vec::with_capacity(l);
    for k in 0..l {
        let mut best = 0usize;
        let mut best_score = f64::INFINITY;
        for decoded in 0..m {
            let score: f64 = (0..m)
                .map(|i| joint_lc[i][k] * instance.cost.entry(i, decoded))
                .sum();
            if score < best_score {
                best_score = score;
                best = decoded;
            }
        }
        assignment.push(best);
    }
    DecoderMap::new(assignment, m)
}

/// Expected decoding cost Σ_k Σ_i Σ_j P(y_i) P(x_j|y_i) Q(k|j) c(y_i, ŷ_k).
///
/// With 0–1 cost this is the decoding error probability.
pub fn expected_cost(
    instance: &ProblemInstance,
    compression: &CompressionChannel,
    decoder: &DecoderMap,
) -> Result<f64> {
    check_compression_dims(instance, compression)?;
    if decoder.len() != compression.compressed_count() {
        return Err(Error::Validation(format!(
            "decoder maps {} letters but the channel emits {}",
            decoder.len(),
            compression.compressed_count()
        )));
    }
    let joint_lc = label_compressed_joint(instance, compression);
    let m = instance.label_count();
    let mut total = 0.0;
    for k in 0..decoder.len() {
        let decoded = decoder.label(k);
        for i in 0..m {
            total += joint_lc[i][k] * instance.cost.entry(i, decoded);
        }
    }
    Ok(total)
}

/// Minimum expected cost achievable when decoding directly from the
/// uncompressed data. No compression scheme can do better.
pub fn bayes_floor(instance: &ProblemInstance) -> f64 {
    let joint = instance.joint();
    let m = instance.label_count();
    let n = instance.data_count();
    let mut total = 0.0;
    for j in 0..n {
        let best = (0..m)
            .map(|decoded| {
                (0..m)
                    .map(|i| joint[i][j] * instance.cost.entry(i, decoded))
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min);
        total += best;
    }
    total
}
