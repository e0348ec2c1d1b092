//! Optimal tradeoff between compression rate and classification cost for
//! finite-alphabet label → data → compressed-data chains.
//!
//! Given a label prior, a generation channel P(x|y), a compressed alphabet
//! size, and decoding costs, the crate computes the smallest mutual
//! information I(X;X̃) any compression channel can achieve while keeping the
//! expected decoding cost within a budget. Fixing the decoder map makes the
//! design problem convex; the global optimum is the minimum over all decoder
//! maps, enumerated with relabeling symmetry pruned.
//!
//! Modules:
//! - [`prob`]: distributions, channels, costs, decoders, Bayes machinery.
//! - [`info`]: entropy and mutual information in bits.
//! - [`binary`]: the closed-form curve for the binary symmetric case.
//! - [`solver`]: one decoder-consistent convex program (log-barrier scheme).
//! - [`enumeration`]: global solves and budget sweeps over decoder maps.
//! - [`ib`]: the Information Bottleneck baseline.
//! - [`oracle`]: grid search, Monte Carlo, and gradient checks for
//!   independent verification.

pub mod binary;
pub mod enumeration;
pub mod error;
pub mod ib;
pub mod info;
pub mod oracle;
pub mod prob;
pub mod solver;

#[cfg(test)]
pub(crate) mod testfx;

pub use error::{Error, Result};
pub use prob::{
    bayes_floor, data_marginal, expected_cost, induced_decoder, posterior, CompressionChannel,
    CostMatrix, DecoderMap, GenerationChannel, LabelPrior, Posterior, ProblemInstance,
};
