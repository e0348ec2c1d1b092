//! Closed-form optimal tradeoff for binary labels and data with uniform
//! prior and symmetric crossover.
//!
//! For label→data crossover `p1 < 1/2`, the optimal compression channel is
//! symmetric with some crossover `p2 ∈ [0, 1/2]`, achieving error
//! probability `p1 + p2 − 2·p1·p2` at rate `1 − H2(p2)` bits. This module is
//! both a fast path and the ground truth the general solver is checked
//! against. At `p2 = 1/2` the decoder decisions tie; the reported error is
//! still the formula value.

use crate::error::{Error, Result};
use crate::info::binary_entropy;
use crate::prob::{GenerationChannel, LabelPrior, ProblemInstance};

/// Binary symmetric problem: uniform labels, crossover `p1` between label
/// and data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryInstance {
    p1: f64,
}

impl BinaryInstance {
    pub fn new(p1: f64) -> Result<Self> {
        if !p1.is_finite() || !(0.0..0.5).contains(&p1) {
            return Err(Error::Validation(format!(
                "p1 is {p1}, expected a crossover probability in [0, 1/2)"
            )));
        }
        Ok(Self { p1 })
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }

    /// The equivalent general problem instance (two compressed letters,
    /// 0–1 cost).
    pub fn to_problem_instance(&self) -> ProblemInstance {
        let prior = LabelPrior::uniform(2);
        let gen = GenerationChannel::new(vec![
            vec![1.0 - self.p1, self.p1],
            vec![self.p1, 1.0 - self.p1],
        ])
        .expect("valid binary generation channel");
        ProblemInstance::new(prior, gen, 2, None).expect("valid binary instance")
    }
}

/// One point of the binary tradeoff: compression crossover `p2`, the error
/// probability it induces, and the rate in bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryTradeoffPoint {
    pub p2: f64,
    pub pe: f64,
    pub mi: f64,
}

fn check_p2(p2: f64) -> Result<()> {
    if !p2.is_finite() || !(0.0..=0.5).contains(&p2) {
        return Err(Error::Validation(format!(
            "p2 is {p2}, expected in [0, 1/2]"
        )));
    }
    Ok(())
}

/// Error probability p1 + p2 − 2·p1·p2 of the symmetric binary scheme.
pub fn binary_error(p1: f64, p2: f64) -> Result<f64> {
    let _ = BinaryInstance::new(p1)?;
    check_p2(p2)?;
    Ok(p1 + p2 - 2.0 * p1 * p2)
}

/// Rate 1 − H2(p2) in bits of the symmetric binary compression channel.
pub fn binary_rate(p2: f64) -> Result<f64> {
    check_p2(p2)?;
    Ok(1.0 - binary_entropy(p2))
}

/// The full tradeoff curve: `grid_size` points with p2 equally spaced over
/// [0, 1/2]. Error is strictly increasing and rate strictly decreasing
/// along the list.
pub fn binary_curve(p1: f64, grid_size: usize) -> Result<Vec<BinaryTradeoffPoint>> {
    let _ = BinaryInstance::new(p1)?;
    if grid_size < 2 {
        return Err(Error::Validation(format!(
            "grid_size is {grid_size}, expected at least 2"
        )));
    }
    let mut points = Vec::with_capacity(grid_size);
    for i in 0..grid_size {
        let p2 = 0.5 * i as f64 / (grid_size - 1) as f64;
        points.push(BinaryTradeoffPoint {
            p2,
            pe: binary_error(p1, p2)?,
            mi: binary_rate(p2)?,
        });
    }
    Ok(points)
}

/// The compression crossover that exactly meets an error budget:
/// p2 = (pe − p1) / (1 − 2·p1).
///
/// Budgets above 1/2 clamp to p2 = 1/2; budgets below p1 are below the
/// Bayes floor and fail.
pub fn invert_error_to_p2(p1: f64, pe_target: f64) -> Result<f64> {
    let _ = BinaryInstance::new(p1)?;
    if !pe_target.is_finite() {
        return Err(Error::Validation(format!(
            "error budget is {pe_target}, expected finite"
        )));
    }
    if pe_target < p1 {
        return Err(Error::Infeasible(format!(
            "error budget {pe_target} is below the Bayes floor {p1}"
        )));
    }
    if pe_target >= 0.5 {
        return Ok(0.5);
    }
    Ok((pe_target - p1) / (1.0 - 2.0 * p1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::info::mutual_information;
    use crate::prob::{expected_cost, induced_decoder, CompressionChannel};
    use crate::testfx;
    use rand::{Rng, SeedableRng};

    #[test]
    fn error_formula_fixtures() {
        assert_eq!(binary_error(0.3, 0.0).unwrap(), 0.3);
        assert_eq!(binary_error(0.3, 0.5).unwrap(), 0.5);
        assert!((binary_error(0.3, 0.1).unwrap() - 0.34).abs() < 1e-15);
        assert!(binary_error(0.5, 0.1).is_err());
        assert!(binary_error(0.3, 0.6).is_err());
    }

    #[test]
    fn rate_formula_fixtures() {
        assert_eq!(binary_rate(0.0).unwrap(), 1.0);
        assert_eq!(binary_rate(0.5).unwrap(), 0.0);
        assert!((binary_rate(0.1).unwrap() - 0.53101).abs() < 1e-5);
        assert!(binary_rate(-0.1).is_err());
    }

    #[test]
    fn curve_endpoints_and_midpoint() {
        let two = binary_curve(0.3, 2).unwrap();
        assert_eq!(two[0].p2, 0.0);
        assert_eq!(two[0].pe, 0.3);
        assert_eq!(two[0].mi, 1.0);
        assert_eq!(two[1].p2, 0.5);
        assert_eq!(two[1].pe, 0.5);
        assert_eq!(two[1].mi, 0.0);

        let three = binary_curve(0.3, 3).unwrap();
        assert_eq!(three[1].p2, 0.25);
        assert!((three[1].pe - 0.4).abs() < 1e-15);
        assert!((three[1].mi - 0.18872187554086717).abs() < 1e-15);

        assert!(binary_curve(0.3, 1).is_err());
    }

    #[test]
    fn noiseless_first_channel_error_equals_p2() {
        for point in binary_curve(0.0, 11).unwrap() {
            assert_eq!(point.pe, point.p2);
        }
    }

    #[test]
    fn curve_is_monotone() {
        let points = binary_curve(0.17, 33).unwrap();
        for pair in points.windows(2) {
            assert!(pair[1].pe > pair[0].pe);
            assert!(pair[1].mi < pair[0].mi);
        }
    }

    #[test]
    fn invert_fixtures() {
        assert!((invert_error_to_p2(0.3, 0.34).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(invert_error_to_p2(0.3, 0.3).unwrap(), 0.0);
        assert!(matches!(
            invert_error_to_p2(0.3, 0.29),
            Err(crate::error::Error::Infeasible(_))
        ));
        assert_eq!(invert_error_to_p2(0.3, 0.7).unwrap(), 0.5);
    }

    #[test]
    fn invert_round_trips_over_budget_range() {
        for p1 in [0.0, 0.1, 0.3, 0.45] {
            for i in 0..=40 {
                let pe = p1 + (0.5 - p1) * i as f64 / 40.0;
                let p2 = invert_error_to_p2(p1, pe).unwrap();
                let back = binary_error(p1, p2).unwrap();
                assert!((back - pe).abs() < 1e-12, "p1={p1} pe={pe} back={back}");
            }
        }
    }

    #[test]
    fn symmetrizing_preserves_error_and_lowers_rate() {
        // An asymmetric compression channel (crossovers p2, p3 with
        // p2 < 1 - p3) has the same MAP error as its symmetrized version
        // with crossover (p2+p3)/2, and at least its rate.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let mut tried = 0;
        while tried < 100 {
            let p1: f64 = rng.gen_range(0.05..0.45);
            let p2: f64 = rng.gen();
            let p3: f64 = rng.gen();
            if p2 + p3 >= 1.0 || (p2 - p3).abs() < 1e-9 {
                continue;
            }
            tried += 1;
            let inst = testfx::binary_instance(p1);
            let asym =
                CompressionChannel::new(vec![vec![1.0 - p2, p2], vec![p3, 1.0 - p3]]).unwrap();
            let mid = 0.5 * (p2 + p3);
            let sym =
                CompressionChannel::new(vec![vec![1.0 - mid, mid], vec![mid, 1.0 - mid]]).unwrap();

            let err_asym =
                expected_cost(&inst, &asym, &induced_decoder(&inst, &asym).unwrap()).unwrap();
            let err_sym =
                expected_cost(&inst, &sym, &induced_decoder(&inst, &sym).unwrap()).unwrap();
            assert!(
                (err_asym - err_sym).abs() < 1e-12,
                "p1={p1} p2={p2} p3={p3}: {err_asym} vs {err_sym}"
            );

            let px = crate::prob::data_marginal(&inst);
            let mi_asym = mutual_information(&px, asym.rows()).unwrap();
            let mi_sym = mutual_information(&px, sym.rows()).unwrap();
            assert!(mi_sym <= mi_asym + 1e-12);
        }
    }

    #[test]
    fn instance_validation() {
        assert!(BinaryInstance::new(0.0).is_ok());
        assert!(BinaryInstance::new(0.49).is_ok());
        assert!(BinaryInstance::new(0.5).is_err());
        assert!(BinaryInstance::new(-0.01).is_err());
        let inst = BinaryInstance::new(0.3).unwrap().to_problem_instance();
        assert_eq!(inst.label_count(), 2);
        assert_eq!(inst.compressed_size(), 2);
    }
}
