//! Global solution by enumerating decoder maps.
//!
//! The design problem is convex once the decoder map is fixed, so the global
//! optimum is the minimum over all m^l maps. Relabeling compressed letters
//! leaves both the objective and the constraints invariant, so by default
//! only one representative per equivalence class is solved: the maps with
//! non-decreasing label sequences, C(m+l−1, l) of them.

use crate::error::{Error, Result};
use crate::prob::{CompressionChannel, DecoderMap, ProblemInstance};
use crate::solver::{
    solve_subproblem, SolveStatus, SubproblemSpec, BUDGET_SLACK, CONSTRAINT_TOL, KKT_TOL,
};

/// Hard cap on the number of decoder maps that will be enumerated.
pub const ENUMERATION_CAP: usize = 1_000_000;

/// Enumerate decoder maps for `m` labels and `l` compressed letters.
///
/// With `canonical = false` all m^l maps are produced in lexicographic
/// order. With `canonical = true` one representative per relabeling class is
/// produced: the non-decreasing sequences, C(m+l−1, l) maps.
pub fn enumerate_decoders(m: usize, l: usize, canonical: bool) -> Result<Vec<DecoderMap>> {
    if m == 0 || l == 0 {
        return Err(Error::Validation(
            "label and compressed alphabet sizes must be positive".into(),
        ));
    }
    let count = if canonical {
        canonical_count(m, l)
    } else {
        full_count(m, l)
    };
    let Some(count) = count else {
        return Err(Error::TooLarge(format!(
            "{} decoder maps for m={m}, l={l} exceed the cap of {ENUMERATION_CAP}{}",
            if canonical { "canonical" } else { "m^l" },
            if canonical {
                ""
            } else {
                "; enable canonical pruning"
            }
        )));
    };

    let mut maps = Vec::with_capacity(count);
    let mut current = vec![0usize; l];
    'next: loop {
        maps.push(DecoderMap::new(current.clone(), m)?);
        // Advance to the successor in lexicographic order: increment the
        // rightmost entry below m-1 and reset the suffix (for canonical maps
        // the suffix repeats the incremented value, keeping the sequence
        // non-decreasing).
        let mut pos = l;
        while pos > 0 {
            pos -= 1;
            if current[pos] < m - 1 {
                current[pos] += 1;
                let fill = if canonical { current[pos] } else { 0 };
                for entry in current.iter_mut().skip(pos + 1) {
                    *entry = fill;
                }
                continue 'next;
            }
        }
        debug_assert_eq!(maps.len(), count);
        return Ok(maps);
    }
}

fn full_count(m: usize, l: usize) -> Option<usize> {
    let mut acc: usize = 1;
    for _ in 0..l {
        acc = acc.checked_mul(m)?;
        if acc > ENUMERATION_CAP {
            return None;
        }
    }
    Some(acc)
}

fn canonical_count(m: usize, l: usize) -> Option<usize> {
    // C(m+l-1, l) by the exact multiplicative recurrence.
    let mut c: u128 = 1;
    for i in 1..=l as u128 {
        c = c * (m as u128 - 1 + i) / i;
        if c > ENUMERATION_CAP as u128 {
            return None;
        }
    }
    Some(c as usize)
}

/// The winning subproblem of a global solve.
#[derive(Debug, Clone)]
pub struct GlobalBest {
    pub decoder: DecoderMap,
    pub channel: CompressionChannel,
    pub mi_bits: f64,
    pub achieved_cost: f64,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone)]
pub struct GlobalResult {
    /// Present unless every subproblem was infeasible.
    pub best: Option<GlobalBest>,
    pub subproblems_solved: usize,
    pub subproblems_infeasible: usize,
}

impl GlobalResult {
    pub fn is_feasible(&self) -> bool {
        self.best.is_some()
    }
}

/// Globally minimize I(X;X̃) under the cost budget, with canonical pruning.
pub fn global_solve(instance: &ProblemInstance, budget: f64) -> Result<GlobalResult> {
    global_solve_with(instance, budget, true)
}

/// As [`global_solve`], with explicit control over canonical pruning.
///
/// Ties in mutual information break to the lexicographically smallest
/// decoder among those enumerated, so the result is deterministic and
/// independent of scheduling.
pub fn global_solve_with(
    instance: &ProblemInstance,
    budget: f64,
    canonical: bool,
) -> Result<GlobalResult> {
    let decoders = enumerate_decoders(instance.label_count(), instance.compressed_size(), canonical)?;
    let mut best: Option<GlobalBest> = None;
    let mut infeasible = 0usize;
    let mut solved = 0usize;
    for decoder in decoders {
        let spec = SubproblemSpec::new(instance, decoder.clone(), budget)?;
        let result = solve_subproblem(&spec)?;
        solved += 1;
        match result.status {
            SolveStatus::Infeasible => infeasible += 1,
            SolveStatus::NumericalFailure => {
                return Err(Error::NumericalFailure(format!(
                    "subproblem for decoder {decoder} failed: {}",
                    result.message.unwrap_or_default()
                )));
            }
            SolveStatus::Optimal => {
                let sol = result.solution.expect("optimal result carries a solution");
                let replace = match &best {
                    None => true,
                    Some(b) => sol.mi_bits < b.mi_bits,
                };
                if replace {
                    best = Some(GlobalBest {
                        decoder,
                        channel: sol.channel,
                        mi_bits: sol.mi_bits,
                        achieved_cost: sol.achieved_cost,
                        kkt_residual: sol.kkt_residual,
                    });
                }
            }
        }
    }
    Ok(GlobalResult {
        best,
        subproblems_solved: solved,
        subproblems_infeasible: infeasible,
    })
}

/// Solver tolerances recorded alongside curve data.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Tolerances {
    pub budget_slack: f64,
    pub constraint_tol: f64,
    pub kkt_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            budget_slack: BUDGET_SLACK,
            constraint_tol: CONSTRAINT_TOL,
            kkt_tol: KKT_TOL,
        }
    }
}

#[derive(Debug, Clone)]
pub enum SweepOutcome {
    Optimal {
        mi_bits: f64,
        achieved_cost: f64,
        decoder: DecoderMap,
    },
    Infeasible,
    Failed {
        reason: String,
    },
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub budget: f64,
    pub outcome: SweepOutcome,
}

/// An ordered budget → minimal-rate curve with provenance metadata.
#[derive(Debug, Clone)]
pub struct TradeoffCurve {
    pub points: Vec<SweepPoint>,
    pub instance_digest: String,
    pub tolerances: Tolerances,
}

/// One global solve per budget. Budgets must be strictly increasing;
/// infeasible budgets are recorded as such and per-point failures do not
/// abort the rest of the sweep.
pub fn sweep(instance: &ProblemInstance, budgets: &[f64]) -> Result<TradeoffCurve> {
    sweep_with(instance, budgets, true)
}

pub fn sweep_with(
    instance: &ProblemInstance,
    budgets: &[f64],
    canonical: bool,
) -> Result<TradeoffCurve> {
    if budgets.is_empty() {
        return Err(Error::Validation("budget grid is empty".into()));
    }
    for (i, &b) in budgets.iter().enumerate() {
        if !b.is_finite() || b < 0.0 {
            return Err(Error::Validation(format!(
                "budget {i} is {b}, expected nonnegative"
            )));
        }
        if i > 0 && b <= budgets[i - 1] {
            return Err(Error::Validation(format!(
                "budgets must be strictly increasing (entry {i} is {b} after {})",
                budgets[i - 1]
            )));
        }
    }
    let mut points = Vec::with_capacity(budgets.len());
    for &budget in budgets {
        let outcome = match global_solve_with(instance, budget, canonical) {
            Ok(result) => match result.best {
                Some(best) => SweepOutcome::Optimal {
                    mi_bits: best.mi_bits,
                    achieved_cost: best.achieved_cost,
                    decoder: best.decoder,
                },
                None => SweepOutcome::Infeasible,
            },
            Err(Error::NumericalFailure(reason)) => SweepOutcome::Failed { reason },
            Err(e) => return Err(e),
        };
        points.push(SweepPoint { budget, outcome });
    }
    // Rate is non-increasing in the budget; a violation beyond tolerance
    // means a solver defect, reported rather than silently emitted.
    let mut previous: Option<f64> = None;
    for p in &points {
        if let SweepOutcome::Optimal { mi_bits, .. } = p.outcome {
            if let Some(prev) = previous {
                if mi_bits > prev + 1e-6 {
                    return Err(Error::NumericalFailure(format!(
                        "curve is not monotone: mi {mi_bits} after {prev} at budget {}",
                        p.budget
                    )));
                }
            }
            previous = Some(mi_bits);
        }
    }
    Ok(TradeoffCurve {
        points,
        instance_digest: instance.digest(),
        tolerances: Tolerances::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binary;
    use crate::testfx;
    use rand::{Rng, SeedableRng};

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_decoders(2, 2, false).unwrap().len(), 4);
        assert_eq!(enumerate_decoders(2, 2, true).unwrap().len(), 3);
        assert_eq!(enumerate_decoders(3, 3, false).unwrap().len(), 27);
        assert_eq!(enumerate_decoders(3, 3, true).unwrap().len(), 10);
        assert_eq!(enumerate_decoders(3, 2, false).unwrap().len(), 9);
        assert_eq!(enumerate_decoders(3, 2, true).unwrap().len(), 6);
        assert_eq!(enumerate_decoders(1, 5, false).unwrap().len(), 1);
    }

    #[test]
    fn enumeration_is_lexicographic() {
        let maps = enumerate_decoders(2, 2, false).unwrap();
        let seq: Vec<&[usize]> = maps.iter().map(|d| d.assignment()).collect();
        assert_eq!(seq, vec![&[0, 0][..], &[0, 1], &[1, 0], &[1, 1]]);

        let canonical = enumerate_decoders(3, 2, true).unwrap();
        let seq: Vec<&[usize]> = canonical.iter().map(|d| d.assignment()).collect();
        assert_eq!(
            seq,
            vec![&[0, 0][..], &[0, 1], &[0, 2], &[1, 1], &[1, 2], &[2, 2]]
        );
    }

    #[test]
    fn enumeration_guard_refuses_blowup() {
        // 10^7 full maps without pruning.
        let err = enumerate_decoders(10, 7, false).unwrap_err();
        assert!(matches!(err, Error::TooLarge(_)));
        // Canonical count for the same sizes is C(16,7) = 11440.
        assert_eq!(enumerate_decoders(10, 7, true).unwrap().len(), 11440);
    }

    #[test]
    fn global_loose_budget_reaches_zero_rate() {
        let inst = testfx::binary_instance(0.3);
        let result = global_solve(&inst, 0.5).unwrap();
        let best = result.best.unwrap();
        assert!(best.mi_bits.abs() < 1e-6, "mi {}", best.mi_bits);
    }

    #[test]
    fn global_matches_closed_form_at_tight_budget() {
        let inst = testfx::binary_instance(0.3);
        let result = global_solve(&inst, 0.34).unwrap();
        let best = result.best.unwrap();
        assert!(
            (best.mi_bits - 0.5310044064107188).abs() < 1e-3,
            "mi {}",
            best.mi_bits
        );
        assert_eq!(best.decoder.assignment(), &[0, 1]);
    }

    #[test]
    fn global_below_floor_is_infeasible() {
        let inst = testfx::binary_instance(0.3);
        let result = global_solve(&inst, 0.29).unwrap();
        assert!(result.best.is_none());
        assert_eq!(result.subproblems_infeasible, result.subproblems_solved);
    }

    #[test]
    fn canonical_pruning_is_lossless() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(37);
        for _ in 0..8 {
            let inst = testfx::random_instance(&mut rng, 2..=3, 2..=3, 2..=3);
            let budget = rng.gen_range(0.1..0.7);
            let canonical = global_solve_with(&inst, budget, true).unwrap();
            let full = global_solve_with(&inst, budget, false).unwrap();
            match (&canonical.best, &full.best) {
                (None, None) => {}
                (Some(a), Some(b)) => {
                    assert!(
                        (a.mi_bits - b.mi_bits).abs() < 1e-9,
                        "canonical {} vs full {}",
                        a.mi_bits,
                        b.mi_bits
                    );
                }
                other => panic!("feasibility mismatch: {other:?}"),
            }
        }
    }

    #[test]
    fn binary_sweep_tracks_closed_form() {
        let inst = testfx::binary_instance(0.3);
        let budgets = [0.3, 0.35, 0.4, 0.45, 0.5];
        let curve = sweep(&inst, &budgets).unwrap();
        for point in &curve.points {
            match &point.outcome {
                SweepOutcome::Optimal { mi_bits, .. } => {
                    let p2 = binary::invert_error_to_p2(0.3, point.budget).unwrap();
                    let expected = binary::binary_rate(p2).unwrap();
                    assert!(
                        (mi_bits - expected).abs() < 1e-3,
                        "budget {}: {} vs {}",
                        point.budget,
                        mi_bits,
                        expected
                    );
                }
                other => panic!("expected optimal at {}: {other:?}", point.budget),
            }
        }
    }

    #[test]
    fn sweep_below_floor_is_all_infeasible() {
        let inst = testfx::binary_instance(0.3);
        let curve = sweep(&inst, &[0.05, 0.15, 0.25]).unwrap();
        assert!(curve
            .points
            .iter()
            .all(|p| matches!(p.outcome, SweepOutcome::Infeasible)));
    }

    #[test]
    fn sweep_rejects_bad_grids() {
        let inst = testfx::binary_instance(0.3);
        assert!(sweep(&inst, &[]).is_err());
        assert!(sweep(&inst, &[0.4, 0.4]).is_err());
        assert!(sweep(&inst, &[0.4, 0.3]).is_err());
        assert!(sweep(&inst, &[-0.1, 0.3]).is_err());
    }

    #[test]
    fn returned_decoder_is_consistent_with_winner() {
        let inst = testfx::skewed_prior_instance();
        let result = global_solve(&inst, 0.2).unwrap();
        let best = result.best.unwrap();
        let induced = crate::prob::induced_decoder(&inst, &best.channel).unwrap();
        let declared = crate::prob::expected_cost(&inst, &best.channel, &best.decoder).unwrap();
        let attained = crate::prob::expected_cost(&inst, &best.channel, &induced).unwrap();
        assert!((declared - attained).abs() <= CONSTRAINT_TOL);
    }
}
