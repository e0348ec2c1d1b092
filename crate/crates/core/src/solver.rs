//! One decoder-consistent convex program: minimize I(X;X̃) over the
//! compression channel subject to a cost budget, row-simplex constraints,
//! and the linear inequalities forcing the declared decoder to be optimal.
//!
//! All constraints are linear in the channel, so the program is solved by a
//! log-barrier interior scheme. The simplex equalities are eliminated by
//! parametrizing each row over its first l−1 coordinates; each barrier stage
//! is centered with damped Newton steps (analytic gradient and Hessian of
//! the mutual-information objective) and a backtracking line search, and the
//! barrier parameter shrinks geometrically until the duality gap is closed.
//! Feasibility is decided first by a phase-1 program minimizing the maximum
//! constraint violation, which is itself a linear program run through the
//! same barrier machinery.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::info::mutual_information_raw;
use crate::prob::{expected_cost, CompressionChannel, DecoderMap, ProblemInstance};

/// Allowed overshoot of the cost budget for a result declared optimal.
pub const BUDGET_SLACK: f64 = 1e-7;
/// Maximum allowed violation of any constraint at a returned solution, and
/// the phase-1 threshold separating feasible from infeasible.
pub const CONSTRAINT_TOL: f64 = 1e-8;
/// Maximum stationarity residual certifying a solution as optimal.
pub const KKT_TOL: f64 = 1e-6;

const BARRIER_GAP: f64 = 1e-10;
const PHASE1_GAP: f64 = 1e-12;
const STAGE_ITERATION_CAP: usize = 10_000;
const NEWTON_DECREMENT_TOL: f64 = 1e-11;
const MIN_CHANNEL_ENTRY: f64 = 1e-12;
const ACTIVE_SLACK: f64 = 1e-4;
const RELAX_MARGIN: f64 = 1e-9;

/// One convex subproblem: an instance, a fixed decoder map, and a cost
/// budget.
#[derive(Debug, Clone)]
pub struct SubproblemSpec<'a> {
    instance: &'a ProblemInstance,
    decoder: DecoderMap,
    budget: f64,
}

impl<'a> SubproblemSpec<'a> {
    pub fn new(instance: &'a ProblemInstance, decoder: DecoderMap, budget: f64) -> Result<Self> {
        if decoder.len() != instance.compressed_size() {
            return Err(Error::Validation(format!(
                "decoder maps {} letters but the instance has compressed_size {}",
                decoder.len(),
                instance.compressed_size()
            )));
        }
        if !budget.is_finite() || budget < 0.0 {
            return Err(Error::Validation(format!(
                "budget is {budget}, expected a nonnegative real"
            )));
        }
        Ok(Self {
            instance,
            decoder,
            budget,
        })
    }

    pub fn instance(&self) -> &ProblemInstance {
        self.instance
    }

    pub fn decoder(&self) -> &DecoderMap {
        &self.decoder
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

/// The solution payload present when a solve is optimal.
#[derive(Debug, Clone)]
pub struct SolutionInfo {
    pub channel: CompressionChannel,
    pub mi_bits: f64,
    pub achieved_cost: f64,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Present exactly when `status == Optimal`.
    pub solution: Option<SolutionInfo>,
    pub iterations: usize,
    pub message: Option<String>,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn mi_bits(&self) -> Option<f64> {
        self.solution.as_ref().map(|s| s.mi_bits)
    }
}

/// Outcome of the phase-1 feasibility program.
#[derive(Debug, Clone)]
pub enum Feasibility {
    Feasible {
        witness: CompressionChannel,
        max_violation: f64,
    },
    Infeasible {
        min_violation: f64,
    },
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ConstraintKind {
    Coordinate,
    RowSum,
    Budget,
    Consistency,
}

#[derive(Debug, Clone)]
struct Constraint {
    a: Vec<f64>,
    b: f64,
    kind: ConstraintKind,
}

impl Constraint {
    fn slack(&self, x: &[f64]) -> f64 {
        self.b - dot(&self.a, x)
    }

    fn relaxable(&self) -> bool {
        matches!(
            self.kind,
            ConstraintKind::Budget | ConstraintKind::Consistency
        )
    }
}

/// The subproblem in reduced coordinates: each channel row j contributes the
/// free variables z_{j,0..l-1}, with the last column recovered as
/// 1 − Σ_k z_{j,k}.
struct Program {
    n: usize,
    l: usize,
    dim: usize,
    px: Vec<f64>,
    cons: Vec<Constraint>,
}

impl Program {
    fn build(spec: &SubproblemSpec) -> Program {
        let instance = spec.instance;
        let m = instance.label_count();
        let n = instance.data_count();
        let l = instance.compressed_size();
        let dim = n * (l - 1);
        let joint = instance.joint();
        let px = crate::prob::data_marginal(instance);
        let cost = instance.cost();
        let dec = &spec.decoder;

        // Per-entry budget coefficients: A[j][k] = Σ_i P(y_i, x_j) c(y_i, ŷ_k).
        let coef: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                (0..l)
                    .map(|k| {
                        (0..m)
                            .map(|i| joint[i][j] * cost.entry(i, dec.label(k)))
                            .sum()
                    })
                    .collect()
            })
            .collect();

        let idx = |j: usize, k: usize| j * (l - 1) + k;
        let mut cons = Vec::new();

        for j in 0..n {
            for k in 0..l - 1 {
                let mut a = vec![0.0; dim];
                a[idx(j, k)] = -1.0;
                cons.push(Constraint {
                    a,
                    b: 0.0,
                    kind: ConstraintKind::Coordinate,
                });
            }
        }
        for j in 0..n {
            let mut a = vec![0.0; dim];
            for k in 0..l - 1 {
                a[idx(j, k)] = 1.0;
            }
            cons.push(Constraint {
                a,
                b: 1.0,
                kind: ConstraintKind::RowSum,
            });
        }

        let mut a = vec![0.0; dim];
        let mut fixed = 0.0;
        for j in 0..n {
            for k in 0..l - 1 {
                a[idx(j, k)] = coef[j][k] - coef[j][l - 1];
            }
            fixed += coef[j][l - 1];
        }
        cons.push(Constraint {
            a,
            b: spec.budget - fixed,
            kind: ConstraintKind::Budget,
        });

        // Decoder consistency: for each letter k and competitor y', the
        // declared label must not have higher posterior-expected cost:
        // Σ_j d_j Q(k|j) ≤ 0 with d_j = Σ_i P(y_i, x_j)(c(i, ŷ_k) − c(i, y')).
        for k in 0..l {
            for alt in 0..m {
                if alt == dec.label(k) {
                    continue;
                }
                let d: Vec<f64> = (0..n)
                    .map(|j| {
                        (0..m)
                            .map(|i| {
                                joint[i][j] * (cost.entry(i, dec.label(k)) - cost.entry(i, alt))
                            })
                            .sum()
                    })
                    .collect();
                let mut a = vec![0.0; dim];
                let b;
                if k < l - 1 {
                    for j in 0..n {
                        a[idx(j, k)] = d[j];
                    }
                    b = 0.0;
                } else {
                    for j in 0..n {
                        for kk in 0..l - 1 {
                            a[idx(j, kk)] = -d[j];
                        }
                    }
                    b = -d.iter().sum::<f64>();
                }
                cons.push(Constraint {
                    a,
                    b,
                    kind: ConstraintKind::Consistency,
                });
            }
        }

        Program { n, l, dim, px, cons }
    }

    fn barycenter(&self) -> Vec<f64> {
        vec![1.0 / self.l as f64; self.dim]
    }

    fn channel_rows(&self, z: &[f64]) -> Vec<Vec<f64>> {
        let mut rows = Vec::with_capacity(self.n);
        for j in 0..self.n {
            let block = &z[j * (self.l - 1)..(j + 1) * (self.l - 1)];
            let mut row = Vec::with_capacity(self.l);
            row.extend_from_slice(block);
            row.push(1.0 - block.iter().sum::<f64>());
            rows.push(row);
        }
        rows
    }

    fn min_channel_entry(&self, z: &[f64]) -> f64 {
        let mut min = f64::INFINITY;
        for j in 0..self.n {
            let block = &z[j * (self.l - 1)..(j + 1) * (self.l - 1)];
            let mut sum = 0.0;
            for &v in block {
                min = min.min(v);
                sum += v;
            }
            min = min.min(1.0 - sum);
        }
        min
    }

    /// Mutual information in bits, without the reporting-time clamp to zero.
    fn mi_value(&self, z: &[f64]) -> f64 {
        let rows = self.channel_rows(z);
        let mut marginal = vec![0.0; self.l];
        for (j, row) in rows.iter().enumerate() {
            for (k, &q) in row.iter().enumerate() {
                marginal[k] += self.px[j] * q;
            }
        }
        let mut total = 0.0;
        for (j, row) in rows.iter().enumerate() {
            if self.px[j] <= 0.0 {
                continue;
            }
            for (k, &q) in row.iter().enumerate() {
                if q > 0.0 && marginal[k] > 0.0 {
                    total += self.px[j] * q * (q / marginal[k]).ln();
                }
            }
        }
        total / LN_2
    }

    /// Gradient of the reduced objective: ∂I/∂z_{j,k} =
    /// p_j log2(Q_{j,k}/q_k) − p_j log2(Q_{j,l−1}/q_{l−1}).
    fn mi_gradient(&self, z: &[f64], out: &mut [f64]) {
        let rows = self.channel_rows(z);
        let mut marginal = vec![0.0; self.l];
        for (j, row) in rows.iter().enumerate() {
            for (k, &q) in row.iter().enumerate() {
                marginal[k] += self.px[j] * q;
            }
        }
        for j in 0..self.n {
            let p = self.px[j];
            let last = rows[j][self.l - 1];
            for k in 0..self.l - 1 {
                let g = if p > 0.0 {
                    p * ((rows[j][k] / marginal[k]).ln() - (last / marginal[self.l - 1]).ln())
                        / LN_2
                } else {
                    0.0
                };
                out[j * (self.l - 1) + k] = g;
            }
        }
    }

    fn mi_hessian(&self, z: &[f64], out: &mut [Vec<f64>]) {
        let rows = self.channel_rows(z);
        let mut marginal = vec![0.0; self.l];
        for (j, row) in rows.iter().enumerate() {
            for (k, &q) in row.iter().enumerate() {
                marginal[k] += self.px[j] * q;
            }
        }
        let lm1 = self.l - 1;
        for j in 0..self.n {
            for k in 0..lm1 {
                let r = j * lm1 + k;
                for jj in 0..self.n {
                    for kk in 0..lm1 {
                        let c = jj * lm1 + kk;
                        let mut h = -self.px[j] * self.px[jj] / marginal[lm1];
                        if k == kk {
                            h -= self.px[j] * self.px[jj] / marginal[k];
                        }
                        if j == jj {
                            h += self.px[j] / rows[j][lm1];
                            if k == kk {
                                h += self.px[j] / rows[j][k];
                            }
                        }
                        out[r][c] = h / LN_2;
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Barrier machinery
// ---------------------------------------------------------------------------

trait ObjectiveFn {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    fn hessian(&self, x: &[f64], out: &mut [Vec<f64>]);
}

struct MiObjective<'a>(&'a Program);

impl ObjectiveFn for MiObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        self.0.mi_value(x)
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        self.0.mi_gradient(x, out);
    }
    fn hessian(&self, x: &[f64], out: &mut [Vec<f64>]) {
        self.0.mi_hessian(x, out);
    }
}

struct LinearObjective(Vec<f64>);

impl ObjectiveFn for LinearObjective {
    fn value(&self, x: &[f64]) -> f64 {
        dot(&self.0, x)
    }
    fn gradient(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }
    fn hessian(&self, _x: &[f64], out: &mut [Vec<f64>]) {
        for row in out.iter_mut() {
            row.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

struct BarrierProblem<'a> {
    dim: usize,
    cons: &'a [Constraint],
    objective: &'a dyn ObjectiveFn,
    /// Keeps every channel entry at least `MIN_CHANNEL_ENTRY` during the
    /// line search; `None` when the variables are not channel coordinates
    /// alone (phase 1 appends the violation variable, which is unclamped).
    entry_guard: Option<(&'a Program, usize)>,
}

impl BarrierProblem<'_> {
    fn strictly_feasible(&self, x: &[f64]) -> bool {
        if self.cons.iter().any(|c| c.slack(x) <= 0.0) {
            return false;
        }
        if let Some((prog, width)) = self.entry_guard {
            if prog.min_channel_entry(&x[..width]) < MIN_CHANNEL_ENTRY {
                return false;
            }
        }
        true
    }

    /// Barrier merit f(x) + μ·φ(x). Keeping the objective unscaled keeps the
    /// merit O(1) at small μ, so Newton-step improvements stay resolvable in
    /// f64.
    fn merit(&self, mu: f64, x: &[f64]) -> f64 {
        let mut phi = 0.0;
        for c in self.cons {
            let s = c.slack(x);
            if s <= 0.0 {
                return f64::INFINITY;
            }
            phi -= s.ln();
        }
        self.objective.value(x) + mu * phi
    }
}

struct StageOutcome {
    iterations: usize,
    converged: bool,
}

/// Center `x` for barrier weight `mu` with damped Newton steps on
/// f + μ·φ.
fn newton_stage(bp: &BarrierProblem, mu: f64, x: &mut [f64]) -> StageOutcome {
    let dim = bp.dim;
    let mut grad = vec![0.0; dim];
    let mut hess = vec![vec![0.0; dim]; dim];
    for iter in 0..STAGE_ITERATION_CAP {
        bp.objective.gradient(x, &mut grad);
        bp.objective.hessian(x, &mut hess);
        for con in bp.cons {
            let s = con.slack(x);
            debug_assert!(s > 0.0, "iterate left the interior");
            let inv = mu / s;
            let inv2 = mu / (s * s);
            for r in 0..dim {
                if con.a[r] == 0.0 {
                    continue;
                }
                grad[r] += con.a[r] * inv;
                for c in 0..dim {
                    if con.a[c] != 0.0 {
                        hess[r][c] += con.a[r] * con.a[c] * inv2;
                    }
                }
            }
        }

        let step = match solve_spd(&hess, &grad) {
            Some(mut d) => {
                d.iter_mut().for_each(|v| *v = -*v);
                d
            }
            None => {
                return StageOutcome {
                    iterations: iter,
                    converged: false,
                }
            }
        };
        let decrement = -dot(&grad, &step);
        if decrement <= 2.0 * NEWTON_DECREMENT_TOL {
            return StageOutcome {
                iterations: iter,
                converged: true,
            };
        }

        // Largest step keeping strict feasibility, then Armijo backtracking.
        let mut alpha: f64 = 1.0;
        for con in bp.cons {
            let along = dot(&con.a, &step);
            if along > 0.0 {
                alpha = alpha.min(0.99 * con.slack(x) / along);
            }
        }
        let merit0 = bp.merit(mu, x);
        // The Armijo decrease must stay resolvable in f64, otherwise a stiff
        // stage can loop forever on zero-progress steps.
        let floor = 1e-14 * (1.0 + merit0.abs());
        let mut candidate = x.to_vec();
        let mut accepted = false;
        for _ in 0..80 {
            for r in 0..dim {
                candidate[r] = x[r] + alpha * step[r];
            }
            if bp.strictly_feasible(&candidate) {
                let merit = bp.merit(mu, &candidate);
                if merit <= merit0 - (1e-4 * alpha * decrement).max(floor) {
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if std::env::var_os("SOLVER_TRACE").is_some() {
            eprintln!(
                "iter {iter}: decrement {decrement:.3e} alpha {alpha:.3e} accepted {accepted} merit {merit0:.12e}"
            );
        }
        if !accepted {
            // No acceptable step; treat the stage as converged at this point.
            return StageOutcome {
                iterations: iter,
                converged: true,
            };
        }
        x.copy_from_slice(&candidate);
    }
    StageOutcome {
        iterations: STAGE_ITERATION_CAP,
        converged: false,
    }
}

// ---------------------------------------------------------------------------
// Phase 1: minimize the maximum violation of budget/consistency constraints
// ---------------------------------------------------------------------------

struct Phase1Outcome {
    witness: Vec<f64>,
    max_violation: f64,
    iterations: usize,
}

fn max_relaxable_violation(prog: &Program, z: &[f64]) -> f64 {
    prog.cons
        .iter()
        .filter(|c| c.relaxable())
        .map(|c| dot(&c.a, z) - c.b)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn phase1(prog: &Program) -> Result<Phase1Outcome> {
    let dim = prog.dim;
    let ext = dim + 1;
    let cons: Vec<Constraint> = prog
        .cons
        .iter()
        .map(|c| {
            let mut a = Vec::with_capacity(ext);
            a.extend_from_slice(&c.a);
            a.push(if c.relaxable() { -1.0 } else { 0.0 });
            Constraint {
                a,
                b: c.b,
                kind: c.kind,
            }
        })
        .collect();
    let mut objective_dir = vec![0.0; ext];
    objective_dir[dim] = 1.0;
    let objective = LinearObjective(objective_dir);
    let bp = BarrierProblem {
        dim: ext,
        cons: &cons,
        objective: &objective,
        entry_guard: Some((prog, dim)),
    };

    let mut x = prog.barycenter();
    let v0 = max_relaxable_violation(prog, &x);
    x.push(v0.max(0.0) + 1.0);
    debug_assert!(bp.strictly_feasible(&x));

    let mut mu = 1.0;
    let mcons = cons.len() as f64;
    let mut total_iters = 0usize;
    loop {
        let outcome = newton_stage(&bp, mu, &mut x);
        total_iters += outcome.iterations;
        if !outcome.converged {
            return Err(Error::NumericalFailure(format!(
                "feasibility phase stalled after {total_iters} iterations"
            )));
        }
        let measured = max_relaxable_violation(prog, &x[..dim]);
        let gap = mcons * mu;
        // Early certificates: deep strict feasibility, or an objective lower
        // bound already above the infeasibility threshold.
        if measured <= -1e-3 {
            break;
        }
        if x[dim] - gap > CONSTRAINT_TOL {
            break;
        }
        // Near-zero violations need no further refinement: the decision is
        // already settled, and squeezing harder only drives the witness into
        // a corner of the feasible set.
        if measured.abs() <= RELAX_MARGIN && gap <= RELAX_MARGIN {
            break;
        }
        if gap <= PHASE1_GAP {
            break;
        }
        mu *= 0.1;
    }
    let witness = x[..dim].to_vec();
    Ok(Phase1Outcome {
        max_violation: max_relaxable_violation(prog, &witness),
        witness,
        iterations: total_iters,
    })
}

/// Decide feasibility of a subproblem by phase 1, returning a witness
/// channel or the certified minimum violation.
pub fn check_feasibility(spec: &SubproblemSpec) -> Result<Feasibility> {
    let prog = Program::build(spec);
    if prog.dim == 0 {
        let z: Vec<f64> = Vec::new();
        let v = max_relaxable_violation(&prog, &z);
        let rows = prog.channel_rows(&z);
        return Ok(if v <= CONSTRAINT_TOL {
            Feasibility::Feasible {
                witness: CompressionChannel::new(rows)?,
                max_violation: v.max(0.0),
            }
        } else {
            Feasibility::Infeasible { min_violation: v }
        });
    }
    let outcome = phase1(&prog)?;
    if outcome.max_violation <= CONSTRAINT_TOL {
        let rows = prog.channel_rows(&outcome.witness);
        Ok(Feasibility::Feasible {
            witness: CompressionChannel::new(rows)?,
            max_violation: outcome.max_violation.max(0.0),
        })
    } else {
        Ok(Feasibility::Infeasible {
            min_violation: outcome.max_violation,
        })
    }
}

// ---------------------------------------------------------------------------
// Phase 2: minimize mutual information over the (relaxed) feasible set
// ---------------------------------------------------------------------------

fn failure(iterations: usize, message: impl Into<String>) -> SolveResult {
    SolveResult {
        status: SolveStatus::NumericalFailure,
        solution: None,
        iterations,
        message: Some(message.into()),
    }
}

/// Solve the subproblem.
///
/// An `Optimal` status guarantees: every row on the simplex, achieved cost
/// within [`BUDGET_SLACK`] of the budget, every consistency violation within
/// [`CONSTRAINT_TOL`], and a stationarity residual within [`KKT_TOL`].
/// Infeasibility is certified by phase 1; iteration-cap exhaustion is
/// reported as `NumericalFailure`, never as a silent optimum.
pub fn solve_subproblem(spec: &SubproblemSpec) -> Result<SolveResult> {
    let prog = Program::build(spec);

    if prog.dim == 0 {
        return solve_trivial(spec, &prog);
    }

    let p1 = match phase1(&prog) {
        Ok(p1) => p1,
        Err(Error::NumericalFailure(msg)) => return Ok(failure(0, msg)),
        Err(e) => return Err(e),
    };
    let mut iterations = p1.iterations;
    if p1.max_violation > CONSTRAINT_TOL {
        return Ok(SolveResult {
            status: SolveStatus::Infeasible,
            solution: None,
            iterations,
            message: Some(format!(
                "phase-1 minimum constraint violation {:.3e} exceeds {CONSTRAINT_TOL:.0e}",
                p1.max_violation
            )),
        });
    }

    // Relax budget/consistency constraints just enough to give the barrier a
    // nonempty interior even when the feasible set is a lower-dimensional
    // face (ties, budgets exactly at the Bayes floor).
    let delta = p1.max_violation.max(0.0) + RELAX_MARGIN;
    let relaxed: Vec<Constraint> = prog
        .cons
        .iter()
        .map(|c| {
            let mut c = c.clone();
            if c.relaxable() {
                c.b += delta;
            }
            c
        })
        .collect();
    let objective = MiObjective(&prog);
    let bp = BarrierProblem {
        dim: prog.dim,
        cons: &relaxed,
        objective: &objective,
        entry_guard: Some((&prog, prog.dim)),
    };

    // Start at the barycenter when it is strictly inside, otherwise blend it
    // toward the phase-1 witness.
    let barycenter = prog.barycenter();
    let mut start = None;
    for lambda in [0.0, 1e-3, 1e-2, 0.1, 0.5, 0.9, 0.99, 1.0] {
        let candidate: Vec<f64> = barycenter
            .iter()
            .zip(&p1.witness)
            .map(|(&b, &w)| (1.0 - lambda) * b + lambda * w)
            .collect();
        if bp.strictly_feasible(&candidate) {
            start = Some(candidate);
            break;
        }
    }
    let mut x = match start {
        Some(x) => x,
        None => return Ok(failure(iterations, "no strictly interior start found")),
    };

    let mcons = relaxed.len() as f64;
    let mut mu = 1.0;
    loop {
        let outcome = newton_stage(&bp, mu, &mut x);
        iterations += outcome.iterations;
        if !outcome.converged {
            return Ok(failure(
                iterations,
                format!("barrier stage at mu={mu:.1e} hit the iteration cap"),
            ));
        }
        if mcons * mu <= BARRIER_GAP {
            break;
        }
        mu *= 0.1;
    }

    let rows = prog.channel_rows(&x);
    let channel = match CompressionChannel::new(rows) {
        Ok(c) => c,
        Err(e) => return Ok(failure(iterations, format!("solution rejected: {e}"))),
    };
    let mi_bits = mutual_information_raw(&prog.px, channel.rows());
    let achieved_cost = expected_cost(spec.instance, &channel, &spec.decoder)?;
    let kkt = kkt_residual_at(&prog, &x);

    let worst_violation = prog
        .cons
        .iter()
        .filter(|c| c.relaxable())
        .map(|c| dot(&c.a, &x) - c.b)
        .fold(0.0_f64, f64::max);
    if achieved_cost > spec.budget + BUDGET_SLACK {
        return Ok(failure(
            iterations,
            format!("achieved cost {achieved_cost} misses budget {}", spec.budget),
        ));
    }
    if worst_violation > CONSTRAINT_TOL {
        return Ok(failure(
            iterations,
            format!("constraint violation {worst_violation:.3e} above tolerance"),
        ));
    }
    if kkt > KKT_TOL {
        return Ok(failure(
            iterations,
            format!("stationarity residual {kkt:.3e} above {KKT_TOL:.0e}"),
        ));
    }

    Ok(SolveResult {
        status: SolveStatus::Optimal,
        solution: Some(SolutionInfo {
            channel,
            mi_bits,
            achieved_cost,
            kkt_residual: kkt,
        }),
        iterations,
        message: None,
    })
}

/// With a single compressed letter there are no free variables: the channel
/// is the all-ones column and the constraints either hold or do not.
fn solve_trivial(spec: &SubproblemSpec, prog: &Program) -> Result<SolveResult> {
    let z: Vec<f64> = Vec::new();
    let v = max_relaxable_violation(prog, &z);
    if v > CONSTRAINT_TOL {
        return Ok(SolveResult {
            status: SolveStatus::Infeasible,
            solution: None,
            iterations: 0,
            message: Some(format!("fixed channel violates constraints by {v:.3e}")),
        });
    }
    let channel = CompressionChannel::new(prog.channel_rows(&z))?;
    let achieved_cost = expected_cost(spec.instance, &channel, &spec.decoder)?;
    Ok(SolveResult {
        status: SolveStatus::Optimal,
        solution: Some(SolutionInfo {
            channel,
            mi_bits: 0.0,
            achieved_cost,
            kkt_residual: 0.0,
        }),
        iterations: 0,
        message: None,
    })
}

// ---------------------------------------------------------------------------
// KKT certification
// ---------------------------------------------------------------------------

fn kkt_residual_at(prog: &Program, z: &[f64]) -> f64 {
    if prog.dim == 0 {
        return 0.0;
    }
    let mut grad = vec![0.0; prog.dim];
    prog.mi_gradient(z, &mut grad);
    // Near-active constraints are offered to the nonnegative least-squares
    // fit. Constraints violated beyond the activity tolerance are excluded:
    // they cannot be active at a feasible optimum, and excluding them keeps
    // the residual sensitive to infeasible perturbations.
    let active: Vec<&Constraint> = prog
        .cons
        .iter()
        .filter(|c| c.slack(z).abs() <= ACTIVE_SLACK)
        .collect();
    if active.is_empty() {
        return norm2(&grad);
    }
    let multipliers = nonnegative_least_squares(&active, &grad);
    let mut residual = grad;
    for (con, &lambda) in active.iter().zip(&multipliers) {
        for r in 0..prog.dim {
            residual[r] += lambda * con.a[r];
        }
    }
    norm2(&residual)
}

/// Stationarity residual of the Lagrangian at a strictly interior channel,
/// with nonnegative multipliers fitted over the (near-)active constraints.
/// Zero at the true optimum of the subproblem.
pub fn kkt_residual(spec: &SubproblemSpec, channel: &CompressionChannel) -> Result<f64> {
    if channel.data_count() != spec.instance.data_count()
        || channel.compressed_count() != spec.instance.compressed_size()
    {
        return Err(Error::Validation(format!(
            "channel is {}×{} but the instance needs {}×{}",
            channel.data_count(),
            channel.compressed_count(),
            spec.instance.data_count(),
            spec.instance.compressed_size()
        )));
    }
    for (j, row) in channel.rows().iter().enumerate() {
        for &q in row {
            if q < MIN_CHANNEL_ENTRY {
                return Err(Error::Validation(format!(
                    "channel row {j} has an entry {q} below the interior tolerance {MIN_CHANNEL_ENTRY}"
                )));
            }
        }
    }
    let prog = Program::build(spec);
    let lm1 = spec.instance.compressed_size() - 1;
    let mut z = Vec::with_capacity(prog.dim);
    for row in channel.rows() {
        z.extend_from_slice(&row[..lm1]);
    }
    Ok(kkt_residual_at(&prog, &z))
}

/// Lawson–Hanson style nonnegative least squares:
/// minimize ‖g + Σ_i λ_i a_i‖₂ over λ ≥ 0.
fn nonnegative_least_squares(cols: &[&Constraint], g: &[f64]) -> Vec<f64> {
    let dim = g.len();
    let ncols = cols.len();
    let mut lambda = vec![0.0; ncols];
    let mut passive = vec![false; ncols];
    let mut residual: Vec<f64> = g.to_vec();

    for _outer in 0..(4 * ncols.max(8)) {
        // Entering column: most negative gradient of ½‖g + Σ λ a‖² over the
        // free set, i.e. most negative aᵢᵀ(residual).
        let mut best = None;
        let mut best_w = -1e-12;
        for (i, con) in cols.iter().enumerate() {
            if passive[i] {
                continue;
            }
            let w = dot(&con.a, &residual);
            if w < best_w {
                best_w = w;
                best = Some(i);
            }
        }
        let Some(enter) = best else { break };
        passive[enter] = true;

        loop {
            // Unconstrained least squares on the passive set.
            let idxs: Vec<usize> = (0..ncols).filter(|&i| passive[i]).collect();
            let trial = ls_on_subset(cols, &idxs, g);
            if trial.iter().all(|&v| v > 0.0) {
                for (pos, &i) in idxs.iter().enumerate() {
                    lambda[i] = trial[pos];
                }
                break;
            }
            // Step back toward the previous feasible multipliers.
            let mut alpha = f64::INFINITY;
            for (pos, &i) in idxs.iter().enumerate() {
                if trial[pos] <= 0.0 {
                    let denom = lambda[i] - trial[pos];
                    if denom > 0.0 {
                        alpha = alpha.min(lambda[i] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (pos, &i) in idxs.iter().enumerate() {
                lambda[i] += alpha * (trial[pos] - lambda[i]);
                if lambda[i] <= 1e-14 {
                    lambda[i] = 0.0;
                    passive[i] = false;
                }
            }
        }

        residual.copy_from_slice(g);
        for (i, con) in cols.iter().enumerate() {
            if lambda[i] != 0.0 {
                for r in 0..dim {
                    residual[r] += lambda[i] * con.a[r];
                }
            }
        }
    }
    lambda
}

fn ls_on_subset(cols: &[&Constraint], idxs: &[usize], g: &[f64]) -> Vec<f64> {
    let k = idxs.len();
    let mut gram = vec![vec![0.0; k]; k];
    let mut rhs = vec![0.0; k];
    for (r, &i) in idxs.iter().enumerate() {
        rhs[r] = -dot(&cols[i].a, g);
        for (c, &j) in idxs.iter().enumerate() {
            gram[r][c] = dot(&cols[i].a, &cols[j].a);
        }
    }
    solve_spd(&gram, &rhs).unwrap_or_else(|| vec![0.0; k])
}

// ---------------------------------------------------------------------------
// Small dense linear algebra
// ---------------------------------------------------------------------------

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Solve A x = b for symmetric positive definite A by Cholesky, retrying
/// with a growing diagonal jitter if the factorization fails.
fn solve_spd(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    if n == 0 {
        return Some(Vec::new());
    }
    let max_diag = (0..n).map(|i| a[i][i].abs()).fold(0.0_f64, f64::max);
    let mut jitter = 0.0;
    for attempt in 0..6 {
        if attempt > 0 {
            jitter = if jitter == 0.0 {
                max_diag.max(1.0) * 1e-14
            } else {
                jitter * 100.0
            };
        }
        if let Some(chol) = cholesky(a, jitter) {
            let mut y = b.to_vec();
            // Forward substitution L y = b.
            for i in 0..n {
                for j in 0..i {
                    let lij = chol[i][j];
                    y[i] -= lij * y[j];
                }
                y[i] /= chol[i][i];
            }
            // Back substitution Lᵀ x = y.
            for i in (0..n).rev() {
                for j in i + 1..n {
                    let lji = chol[j][i];
                    y[i] -= lji * y[j];
                }
                y[i] /= chol[i][i];
            }
            if y.iter().all(|v| v.is_finite()) {
                return Some(y);
            }
        }
    }
    None
}

fn cholesky(a: &[Vec<f64>], jitter: f64) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j];
            if i == j {
                sum += jitter;
            }
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    Some(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binary;
    use crate::prob::induced_decoder;
    use crate::testfx;
    use rand::{Rng, SeedableRng};

    fn binary_spec(p1: f64, decoder: Vec<usize>, budget: f64) -> (ProblemInstance, Vec<usize>, f64) {
        (testfx::binary_instance(p1), decoder, budget)
    }

    #[test]
    fn constant_decoder_reaches_zero_information() {
        let inst = testfx::binary_instance(0.3);
        let spec =
            SubproblemSpec::new(&inst, DecoderMap::new(vec![0, 0], 2).unwrap(), 0.5).unwrap();
        let res = solve_subproblem(&spec).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal, "{:?}", res.message);
        let sol = res.solution.unwrap();
        assert!(sol.mi_bits.abs() < 1e-6, "mi = {}", sol.mi_bits);
        assert!(sol.achieved_cost <= 0.5 + BUDGET_SLACK);
    }

    #[test]
    fn identity_decoder_matches_closed_form() {
        let inst = testfx::binary_instance(0.3);
        let spec =
            SubproblemSpec::new(&inst, DecoderMap::new(vec![0, 1], 2).unwrap(), 0.34).unwrap();
        let res = solve_subproblem(&spec).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal, "{:?}", res.message);
        let sol = res.solution.unwrap();
        let expected = 1.0 - crate::info::binary_entropy(0.1);
        assert!(
            (sol.mi_bits - expected).abs() < 1e-5,
            "mi {} vs {}",
            sol.mi_bits,
            expected
        );
        assert!(sol.kkt_residual <= KKT_TOL);
        assert!(sol.achieved_cost <= 0.34 + BUDGET_SLACK);
    }

    #[test]
    fn below_bayes_floor_is_infeasible_for_every_decoder() {
        let inst = testfx::binary_instance(0.3);
        for assignment in [vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]] {
            let spec =
                SubproblemSpec::new(&inst, DecoderMap::new(assignment, 2).unwrap(), 0.2).unwrap();
            let res = solve_subproblem(&spec).unwrap();
            assert_eq!(res.status, SolveStatus::Infeasible);
        }
    }

    #[test]
    fn feasibility_witness_satisfies_constraints() {
        let inst = testfx::binary_instance(0.3);
        let spec =
            SubproblemSpec::new(&inst, DecoderMap::new(vec![0, 0], 2).unwrap(), 0.5).unwrap();
        match check_feasibility(&spec).unwrap() {
            Feasibility::Feasible {
                witness,
                max_violation,
            } => {
                assert!(max_violation <= CONSTRAINT_TOL);
                let cost = expected_cost(&inst, &witness, spec.decoder()).unwrap();
                assert!(cost <= 0.5 + CONSTRAINT_TOL);
            }
            other => panic!("expected feasible, got {other:?}"),
        }
    }

    #[test]
    fn zero_budget_with_noisy_generation_is_infeasible() {
        let inst = testfx::binary_instance(0.3);
        let spec =
            SubproblemSpec::new(&inst, DecoderMap::new(vec![0, 1], 2).unwrap(), 0.0).unwrap();
        match check_feasibility(&spec).unwrap() {
            Feasibility::Infeasible { min_violation } => {
                assert!(min_violation > CONSTRAINT_TOL);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn skewed_instance_decoder_without_second_label_is_infeasible_at_tight_budget() {
        // Decoder (y1, y3) never outputs y2, so every channel pays at least
        // the full y2 mass (0.25) in cost; a 0.13 budget cannot be met. The
        // grid cross-check for this fixture lives in the oracle tests.
        let inst = testfx::skewed_prior_instance();
        let spec =
            SubproblemSpec::new(&inst, DecoderMap::new(vec![0, 2], 3).unwrap(), 0.13).unwrap();
        match check_feasibility(&spec).unwrap() {
            Feasibility::Infeasible { min_violation } => {
                assert!(min_violation > 0.1, "violation {min_violation}");
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
        let res = solve_subproblem(&spec).unwrap();
        assert_eq!(res.status, SolveStatus::Infeasible);
    }

    #[test]
    fn kkt_residual_small_at_optimum_large_when_perturbed() {
        let inst = testfx::binary_instance(0.3);
        let spec =
            SubproblemSpec::new(&inst, DecoderMap::new(vec![0, 1], 2).unwrap(), 0.34).unwrap();
        let res = solve_subproblem(&spec).unwrap();
        let sol = res.solution.unwrap();
        let at_opt = kkt_residual(&spec, &sol.channel).unwrap();
        assert!(at_opt <= KKT_TOL, "residual {at_opt}");

        // Shift every entry by 0.01 and renormalize the rows.
        let perturbed: Vec<Vec<f64>> = sol
            .channel
            .rows()
            .iter()
            .map(|row| {
                let shifted: Vec<f64> = row.iter().map(|&q| q + 0.01).collect();
                let s: f64 = shifted.iter().sum();
                let mut out: Vec<f64> = shifted.iter().map(|&q| q / s).collect();
                let head: f64 = out.iter().take(out.len() - 1).sum();
                let last = out.len() - 1;
                out[last] = 1.0 - head;
                out
            })
            .collect();
        let perturbed = CompressionChannel::new(perturbed).unwrap();
        let residual = kkt_residual(&spec, &perturbed).unwrap();
        assert!(residual > 1e-4, "perturbed residual {residual}");
    }

    #[test]
    fn kkt_rejects_boundary_channels() {
        let inst = testfx::binary_instance(0.3);
        let spec =
            SubproblemSpec::new(&inst, DecoderMap::new(vec![0, 1], 2).unwrap(), 0.34).unwrap();
        let boundary = CompressionChannel::identity(2);
        assert!(kkt_residual(&spec, &boundary).is_err());
    }

    #[test]
    fn budget_monotonicity_and_determinism() {
        let inst = testfx::binary_instance(0.25);
        let decoder = DecoderMap::new(vec![0, 1], 2).unwrap();
        let mut previous = f64::INFINITY;
        for eps in [0.25, 0.3, 0.35, 0.4, 0.45, 0.5] {
            let spec = SubproblemSpec::new(&inst, decoder.clone(), eps).unwrap();
            let a = solve_subproblem(&spec).unwrap();
            let b = solve_subproblem(&spec).unwrap();
            assert_eq!(a.status, SolveStatus::Optimal, "{:?}", a.message);
            let ma = a.solution.unwrap().mi_bits;
            let mb = b.solution.unwrap().mi_bits;
            assert!((ma - mb).abs() < 1e-9, "determinism: {ma} vs {mb}");
            assert!(ma <= previous + 1e-6, "monotonicity at eps {eps}");
            previous = ma;
        }
    }

    #[test]
    fn optimal_solutions_respect_declared_decoder() {
        // The induced decoder of the returned channel attains the same cost
        // as the declared one.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let mut solved = 0;
        while solved < 20 {
            let inst = testfx::random_instance(&mut rng, 2..=3, 2..=3, 2..=3);
            let m = inst.label_count();
            let l = inst.compressed_size();
            let assignment: Vec<usize> = (0..l).map(|_| rng.gen_range(0..m)).collect();
            let decoder = DecoderMap::new(assignment, m).unwrap();
            let budget = rng.gen_range(0.05..0.8);
            let spec = SubproblemSpec::new(&inst, decoder.clone(), budget).unwrap();
            let res = solve_subproblem(&spec).unwrap();
            if res.status != SolveStatus::Optimal {
                continue;
            }
            solved += 1;
            let sol = res.solution.unwrap();
            assert!(sol.achieved_cost <= budget + BUDGET_SLACK);
            assert!(sol.kkt_residual <= KKT_TOL);
            let induced = induced_decoder(&inst, &sol.channel).unwrap();
            let declared_cost = expected_cost(&inst, &sol.channel, &decoder).unwrap();
            let induced_cost = expected_cost(&inst, &sol.channel, &induced).unwrap();
            assert!(
                (declared_cost - induced_cost).abs() <= CONSTRAINT_TOL,
                "declared {declared_cost} vs induced {induced_cost}"
            );
        }
    }

    #[test]
    fn single_compressed_letter_is_trivial() {
        let prior = crate::prob::LabelPrior::uniform(2);
        let gen = crate::prob::GenerationChannel::new(vec![vec![0.7, 0.3], vec![0.3, 0.7]])
            .unwrap();
        let inst = ProblemInstance::new(prior, gen, 1, None).unwrap();
        let ok = SubproblemSpec::new(&inst, DecoderMap::new(vec![0], 2).unwrap(), 0.5).unwrap();
        let res = solve_subproblem(&ok).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        assert_eq!(res.solution.unwrap().mi_bits, 0.0);

        let bad = SubproblemSpec::new(&inst, DecoderMap::new(vec![0], 2).unwrap(), 0.4).unwrap();
        let res = solve_subproblem(&bad).unwrap();
        assert_eq!(res.status, SolveStatus::Infeasible);
    }

    #[test]
    fn closed_form_agreement_across_budgets() {
        let inst = testfx::binary_instance(0.3);
        let decoder = DecoderMap::new(vec![0, 1], 2).unwrap();
        for i in 0..=10 {
            let eps = 0.3 + 0.2 * i as f64 / 10.0;
            let spec = SubproblemSpec::new(&inst, decoder.clone(), eps).unwrap();
            let res = solve_subproblem(&spec).unwrap();
            assert_eq!(res.status, SolveStatus::Optimal, "eps {eps}: {:?}", res.message);
            let mi = res.solution.unwrap().mi_bits;
            let p2 = binary::invert_error_to_p2(0.3, eps).unwrap();
            let expected = binary::binary_rate(p2).unwrap();
            assert!(
                (mi - expected).abs() < 1e-3,
                "eps {eps}: mi {mi} vs closed form {expected}"
            );
        }
    }

    #[test]
    fn spec_constructor_validates() {
        let (inst, dec, _) = binary_spec(0.3, vec![0, 1], 0.3);
        assert!(SubproblemSpec::new(&inst, DecoderMap::new(dec, 2).unwrap(), -0.1).is_err());
        let short = DecoderMap::new(vec![0], 2).unwrap();
        assert!(SubproblemSpec::new(&inst, short, 0.3).is_err());
    }
}
