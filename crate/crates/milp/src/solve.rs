//! Branch and bound over binary variables, plus the LP relaxation entry
//! point and an exhaustive reference solver for testing.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::problem::{BranchRule, MilpProblem, MilpSolution, SolverConfig, VarDomain, VarId};
use crate::simplex::{solve_lp, LpOutcome, LpProblem, LpRow};

/// Upper limit on binaries for [`brute_force_solve`].
pub const MAX_BRUTE_BINARIES: usize = 20;

/// Pruning slack: a node whose bound is within this of the incumbent cannot
/// improve on it meaningfully and is discarded.
const PRUNE_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SolveError {
    #[error("branch-and-bound node limit of {limit} exceeded")]
    NodeLimitExceeded { limit: usize },
    #[error("brute force supports at most {max} binaries, problem has {count}")]
    TooManyBinaries { count: usize, max: usize },
    #[error("simplex iteration limit exceeded; the problem is numerically ill-conditioned")]
    IterationLimit,
}

/// Marker for a binary variable that branching has not pinned yet.
const FREE: u8 = 2;

/// Converts the problem into the simplex form, overriding the bounds of the
/// binaries pinned by `fixes` (indexed like `binaries`).
fn to_lp(p: &MilpProblem, binaries: &[VarId], fixes: &[u8]) -> LpProblem {
    let n = p.num_vars();
    let mut lower = vec![0.0; n];
    let mut upper = Vec::with_capacity(n);
    for v in p.vars() {
        upper.push(match v.domain {
            VarDomain::Continuous { upper } => upper.unwrap_or(f64::INFINITY),
            VarDomain::Binary => 1.0,
        });
    }
    for (slot, &var) in binaries.iter().enumerate() {
        if fixes[slot] != FREE {
            lower[var] = f64::from(fixes[slot]);
            upper[var] = f64::from(fixes[slot]);
        }
    }
    let rows = p
        .constraints()
        .iter()
        .map(|c| LpRow {
            coeffs: c.expr.terms().to_vec(),
            rel: c.rel,
            rhs: c.rhs,
        })
        .collect();
    LpProblem {
        objective: p.objective().densify(n),
        rows,
        lower,
        upper,
    }
}

/// Solves the LP relaxation (binaries relaxed to `[0, 1]`).
pub fn solve_lp_relaxation(p: &MilpProblem) -> Result<MilpSolution, SolveError> {
    let binaries = p.binary_ids();
    let fixes = vec![FREE; binaries.len()];
    lp_solution(p, &binaries, &fixes)
}

fn lp_solution(
    p: &MilpProblem,
    binaries: &[VarId],
    fixes: &[u8],
) -> Result<MilpSolution, SolveError> {
    match solve_lp(&to_lp(p, binaries, fixes)) {
        Ok(LpOutcome::Optimal { values, objective }) => {
            Ok(MilpSolution::optimal(values, objective))
        }
        Ok(LpOutcome::Infeasible) => Ok(MilpSolution::infeasible()),
        Ok(LpOutcome::Unbounded) => Ok(MilpSolution::unbounded()),
        Err(_) => Err(SolveError::IterationLimit),
    }
}

/// A branch-and-bound node ordered by bound (then creation order) so the
/// binary heap pops the most promising node first.
struct Node {
    bound: f64,
    seq: u64,
    fixes: Vec<u8>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Reversed: BinaryHeap is a max-heap, we want the smallest bound first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Distance of a value from the nearest integer.
fn fractionality(x: f64) -> f64 {
    (x - x.round()).abs()
}

/// Solves the MILP with best-bound branch and bound.
///
/// Infeasibility and unboundedness are reported through the solution status;
/// errors are reserved for resource limits. An unbounded LP relaxation is
/// reported as unbounded without attempting to prove integer feasibility.
pub fn solve(p: &MilpProblem, cfg: &SolverConfig) -> Result<MilpSolution, SolveError> {
    let binaries = p.binary_ids();
    let root_fixes = vec![FREE; binaries.len()];
    let root = lp_solution(p, &binaries, &root_fixes)?;
    if binaries.is_empty() || root.status != crate::problem::SolveStatus::Optimal {
        return Ok(root);
    }

    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(Node {
        bound: root.objective,
        seq,
        fixes: root_fixes,
    });
    let mut incumbent: Option<MilpSolution> = None;
    let mut explored = 0usize;

    // Tries `fixes` with every free binary pinned to its rounded LP value;
    // keeps the result when it beats the incumbent.
    let try_rounded = |fixes: &[u8],
                       values: &[f64],
                       incumbent: &mut Option<MilpSolution>|
     -> Result<(), SolveError> {
        let mut all_fixed = fixes.to_vec();
        for (slot, &var) in binaries.iter().enumerate() {
            if all_fixed[slot] == FREE {
                all_fixed[slot] = if values[var] >= 0.5 { 1 } else { 0 };
            }
        }
        let sol = lp_solution(p, &binaries, &all_fixed)?;
        if sol.status == crate::problem::SolveStatus::Optimal {
            let better = incumbent
                .as_ref()
                .is_none_or(|inc| sol.objective < inc.objective - PRUNE_EPS);
            if better {
                *incumbent = Some(exact_binaries(sol, &binaries, &all_fixed));
            }
        }
        Ok(())
    };

    while let Some(node) = heap.pop() {
        if let Some(inc) = &incumbent {
            // Best-bound order: once the best remaining bound cannot improve
            // on the incumbent, no other node can either.
            if node.bound >= inc.objective - PRUNE_EPS {
                break;
            }
        }
        if explored >= cfg.node_limit {
            return Err(SolveError::NodeLimitExceeded {
                limit: cfg.node_limit,
            });
        }
        explored += 1;

        let relaxed = lp_solution(p, &binaries, &node.fixes)?;
        if relaxed.status != crate::problem::SolveStatus::Optimal {
            continue;
        }
        if let Some(inc) = &incumbent {
            if relaxed.objective >= inc.objective - PRUNE_EPS {
                continue;
            }
        }

        let fractional: Vec<usize> = binaries
            .iter()
            .enumerate()
            .filter(|&(slot, &var)| {
                node.fixes[slot] == FREE && fractionality(relaxed.values[var]) > cfg.integrality_tol
            })
            .map(|(slot, _)| slot)
            .collect();

        if fractional.is_empty() {
            // Integral within tolerance: re-solve with the binaries pinned to
            // exact 0/1 so the reported solution is exactly integral.
            try_rounded(&node.fixes, &relaxed.values, &mut incumbent)?;
            continue;
        }

        // Rounding heuristic for an early incumbent; afterwards only
        // occasionally, since each attempt costs one LP solve.
        if incumbent.is_none() || explored.is_multiple_of(16) {
            try_rounded(&node.fixes, &relaxed.values, &mut incumbent)?;
            if let Some(inc) = &incumbent {
                if relaxed.objective >= inc.objective - PRUNE_EPS {
                    continue;
                }
            }
        }

        let branch_slot = match cfg.branch_rule {
            BranchRule::FirstFractional => fractional[0],
            BranchRule::MostFractional => *fractional
                .iter()
                .max_by(|&&a, &&b| {
                    fractionality(relaxed.values[binaries[a]])
                        .total_cmp(&fractionality(relaxed.values[binaries[b]]))
                        // Ties go to the lowest variable id: make the lower
                        // slot compare as the maximum.
                        .then_with(|| b.cmp(&a))
                })
                .expect("fractional set is non-empty"),
        };

        for value in [0u8, 1u8] {
            let mut fixes = node.fixes.clone();
            fixes[branch_slot] = value;
            seq += 1;
            heap.push(Node {
                bound: relaxed.objective,
                seq,
                fixes,
            });
        }
    }

    Ok(incumbent.unwrap_or_else(MilpSolution::infeasible))
}

/// Rounds the pinned binaries to exact integers (they already sit on their
/// bounds, this removes any last-place noise).
fn exact_binaries(mut sol: MilpSolution, binaries: &[VarId], fixes: &[u8]) -> MilpSolution {
    for (slot, &var) in binaries.iter().enumerate() {
        if fixes[slot] != FREE {
            sol.values[var] = f64::from(fixes[slot]);
        }
    }
    sol
}

/// Reference solver: enumerates every assignment of the binaries and keeps
/// the best LP outcome. Intended for testing on small problems.
pub fn brute_force_solve(p: &MilpProblem) -> Result<MilpSolution, SolveError> {
    let binaries = p.binary_ids();
    if binaries.len() > MAX_BRUTE_BINARIES {
        return Err(SolveError::TooManyBinaries {
            count: binaries.len(),
            max: MAX_BRUTE_BINARIES,
        });
    }
    let mut best: Option<MilpSolution> = None;
    for mask in 0u32..(1u32 << binaries.len()) {
        let fixes: Vec<u8> = (0..binaries.len())
            .map(|slot| ((mask >> slot) & 1) as u8)
            .collect();
        match lp_solution(p, &binaries, &fixes)? {
            sol if sol.status == crate::problem::SolveStatus::Optimal => {
                let better = best.as_ref().is_none_or(|b| sol.objective < b.objective);
                if better {
                    best = Some(exact_binaries(sol, &binaries, &fixes));
                }
            }
            sol if sol.status == crate::problem::SolveStatus::Unbounded => {
                return Ok(MilpSolution::unbounded());
            }
            _ => {}
        }
    }
    Ok(best.unwrap_or_else(MilpSolution::infeasible))
}
