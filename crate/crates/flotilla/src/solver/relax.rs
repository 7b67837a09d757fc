//! Soft-constraint relaxation: when the fully constrained problem is
//! unsatisfiable, drop the smallest, lightest subset of soft constraints that
//! restores feasibility.
//!
//! Subsets are tried in order of size k = 0, 1, 2, …; within one size, by
//! ascending total weight, ties broken by the lexicographic tuple of
//! constraint identities. Every attempt gets the problem's full time limit.
//! If even dropping everything leaves the problem unsatisfiable, the hard
//! constraints themselves are the obstacle and `Unsatisfiable` is returned
//! with all soft constraints marked dropped.

use crate::model::SoftConstraint;

use super::{solve, PlacementProblem, SolveOutcome};

/// Outcome of the relaxation loop.
#[derive(Clone, Debug)]
pub struct RelaxationResult {
    pub outcome: SolveOutcome,
    /// Soft constraints that had to be dropped (empty when all held).
    pub dropped: Vec<SoftConstraint>,
    /// Soft constraints still enforced in the reported outcome.
    pub enforced: Vec<SoftConstraint>,
}

/// Solve, dropping minimal soft-constraint subsets on unsatisfiability.
/// `max_drop` caps the subset size (defaults to "all of them").
pub fn solve_with_relaxation(
    problem: &PlacementProblem,
    max_drop: Option<usize>,
) -> RelaxationResult {
    let soft = problem.enforced.clone();
    let n = soft.len();
    let cap = max_drop.unwrap_or(n).min(n);

    for k in 0..=cap {
        let mut subsets: Vec<Vec<usize>> = combinations(n, k);
        subsets.sort_by(|a, b| {
            let weight = |s: &[usize]| s.iter().map(|&i| soft[i].weight).sum::<f64>();
            let texts = |s: &[usize]| s.iter().map(|&i| soft[i].identity()).collect::<Vec<_>>();
            weight(a)
                .partial_cmp(&weight(b))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| texts(a).cmp(&texts(b)))
        });
        for subset in subsets {
            let enforced: Vec<SoftConstraint> = soft
                .iter()
                .enumerate()
                .filter(|(i, _)| !subset.contains(i))
                .map(|(_, c)| c.clone())
                .collect();
            let dropped: Vec<SoftConstraint> = subset.iter().map(|&i| soft[i].clone()).collect();
            let attempt = PlacementProblem {
                enforced: enforced.clone(),
                ..problem.clone()
            };
            match solve(&attempt) {
                SolveOutcome::Unsatisfiable => continue,
                outcome @ SolveOutcome::Optimal { .. } => {
                    return RelaxationResult {
                        outcome,
                        dropped,
                        enforced,
                    }
                }
                outcome @ SolveOutcome::TimedOut { .. } => {
                    // A timeout is not evidence of infeasibility; surface it
                    // rather than silently dropping more constraints.
                    return RelaxationResult {
                        outcome,
                        dropped,
                        enforced,
                    };
                }
            }
        }
    }

    RelaxationResult {
        outcome: SolveOutcome::Unsatisfiable,
        dropped: soft,
        enforced: Vec::new(),
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for i in start..n {
            current.push(i);
            rec(i + 1, n, k, current, out);
            current.pop();
        }
    }
    rec(0, n, k, &mut current, &mut out);
    out
}
