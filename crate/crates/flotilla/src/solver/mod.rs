//! Exact placement solving.
//!
//! A [`PlacementProblem`] bundles the specifications, the soft constraints
//! currently enforced as hard, the previous deployment (if any) and the
//! objective regime. [`solve`] runs an exact branch-and-bound search;
//! [`brute_force_oracle`] answers the same question by guarded exhaustive
//! enumeration and exists purely to cross-check the search. The relaxation
//! loop ([`solve_with_relaxation`]) drops minimal soft-constraint subsets
//! when the full set is unsatisfiable.
//!
//! Both objective regimes reduce to maximizing the pair
//! `(kept, total importance)` — `kept` is the number of components retaining
//! their exact (flavour, node) from the previous deployment and is pinned to
//! zero in [`Objective::MaximizeImportance`] mode. Ties are broken by
//! returning the lexicographically least deployment (sorted assignment
//! triples compared componentwise), which makes every outcome deterministic.

mod oracle;
mod relax;
mod search;
mod verify;

pub use oracle::{brute_force_oracle, enumeration_guard, OracleError, ENUMERATION_GUARD};
pub use relax::{solve_with_relaxation, RelaxationResult};
pub use verify::{verify_deployment, ConstraintViolation};

use std::time::Duration;

use crate::model::{ApplicationSpec, Deployment, InfrastructureSpec, SoftConstraint};

/// Default wall-clock limit for one solve attempt.
pub const DEFAULT_TIME_LIMIT: Duration = Duration::from_secs(300);

/// Default planning horizon used for budget projections, in hours.
pub const DEFAULT_ROUND_HOURS: f64 = 2.0;

/// Objective regime for one solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    /// First deployment: maximize the summed importance of assigned flavours.
    MaximizeImportance,
    /// Re-deployment: maximize the number of components keeping their exact
    /// (flavour, node) pair, tie-broken by maximal summed importance.
    MinimizeChanges,
}

/// One placement problem instance.
#[derive(Clone)]
pub struct PlacementProblem<'a> {
    pub app: &'a ApplicationSpec,
    pub infra: &'a InfrastructureSpec,
    /// Soft constraints currently enforced as hard.
    pub enforced: Vec<SoftConstraint>,
    pub previous: Option<&'a Deployment>,
    pub objective: Objective,
    pub time_limit: Duration,
    /// Horizon for projecting energy/carbon budgets (C9).
    pub round_hours: f64,
}

impl<'a> PlacementProblem<'a> {
    pub fn new(app: &'a ApplicationSpec, infra: &'a InfrastructureSpec) -> Self {
        PlacementProblem {
            app,
            infra,
            enforced: Vec::new(),
            previous: None,
            objective: Objective::MaximizeImportance,
            time_limit: DEFAULT_TIME_LIMIT,
            round_hours: DEFAULT_ROUND_HOURS,
        }
    }

    pub fn with_enforced(mut self, enforced: Vec<SoftConstraint>) -> Self {
        self.enforced = enforced;
        self
    }

    pub fn with_previous(mut self, previous: &'a Deployment) -> Self {
        self.previous = Some(previous);
        self.objective = Objective::MinimizeChanges;
        self
    }

    pub fn with_objective(mut self, objective: Objective) -> Self {
        self.objective = objective;
        self
    }
}

/// The value of a deployment under the active objective, compared
/// lexicographically: more kept assignments first, then more importance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct ObjectiveValue {
    pub kept: u64,
    pub importance: u64,
}

/// Result of one solve attempt.
#[derive(Clone, Debug, PartialEq)]
pub enum SolveOutcome {
    Optimal {
        deployment: Deployment,
        objective: ObjectiveValue,
    },
    Unsatisfiable,
    TimedOut {
        best_so_far: Option<(Deployment, ObjectiveValue)>,
    },
}

impl SolveOutcome {
    pub fn deployment(&self) -> Option<&Deployment> {
        match self {
            SolveOutcome::Optimal { deployment, .. } => Some(deployment),
            SolveOutcome::TimedOut {
                best_so_far: Some((d, _)),
            } => Some(d),
            _ => None,
        }
    }
}

/// Solve the placement problem exactly within its time limit.
pub fn solve(problem: &PlacementProblem) -> SolveOutcome {
    search::branch_and_bound(problem)
}
