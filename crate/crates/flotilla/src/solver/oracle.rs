//! Brute-force reference solver.
//!
//! Completely independent of the branch-and-bound search: components are
//! enumerated in declaration order, every (flavour, node) pair that is not
//! trivially impossible (unavailable node, unsatisfied attribute, running
//! over capacity or budget — all conditions the verifier would reject anyway)
//! is tried, every complete assignment is filtered through the verifier, and
//! the best surviving deployment under the same objective and tie-break is
//! returned. Exists to cross-check `solve`, so it favours obviousness over
//! speed and refuses instances whose enumeration space exceeds a guard.

use crate::model::{Assignment, Deployment};

use super::verify::verify_deployment;
use super::{Objective, ObjectiveValue, PlacementProblem, SolveOutcome};

/// Maximum number of assignment maps the oracle is willing to enumerate.
pub const ENUMERATION_GUARD: f64 = 1e7;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("enumeration space of {space:.3e} assignment maps exceeds the guard of {guard:.0e}")]
    TooLarge { space: f64, guard: f64 },
}

/// Size of the enumeration space: per component, one "skip" option plus every
/// (flavour, available attribute-feasible node) pair.
pub fn enumeration_guard(p: &PlacementProblem) -> f64 {
    p.app
        .components
        .iter()
        .map(|comp| {
            let options: usize = comp
                .flavours
                .iter()
                .map(|fl| {
                    p.infra
                        .nodes
                        .iter()
                        .filter(|n| n.available && attributes_ok(fl, n))
                        .count()
                })
                .sum();
            1.0 + options as f64
        })
        .product()
}

fn attributes_ok(flavour: &crate::model::Flavour, node: &crate::model::Node) -> bool {
    flavour.attributes.iter().all(|(attr, req)| {
        node.attributes
            .get(attr)
            .map(|v| req.accepts(v))
            .unwrap_or(false)
    })
}

/// Exhaustively find the optimal deployment, or prove unsatisfiability.
pub fn brute_force_oracle(p: &PlacementProblem) -> Result<SolveOutcome, OracleError> {
    let space = enumeration_guard(p);
    if space > ENUMERATION_GUARD {
        return Err(OracleError::TooLarge {
            space,
            guard: ENUMERATION_GUARD,
        });
    }

    let mut state = Enumerator {
        problem: p,
        stack: Vec::new(),
        best: None,
        minimize_changes: p.objective == Objective::MinimizeChanges,
    };
    state.enumerate(0);
    Ok(match state.best {
        Some((deployment, objective)) => SolveOutcome::Optimal {
            deployment,
            objective,
        },
        None => SolveOutcome::Unsatisfiable,
    })
}

struct Enumerator<'a, 'p> {
    problem: &'p PlacementProblem<'a>,
    stack: Vec<Assignment>,
    best: Option<(Deployment, ObjectiveValue)>,
    minimize_changes: bool,
}

impl Enumerator<'_, '_> {
    fn enumerate(&mut self, idx: usize) {
        if idx == self.problem.app.components.len() {
            self.consider();
            return;
        }
        let comp = &self.problem.app.components[idx];

        // skip
        self.enumerate(idx + 1);

        for flavour in &comp.flavours {
            for node in &self.problem.infra.nodes {
                if !node.available || !attributes_ok(flavour, node) {
                    continue;
                }
                if !self.still_within_capacity(flavour, node) {
                    continue;
                }
                self.stack
                    .push(Assignment::new(&comp.name, &flavour.name, &node.name));
                if self.still_within_budgets() {
                    self.enumerate(idx + 1);
                }
                self.stack.pop();
            }
        }
    }

    /// Monotone pre-filters; anything passing these still faces the verifier.
    fn still_within_capacity(
        &self,
        flavour: &crate::model::Flavour,
        node: &crate::model::Node,
    ) -> bool {
        flavour.resources.iter().all(|(res, amount)| {
            let already: f64 = self
                .stack
                .iter()
                .filter(|a| a.node == node.name)
                .filter_map(|a| {
                    self.problem
                        .app
                        .component(&a.component)
                        .and_then(|c| c.flavour(&a.flavour))
                        .and_then(|f| f.resources.get(res))
                })
                .sum();
            already + amount <= node.capacities.get(res).copied().unwrap_or(0.0)
        })
    }

    fn still_within_budgets(&self) -> bool {
        let mut cost = 0.0;
        let mut energy_kwh = 0.0;
        let mut carbon_g = 0.0;
        for a in &self.stack {
            let Some(flavour) = self
                .problem
                .app
                .component(&a.component)
                .and_then(|c| c.flavour(&a.flavour))
            else {
                continue;
            };
            let Some(node) = self.problem.infra.node(&a.node) else {
                continue;
            };
            cost += flavour
                .resources
                .iter()
                .map(|(res, amt)| amt * node.unit_costs.get(res).copied().unwrap_or(0.0))
                .sum::<f64>();
            let e = flavour.energy_w * self.problem.round_hours / 1000.0;
            energy_kwh += e;
            carbon_g += e * node.carbon_intensity;
        }
        let b = &self.problem.app.budgets;
        cost <= b.monetary && energy_kwh <= b.energy_kwh && carbon_g <= b.carbon_g
    }

    fn consider(&mut self) {
        let deployment = Deployment::new(self.stack.clone());
        if !verify_deployment(&deployment, self.problem).is_empty() {
            return;
        }
        let kept = if self.minimize_changes {
            self.problem
                .previous
                .map(|prev| deployment.kept_from(prev))
                .unwrap_or(0)
        } else {
            0
        };
        let objective = ObjectiveValue {
            kept,
            importance: deployment.total_importance(self.problem.app),
        };
        let better = match &self.best {
            None => true,
            Some((inc_d, inc_v)) => {
                objective > *inc_v || (objective == *inc_v && deployment < *inc_d)
            }
        };
        if better {
            self.best = Some((deployment, objective));
        }
    }
}
