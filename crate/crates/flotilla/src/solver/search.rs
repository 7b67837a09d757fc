//! Exact branch-and-bound search over the placement space.
//!
//! Components are branched most-constrained-first; each branch either picks
//! one (flavour, node) candidate or skips a non-mandatory component. The
//! bound is the pair (kept upper bound, importance upper bound), compared
//! against the incumbent's objective; only strictly worse branches are
//! pruned, so the search sees every co-optimal deployment and can return the
//! lexicographically least one. Leaves are re-checked with the full verifier
//! — the verifier, not the search's pruning, is the feasibility authority.

use std::collections::BTreeMap;
use std::time::Instant;

use crate::model::{Assignment, ConstraintKind, Deployment, Flavour, Node};

use super::verify::verify_deployment;
use super::{Objective, ObjectiveValue, PlacementProblem, SolveOutcome};

struct Candidate<'a> {
    flavour: &'a Flavour,
    node: &'a Node,
    importance: u64,
    kept: bool,
}

struct CompSlot<'a> {
    name: &'a str,
    mandatory: bool,
    candidates: Vec<Candidate<'a>>,
    max_importance: u64,
    any_kept: bool,
}

struct Search<'a, 'p> {
    problem: &'p PlacementProblem<'a>,
    slots: Vec<CompSlot<'a>>,
    /// index into `slots` by component name
    slot_of: BTreeMap<&'a str, usize>,
    chosen: Vec<Option<usize>>,
    used: Vec<BTreeMap<&'a str, f64>>,
    node_index: BTreeMap<&'a str, usize>,
    cost: f64,
    energy_kwh: f64,
    carbon_g: f64,
    best: Option<(Deployment, ObjectiveValue)>,
    deadline: Instant,
    timed_out: bool,
}

pub(super) fn branch_and_bound(problem: &PlacementProblem) -> SolveOutcome {
    let deadline = Instant::now() + problem.time_limit;

    let mut slots: Vec<CompSlot> = Vec::new();
    for comp in &problem.app.components {
        let mut candidates = Vec::new();
        for flavour in &comp.flavours {
            for node in problem.infra.nodes.iter().filter(|n| n.available) {
                if !attributes_ok(flavour, node) {
                    continue;
                }
                if avoided(problem, &comp.name, &flavour.name, &node.name) {
                    continue;
                }
                if !fits_alone(flavour, node) {
                    continue;
                }
                let kept = problem
                    .previous
                    .and_then(|prev| prev.get(&comp.name))
                    .map(|a| a.flavour == flavour.name && a.node == node.name)
                    .unwrap_or(false);
                candidates.push(Candidate {
                    flavour,
                    node,
                    importance: u64::from(flavour.importance),
                    kept,
                });
            }
        }
        if comp.mandatory && candidates.is_empty() {
            return SolveOutcome::Unsatisfiable;
        }
        // Promising options first: kept assignments, then high importance,
        // then name order for determinism.
        candidates.sort_by(|a, b| {
            b.kept
                .cmp(&a.kept)
                .then(b.importance.cmp(&a.importance))
                .then(a.flavour.name.cmp(&b.flavour.name))
                .then(a.node.name.cmp(&b.node.name))
        });
        let max_importance = candidates.iter().map(|c| c.importance).max().unwrap_or(0);
        let any_kept = candidates.iter().any(|c| c.kept);
        slots.push(CompSlot {
            name: &comp.name,
            mandatory: comp.mandatory,
            candidates,
            max_importance,
            any_kept,
        });
    }

    // Most constrained first.
    slots.sort_by(|a, b| {
        a.candidates
            .len()
            .cmp(&b.candidates.len())
            .then(a.name.cmp(b.name))
    });

    let slot_of = slots.iter().enumerate().map(|(i, s)| (s.name, i)).collect();
    let node_index: BTreeMap<&str, usize> = problem
        .infra
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.name.as_str(), i))
        .collect();
    let used = vec![BTreeMap::new(); problem.infra.nodes.len()];
    let chosen = vec![None; slots.len()];
    let minimize_changes = problem.objective == Objective::MinimizeChanges;

    let mut search = Search {
        problem,
        slots,
        slot_of,
        chosen,
        used,
        node_index,
        cost: 0.0,
        energy_kwh: 0.0,
        carbon_g: 0.0,
        best: None,
        deadline,
        timed_out: false,
    };
    search.descend(0, 0, 0, minimize_changes);

    if search.timed_out {
        return SolveOutcome::TimedOut {
            best_so_far: search.best,
        };
    }
    match search.best {
        Some((deployment, objective)) => SolveOutcome::Optimal {
            deployment,
            objective,
        },
        None => SolveOutcome::Unsatisfiable,
    }
}

fn attributes_ok(flavour: &Flavour, node: &Node) -> bool {
    flavour.attributes.iter().all(|(attr, req)| {
        node.attributes
            .get(attr)
            .map(|v| req.accepts(v))
            .unwrap_or(false)
    })
}

fn avoided(problem: &PlacementProblem, component: &str, flavour: &str, node: &str) -> bool {
    problem.enforced.iter().any(|sc| match &sc.kind {
        ConstraintKind::Avoid {
            component: c,
            flavour: f,
            node: n,
        } => c == component && f == flavour && n == node,
        _ => false,
    })
}

fn fits_alone(flavour: &Flavour, node: &Node) -> bool {
    flavour
        .resources
        .iter()
        .all(|(res, amount)| *amount <= node.capacities.get(res).copied().unwrap_or(0.0))
}

impl<'a, 'p> Search<'a, 'p> {
    fn descend(&mut self, depth: usize, kept: u64, importance: u64, minimize_changes: bool) {
        if self.timed_out {
            return;
        }
        if Instant::now() >= self.deadline {
            self.timed_out = true;
            return;
        }

        // Bound: the objective can only reach (kept + remaining kept,
        // importance + remaining max importance).
        if let Some((_, best)) = &self.best {
            let mut kept_bound = kept;
            let mut importance_bound = importance;
            for slot in &self.slots[depth..] {
                if minimize_changes && slot.any_kept {
                    kept_bound += 1;
                }
                importance_bound += slot.max_importance;
            }
            let bound = ObjectiveValue {
                kept: if minimize_changes { kept_bound } else { 0 },
                importance: importance_bound,
            };
            if bound < *best {
                return;
            }
        }

        if depth == self.slots.len() {
            self.consider_leaf(kept, importance, minimize_changes);
            return;
        }

        for ci in 0..self.slots[depth].candidates.len() {
            if self.compatible(depth, ci) {
                self.apply(depth, ci);
                let c = &self.slots[depth].candidates[ci];
                let (k, imp) = (kept + u64::from(c.kept), importance + c.importance);
                self.descend(depth + 1, k, imp, minimize_changes);
                self.unapply(depth, ci);
                if self.timed_out {
                    return;
                }
            }
        }

        // Skipping is legal for non-mandatory components, unless an already
        // assigned flavour depends on this one.
        if !self.slots[depth].mandatory && !self.needed_by_assigned(depth) {
            self.chosen[depth] = None;
            self.descend(depth + 1, kept, importance, minimize_changes);
        }
    }

    fn consider_leaf(&mut self, kept: u64, importance: u64, minimize_changes: bool) {
        let assignments: Vec<Assignment> = self
            .slots
            .iter()
            .zip(&self.chosen)
            .filter_map(|(slot, choice)| {
                choice.map(|ci| {
                    let c = &slot.candidates[ci];
                    Assignment::new(slot.name, &c.flavour.name, &c.node.name)
                })
            })
            .collect();
        let deployment = Deployment::new(assignments);
        if !verify_deployment(&deployment, self.problem).is_empty() {
            return;
        }
        let objective = ObjectiveValue {
            kept: if minimize_changes { kept } else { 0 },
            importance,
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

    /// Pairwise and accumulative feasibility of candidate `ci` at `depth`
    /// given all assignments above it. Purely a pruning aid: anything it
    /// cannot see is caught by the verifier at the leaf.
    fn compatible(&self, depth: usize, ci: usize) -> bool {
        let slot = &self.slots[depth];
        let cand = &slot.candidates[ci];

        // Capacity with current usage.
        let ni = self.node_index[cand.node.name.as_str()];
        for (res, amount) in &cand.flavour.resources {
            let used = self.used[ni].get(res.as_str()).copied().unwrap_or(0.0);
            if used + amount > cand.node.capacities.get(res).copied().unwrap_or(0.0) {
                return false;
            }
        }

        // Budgets are monotone in every extension.
        let budgets = &self.problem.app.budgets;
        if self.cost + placement_cost(cand.flavour, cand.node) > budgets.monetary {
            return false;
        }
        let energy = cand.flavour.energy_w * self.problem.round_hours / 1000.0;
        if self.energy_kwh + energy > budgets.energy_kwh {
            return false;
        }
        if self.carbon_g + energy * cand.node.carbon_intensity > budgets.carbon_g {
            return false;
        }

        // Dependency targets this flavour needs: already skipped → dead end;
        // still open → some candidate of sufficient importance must remain.
        for dep in &cand.flavour.uses {
            if let Some(&ti) = self.slot_of.get(dep.component.as_str()) {
                let target = &self.slots[ti];
                match &self.chosen[ti] {
                    Some(tci) if ti != depth => {
                        let assigned = &target.candidates[*tci];
                        if assigned.importance < u64::from(dep.min_importance) {
                            return false;
                        }
                        if !self.link_ok(cand, assigned, dep) {
                            return false;
                        }
                    }
                    None if ti < depth => return false, // explicitly skipped
                    _ => {
                        if target.max_importance < u64::from(dep.min_importance) {
                            return false;
                        }
                    }
                }
            }
        }

        // Reverse direction: assigned flavours depending on this component.
        for (other_depth, choice) in self.chosen.iter().enumerate().take(depth) {
            let Some(oci) = choice else { continue };
            let other = &self.slots[other_depth];
            let assigned = &other.candidates[*oci];
            for dep in &assigned.flavour.uses {
                if dep.component == slot.name {
                    if cand.importance < u64::from(dep.min_importance) {
                        return false;
                    }
                    if !self.link_ok(assigned, cand, dep) {
                        return false;
                    }
                }
            }
        }

        // Enforced pairwise constraints against already-assigned endpoints.
        for sc in &self.problem.enforced {
            let Some((a, b)) = sc.kind.pair() else {
                continue;
            };
            let this_end = if a.component == slot.name && a.flavour == cand.flavour.name {
                Some(b)
            } else if b.component == slot.name && b.flavour == cand.flavour.name {
                Some(a)
            } else {
                None
            };
            let Some(other_end) = this_end else { continue };
            let Some(&oi) = self.slot_of.get(other_end.component.as_str()) else {
                continue;
            };
            let Some(oci) = self.chosen[oi] else { continue };
            let other = &self.slots[oi].candidates[oci];
            if other.flavour.name != other_end.flavour {
                continue;
            }
            let same = other.node.name == cand.node.name;
            match sc.kind {
                ConstraintKind::Affinity { .. } if !same => return false,
                ConstraintKind::AntiAffinity { .. } if same => return false,
                _ => {}
            }
        }

        true
    }

    fn link_ok(
        &self,
        consumer: &Candidate,
        provider: &Candidate,
        dep: &crate::model::Dependency,
    ) -> bool {
        match self
            .problem
            .infra
            .link_between(&consumer.node.name, &provider.node.name)
        {
            None => false,
            Some(link) => {
                dep.max_latency_ms.is_none_or(|b| link.latency_ms <= b)
                    && dep.min_availability.is_none_or(|b| link.availability >= b)
            }
        }
    }

    fn needed_by_assigned(&self, depth: usize) -> bool {
        let name = self.slots[depth].name;
        self.chosen
            .iter()
            .enumerate()
            .take(depth)
            .any(|(d, choice)| {
                choice.is_some_and(|ci| {
                    self.slots[d].candidates[ci]
                        .flavour
                        .uses
                        .iter()
                        .any(|u| u.component == name)
                })
            })
    }

    fn apply(&mut self, depth: usize, ci: usize) {
        // Copy the references out: the flavour and node data live as long as
        // the problem itself ('a), independent of the borrow of self.slots.
        let flavour: &'a Flavour = self.slots[depth].candidates[ci].flavour;
        let node: &'a Node = self.slots[depth].candidates[ci].node;
        let ni = self.node_index[node.name.as_str()];
        for (res, amount) in &flavour.resources {
            *self.used[ni].entry(res.as_str()).or_default() += amount;
        }
        let energy = flavour.energy_w * self.problem.round_hours / 1000.0;
        self.cost += placement_cost(flavour, node);
        self.energy_kwh += energy;
        self.carbon_g += energy * node.carbon_intensity;
        self.chosen[depth] = Some(ci);
    }

    fn unapply(&mut self, depth: usize, ci: usize) {
        let flavour: &'a Flavour = self.slots[depth].candidates[ci].flavour;
        let node: &'a Node = self.slots[depth].candidates[ci].node;
        let ni = self.node_index[node.name.as_str()];
        for (res, amount) in &flavour.resources {
            if let Some(u) = self.used[ni].get_mut(res.as_str()) {
                *u -= amount;
            }
        }
        let energy = flavour.energy_w * self.problem.round_hours / 1000.0;
        self.cost -= placement_cost(flavour, node);
        self.energy_kwh -= energy;
        self.carbon_g -= energy * node.carbon_intensity;
        self.chosen[depth] = None;
    }
}

fn placement_cost(flavour: &Flavour, node: &Node) -> f64 {
    flavour
        .resources
        .iter()
        .map(|(res, amount)| amount * node.unit_costs.get(res).copied().unwrap_or(0.0))
        .sum()
}
