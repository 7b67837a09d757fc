//! Deployment verification: the single authority on what "feasible" means.
//!
//! Checks, in order:
//! - C1: every component assigned at most once;
//! - C2: every mandatory component assigned;
//! - C3: every dependency of an assigned flavour reaches an assigned
//!   provider of sufficient importance;
//! - C4: no non-mandatory component deployed in isolation: something
//!   deployed depends on it, or it is reachable from a deployed mandatory
//!   component through dependency edges;
//! - C5: per-node resource capacities;
//! - C6: node attribute requirements (and node availability);
//! - C7: links exist for cross-node dependencies and respect declared
//!   latency/availability bounds;
//! - C8: monetary budget over resource unit costs;
//! - C9: projected energy and carbon budgets over the planning horizon;
//! - C10: every enforced avoid/affinity/anti-affinity constraint.
//!
//! Assignments referencing names absent from the specifications are reported
//! with code `ref`. The function is total: it never panics on malformed
//! deployments, it describes them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::model::{ConstraintKind, Deployment, Flavour, Node};

use super::PlacementProblem;

/// One violated constraint, labeled with its check code (`C1`..`C10`, `ref`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintViolation {
    pub code: &'static str,
    pub message: String,
}

impl fmt::Display for ConstraintViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

struct Resolved<'a> {
    component: &'a str,
    mandatory: bool,
    flavour: &'a Flavour,
    node: &'a Node,
}

/// Check a deployment against every placement constraint of the problem.
/// Returns an empty list iff the deployment is feasible.
pub fn verify_deployment(d: &Deployment, p: &PlacementProblem) -> Vec<ConstraintViolation> {
    let mut out = Vec::new();
    let mut push = |code: &'static str, message: String| {
        out.push(ConstraintViolation { code, message });
    };

    // Resolve references; anything dangling is reported and excluded from
    // the remaining checks.
    let mut resolved: Vec<Resolved> = Vec::new();
    for a in d.assignments() {
        let comp = match p.app.component(&a.component) {
            Some(c) => c,
            None => {
                push(
                    "ref",
                    format!("assignment references unknown component {}", a.component),
                );
                continue;
            }
        };
        let flavour = match comp.flavour(&a.flavour) {
            Some(f) => f,
            None => {
                push(
                    "ref",
                    format!("component {} has no flavour {}", a.component, a.flavour),
                );
                continue;
            }
        };
        let node = match p.infra.node(&a.node) {
            Some(n) => n,
            None => {
                push(
                    "ref",
                    format!("assignment references unknown node {}", a.node),
                );
                continue;
            }
        };
        resolved.push(Resolved {
            component: &a.component,
            mandatory: comp.mandatory,
            flavour,
            node,
        });
    }

    let assignment_of = |component: &str| resolved.iter().find(|r| r.component == component);

    // C1 — at most one assignment per component.
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &resolved {
        *counts.entry(r.component).or_default() += 1;
    }
    for (component, n) in counts.iter().filter(|(_, n)| **n > 1) {
        push("C1", format!("component {component} assigned {n} times"));
    }

    // C2 — mandatory components are deployed.
    for comp in p.app.components.iter().filter(|c| c.mandatory) {
        if assignment_of(&comp.name).is_none() {
            push(
                "C2",
                format!("mandatory component {} is not deployed", comp.name),
            );
        }
    }

    // C3 — dependencies reach deployed providers of sufficient importance.
    for r in &resolved {
        for dep in &r.flavour.uses {
            match assignment_of(&dep.component) {
                None => push(
                    "C3",
                    format!(
                        "{} ({}) depends on {}, which is not deployed",
                        r.component, r.flavour.name, dep.component
                    ),
                ),
                Some(provider)
                    if u64::from(provider.flavour.importance) < u64::from(dep.min_importance) =>
                {
                    push(
                        "C3",
                        format!(
                            "{} needs {} at importance >= {}, got {} ({})",
                            r.component,
                            dep.component,
                            dep.min_importance,
                            provider.flavour.importance,
                            provider.flavour.name
                        ),
                    )
                }
                _ => {}
            }
        }
    }

    // C4 — no isolated non-mandatory deployment: it is used by something
    // deployed, or reachable from a deployed mandatory component.
    let used_by_someone = |name: &str| {
        resolved
            .iter()
            .any(|r| r.component != name && r.flavour.uses.iter().any(|u| u.component == name))
    };
    let mandatory_reachable: BTreeSet<&str> = {
        let mut seen: BTreeSet<&str> = resolved
            .iter()
            .filter(|r| r.mandatory)
            .map(|r| r.component)
            .collect();
        let mut frontier: Vec<&str> = seen.iter().copied().collect();
        while let Some(name) = frontier.pop() {
            if let Some(r) = assignment_of(name) {
                for dep in &r.flavour.uses {
                    if let Some(target) = assignment_of(&dep.component) {
                        if seen.insert(target.component) {
                            frontier.push(target.component);
                        }
                    }
                }
            }
        }
        seen
    };
    for r in &resolved {
        if !r.mandatory
            && !used_by_someone(r.component)
            && !mandatory_reachable.contains(r.component)
        {
            push(
                "C4",
                format!(
                    "non-mandatory component {} is deployed in isolation",
                    r.component
                ),
            );
        }
    }

    // C5 — node capacities per consumable resource.
    let mut demands: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    for r in &resolved {
        for (res, amount) in &r.flavour.resources {
            *demands.entry((&r.node.name, res.as_str())).or_default() += amount;
        }
    }
    for ((node, res), demand) in &demands {
        let capacity = p
            .infra
            .node(node)
            .and_then(|n| n.capacities.get(*res))
            .copied()
            .unwrap_or(0.0);
        if *demand > capacity {
            push(
                "C5",
                format!("node {node} over capacity on {res}: demand {demand} > {capacity}"),
            );
        }
    }

    // C6 — attribute requirements (an unavailable node satisfies nothing).
    for r in &resolved {
        if !r.node.available {
            push(
                "C6",
                format!(
                    "node {} hosting {} is unavailable",
                    r.node.name, r.component
                ),
            );
        }
        for (attr, requirement) in &r.flavour.attributes {
            match r.node.attributes.get(attr) {
                None => push(
                    "C6",
                    format!(
                        "{} ({}) requires attribute {attr}, absent on node {}",
                        r.component, r.flavour.name, r.node.name
                    ),
                ),
                Some(value) if !requirement.accepts(value) => push(
                    "C6",
                    format!(
                        "{} ({}) requires {attr} in {:?}, node {} has {value}",
                        r.component,
                        r.flavour.name,
                        requirement
                            .0
                            .iter()
                            .map(|v| v.to_string())
                            .collect::<Vec<_>>(),
                        r.node.name
                    ),
                ),
                _ => {}
            }
        }
    }

    // C7 — links for cross-node dependencies, with optional bounds.
    for r in &resolved {
        for dep in &r.flavour.uses {
            let Some(provider) = assignment_of(&dep.component) else {
                continue;
            };
            match p.infra.link_between(&r.node.name, &provider.node.name) {
                None => push(
                    "C7",
                    format!(
                        "{} on {} cannot reach {} on {}: no link",
                        r.component, r.node.name, dep.component, provider.node.name
                    ),
                ),
                Some(link) => {
                    if let Some(bound) = dep.max_latency_ms {
                        if link.latency_ms > bound {
                            push(
                                "C7",
                                format!(
                                    "link {}--{} latency {} exceeds bound {} of {} -> {}",
                                    r.node.name,
                                    provider.node.name,
                                    link.latency_ms,
                                    bound,
                                    r.component,
                                    dep.component
                                ),
                            );
                        }
                    }
                    if let Some(bound) = dep.min_availability {
                        if link.availability < bound {
                            push(
                                "C7",
                                format!(
                                    "link {}--{} availability {} below bound {} of {} -> {}",
                                    r.node.name,
                                    provider.node.name,
                                    link.availability,
                                    bound,
                                    r.component,
                                    dep.component
                                ),
                            );
                        }
                    }
                }
            }
        }
    }

    // C8 — monetary budget.
    let cost: f64 = resolved
        .iter()
        .map(|r| {
            r.flavour
                .resources
                .iter()
                .map(|(res, amount)| amount * r.node.unit_costs.get(res).copied().unwrap_or(0.0))
                .sum::<f64>()
        })
        .sum();
    if cost > p.app.budgets.monetary {
        push(
            "C8",
            format!(
                "projected cost {cost} exceeds monetary budget {}",
                p.app.budgets.monetary
            ),
        );
    }

    // C9 — projected energy and carbon budgets over the planning horizon.
    let energy_kwh: f64 = resolved
        .iter()
        .map(|r| r.flavour.energy_w * p.round_hours / 1000.0)
        .sum();
    if energy_kwh > p.app.budgets.energy_kwh {
        push(
            "C9",
            format!(
                "projected energy {energy_kwh} kWh exceeds budget {} kWh",
                p.app.budgets.energy_kwh
            ),
        );
    }
    let carbon_g: f64 = resolved
        .iter()
        .map(|r| r.flavour.energy_w * p.round_hours / 1000.0 * r.node.carbon_intensity)
        .sum();
    if carbon_g > p.app.budgets.carbon_g {
        push(
            "C9",
            format!(
                "projected emissions {carbon_g} g exceed budget {} g",
                p.app.budgets.carbon_g
            ),
        );
    }

    // C10 — enforced soft constraints.
    for sc in &p.enforced {
        match &sc.kind {
            ConstraintKind::Avoid {
                component,
                flavour,
                node,
            } => {
                let hit = resolved.iter().any(|r| {
                    r.component == component && r.flavour.name == *flavour && r.node.name == *node
                });
                if hit {
                    push(
                        "C10",
                        format!("avoid violated: {} ({flavour}) is on {node}", component),
                    );
                }
            }
            ConstraintKind::Affinity { a, b } | ConstraintKind::AntiAffinity { a, b } => {
                let pick = |fr: &crate::model::FlavourRef| {
                    assignment_of(&fr.component).filter(|r| r.flavour.name == fr.flavour)
                };
                let (Some(ra), Some(rb)) = (pick(a), pick(b)) else {
                    continue;
                };
                let same = ra.node.name == rb.node.name;
                let wants_same = matches!(sc.kind, ConstraintKind::Affinity { .. });
                if same != wants_same {
                    push(
                        "C10",
                        format!(
                            "{} violated: {} and {} are on {}",
                            if wants_same {
                                "affinity"
                            } else {
                                "antiaffinity"
                            },
                            a.component,
                            b.component,
                            if same {
                                format!("the same node {}", ra.node.name)
                            } else {
                                format!("different nodes {} and {}", ra.node.name, rb.node.name)
                            }
                        ),
                    );
                }
            }
        }
    }

    out
}
