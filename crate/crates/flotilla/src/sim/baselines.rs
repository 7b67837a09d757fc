//! Capacity-only placement baselines.
//!
//! Both strategies place each component's *largest* flavour (highest
//! importance) and look only at resource capacities — attribute requirements,
//! dependencies, link qualities, budgets, and soft constraints are all
//! ignored. They exist as a yardstick for the constraint-aware solver, not as
//! sensible planners.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{
    ApplicationSpec, Assignment, Component, Deployment, Flavour, InfrastructureSpec,
};

/// The flavour a baseline deploys: the highest-importance one, first declared
/// on ties.
pub fn largest_flavour(component: &Component) -> Option<&Flavour> {
    component
        .flavours
        .iter()
        .fold(None, |best: Option<&Flavour>, f| match best {
            Some(b) if b.importance >= f.importance => Some(b),
            _ => Some(f),
        })
}

fn fits(
    flavour: &Flavour,
    node_caps: &BTreeMap<String, f64>,
    used: &BTreeMap<String, f64>,
) -> bool {
    flavour.resources.iter().all(|(r, demand)| {
        let cap = node_caps.get(r).copied().unwrap_or(0.0);
        used.get(r).copied().unwrap_or(0.0) + demand <= cap
    })
}

/// Walk components in declaration order and put each one on the *first* node
/// (declaration order) with spare capacity for the largest flavour.
/// Components that fit nowhere stay undeployed.
pub fn first_fit(app: &ApplicationSpec, infra: &InfrastructureSpec) -> Deployment {
    let mut used: BTreeMap<&str, BTreeMap<String, f64>> = BTreeMap::new();
    let mut assignments = Vec::new();
    for component in &app.components {
        let Some(flavour) = largest_flavour(component) else {
            continue;
        };
        for node in &infra.nodes {
            let load = used.entry(node.name.as_str()).or_default();
            if fits(flavour, &node.capacities, load) {
                for (r, d) in &flavour.resources {
                    *load.entry(r.clone()).or_insert(0.0) += d;
                }
                assignments.push(Assignment::new(&component.name, &flavour.name, &node.name));
                break;
            }
        }
    }
    Deployment::new(assignments)
}

/// Walk components in declaration order and put each one on the feasible node
/// whose *mean utilization after placement* — averaged over every resource
/// the node declares with positive capacity — is highest, i.e. pack nodes as
/// tightly as possible. Exact ties are broken uniformly with a seeded RNG, so
/// a fixed seed makes the strategy a pure function of its inputs.
pub fn best_fit(app: &ApplicationSpec, infra: &InfrastructureSpec, seed: u64) -> Deployment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used: BTreeMap<&str, BTreeMap<String, f64>> = BTreeMap::new();
    let mut assignments = Vec::new();
    for component in &app.components {
        let Some(flavour) = largest_flavour(component) else {
            continue;
        };
        let mut best: Vec<usize> = Vec::new();
        let mut best_mean = f64::NEG_INFINITY;
        for (i, node) in infra.nodes.iter().enumerate() {
            let load = used.entry(node.name.as_str()).or_default();
            if !fits(flavour, &node.capacities, load) {
                continue;
            }
            let mut ratios = Vec::new();
            for (r, cap) in &node.capacities {
                if *cap <= 0.0 {
                    continue;
                }
                let after = load.get(r).copied().unwrap_or(0.0)
                    + flavour.resources.get(r).copied().unwrap_or(0.0);
                ratios.push(after / cap);
            }
            if ratios.is_empty() {
                continue;
            }
            let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
            if mean > best_mean {
                best_mean = mean;
                best = vec![i];
            } else if mean == best_mean {
                best.push(i);
            }
        }
        if best.is_empty() {
            continue;
        }
        let node = &infra.nodes[best[rng.gen_range(0..best.len())]];
        let load = used.entry(node.name.as_str()).or_default();
        for (r, d) in &flavour.resources {
            *load.entry(r.clone()).or_insert(0.0) += d;
        }
        assignments.push(Assignment::new(&component.name, &flavour.name, &node.name));
    }
    Deployment::new(assignments)
}
