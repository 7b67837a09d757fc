//! Helpers shared by the integration-test binaries: fixture loading and the
//! seeded random-instance generator used to cross-check the solver against
//! the exhaustive oracle.

#![allow(dead_code)] // each test binary uses its own subset

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use flotilla::io::{parse_application, parse_infrastructure};
use flotilla::model::{
    ApplicationSpec, Assignment, AttrRequirement, AttrValue, Budgets, Component, ConstraintKind,
    Dependency, Deployment, Flavour, FlavourRef, InfrastructureSpec, Link, Node, SoftConstraint,
};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn read_fixture(name: &str) -> String {
    fs::read_to_string(fixture(name)).unwrap_or_else(|e| panic!("fixture {name}: {e}"))
}

pub fn fixture_specs() -> (ApplicationSpec, InfrastructureSpec) {
    let app = parse_application(&read_fixture("application.yaml")).expect("application parses");
    let infra =
        parse_infrastructure(&read_fixture("infrastructure.yaml")).expect("infrastructure parses");
    (app, infra)
}

/// Small random instance: up to 3 components × 3 flavours × 4 nodes, with
/// optional attributes, dependencies, sparse links, budgets, and a couple of
/// soft constraints. Small enough that the oracle always enumerates it.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
) -> (ApplicationSpec, InfrastructureSpec, Vec<SoftConstraint>) {
    let zones = ["alpha", "beta"];
    let n_comp = rng.gen_range(1..=3);
    let n_nodes = rng.gen_range(1..=4);

    let mut components = Vec::new();
    for ci in 0..n_comp {
        let n_flav = rng.gen_range(1..=3);
        let mut flavours = Vec::new();
        for fi in 0..n_flav {
            let mut resources = BTreeMap::new();
            resources.insert("cpu".to_string(), rng.gen_range(1..=8) as f64 * 100.0);
            if rng.gen_bool(0.6) {
                resources.insert("ram".to_string(), rng.gen_range(1..=8) as f64 * 100.0);
            }
            let mut attributes = BTreeMap::new();
            if rng.gen_bool(0.25) {
                let zone = zones[rng.gen_range(0..zones.len())];
                attributes.insert(
                    "zone".to_string(),
                    AttrRequirement(vec![AttrValue::Text(zone.to_string())]),
                );
            }
            let mut uses = Vec::new();
            if n_comp > 1 && rng.gen_bool(0.3) {
                let mut target = rng.gen_range(0..n_comp);
                if target == ci {
                    target = (target + 1) % n_comp;
                }
                uses.push(Dependency {
                    component: format!("c{target}"),
                    min_importance: rng.gen_range(1..=2),
                    max_latency_ms: None,
                    min_availability: None,
                });
            }
            flavours.push(Flavour {
                name: format!("f{fi}"),
                importance: (fi + 1) as u32,
                resources,
                attributes,
                uses,
                energy_w: rng.gen_range(1..=40) as f64,
            });
        }
        components.push(Component {
            name: format!("c{ci}"),
            mandatory: rng.gen_bool(0.7),
            flavours,
        });
    }

    let budgets = Budgets {
        monetary: if rng.gen_bool(0.25) {
            rng.gen_range(5..=40) as f64
        } else {
            f64::INFINITY
        },
        carbon_g: if rng.gen_bool(0.2) {
            rng.gen_range(20..=200) as f64
        } else {
            f64::INFINITY
        },
        energy_kwh: f64::INFINITY,
    };
    let app = ApplicationSpec {
        name: "rand".to_string(),
        budgets,
        components,
    };

    let mut nodes = Vec::new();
    for ni in 0..n_nodes {
        let mut capacities = BTreeMap::new();
        capacities.insert("cpu".to_string(), rng.gen_range(2..=12) as f64 * 100.0);
        capacities.insert("ram".to_string(), rng.gen_range(2..=12) as f64 * 100.0);
        let mut unit_costs = BTreeMap::new();
        unit_costs.insert("cpu".to_string(), 0.01);
        let mut attributes = BTreeMap::new();
        attributes.insert(
            "zone".to_string(),
            AttrValue::Text(zones[rng.gen_range(0..2)].to_string()),
        );
        nodes.push(Node {
            name: format!("n{ni}"),
            capacities,
            attributes,
            unit_costs,
            carbon_intensity: rng.gen_range(50..=900) as f64,
            available: rng.gen_bool(0.85),
        });
    }
    let mut links = Vec::new();
    for a in 0..n_nodes {
        for b in (a + 1)..n_nodes {
            if rng.gen_bool(0.55) {
                links.push(Link {
                    a: format!("n{a}"),
                    b: format!("n{b}"),
                    latency_ms: rng.gen_range(1..=20) as f64,
                    availability: 1.0,
                });
            }
        }
    }
    let infra = InfrastructureSpec { nodes, links };

    let mut soft = Vec::new();
    for _ in 0..rng.gen_range(0..=2) {
        let ci = rng.gen_range(0..app.components.len());
        let comp = &app.components[ci];
        let flavour = &comp.flavours[rng.gen_range(0..comp.flavours.len())].name;
        let kind = if rng.gen_bool(0.5) || app.components.len() == 1 {
            let node = format!("n{}", rng.gen_range(0..n_nodes));
            ConstraintKind::avoid(&comp.name, flavour, &node)
        } else {
            let mut cj = rng.gen_range(0..app.components.len());
            if cj == ci {
                cj = (cj + 1) % app.components.len();
            }
            let other = &app.components[cj];
            let other_flavour = &other.flavours[rng.gen_range(0..other.flavours.len())].name;
            let a = FlavourRef::new(&comp.name, flavour);
            let b = FlavourRef::new(&other.name, other_flavour);
            if rng.gen_bool(0.5) {
                ConstraintKind::affinity(a, b)
            } else {
                ConstraintKind::anti_affinity(a, b)
            }
        };
        soft.push(if rng.gen_bool(0.5) {
            SoftConstraint::failure(kind)
        } else {
            SoftConstraint::energy(kind, [0.25, 0.5, 1.0][rng.gen_range(0..3)], 30.0)
        });
    }
    (app, infra, soft)
}

/// A plausible-but-arbitrary previous deployment over the same namespace,
/// possibly partial and possibly infeasible.
pub fn random_previous(
    rng: &mut ChaCha8Rng,
    app: &ApplicationSpec,
    infra: &InfrastructureSpec,
) -> Deployment {
    let mut assignments = Vec::new();
    for comp in &app.components {
        if rng.gen_bool(0.7) {
            let flavour = &comp.flavours[rng.gen_range(0..comp.flavours.len())].name;
            let node = &infra.nodes[rng.gen_range(0..infra.nodes.len())].name;
            assignments.push(Assignment::new(&comp.name, flavour, node));
        }
    }
    Deployment::new(assignments)
}
