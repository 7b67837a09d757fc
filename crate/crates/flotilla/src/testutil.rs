//! Compact builders for specification values used across unit tests.

use std::collections::BTreeMap;

use crate::model::{
    ApplicationSpec, AttrRequirement, AttrValue, Budgets, Component, Dependency, Flavour,
    InfrastructureSpec, Link, Node, Resources,
};

pub fn resources(pairs: &[(&str, f64)]) -> Resources {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

pub fn flavour(name: &str, importance: u32, res: &[(&str, f64)], energy_w: f64) -> Flavour {
    Flavour {
        name: name.into(),
        importance,
        resources: resources(res),
        attributes: BTreeMap::new(),
        uses: Vec::new(),
        energy_w,
    }
}

pub fn uses(mut f: Flavour, targets: &[&str]) -> Flavour {
    f.uses = targets
        .iter()
        .map(|t| Dependency {
            component: t.to_string(),
            min_importance: 1,
            max_latency_ms: None,
            min_availability: None,
        })
        .collect();
    f
}

pub fn needs_attr(mut f: Flavour, key: &str, value: AttrValue) -> Flavour {
    f.attributes
        .insert(key.into(), AttrRequirement(vec![value]));
    f
}

pub fn component(name: &str, mandatory: bool, flavours: Vec<Flavour>) -> Component {
    Component {
        name: name.into(),
        mandatory,
        flavours,
    }
}

pub fn app(name: &str, components: Vec<Component>) -> ApplicationSpec {
    ApplicationSpec {
        name: name.into(),
        budgets: Budgets::default(),
        components,
    }
}

pub fn node(name: &str, caps: &[(&str, f64)], carbon_intensity: f64) -> Node {
    Node {
        name: name.into(),
        capacities: resources(caps),
        attributes: BTreeMap::new(),
        unit_costs: Resources::new(),
        carbon_intensity,
        available: true,
    }
}

pub fn has_attr(mut n: Node, key: &str, value: AttrValue) -> Node {
    n.attributes.insert(key.into(), value);
    n
}

pub fn infra(nodes: Vec<Node>, links: &[(&str, &str)]) -> InfrastructureSpec {
    InfrastructureSpec {
        nodes,
        links: links
            .iter()
            .map(|(a, b)| Link {
                a: a.to_string(),
                b: b.to_string(),
                latency_ms: 0.0,
                availability: 1.0,
            })
            .collect(),
    }
}

/// Fully connect every node pair (convenience for small instances).
pub fn mesh(nodes: Vec<Node>) -> InfrastructureSpec {
    let names: Vec<String> = nodes.iter().map(|n| n.name.clone()).collect();
    let mut links = Vec::new();
    for i in 0..names.len() {
        for j in i + 1..names.len() {
            links.push(Link {
                a: names[i].clone(),
                b: names[j].clone(),
                latency_ms: 0.0,
                availability: 1.0,
            });
        }
    }
    InfrastructureSpec { nodes, links }
}
