//! Core domain model: application and infrastructure specifications, deployments,
//! and soft placement constraints.
//!
//! Invariants enforced here (and leaned on everywhere else):
//! - names are plain identifiers (`[A-Za-z0-9_-]+`) so every text format can
//!   round-trip them unambiguously;
//! - a `Deployment` keeps its assignments sorted, which makes deployments
//!   directly comparable (`Ord`) and emission byte-deterministic;
//! - pairwise constraints (affinity / anti-affinity) are stored with their
//!   endpoints in sorted order, so the same pair always has the same identity.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Consumable quantities keyed by resource name (cpu millicores, ram MB, ...).
pub type Resources = BTreeMap<String, f64>;

/// A node attribute value. Subnets are strings, feature flags are booleans.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Bool(bool),
    Text(String),
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::Bool(b) => write!(f, "{b}"),
            AttrValue::Text(s) => write!(f, "{s}"),
        }
    }
}

/// Set of acceptable values for one attribute. A scalar in YAML is shorthand
/// for a one-element set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AttrRequirement(pub Vec<AttrValue>);

impl AttrRequirement {
    pub fn accepts(&self, value: &AttrValue) -> bool {
        self.0.contains(value)
    }
}

impl<'de> Deserialize<'de> for AttrRequirement {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum OneOrMany {
            One(AttrValue),
            Many(Vec<AttrValue>),
        }
        Ok(match OneOrMany::deserialize(de)? {
            OneOrMany::One(v) => AttrRequirement(vec![v]),
            OneOrMany::Many(v) => AttrRequirement(v),
        })
    }
}

/// A dependency of one component on another, carried per flavour.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dependency {
    pub component: String,
    /// Minimum importance the provider's assigned flavour must have.
    #[serde(default = "one")]
    pub min_importance: u32,
    /// Optional upper bound on the latency of the link between the two nodes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_latency_ms: Option<f64>,
    /// Optional lower bound on the availability of that link.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_availability: Option<f64>,
}

fn one() -> u32 {
    1
}

/// One deployable variant of a component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flavour {
    pub name: String,
    /// Positive integer; a higher value means a more powerful variant.
    pub importance: u32,
    /// Resource demands when deployed.
    pub resources: Resources,
    /// Attribute requirements a hosting node must satisfy.
    #[serde(default)]
    pub attributes: BTreeMap<String, AttrRequirement>,
    /// Components this flavour calls into.
    #[serde(default)]
    pub uses: Vec<Dependency>,
    /// Nominal power draw in watts while running.
    #[serde(default)]
    pub energy_w: f64,
}

impl Flavour {
    /// Whether a node offers every attribute this flavour requires, with an
    /// acceptable value.
    pub fn attributes_satisfied_by(&self, node: &Node) -> bool {
        self.attributes.iter().all(|(attr, req)| {
            node.attributes
                .get(attr)
                .map(|v| req.accepts(v))
                .unwrap_or(false)
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub name: String,
    #[serde(default)]
    pub mandatory: bool,
    pub flavours: Vec<Flavour>,
}

impl Component {
    pub fn flavour(&self, name: &str) -> Option<&Flavour> {
        self.flavours.iter().find(|f| f.name == name)
    }

    pub fn max_importance(&self) -> u64 {
        self.flavours
            .iter()
            .map(|f| u64::from(f.importance))
            .max()
            .unwrap_or(0)
    }
}

/// Application-wide spending limits. Missing budgets are unbounded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budgets {
    #[serde(default = "unbounded")]
    pub monetary: f64,
    #[serde(default = "unbounded")]
    pub carbon_g: f64,
    #[serde(default = "unbounded")]
    pub energy_kwh: f64,
}

fn unbounded() -> f64 {
    f64::INFINITY
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            monetary: f64::INFINITY,
            carbon_g: f64::INFINITY,
            energy_kwh: f64::INFINITY,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApplicationSpec {
    pub name: String,
    #[serde(default)]
    pub budgets: Budgets,
    pub components: Vec<Component>,
}

impl ApplicationSpec {
    pub fn component(&self, name: &str) -> Option<&Component> {
        self.components.iter().find(|c| c.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub capacities: Resources,
    #[serde(default)]
    pub attributes: BTreeMap<String, AttrValue>,
    /// Cost per unit of each consumable resource. Missing entries cost nothing.
    #[serde(default)]
    pub unit_costs: Resources,
    /// Grid carbon intensity in gCO2 per kWh.
    #[serde(default)]
    pub carbon_intensity: f64,
    #[serde(default = "yes")]
    pub available: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub a: String,
    pub b: String,
    #[serde(default)]
    pub latency_ms: f64,
    #[serde(default = "full")]
    pub availability: f64,
}

fn full() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfrastructureSpec {
    pub nodes: Vec<Node>,
    #[serde(default)]
    pub links: Vec<Link>,
}

/// Effective link properties between two nodes, if they can talk at all.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkView {
    pub latency_ms: f64,
    pub availability: f64,
}

impl InfrastructureSpec {
    pub fn node(&self, name: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.name == name)
    }

    /// A node reaches itself with zero latency and full availability; other
    /// pairs need a declared link (direction does not matter).
    pub fn link_between(&self, a: &str, b: &str) -> Option<LinkView> {
        if a == b {
            return Some(LinkView {
                latency_ms: 0.0,
                availability: 1.0,
            });
        }
        self.links
            .iter()
            .find(|l| (l.a == a && l.b == b) || (l.a == b && l.b == a))
            .map(|l| LinkView {
                latency_ms: l.latency_ms,
                availability: l.availability,
            })
    }
}

/// One component placed as one flavour on one node.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Assignment {
    pub component: String,
    pub flavour: String,
    pub node: String,
}

impl Assignment {
    pub fn new(component: &str, flavour: &str, node: &str) -> Self {
        Assignment {
            component: component.to_string(),
            flavour: flavour.to_string(),
            node: node.to_string(),
        }
    }
}

/// A (partial) placement of the application. Assignments are kept sorted, so
/// two deployments with the same content compare equal and emit identical
/// text. Duplicate component entries are representable (and flagged by the
/// solver's verifier) but never produced by well-behaved constructors.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct Deployment {
    assignments: Vec<Assignment>,
}

impl Deployment {
    pub fn new(mut assignments: Vec<Assignment>) -> Self {
        assignments.sort();
        Deployment { assignments }
    }

    pub fn empty() -> Self {
        Deployment::default()
    }

    pub fn assignments(&self) -> &[Assignment] {
        &self.assignments
    }

    pub fn get(&self, component: &str) -> Option<&Assignment> {
        self.assignments.iter().find(|a| a.component == component)
    }

    /// Node hosting a component, if deployed.
    pub fn node_of(&self, component: &str) -> Option<&str> {
        self.get(component).map(|a| a.node.as_str())
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    /// Sum of the importance of every assigned flavour (unknown references
    /// contribute nothing; the verifier reports them separately).
    pub fn total_importance(&self, app: &ApplicationSpec) -> u64 {
        self.assignments
            .iter()
            .filter_map(|a| {
                app.component(&a.component)
                    .and_then(|c| c.flavour(&a.flavour))
            })
            .map(|f| u64::from(f.importance))
            .sum()
    }

    /// Number of components keeping their exact (flavour, node) pair.
    pub fn kept_from(&self, previous: &Deployment) -> u64 {
        self.assignments
            .iter()
            .filter(|a| previous.get(&a.component).map(|p| p == *a).unwrap_or(false))
            .count() as u64
    }

    /// Components whose assignment differs between the two deployments,
    /// counting additions and removals.
    pub fn changes_from(&self, previous: &Deployment) -> usize {
        let mut names: BTreeSet<&str> = BTreeSet::new();
        names.extend(self.assignments.iter().map(|a| a.component.as_str()));
        names.extend(previous.assignments.iter().map(|a| a.component.as_str()));
        names
            .iter()
            .filter(|c| self.get(c) != previous.get(c))
            .count()
    }
}

/// Where a soft constraint came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Failure,
    Energy,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Failure => write!(f, "failure"),
            Provenance::Energy => write!(f, "energy"),
        }
    }
}

/// One endpoint of a pairwise constraint: a component pinned to a flavour.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct FlavourRef {
    pub component: String,
    pub flavour: String,
}

impl FlavourRef {
    pub fn new(component: &str, flavour: &str) -> Self {
        FlavourRef {
            component: component.to_string(),
            flavour: flavour.to_string(),
        }
    }
}

/// The shape of a soft constraint. Pairwise kinds are unordered: endpoints are
/// normalized to sorted order on construction.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ConstraintKind {
    /// Never place `component` in `flavour` on `node`.
    Avoid {
        component: String,
        flavour: String,
        node: String,
    },
    /// If both endpoints are deployed in the named flavours, co-locate them.
    Affinity { a: FlavourRef, b: FlavourRef },
    /// If both endpoints are deployed in the named flavours, separate them.
    AntiAffinity { a: FlavourRef, b: FlavourRef },
}

impl ConstraintKind {
    pub fn avoid(component: &str, flavour: &str, node: &str) -> Self {
        ConstraintKind::Avoid {
            component: component.to_string(),
            flavour: flavour.to_string(),
            node: node.to_string(),
        }
    }

    pub fn affinity(a: FlavourRef, b: FlavourRef) -> Self {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        ConstraintKind::Affinity { a, b }
    }

    pub fn anti_affinity(a: FlavourRef, b: FlavourRef) -> Self {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        ConstraintKind::AntiAffinity { a, b }
    }

    /// The unordered endpoint pair of a pairwise constraint.
    pub fn pair(&self) -> Option<(&FlavourRef, &FlavourRef)> {
        match self {
            ConstraintKind::Affinity { a, b } | ConstraintKind::AntiAffinity { a, b } => {
                Some((a, b))
            }
            ConstraintKind::Avoid { .. } => None,
        }
    }

    /// Canonical functor text without weight or terminator; this is the
    /// constraint's identity for deduplication and memory purposes.
    pub fn text(&self) -> String {
        match self {
            ConstraintKind::Avoid {
                component,
                flavour,
                node,
            } => {
                format!("avoid(d({component},{flavour}),{node})")
            }
            ConstraintKind::Affinity { a, b } => format!(
                "affinity(d({},{}),d({},{}))",
                a.component, a.flavour, b.component, b.flavour
            ),
            ConstraintKind::AntiAffinity { a, b } => format!(
                "antiaffinity(d({},{}),d({},{}))",
                a.component, a.flavour, b.component, b.flavour
            ),
        }
    }
}

/// A weighted, provenance-tagged soft constraint.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftConstraint {
    pub kind: ConstraintKind,
    /// Relative priority in (0, 1]; failure constraints always carry 1.0.
    pub weight: f64,
    pub provenance: Provenance,
    /// Projected emissions behind an energy constraint, in gCO2.
    pub estimated_impact_g: Option<f64>,
}

impl SoftConstraint {
    pub fn failure(kind: ConstraintKind) -> Self {
        SoftConstraint {
            kind,
            weight: 1.0,
            provenance: Provenance::Failure,
            estimated_impact_g: None,
        }
    }

    pub fn energy(kind: ConstraintKind, weight: f64, impact_g: f64) -> Self {
        SoftConstraint {
            kind,
            weight,
            provenance: Provenance::Energy,
            estimated_impact_g: Some(impact_g),
        }
    }

    /// Identity used for deduplication, conflict detection and knowledge-base
    /// memory: the functor text without the (round-dependent) weight.
    pub fn identity(&self) -> String {
        self.kind.text()
    }

    /// One line of constraint-file text, terminator included. Energy
    /// constraints carry their weight; failure constraints are unweighted.
    pub fn render(&self) -> String {
        let body = self.kind.text();
        match self.provenance {
            Provenance::Failure => format!("{body}."),
            Provenance::Energy => {
                // insert the weight as a last argument
                let trimmed = body.strip_suffix(')').expect("functor text ends with ')'");
                format!("{trimmed},{}).", fmt_weight(self.weight))
            }
        }
    }
}

/// Format a weight with up to three decimals, dropping trailing zeros but
/// keeping at least one decimal: 1.0, 0.883, 0.49.
pub fn fmt_weight(w: f64) -> String {
    let mut s = format!("{w:.3}");
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.push('0');
    }
    s
}

/// Sum over components of their most important flavour; the ceiling used to
/// normalize deployment quality.
pub fn max_total_importance(app: &ApplicationSpec) -> u64 {
    app.components.iter().map(|c| c.max_importance()).sum()
}

/// A specification problem found by [`validate_specs`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

fn valid_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Cross-check both specifications and report every problem found. An empty
/// result means the pair is well-formed.
pub fn validate_specs(app: &ApplicationSpec, infra: &InfrastructureSpec) -> Vec<Violation> {
    let mut out = validate_application(app);
    out.extend(validate_infrastructure(infra));
    out
}

pub fn validate_application(app: &ApplicationSpec) -> Vec<Violation> {
    let mut v = Vec::new();
    let mut push = |m: String| v.push(Violation { message: m });

    if !valid_name(&app.name) {
        push(format!(
            "application name {:?} is not a plain identifier",
            app.name
        ));
    }
    let mut seen = BTreeSet::new();
    for comp in &app.components {
        if !valid_name(&comp.name) {
            push(format!(
                "component name {:?} is not a plain identifier",
                comp.name
            ));
        }
        if !seen.insert(&comp.name) {
            push(format!("duplicate component name {}", comp.name));
        }
        if comp.flavours.is_empty() {
            push(format!("component {} has no flavours", comp.name));
        }
        let mut fseen = BTreeSet::new();
        for fl in &comp.flavours {
            let at = format!("{}/{}", comp.name, fl.name);
            if !valid_name(&fl.name) {
                push(format!(
                    "flavour name {:?} of {} is not a plain identifier",
                    fl.name, comp.name
                ));
            }
            if !fseen.insert(&fl.name) {
                push(format!("duplicate flavour name {at}"));
            }
            if fl.importance == 0 {
                push(format!("flavour {at} must have positive importance"));
            }
            for (res, amount) in &fl.resources {
                if *amount < 0.0 || !amount.is_finite() {
                    push(format!(
                        "flavour {at} demands a negative or non-finite amount of {res}"
                    ));
                }
            }
            if fl.energy_w < 0.0 || !fl.energy_w.is_finite() {
                push(format!(
                    "flavour {at} has a negative or non-finite energy draw"
                ));
            }
            for (attr, req) in &fl.attributes {
                if req.0.is_empty() {
                    push(format!(
                        "flavour {at} requires attribute {attr} with an empty value set"
                    ));
                }
            }
            for dep in &fl.uses {
                if app.component(&dep.component).is_none() {
                    push(format!(
                        "flavour {at} depends on unknown component {}",
                        dep.component
                    ));
                }
                if dep.component == comp.name {
                    push(format!("flavour {at} depends on its own component"));
                }
                if dep.min_importance == 0 {
                    push(format!(
                        "flavour {at} requires non-positive importance of {}",
                        dep.component
                    ));
                }
                if let Some(l) = dep.max_latency_ms {
                    if l < 0.0 || !l.is_finite() {
                        push(format!(
                            "flavour {at} has an invalid latency bound on {}",
                            dep.component
                        ));
                    }
                }
                if let Some(a) = dep.min_availability {
                    if !(0.0..=1.0).contains(&a) {
                        push(format!(
                            "flavour {at} has an availability bound on {} outside [0,1]",
                            dep.component
                        ));
                    }
                }
            }
        }
    }
    for (label, b) in [
        ("monetary", app.budgets.monetary),
        ("carbon_g", app.budgets.carbon_g),
        ("energy_kwh", app.budgets.energy_kwh),
    ] {
        if b < 0.0 || b.is_nan() {
            push(format!("budget {label} must be non-negative"));
        }
    }
    v
}

pub fn validate_infrastructure(infra: &InfrastructureSpec) -> Vec<Violation> {
    let mut v = Vec::new();
    let mut push = |m: String| v.push(Violation { message: m });

    let mut seen = BTreeSet::new();
    for node in &infra.nodes {
        if !valid_name(&node.name) {
            push(format!(
                "node name {:?} is not a plain identifier",
                node.name
            ));
        }
        if !seen.insert(&node.name) {
            push(format!("duplicate node name {}", node.name));
        }
        for (res, cap) in &node.capacities {
            if *cap < 0.0 || !cap.is_finite() {
                push(format!(
                    "node {} has a negative or non-finite {res} capacity",
                    node.name
                ));
            }
        }
        for (res, cost) in &node.unit_costs {
            if !node.capacities.contains_key(res) {
                push(format!("node {} prices unknown resource {res}", node.name));
            }
            if *cost < 0.0 || !cost.is_finite() {
                push(format!(
                    "node {} has a negative or non-finite {res} unit cost",
                    node.name
                ));
            }
        }
        if node.carbon_intensity < 0.0 || !node.carbon_intensity.is_finite() {
            push(format!(
                "node {} has a negative or non-finite carbon intensity",
                node.name
            ));
        }
    }
    let mut pairs = BTreeSet::new();
    for link in &infra.links {
        for end in [&link.a, &link.b] {
            if infra.node(end).is_none() {
                push(format!(
                    "link {}--{} references unknown node {end}",
                    link.a, link.b
                ));
            }
        }
        if link.a == link.b {
            push(format!(
                "link {}--{} is a self-loop; nodes reach themselves implicitly",
                link.a, link.b
            ));
        }
        let key = if link.a <= link.b {
            (link.a.clone(), link.b.clone())
        } else {
            (link.b.clone(), link.a.clone())
        };
        if !pairs.insert(key) {
            push(format!("duplicate link between {} and {}", link.a, link.b));
        }
        if link.latency_ms < 0.0 || !link.latency_ms.is_finite() {
            push(format!(
                "link {}--{} has a negative or non-finite latency",
                link.a, link.b
            ));
        }
        if !(0.0..=1.0).contains(&link.availability) {
            push(format!(
                "link {}--{} has availability outside [0,1]",
                link.a, link.b
            ));
        }
    }
    v
}
