//! Energy enhancer: estimates emissions from monitoring samples, maintains a
//! persistent knowledge base with memory-weight decay, and generates ranked
//! energy soft constraints.
//!
//! Round flow ([`enhance_round`]):
//! 1. [`absorb_observations`] folds the round's power samples into running
//!    min/avg/max profiles and appends carbon-intensity samples per node.
//! 2. [`generate_constraints`] projects each observed (component, flavour)
//!    onto every attribute-feasible node and emits `Avoid` constraints where
//!    the projected emissions exceed the service threshold — except that the
//!    avoids for one service are never allowed to cover *all* its feasible
//!    nodes: the lowest-impact node stays permitted so the service remains
//!    placeable. Connection profiles whose projected emissions exceed the
//!    connection threshold yield `Affinity` constraints. Weights are impacts
//!    normalized by the round maximum (the top constraint always weighs
//!    exactly 1.0), rounded to three decimals, ranked descending, truncated
//!    to the top k.
//! 3. [`update_knowledge`] resets the memory weight of regenerated
//!    constraints to 1.0, halves the weight of the rest, evicts entries at or
//!    below 0.125, and merges still-relevant stored constraints (memory
//!    weight ≥ 0.5) back into the fresh list.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::parse_constraints;
use crate::model::{
    ApplicationSpec, ConstraintKind, Deployment, FlavourRef, InfrastructureSpec, Node, Provenance,
    SoftConstraint,
};

/// Multiplier applied per round to the memory weight of constraints that were
/// not regenerated.
pub const DECAY_FACTOR: f64 = 0.5;
/// Entries whose memory weight falls to or below this after decay are dropped.
pub const EVICTION_FLOOR: f64 = 0.125;
/// Stored constraints at or above this memory weight are merged back into the
/// fresh output.
pub const RETRIEVAL_THRESHOLD: f64 = 0.5;
/// Carbon-intensity aggregation window, in samples (one sample per round).
pub const DEFAULT_WINDOW: usize = 3;
/// Maximum number of constraints emitted per round.
pub const DEFAULT_TOP_K: usize = 10;
/// Upper bound on retained carbon-intensity samples per node.
const MAX_HISTORY: usize = 32;

/// (component, flavour, node): the subject of a service power profile.
pub type ServiceKey = (String, String, String);
/// Directed (consumer component, flavour) → (provider component, flavour).
pub type ConnectionKey = ((String, String), (String, String));

/// Running power statistics for one subject. One aggregate sample is added
/// per observed round: the round's mean extends the average, while per-tick
/// extremes widen the min/max envelope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyProfile {
    pub min_w: f64,
    pub max_w: f64,
    pub avg_w: f64,
    pub samples: u64,
}

impl EnergyProfile {
    /// Build a profile from one round's per-tick samples.
    pub fn from_series(series: &[f64]) -> Option<Self> {
        if series.is_empty() {
            return None;
        }
        let min = series.iter().copied().fold(f64::INFINITY, f64::min);
        let max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // The mean is within [min, max] mathematically; clamp away the
        // accumulated floating-point drift so the invariant holds exactly.
        Some(EnergyProfile {
            min_w: min,
            max_w: max,
            avg_w: mean(series).clamp(min, max),
            samples: 1,
        })
    }

    /// Fold another round's samples in: widen min/max, extend the running
    /// average with the round mean as one new sample.
    pub fn absorb_series(&mut self, series: &[f64]) {
        if series.is_empty() {
            return;
        }
        let round_avg = mean(series);
        self.min_w = series.iter().copied().fold(self.min_w, f64::min);
        self.max_w = series.iter().copied().fold(self.max_w, f64::max);
        let n = self.samples as f64;
        // Each round mean lies inside the widened envelope, so the running
        // average does too; clamp away floating-point drift.
        self.avg_w = ((self.avg_w * n + round_avg) / (n + 1.0)).clamp(self.min_w, self.max_w);
        self.samples += 1;
    }

    fn validate(&self) -> Result<(), String> {
        if !(self.min_w.is_finite() && self.max_w.is_finite() && self.avg_w.is_finite()) {
            return Err("profile values must be finite".into());
        }
        if self.min_w < 0.0 {
            return Err("profile watts must be non-negative".into());
        }
        if !(self.min_w <= self.avg_w && self.avg_w <= self.max_w) {
            return Err(format!(
                "profile must satisfy min ≤ avg ≤ max, got {} / {} / {}",
                self.min_w, self.avg_w, self.max_w
            ));
        }
        if self.samples == 0 {
            return Err("profile needs at least one sample".into());
        }
        Ok(())
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// A constraint remembered across rounds, with the memory weight that tracks
/// how recently it was regenerated.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredConstraint {
    pub constraint: SoftConstraint,
    /// Relevance in (0, 1]: 1.0 when (re)generated, halved per idle round.
    pub memory_weight: f64,
}

/// Everything the energy enhancer remembers between rounds.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KnowledgeBase {
    pub service_profiles: BTreeMap<ServiceKey, EnergyProfile>,
    pub connection_profiles: BTreeMap<ConnectionKey, EnergyProfile>,
    /// Per node, the most recent carbon-intensity samples (gCO2/kWh), oldest
    /// first, capped at a bounded history.
    pub node_carbon_history: BTreeMap<String, Vec<f64>>,
    /// Keyed by the constraint's canonical text.
    pub stored_constraints: BTreeMap<String, StoredConstraint>,
}

#[derive(Debug, Error)]
pub enum KbError {
    #[error("knowledge base i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("knowledge base is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid knowledge base: {0}")]
    Invalid(String),
}

impl KnowledgeBase {
    /// Aggregated carbon intensity of a node over the last `window` samples.
    pub fn node_intensity(&self, node: &str, window: usize) -> Option<f64> {
        let history = self.node_carbon_history.get(node)?;
        aggregate_carbon_intensity(history, window)
    }

    pub fn load(path: &Path) -> Result<Self, KbError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), KbError> {
        Ok(std::fs::write(path, self.to_json())?)
    }

    /// Deterministic, human-readable JSON form (the on-disk schema).
    pub fn to_json(&self) -> String {
        let file = KbFile {
            service_profiles: self
                .service_profiles
                .iter()
                .map(|((c, f, n), p)| ServiceProfileEntry {
                    component: c.clone(),
                    flavour: f.clone(),
                    node: n.clone(),
                    profile: p.clone(),
                })
                .collect(),
            connection_profiles: self
                .connection_profiles
                .iter()
                .map(|(((c, fc), (s, fs)), p)| ConnectionProfileEntry {
                    from_component: c.clone(),
                    from_flavour: fc.clone(),
                    to_component: s.clone(),
                    to_flavour: fs.clone(),
                    profile: p.clone(),
                })
                .collect(),
            node_carbon_history: self.node_carbon_history.clone(),
            stored_constraints: self
                .stored_constraints
                .iter()
                .map(|(id, e)| StoredEntry {
                    constraint: id.clone(),
                    solver_weight: e.constraint.weight,
                    estimated_impact_g: e.constraint.estimated_impact_g,
                    memory_weight: e.memory_weight,
                })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("knowledge base serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, KbError> {
        let file: KbFile = serde_json::from_str(text)?;
        let mut kb = KnowledgeBase::default();
        for e in file.service_profiles {
            e.profile.validate().map_err(KbError::Invalid)?;
            let key = (e.component, e.flavour, e.node);
            if kb.service_profiles.insert(key.clone(), e.profile).is_some() {
                return Err(KbError::Invalid(format!(
                    "duplicate service profile for {key:?}"
                )));
            }
        }
        for e in file.connection_profiles {
            e.profile.validate().map_err(KbError::Invalid)?;
            let key = (
                (e.from_component, e.from_flavour),
                (e.to_component, e.to_flavour),
            );
            if kb
                .connection_profiles
                .insert(key.clone(), e.profile)
                .is_some()
            {
                return Err(KbError::Invalid(format!(
                    "duplicate connection profile for {key:?}"
                )));
            }
        }
        for (node, history) in file.node_carbon_history {
            if history.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(KbError::Invalid(format!(
                    "carbon history for {node} contains a negative or non-finite sample"
                )));
            }
            kb.node_carbon_history.insert(node, history);
        }
        for e in file.stored_constraints {
            if !(e.memory_weight > 0.0 && e.memory_weight <= 1.0) {
                return Err(KbError::Invalid(format!(
                    "memory weight for {} must be in (0, 1], got {}",
                    e.constraint, e.memory_weight
                )));
            }
            let parsed = parse_constraints(&format!("{}.", e.constraint), Provenance::Energy)
                .map_err(|err| KbError::Invalid(format!("stored constraint: {err}")))?;
            let [one] = parsed.as_slice() else {
                return Err(KbError::Invalid(format!(
                    "stored constraint {} must be a single functor",
                    e.constraint
                )));
            };
            let mut constraint = one.clone();
            constraint.weight = e.solver_weight;
            constraint.estimated_impact_g = e.estimated_impact_g;
            let id = constraint.identity();
            let entry = StoredConstraint {
                constraint,
                memory_weight: e.memory_weight,
            };
            if kb.stored_constraints.insert(id.clone(), entry).is_some() {
                return Err(KbError::Invalid(format!(
                    "duplicate stored constraint {id}"
                )));
            }
        }
        Ok(kb)
    }
}

#[derive(Serialize, Deserialize)]
struct KbFile {
    #[serde(default)]
    service_profiles: Vec<ServiceProfileEntry>,
    #[serde(default)]
    connection_profiles: Vec<ConnectionProfileEntry>,
    #[serde(default)]
    node_carbon_history: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    stored_constraints: Vec<StoredEntry>,
}

#[derive(Serialize, Deserialize)]
struct ServiceProfileEntry {
    component: String,
    flavour: String,
    node: String,
    #[serde(flatten)]
    profile: EnergyProfile,
}

#[derive(Serialize, Deserialize)]
struct ConnectionProfileEntry {
    from_component: String,
    from_flavour: String,
    to_component: String,
    to_flavour: String,
    #[serde(flatten)]
    profile: EnergyProfile,
}

#[derive(Serialize, Deserialize)]
struct StoredEntry {
    /// Canonical constraint text (no weight, no terminator).
    constraint: String,
    solver_weight: f64,
    estimated_impact_g: Option<f64>,
    memory_weight: f64,
}

/// Emission thresholds above which a subject attracts a constraint, in gCO2
/// per round.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub service_gco2: f64,
    pub connection_gco2: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            service_gco2: 25.0,
            connection_gco2: 25.0,
        }
    }
}

/// Tuning knobs for one enhancement round.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyConfig {
    pub thresholds: Thresholds,
    /// Duration of one round in hours; emissions are projected over it.
    pub round_hours: f64,
    /// Carbon-intensity aggregation window, in per-round samples.
    pub window: usize,
    /// Keep only the k highest-weight constraints.
    pub top_k: usize,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        EnergyConfig {
            thresholds: Thresholds::default(),
            round_hours: crate::solver::DEFAULT_ROUND_HOURS,
            window: DEFAULT_WINDOW,
            top_k: DEFAULT_TOP_K,
        }
    }
}

/// Power monitoring gathered over one round. Series hold one watt sample per
/// tick during which the subject was active; inactive subjects are simply
/// absent.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RoundObservations {
    /// Wall-clock minutes per tick.
    pub tick_minutes: f64,
    pub service_power: BTreeMap<ServiceKey, Vec<f64>>,
    pub connection_power: BTreeMap<ConnectionKey, Vec<f64>>,
    /// Mean grid carbon intensity per node over the round (gCO2/kWh).
    pub node_intensity: BTreeMap<String, f64>,
}

/// Estimated emissions per subject over one round, in gCO2.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmissionsReport {
    pub services: BTreeMap<ServiceKey, f64>,
    pub connections: BTreeMap<ConnectionKey, f64>,
}

/// Arithmetic mean of the last `window` samples. `None` on empty input or a
/// zero window.
pub fn aggregate_carbon_intensity(samples: &[f64], window: usize) -> Option<f64> {
    if samples.is_empty() || window == 0 {
        return None;
    }
    let tail = &samples[samples.len().saturating_sub(window)..];
    Some(mean(tail))
}

/// Convert power series into per-subject emissions: average power over the
/// subject's active ticks × active duration × carbon intensity of the hosting
/// node. A connection attributes half its power to each endpoint's node.
/// Subjects with no samples, or on nodes with no known intensity, are
/// omitted.
pub fn estimate_emissions(
    obs: &RoundObservations,
    intensity: &BTreeMap<String, f64>,
) -> EmissionsReport {
    let mut report = EmissionsReport::default();
    let hours_of = |ticks: usize| ticks as f64 * obs.tick_minutes / 60.0;
    for ((c, f, n), series) in &obs.service_power {
        if series.is_empty() {
            continue;
        }
        let Some(iota) = intensity.get(n) else {
            continue;
        };
        let grams = mean(series) / 1000.0 * hours_of(series.len()) * iota;
        report
            .services
            .insert((c.clone(), f.clone(), n.clone()), grams);
    }
    for (key, series) in &obs.connection_power {
        if series.is_empty() {
            continue;
        }
        let ((c, fc), (s, fs)) = key;
        let node_of = |comp: &str, flavour: &str| {
            obs.service_power
                .keys()
                .find(|(kc, kf, _)| kc == comp && kf == flavour)
                .map(|(_, _, n)| n.clone())
        };
        let (Some(na), Some(nb)) = (node_of(c, fc), node_of(s, fs)) else {
            continue;
        };
        let (Some(ia), Some(ib)) = (intensity.get(&na), intensity.get(&nb)) else {
            continue;
        };
        let grams = mean(series) / 1000.0 * hours_of(series.len()) * (ia + ib) / 2.0;
        report.connections.insert(key.clone(), grams);
    }
    report
}

/// Fold one round of monitoring into the knowledge base: merge power
/// profiles and append carbon-intensity samples.
pub fn absorb_observations(kb: &mut KnowledgeBase, obs: &RoundObservations) {
    for (key, series) in &obs.service_power {
        if series.is_empty() {
            continue;
        }
        match kb.service_profiles.get_mut(key) {
            Some(profile) => profile.absorb_series(series),
            None => {
                let profile = EnergyProfile::from_series(series).expect("non-empty series");
                kb.service_profiles.insert(key.clone(), profile);
            }
        }
    }
    for (key, series) in &obs.connection_power {
        if series.is_empty() {
            continue;
        }
        match kb.connection_profiles.get_mut(key) {
            Some(profile) => profile.absorb_series(series),
            None => {
                let profile = EnergyProfile::from_series(series).expect("non-empty series");
                kb.connection_profiles.insert(key.clone(), profile);
            }
        }
    }
    for (node, iota) in &obs.node_intensity {
        let history = kb.node_carbon_history.entry(node.clone()).or_default();
        history.push(*iota);
        if history.len() > MAX_HISTORY {
            let excess = history.len() - MAX_HISTORY;
            history.drain(..excess);
        }
    }
}

fn intensity_or_spec(kb: &KnowledgeBase, node: &Node, window: usize) -> f64 {
    kb.node_intensity(&node.name, window)
        .unwrap_or(node.carbon_intensity)
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Projected emission constraints from the current knowledge base.
///
/// Service avoids are projected over every attribute-feasible available node:
/// nodes where the (component, flavour) was observed use their own profile
/// average, unseen nodes fall back to the average across observed nodes.
/// Never-observed flavours yield nothing. The avoids never cover all of a
/// service's feasible nodes — the lowest-impact node is exempted (ties break
/// to the lexicographically first name) so the service stays placeable.
/// Connection affinities require both endpoints deployed in the profiled
/// flavours. Output is weighted by impact relative to the round maximum,
/// sorted by descending weight (ties by text), truncated to `top_k`.
pub fn generate_constraints(
    kb: &KnowledgeBase,
    app: &ApplicationSpec,
    infra: &InfrastructureSpec,
    current: &Deployment,
    cfg: &EnergyConfig,
) -> Vec<SoftConstraint> {
    let mut raw: BTreeMap<String, (ConstraintKind, f64)> = BTreeMap::new();
    let mut propose = |kind: ConstraintKind, impact: f64| {
        let entry = raw.entry(kind.text()).or_insert((kind, impact));
        entry.1 = entry.1.max(impact);
    };

    // Group observed service profiles by (component, flavour).
    let mut by_flavour: BTreeMap<(&str, &str), BTreeMap<&str, f64>> = BTreeMap::new();
    for ((c, f, n), profile) in &kb.service_profiles {
        by_flavour
            .entry((c, f))
            .or_default()
            .insert(n, profile.avg_w);
    }

    for ((comp_name, flavour_name), observed) in by_flavour {
        let Some(flavour) = app
            .component(comp_name)
            .and_then(|c| c.flavour(flavour_name))
        else {
            continue;
        };
        let fallback_avg = mean(&observed.values().copied().collect::<Vec<_>>());
        let feasible: Vec<&Node> = infra
            .nodes
            .iter()
            .filter(|n| n.available && flavour.attributes_satisfied_by(n))
            .collect();
        let mut over: Vec<(&str, f64)> = Vec::new();
        for node in &feasible {
            let avg_w = observed
                .get(node.name.as_str())
                .copied()
                .unwrap_or(fallback_avg);
            let impact = avg_w / 1000.0 * cfg.round_hours * intensity_or_spec(kb, node, cfg.window);
            if impact > cfg.thresholds.service_gco2 {
                over.push((&node.name, impact));
            }
        }
        if !feasible.is_empty() && over.len() == feasible.len() {
            // Leave the least-harmful node open so the service can still be
            // deployed somewhere.
            let exempt = over
                .iter()
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(b.0)))
                .map(|(n, _)| *n);
            over.retain(|(n, _)| Some(*n) != exempt);
        }
        for (node, impact) in over {
            propose(ConstraintKind::avoid(comp_name, flavour_name, node), impact);
        }
    }

    for (((c, fc), (s, fs)), profile) in &kb.connection_profiles {
        let (Some(a), Some(b)) = (current.get(c), current.get(s)) else {
            continue;
        };
        if a.flavour != *fc || b.flavour != *fs {
            continue;
        }
        let (Some(na), Some(nb)) = (infra.node(&a.node), infra.node(&b.node)) else {
            continue;
        };
        let iota =
            (intensity_or_spec(kb, na, cfg.window) + intensity_or_spec(kb, nb, cfg.window)) / 2.0;
        let impact = profile.avg_w / 1000.0 * cfg.round_hours * iota;
        if impact > cfg.thresholds.connection_gco2 {
            propose(
                ConstraintKind::affinity(FlavourRef::new(c, fc), FlavourRef::new(s, fs)),
                impact,
            );
        }
    }

    let max_impact = raw.values().map(|(_, i)| *i).fold(0.0_f64, f64::max);
    if max_impact <= 0.0 {
        return Vec::new();
    }
    let mut out: Vec<SoftConstraint> = raw
        .into_values()
        .map(|(kind, impact)| {
            let weight = round3(impact / max_impact).max(0.001);
            SoftConstraint::energy(kind, weight, impact)
        })
        .collect();
    out.sort_by(|a, b| {
        b.weight
            .partial_cmp(&a.weight)
            .unwrap()
            .then_with(|| a.identity().cmp(&b.identity()))
    });
    out.truncate(cfg.top_k);
    out
}

/// Advance the constraint memory by one round and return the round's final
/// constraint list: the fresh constraints plus any stored ones still relevant
/// enough to retrieve (memory weight ≥ 0.5), unioned by identity keeping the
/// higher solver weight. Regenerated entries reset to memory weight 1.0,
/// idle ones halve, and entries at or below 0.125 are evicted.
pub fn update_knowledge(kb: &mut KnowledgeBase, fresh: &[SoftConstraint]) -> Vec<SoftConstraint> {
    let fresh_ids: BTreeSet<String> = fresh.iter().map(|c| c.identity()).collect();
    for (id, entry) in kb.stored_constraints.iter_mut() {
        if !fresh_ids.contains(id) {
            entry.memory_weight *= DECAY_FACTOR;
        }
    }
    for sc in fresh {
        let id = sc.identity();
        kb.stored_constraints
            .entry(id)
            .and_modify(|e| {
                e.constraint = sc.clone();
                e.memory_weight = 1.0;
            })
            .or_insert_with(|| StoredConstraint {
                constraint: sc.clone(),
                memory_weight: 1.0,
            });
    }
    kb.stored_constraints
        .retain(|_, e| e.memory_weight > EVICTION_FLOOR);

    let mut merged: BTreeMap<String, SoftConstraint> =
        fresh.iter().map(|c| (c.identity(), c.clone())).collect();
    for (id, entry) in &kb.stored_constraints {
        if entry.memory_weight < RETRIEVAL_THRESHOLD {
            continue;
        }
        merged
            .entry(id.clone())
            .and_modify(|existing| {
                if entry.constraint.weight > existing.weight {
                    *existing = entry.constraint.clone();
                }
            })
            .or_insert_with(|| entry.constraint.clone());
    }
    let mut out: Vec<SoftConstraint> = merged.into_values().collect();
    out.sort_by(|a, b| {
        b.weight
            .partial_cmp(&a.weight)
            .unwrap()
            .then_with(|| a.identity().cmp(&b.identity()))
    });
    out
}

/// One full enhancement round: absorb the observations, generate fresh
/// constraints, then advance the memory and return the merged list.
pub fn enhance_round(
    kb: &mut KnowledgeBase,
    app: &ApplicationSpec,
    infra: &InfrastructureSpec,
    current: &Deployment,
    obs: &RoundObservations,
    cfg: &EnergyConfig,
) -> Vec<SoftConstraint> {
    absorb_observations(kb, obs);
    let fresh = generate_constraints(kb, app, infra, current, cfg);
    update_knowledge(kb, &fresh)
}
