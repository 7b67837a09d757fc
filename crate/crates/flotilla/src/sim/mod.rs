//! Closed-loop simulator: executes rounds of ticks over a deployed
//! application, applies scenario schedules to infrastructure and application
//! quantities, generates failure/overload/energy events, and computes
//! per-round metrics.
//!
//! The engine is deliberately deterministic: scenario schedules are the only
//! source of disturbance (no stochastic failure injection), so identical
//! inputs produce byte-identical logs. The `seed` parameter of
//! [`run_round`] exists for interface stability with the baselines, where it
//! drives tie-breaking.

pub mod baselines;
pub mod campaign;

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::RoundObservations;
use crate::io::facts::{FactBase, OverloadSpan, RaceFact};
use crate::io::log::LogLine;
use crate::model::{ApplicationSpec, Deployment, Flavour, InfrastructureSpec};

/// Default number of ticks in one simulation round.
pub const DEFAULT_TICKS_PER_ROUND: u64 = 120;
/// Default wall-clock minutes represented by one tick.
pub const DEFAULT_TICK_MINUTES: f64 = 1.0;
/// Load percentage reported when a resource's effective capacity reaches
/// zero while demand remains (the ratio is unbounded there).
const SATURATED_PCT: u32 = 9999;

/// What a scenario perturbs.
///
/// Capacity and energy targets apply the shape's delta additively; link and
/// node-down targets use the shape only as an activity window (the link is
/// congested / the node disconnected at every active tick).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    /// Additive delta on one node resource's capacity.
    NodeResource { node: String, resource: String },
    /// Additive delta on one flavour's power draw.
    ComponentEnergy { component: String, flavour: String },
    /// Congests the directed link while active.
    Link { from_node: String, to_node: String },
    /// Disconnects the node from the network while active.
    NodeDown { node_down: String },
}

/// The time course of a scenario. Windows are inclusive on both ends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Constant {
        delta: f64,
        from: u64,
        to: u64,
    },
    /// `amplitude * sin(2π (t - from) / period)` while active. The window
    /// must span a whole number of half-periods so the modification starts
    /// and ends at the unmodified value.
    Sinusoidal {
        amplitude: f64,
        period: u64,
        from: u64,
        to: u64,
    },
}

impl Shape {
    pub fn window(&self) -> (u64, u64) {
        match self {
            Shape::Constant { from, to, .. } | Shape::Sinusoidal { from, to, .. } => (*from, *to),
        }
    }

    pub fn active_at(&self, tick: u64) -> bool {
        let (from, to) = self.window();
        (from..=to).contains(&tick)
    }

    /// Additive delta at one tick; zero outside the active window.
    pub fn delta_at(&self, tick: u64) -> f64 {
        if !self.active_at(tick) {
            return 0.0;
        }
        match self {
            Shape::Constant { delta, .. } => *delta,
            Shape::Sinusoidal {
                amplitude,
                period,
                from,
                ..
            } => amplitude * (2.0 * PI * (tick - from) as f64 / *period as f64).sin(),
        }
    }
}

/// A named disturbance schedule, referenced from update policies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub target: Target,
    pub shape: Shape,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario {name}: {message}")]
    InvalidScenario { name: String, message: String },
    #[error("deployment references unknown entity: {0}")]
    UnknownPlacement(String),
}

impl Scenario {
    /// Check the window, the shape parameters, and that the target exists in
    /// the given specs.
    pub fn validate(
        &self,
        app: &ApplicationSpec,
        infra: &InfrastructureSpec,
        ticks: u64,
    ) -> Result<(), SimError> {
        let fail = |message: String| {
            Err(SimError::InvalidScenario {
                name: self.name.clone(),
                message,
            })
        };
        let (from, to) = self.shape.window();
        if from > to {
            return fail(format!("window start {from} exceeds end {to}"));
        }
        if to > ticks {
            return fail(format!("window end {to} exceeds the round length {ticks}"));
        }
        match &self.shape {
            Shape::Constant { delta, .. } => {
                if !delta.is_finite() {
                    return fail("delta must be finite".into());
                }
            }
            Shape::Sinusoidal {
                amplitude, period, ..
            } => {
                if !amplitude.is_finite() {
                    return fail("amplitude must be finite".into());
                }
                if *period < 2 || period % 2 != 0 {
                    return fail(format!(
                        "period must be an even tick count ≥ 2, got {period}"
                    ));
                }
                if (to - from) % (period / 2) != 0 {
                    return fail(format!(
                        "window span {} must be a whole number of half-periods ({})",
                        to - from,
                        period / 2
                    ));
                }
            }
        }
        match &self.target {
            Target::NodeResource { node, resource } => {
                let Some(n) = infra.node(node) else {
                    return fail(format!("unknown node {node}"));
                };
                if !n.capacities.contains_key(resource) {
                    return fail(format!("node {node} declares no resource {resource}"));
                }
            }
            Target::ComponentEnergy { component, flavour } => {
                let found = app.component(component).and_then(|c| c.flavour(flavour));
                if found.is_none() {
                    return fail(format!("unknown component flavour {component}/{flavour}"));
                }
            }
            Target::Link { from_node, to_node } => {
                if from_node == to_node {
                    return fail("link scenario endpoints must differ".into());
                }
                if infra.link_between(from_node, to_node).is_none() {
                    return fail(format!("no link between {from_node} and {to_node}"));
                }
            }
            Target::NodeDown { node_down } => {
                if infra.node(node_down).is_none() {
                    return fail(format!("unknown node {node_down}"));
                }
            }
        }
        Ok(())
    }
}

/// One per-tick overload observation.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct OverloadEvent {
    pub node: String,
    pub resource: String,
    pub tick: u64,
    pub load_pct: u32,
}

/// End-of-round aggregate metrics.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RoundMetrics {
    /// Percentage of ticks during which any deployed component was
    /// unreachable (all-or-nothing availability).
    pub downtime_pct: f64,
    /// Σ importance of deployed flavours over the application maximum, in %.
    pub app_quality_pct: f64,
    /// Total energy drawn by all components over the round.
    pub energy_kwh: f64,
    /// Total emissions: node power × tick duration × node carbon intensity.
    pub co2_g: f64,
}

/// Everything observed during one simulated round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundTrace {
    pub placement: Deployment,
    pub ticks: u64,
    pub tick_minutes: f64,
    pub unreachables: BTreeSet<(String, u64)>,
    pub timeouts: BTreeSet<(String, String, u64)>,
    pub congestions: BTreeSet<(String, String, u64)>,
    pub disconnections: BTreeSet<(String, u64)>,
    /// Chronological, then by node and resource.
    pub overload_events: Vec<OverloadEvent>,
    pub races: BTreeSet<RaceFact>,
    /// Per deployed component, one watt sample per tick.
    pub service_power: BTreeMap<String, Vec<f64>>,
    /// Per node (all nodes, hosting or not), one watt sample per tick.
    pub node_power: BTreeMap<String, Vec<f64>>,
    /// Static grid carbon intensity per node (gCO2/kWh).
    pub node_intensity: BTreeMap<String, f64>,
    pub metrics: RoundMetrics,
}

/// Simulate one round of `ticks` ticks of the given placement under the
/// scenario schedules. The specs are the *unmodified* ones; scenarios perturb
/// them tick by tick. `_seed` is unused here — rounds are fully deterministic
/// (the seed only drives tie-breaking in the placement baselines).
pub fn run_round(
    placement: &Deployment,
    app: &ApplicationSpec,
    infra: &InfrastructureSpec,
    scenarios: &[Scenario],
    ticks: u64,
    tick_minutes: f64,
    _seed: u64,
) -> Result<RoundTrace, SimError> {
    for s in scenarios {
        s.validate(app, infra, ticks)?;
    }

    struct Placed<'a> {
        component: &'a str,
        flavour: &'a Flavour,
        node: &'a str,
    }
    let mut placed: Vec<Placed> = Vec::new();
    for a in placement.assignments() {
        let flavour = app
            .component(&a.component)
            .and_then(|c| c.flavour(&a.flavour))
            .ok_or_else(|| SimError::UnknownPlacement(format!("{} {}", a.component, a.flavour)))?;
        if infra.node(&a.node).is_none() {
            return Err(SimError::UnknownPlacement(format!("node {}", a.node)));
        }
        placed.push(Placed {
            component: &a.component,
            flavour,
            node: &a.node,
        });
    }
    let mut hosted: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, p) in placed.iter().enumerate() {
        hosted.entry(p.node).or_default().push(i);
    }

    let mut trace = RoundTrace {
        placement: placement.clone(),
        ticks,
        tick_minutes,
        unreachables: BTreeSet::new(),
        timeouts: BTreeSet::new(),
        congestions: BTreeSet::new(),
        disconnections: BTreeSet::new(),
        overload_events: Vec::new(),
        races: BTreeSet::new(),
        service_power: placed
            .iter()
            .map(|p| (p.component.to_string(), Vec::new()))
            .collect(),
        node_power: infra
            .nodes
            .iter()
            .map(|n| (n.name.clone(), Vec::new()))
            .collect(),
        node_intensity: infra
            .nodes
            .iter()
            .map(|n| (n.name.clone(), n.carbon_intensity))
            .collect(),
        metrics: RoundMetrics::default(),
    };

    let capacity_delta = |node: &str, resource: &str, t: u64| -> f64 {
        scenarios
            .iter()
            .filter_map(|s| match &s.target {
                Target::NodeResource {
                    node: sn,
                    resource: sr,
                } if sn == node && sr == resource => Some(s.shape.delta_at(t)),
                _ => None,
            })
            .sum()
    };
    let power_delta = |component: &str, flavour: &str, t: u64| -> f64 {
        scenarios
            .iter()
            .filter_map(|s| match &s.target {
                Target::ComponentEnergy {
                    component: sc,
                    flavour: sf,
                } if sc == component && sf == flavour => Some(s.shape.delta_at(t)),
                _ => None,
            })
            .sum()
    };

    let mut down_ticks: u64 = 0;
    for t in 0..ticks {
        // Network disturbances scheduled for this tick.
        for s in scenarios {
            if !s.shape.active_at(t) {
                continue;
            }
            match &s.target {
                Target::Link { from_node, to_node } => {
                    trace
                        .congestions
                        .insert((from_node.clone(), to_node.clone(), t));
                }
                Target::NodeDown { node_down } => {
                    trace.disconnections.insert((node_down.clone(), t));
                }
                _ => {}
            }
        }

        // Capacity shortfalls: overload events, races, and unreachability of
        // every component hosted on a distressed or disconnected node.
        let mut unreachable_now: BTreeSet<&str> = BTreeSet::new();
        for (node_name, idxs) in &hosted {
            let node = infra.node(node_name).expect("checked above");
            let mut demands: BTreeMap<&str, f64> = BTreeMap::new();
            for i in idxs {
                for (r, d) in &placed[*i].flavour.resources {
                    *demands.entry(r.as_str()).or_insert(0.0) += d;
                }
            }
            let mut distressed = false;
            for (resource, demand) in &demands {
                let declared = node.capacities.get(*resource).copied().unwrap_or(0.0);
                let effective = (declared + capacity_delta(node_name, resource, t)).max(0.0);
                if *demand <= effective {
                    continue;
                }
                distressed = true;
                let load_pct = if effective > 0.0 {
                    ((demand / effective * 100.0).round() as u64).min(SATURATED_PCT as u64) as u32
                } else {
                    SATURATED_PCT
                };
                trace.overload_events.push(OverloadEvent {
                    node: node_name.to_string(),
                    resource: resource.to_string(),
                    tick: t,
                    load_pct,
                });
                // Pairs of components whose joint demand alone exceeds the
                // effective capacity are racing for the resource.
                for (a, b) in pairs(idxs) {
                    let (pa, pb) = (&placed[a], &placed[b]);
                    let da = pa.flavour.resources.get(*resource).copied().unwrap_or(0.0);
                    let db = pb.flavour.resources.get(*resource).copied().unwrap_or(0.0);
                    if da > 0.0 && db > 0.0 && da + db > effective {
                        trace.races.insert(RaceFact::new(
                            node_name,
                            resource,
                            (pa.component, &pa.flavour.name),
                            (pb.component, &pb.flavour.name),
                            t,
                        ));
                    }
                }
            }
            let cut_off = trace.disconnections.contains(&(node_name.to_string(), t));
            if distressed || cut_off {
                for i in idxs {
                    unreachable_now.insert(placed[*i].component);
                }
            }
        }
        for c in &unreachable_now {
            trace.unreachables.insert((c.to_string(), t));
        }
        if !unreachable_now.is_empty() {
            down_ticks += 1;
        }

        // Timeouts on cross-node dependencies: the traversed link is
        // congested in either direction, an endpoint node is disconnected,
        // or the provider itself is unreachable.
        for p in &placed {
            for dep in &p.flavour.uses {
                let Some(q) = placed.iter().find(|x| x.component == dep.component) else {
                    continue;
                };
                if p.node == q.node {
                    continue;
                }
                let congested = trace
                    .congestions
                    .contains(&(p.node.into(), q.node.into(), t))
                    || trace
                        .congestions
                        .contains(&(q.node.into(), p.node.into(), t));
                let disconnected = trace.disconnections.contains(&(p.node.into(), t))
                    || trace.disconnections.contains(&(q.node.into(), t));
                if congested || disconnected || unreachable_now.contains(q.component) {
                    trace
                        .timeouts
                        .insert((p.component.into(), q.component.into(), t));
                }
            }
        }

        // Power sampling: components draw their effective profile even while
        // unreachable (failures do not save energy).
        let mut per_node: BTreeMap<&str, f64> = BTreeMap::new();
        for p in &placed {
            let watts =
                (p.flavour.energy_w + power_delta(p.component, &p.flavour.name, t)).max(0.0);
            trace
                .service_power
                .get_mut(p.component)
                .expect("registered")
                .push(watts);
            *per_node.entry(p.node).or_insert(0.0) += watts;
        }
        for (node, series) in trace.node_power.iter_mut() {
            series.push(per_node.get(node.as_str()).copied().unwrap_or(0.0));
        }
    }

    let tick_hours = tick_minutes / 60.0;
    let energy_kwh: f64 = trace
        .service_power
        .values()
        .map(|series| series.iter().sum::<f64>() / 1000.0 * tick_hours)
        .sum();
    let co2_g: f64 = trace
        .node_power
        .iter()
        .map(|(node, series)| {
            series.iter().sum::<f64>() / 1000.0 * tick_hours * trace.node_intensity[node]
        })
        .sum();
    let max_importance = crate::model::max_total_importance(app);
    let quality = if max_importance == 0 {
        100.0
    } else {
        placement.total_importance(app) as f64 / max_importance as f64 * 100.0
    };
    trace.metrics = RoundMetrics {
        downtime_pct: if ticks == 0 {
            0.0
        } else {
            down_ticks as f64 / ticks as f64 * 100.0
        },
        app_quality_pct: quality,
        energy_kwh,
        co2_g,
    };
    Ok(trace)
}

fn pairs(idxs: &[usize]) -> impl Iterator<Item = (usize, usize)> + '_ {
    idxs.iter()
        .enumerate()
        .flat_map(move |(k, &a)| idxs[k + 1..].iter().map(move |&b| (a, b)))
}

impl RoundTrace {
    /// The round's events as an enhancer-ready fact base, with per-tick
    /// overloads coalesced into intervals.
    pub fn fact_base(&self) -> FactBase {
        let mut facts = FactBase {
            deployed: self
                .placement
                .assignments()
                .iter()
                .map(|a| (a.component.clone(), a.flavour.clone(), a.node.clone()))
                .collect(),
            timeouts: self.timeouts.clone(),
            internals: BTreeSet::new(),
            unreachables: self.unreachables.clone(),
            congestions: self.congestions.clone(),
            disconnections: self.disconnections.clone(),
            overloads: BTreeSet::new(),
            races: self.races.clone(),
        };
        let mut per_subject: BTreeMap<(&str, &str), Vec<(u64, u32)>> = BTreeMap::new();
        for ev in &self.overload_events {
            per_subject
                .entry((&ev.node, &ev.resource))
                .or_default()
                .push((ev.tick, ev.load_pct));
        }
        for ((node, resource), mut observations) in per_subject {
            observations.sort();
            let mut run: Option<(u64, u64, u32)> = None;
            let flush = |r: Option<(u64, u64, u32)>, facts: &mut FactBase| {
                if let Some((from, to, peak)) = r {
                    facts.overloads.insert(OverloadSpan {
                        node: node.to_string(),
                        resource: resource.to_string(),
                        from,
                        to,
                        peak_load_pct: Some(peak),
                    });
                }
            };
            for (tick, pct) in observations {
                run = match run {
                    Some((from, to, peak)) if tick == to + 1 || tick == to => {
                        Some((from, tick, peak.max(pct)))
                    }
                    other => {
                        flush(other, &mut facts);
                        Some((tick, tick, pct))
                    }
                };
            }
            flush(run, &mut facts);
        }
        facts
    }

    /// The round's power monitoring in the shape the energy enhancer eats.
    pub fn observations(&self) -> RoundObservations {
        let mut obs = RoundObservations {
            tick_minutes: self.tick_minutes,
            ..Default::default()
        };
        for a in self.placement.assignments() {
            if let Some(series) = self.service_power.get(&a.component) {
                obs.service_power.insert(
                    (a.component.clone(), a.flavour.clone(), a.node.clone()),
                    series.clone(),
                );
            }
        }
        obs.node_intensity = self.node_intensity.clone();
        obs
    }

    /// Render the whole round as simulation-log text (the file the enhancer
    /// pipeline parses back). Deterministic: events are ordered per tick,
    /// entities alphabetically.
    pub fn emit_log(&self) -> String {
        let mut lines: Vec<LogLine> = Vec::new();
        for t in 0..self.ticks {
            lines.push(LogLine::Tick { tick: t });
            if t == 0 {
                lines.push(LogLine::Placement {
                    entries: self
                        .placement
                        .assignments()
                        .iter()
                        .map(|a| (a.component.clone(), a.flavour.clone(), a.node.clone()))
                        .collect(),
                });
            }
            for ev in self.overload_events.iter().filter(|e| e.tick == t) {
                lines.push(LogLine::Overload {
                    node: ev.node.clone(),
                    resource: ev.resource.clone(),
                    load_pct: ev.load_pct,
                    tick: t,
                });
            }
            for (c, _) in self.unreachables.iter().filter(|(_, et)| *et == t) {
                lines.push(LogLine::Unreachable {
                    component: c.clone(),
                    tick: t,
                });
            }
            for (c, s, _) in self.timeouts.iter().filter(|(_, _, et)| *et == t) {
                lines.push(LogLine::Timeout {
                    consumer: c.clone(),
                    provider: s.clone(),
                    tick: t,
                });
            }
            for (a, b, _) in self.congestions.iter().filter(|(_, _, et)| *et == t) {
                lines.push(LogLine::Congested {
                    from: a.clone(),
                    to: b.clone(),
                    tick: t,
                });
            }
            for (n, _) in self.disconnections.iter().filter(|(_, et)| *et == t) {
                lines.push(LogLine::Disconnected {
                    node: n.clone(),
                    tick: t,
                });
            }
            for r in self.races.iter().filter(|r| r.tick == t) {
                lines.push(LogLine::Race {
                    node: r.node.clone(),
                    resource: r.resource.clone(),
                    c1: r.c1.clone(),
                    f1: r.f1.clone(),
                    c2: r.c2.clone(),
                    f2: r.f2.clone(),
                    tick: t,
                });
            }
            for (c, series) in &self.service_power {
                lines.push(LogLine::Energy {
                    component: c.clone(),
                    watts: series[t as usize],
                    tick: t,
                });
            }
            for (n, series) in &self.node_power {
                lines.push(LogLine::NodePower {
                    node: n.clone(),
                    watts: series[t as usize],
                    tick: t,
                });
            }
        }
        let mut text = String::new();
        for line in lines {
            text.push_str(&line.render());
            text.push('\n');
        }
        text
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::parse_simulation_log;
    use crate::model::Assignment;
    use crate::testutil::{app, component, flavour, infra, node, uses};

    fn sag(name: &str, node: &str, resource: &str, delta: f64, from: u64, to: u64) -> Scenario {
        Scenario {
            name: name.into(),
            target: Target::NodeResource {
                node: node.into(),
                resource: resource.into(),
            },
            shape: Shape::Constant { delta, from, to },
        }
    }

    /// Two co-located services whose joint demand overflows a degraded node:
    /// the public-node story used throughout the fixture corpus.
    fn overload_world() -> (ApplicationSpec, InfrastructureSpec, Deployment) {
        let fe = component(
            "frontend",
            true,
            vec![flavour(
                "large",
                3,
                &[("cpu", 900.0), ("ram", 1024.0)],
                20.0,
            )],
        );
        let lb = component(
            "load_balancer",
            true,
            vec![uses(
                flavour("large", 3, &[("cpu", 600.0), ("ram", 512.0)], 18.0),
                &["frontend"],
            )],
        );
        let application = app("web", vec![fe, lb]);
        let n1 = node("public1", &[("cpu", 2000.0), ("ram", 2560.0)], 475.0);
        let n2 = node("public2", &[("cpu", 2000.0), ("ram", 2560.0)], 475.0);
        let infrastructure = infra(vec![n1, n2], &[("public1", "public2")]);
        let placement = Deployment::new(vec![
            Assignment::new("frontend", "large", "public1"),
            Assignment::new("load_balancer", "large", "public1"),
        ]);
        (application, infrastructure, placement)
    }

    #[test]
    fn quiescent_round_is_all_up_with_static_power() {
        let (application, infrastructure, placement) = overload_world();
        let trace = run_round(&placement, &application, &infrastructure, &[], 120, 1.0, 7).unwrap();
        assert_eq!(trace.metrics.downtime_pct, 0.0);
        assert_eq!(trace.metrics.app_quality_pct, 100.0);
        assert!(trace.unreachables.is_empty());
        assert!(trace.overload_events.is_empty());
        // 38 W total over 2 h = 0.076 kWh; on a 475 g/kWh node = 36.1 g.
        assert!((trace.metrics.energy_kwh - 0.076).abs() < 1e-12);
        assert!((trace.metrics.co2_g - 36.1).abs() < 1e-9);
    }

    #[test]
    fn capacity_sag_overloads_and_cuts_off_colocated_services() {
        let (application, infrastructure, placement) = overload_world();
        let scenarios = [
            sag("cpu-sag", "public1", "cpu", -600.0, 31, 98),
            sag("ram-sag", "public1", "ram", -1200.0, 31, 98),
        ];
        let trace = run_round(
            &placement,
            &application,
            &infrastructure,
            &scenarios,
            120,
            1.0,
            7,
        )
        .unwrap();
        for t in 31..=98 {
            assert!(trace.unreachables.contains(&("frontend".to_string(), t)));
            assert!(trace
                .unreachables
                .contains(&("load_balancer".to_string(), t)));
        }
        assert!(!trace.unreachables.contains(&("frontend".to_string(), 30)));
        assert!(!trace.unreachables.contains(&("frontend".to_string(), 99)));
        assert!((trace.metrics.downtime_pct - 68.0 / 120.0 * 100.0).abs() < 1e-12);

        let facts = trace.fact_base();
        let spans: Vec<_> = facts.overloads.iter().collect();
        assert_eq!(spans.len(), 2);
        // cpu: 1500 / 1400 → 107 %; ram: 1536 / 1360 → 113 %.
        assert_eq!(
            (
                spans[0].resource.as_str(),
                spans[0].from,
                spans[0].to,
                spans[0].peak_load_pct
            ),
            ("cpu", 31, 98, Some(107))
        );
        assert_eq!(
            (
                spans[1].resource.as_str(),
                spans[1].from,
                spans[1].to,
                spans[1].peak_load_pct
            ),
            ("ram", 31, 98, Some(113))
        );
        // Both services demand both scarce resources jointly: races on each.
        assert!(trace
            .races
            .iter()
            .any(|r| r.resource == "cpu" && r.tick == 31));
        assert!(trace
            .races
            .iter()
            .any(|r| r.resource == "ram" && r.tick == 98));
        // Co-located dependency never times out.
        assert!(trace.timeouts.is_empty());
    }

    #[test]
    fn emitted_log_parses_back_to_the_same_facts() {
        let (application, infrastructure, placement) = overload_world();
        let scenarios = [
            sag("cpu-sag", "public1", "cpu", -600.0, 31, 98),
            sag("ram-sag", "public1", "ram", -1200.0, 31, 98),
        ];
        let trace = run_round(
            &placement,
            &application,
            &infrastructure,
            &scenarios,
            120,
            1.0,
            7,
        )
        .unwrap();
        let parsed = parse_simulation_log(&trace.emit_log()).unwrap();
        assert_eq!(parsed.facts, trace.fact_base());
        // Power samples survive the text round-trip too.
        assert_eq!(parsed.service_power["frontend"].len(), 120);
        assert_eq!(parsed.node_power["public1"].first(), Some(&(0, 38.0)));
    }

    #[test]
    fn full_period_sinusoid_is_energy_neutral() {
        let (application, infrastructure, placement) = overload_world();
        // Amplitude stays within the 20 W baseline so the draw never clips
        // at zero; only then can the negative half cancel the positive one.
        let spike = Scenario {
            name: "fe-spike".into(),
            target: Target::ComponentEnergy {
                component: "frontend".into(),
                flavour: "large".into(),
            },
            shape: Shape::Sinusoidal {
                amplitude: 15.0,
                period: 60,
                from: 0,
                to: 60,
            },
        };
        let base = run_round(&placement, &application, &infrastructure, &[], 120, 1.0, 7).unwrap();
        let perturbed = run_round(
            &placement,
            &application,
            &infrastructure,
            &[spike],
            120,
            1.0,
            7,
        )
        .unwrap();
        let rel = (perturbed.metrics.energy_kwh - base.metrics.energy_kwh).abs()
            / base.metrics.energy_kwh;
        assert!(rel < 1e-9, "relative energy drift {rel}");
        // Peak power rises by the amplitude at the quarter period.
        let fe = &perturbed.service_power["frontend"];
        assert!((fe[15] - 35.0).abs() < 1e-9);
        assert_eq!(fe[0], 20.0);
        assert!((fe[60] - 20.0).abs() < 1e-12);
        assert_eq!(fe[61], 20.0);
    }

    #[test]
    fn half_period_sinusoid_adds_its_integral() {
        let (application, infrastructure, placement) = overload_world();
        let spike = Scenario {
            name: "fe-spike".into(),
            target: Target::ComponentEnergy {
                component: "frontend".into(),
                flavour: "large".into(),
            },
            shape: Shape::Sinusoidal {
                amplitude: 25.0,
                period: 120,
                from: 30,
                to: 90,
            },
        };
        let trace = run_round(
            &placement,
            &application,
            &infrastructure,
            &[spike],
            120,
            1.0,
            7,
        )
        .unwrap();
        let fe = &trace.service_power["frontend"];
        let total: f64 = fe.iter().sum();
        // Σ_{k=0..60} 25·sin(πk/60) added on top of the 20 W baseline.
        let bump: f64 = (0..=60).map(|k| 25.0 * (PI * k as f64 / 60.0).sin()).sum();
        assert!((total - (120.0 * 20.0 + bump)).abs() < 1e-9);
        assert!((fe[60] - 45.0).abs() < 1e-9);
    }

    #[test]
    fn component_power_sums_to_node_power_every_tick() {
        let (application, infrastructure, placement) = overload_world();
        let spike = Scenario {
            name: "fe-spike".into(),
            target: Target::ComponentEnergy {
                component: "frontend".into(),
                flavour: "large".into(),
            },
            shape: Shape::Sinusoidal {
                amplitude: 25.0,
                period: 120,
                from: 30,
                to: 90,
            },
        };
        let trace = run_round(
            &placement,
            &application,
            &infrastructure,
            &[spike],
            120,
            1.0,
            7,
        )
        .unwrap();
        for t in 0..120usize {
            let services: f64 = trace.service_power.values().map(|s| s[t]).sum();
            let nodes: f64 = trace.node_power.values().map(|s| s[t]).sum();
            assert!((services - nodes).abs() <= 1e-9 * services.abs().max(1.0));
        }
    }

    #[test]
    fn cross_node_dependencies_time_out_under_congestion_and_disconnection() {
        let fe = component(
            "frontend",
            true,
            vec![flavour("large", 3, &[("cpu", 100.0)], 20.0)],
        );
        let lb = component(
            "load_balancer",
            true,
            vec![uses(
                flavour("large", 3, &[("cpu", 100.0)], 18.0),
                &["frontend"],
            )],
        );
        let application = app("web", vec![fe, lb]);
        let infrastructure = infra(
            vec![
                node("n1", &[("cpu", 1000.0)], 100.0),
                node("n2", &[("cpu", 1000.0)], 100.0),
            ],
            &[("n1", "n2")],
        );
        let placement = Deployment::new(vec![
            Assignment::new("frontend", "large", "n2"),
            Assignment::new("load_balancer", "large", "n1"),
        ]);
        let congestion = Scenario {
            name: "jam".into(),
            target: Target::Link {
                from_node: "n2".into(),
                to_node: "n1".into(),
            },
            shape: Shape::Constant {
                delta: 0.0,
                from: 10,
                to: 12,
            },
        };
        let outage = Scenario {
            name: "n2-down".into(),
            target: Target::NodeDown {
                node_down: "n2".into(),
            },
            shape: Shape::Constant {
                delta: 0.0,
                from: 20,
                to: 21,
            },
        };
        let trace = run_round(
            &placement,
            &application,
            &infrastructure,
            &[congestion, outage],
            30,
            1.0,
            7,
        )
        .unwrap();
        // Congestion in the reverse direction still breaks the round trip.
        for t in 10..=12 {
            assert!(trace
                .timeouts
                .contains(&("load_balancer".into(), "frontend".into(), t)));
        }
        // The outage disconnects n2: its component is unreachable, the
        // dependency times out, and the app is down.
        for t in 20..=21 {
            assert!(trace.disconnections.contains(&("n2".into(), t)));
            assert!(trace.unreachables.contains(&("frontend".into(), t)));
            assert!(trace
                .timeouts
                .contains(&("load_balancer".into(), "frontend".into(), t)));
        }
        assert!((trace.metrics.downtime_pct - 2.0 / 30.0 * 100.0).abs() < 1e-12);
        // Fact base carries congestion as logged (directed).
        assert!(trace.fact_base().is_congested("n2", "n1", 11));
    }

    #[test]
    fn scenario_validation_rejects_bad_targets_and_windows() {
        let (application, infrastructure, _) = overload_world();
        let unknown = sag("x", "nope", "cpu", -1.0, 0, 10);
        assert!(matches!(
            unknown.validate(&application, &infrastructure, 120),
            Err(SimError::InvalidScenario { .. })
        ));
        let bad_resource = sag("x", "public1", "gpu", -1.0, 0, 10);
        assert!(bad_resource
            .validate(&application, &infrastructure, 120)
            .is_err());
        let reversed = sag("x", "public1", "cpu", -1.0, 50, 10);
        assert!(reversed
            .validate(&application, &infrastructure, 120)
            .is_err());
        let too_long = sag("x", "public1", "cpu", -1.0, 0, 121);
        assert!(too_long
            .validate(&application, &infrastructure, 120)
            .is_err());
        let ragged_sine = Scenario {
            name: "s".into(),
            target: Target::ComponentEnergy {
                component: "frontend".into(),
                flavour: "large".into(),
            },
            shape: Shape::Sinusoidal {
                amplitude: 1.0,
                period: 120,
                from: 0,
                to: 50,
            },
        };
        assert!(ragged_sine
            .validate(&application, &infrastructure, 120)
            .is_err());
        let fine_sine = Scenario {
            name: "s".into(),
            target: Target::ComponentEnergy {
                component: "frontend".into(),
                flavour: "large".into(),
            },
            shape: Shape::Sinusoidal {
                amplitude: 1.0,
                period: 120,
                from: 30,
                to: 90,
            },
        };
        assert!(fine_sine
            .validate(&application, &infrastructure, 120)
            .is_ok());
    }

    #[test]
    fn rounds_are_deterministic() {
        let (application, infrastructure, placement) = overload_world();
        let scenarios = [sag("cpu-sag", "public1", "cpu", -600.0, 31, 98)];
        let a = run_round(
            &placement,
            &application,
            &infrastructure,
            &scenarios,
            120,
            1.0,
            7,
        )
        .unwrap();
        let b = run_round(
            &placement,
            &application,
            &infrastructure,
            &scenarios,
            120,
            1.0,
            99,
        )
        .unwrap();
        assert_eq!(a.emit_log(), b.emit_log());
        assert_eq!(a.metrics, b.metrics);
    }

    #[test]
    fn observations_carry_placement_keys_and_intensities() {
        let (application, infrastructure, placement) = overload_world();
        let trace = run_round(&placement, &application, &infrastructure, &[], 10, 1.0, 7).unwrap();
        let obs = trace.observations();
        assert_eq!(obs.tick_minutes, 1.0);
        assert_eq!(
            obs.service_power[&(
                "frontend".to_string(),
                "large".to_string(),
                "public1".to_string()
            )]
                .len(),
            10
        );
        assert_eq!(obs.node_intensity["public2"], 475.0);
        assert!(obs.connection_power.is_empty());
    }

    #[test]
    fn scenario_yaml_forms_round_trip() {
        let yaml = r#"
- name: public1-cpu-sag
  target: { node: public1, resource: cpu }
  shape: { kind: constant, delta: -600.0, from: 31, to: 98 }
- name: db-energy-spike
  target: { component: database, flavour: large }
  shape: { kind: sinusoidal, amplitude: 25.0, period: 120, from: 30, to: 90 }
- name: jam
  target: { from_node: n1, to_node: n2 }
  shape: { kind: constant, delta: 0.0, from: 0, to: 5 }
- name: outage
  target: { node_down: n1 }
  shape: { kind: constant, delta: 0.0, from: 0, to: 5 }
"#;
        let scenarios: Vec<Scenario> = serde_yaml::from_str(yaml).unwrap();
        assert_eq!(scenarios.len(), 4);
        assert!(matches!(scenarios[0].target, Target::NodeResource { .. }));
        assert!(matches!(
            scenarios[1].target,
            Target::ComponentEnergy { .. }
        ));
        assert!(matches!(scenarios[2].target, Target::Link { .. }));
        assert!(matches!(scenarios[3].target, Target::NodeDown { .. }));
        let back = serde_yaml::to_string(&scenarios).unwrap();
        let again: Vec<Scenario> = serde_yaml::from_str(&back).unwrap();
        assert_eq!(again, scenarios);
    }
}
