//! Failure enhancer: turns one round's failure facts into soft placement
//! constraints.
//!
//! Four rules over the fact base, each firing per event and deduplicated into
//! a set:
//!
//! - **R1** a cross-node timeout with no network-side cause at that tick —
//!   no congestion in either direction, neither endpoint disconnected —
//!   suggests co-locating the two services: `Affinity(c,fc,s,fs)`.
//! - **R2** a timeout whose consumer-side node was congested towards the
//!   provider or disconnected suggests moving the consumer off that node:
//!   `Avoid(c,fc,n)`. **R2′** is the symmetric clause for the provider side.
//! - **R3** a component unreachable (or failing internally) on an overloaded
//!   node while racing another component for the scarce resource suggests
//!   separating the racers: `AntiAffinity(c,fc,s,fs)`.
//! - **R4** the same distress without any race involving the component — or
//!   on a disconnected node — suggests leaving the node: `Avoid(c,fc,n)`.
//!
//! R1 vs R2/R2′ and R3 vs R4 are mutually exclusive per event: a network
//! cause suppresses the affinity, a race routes to anti-affinity instead of
//! avoid.

use std::collections::BTreeMap;

use crate::io::FactBase;
use crate::model::{ConstraintKind, FlavourRef, SoftConstraint};

/// Evaluate all failure rules over one round's facts. Returns a
/// deduplicated, identity-sorted list of failure-provenance constraints.
pub fn suggest_constraints(facts: &FactBase) -> Vec<SoftConstraint> {
    let mut out: BTreeMap<String, SoftConstraint> = BTreeMap::new();
    let mut add = |kind: ConstraintKind| {
        let sc = SoftConstraint::failure(kind);
        out.entry(sc.identity()).or_insert(sc);
    };

    // R1, R2, R2' — timeout events between deployed components.
    for (c, s, t) in &facts.timeouts {
        let Some((fc, n)) = facts.deployment_of(c) else {
            continue;
        };
        let Some((fs, m)) = facts.deployment_of(s) else {
            continue;
        };
        if c == s || n == m {
            continue;
        }
        let congested_nm = facts.is_congested(n, m, *t);
        let congested_mn = facts.is_congested(m, n, *t);
        let down_n = facts.is_disconnected(n, *t);
        let down_m = facts.is_disconnected(m, *t);

        if congested_nm || down_n {
            add(ConstraintKind::avoid(c, fc, n));
        }
        if congested_mn || down_m {
            add(ConstraintKind::avoid(s, fs, m));
        }
        if !(congested_nm || congested_mn || down_n || down_m) {
            add(ConstraintKind::affinity(
                FlavourRef::new(c, fc),
                FlavourRef::new(s, fs),
            ));
        }
    }

    // R3, R4 — distressed components on overloaded or disconnected nodes.
    let distressed = facts.unreachables.iter().chain(facts.internals.iter());
    for (c, t) in distressed {
        let Some((fc, n)) = facts.deployment_of(c) else {
            continue;
        };
        let mut raced = false;
        for race in facts.races_at(n, *t).filter(|r| r.involves(c)) {
            let (self_flavour, partner, partner_flavour) = if race.c1 == *c {
                (&race.f1, &race.c2, &race.f2)
            } else {
                (&race.f2, &race.c1, &race.f1)
            };
            if self_flavour != fc {
                continue;
            }
            raced = true;
            let resource_overloaded = facts
                .overloads
                .iter()
                .any(|o| o.node == n && o.resource == race.resource && o.covers(*t));
            if resource_overloaded {
                add(ConstraintKind::anti_affinity(
                    FlavourRef::new(c, fc),
                    FlavourRef::new(partner, partner_flavour),
                ));
            }
        }
        let overloaded = facts.overloads_at(n, *t).next().is_some();
        if (overloaded && !raced) || facts.is_disconnected(n, *t) {
            add(ConstraintKind::avoid(c, fc, n));
        }
    }

    out.into_values().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::facts::{OverloadSpan, RaceFact};

    fn identities(cs: &[SoftConstraint]) -> Vec<String> {
        cs.iter().map(|c| c.identity()).collect()
    }

    fn deployed(facts: &mut FactBase, triples: &[(&str, &str, &str)]) {
        for (c, f, n) in triples {
            facts
                .deployed
                .insert((c.to_string(), f.to_string(), n.to_string()));
        }
    }

    #[test]
    fn empty_facts_suggest_nothing() {
        assert!(suggest_constraints(&FactBase::default()).is_empty());
    }

    #[test]
    fn co_located_congestion_free_overload_yields_only_avoids() {
        // The classic round-0 picture: two large services co-located on a
        // degraded public node, unreachable through a long overload window,
        // no race facts recorded.
        let mut facts = FactBase::default();
        deployed(
            &mut facts,
            &[
                ("api", "large", "private1"),
                ("database", "large", "private5"),
                ("etcd", "large", "private1"),
                ("frontend", "large", "public1"),
                ("identity_provider", "large", "private3"),
                ("load_balancer", "large", "public1"),
                ("redis", "large", "private3"),
            ],
        );
        for t in 31..=98 {
            facts.unreachables.insert(("frontend".into(), t));
            facts.unreachables.insert(("load_balancer".into(), t));
        }
        for resource in ["cpu", "ram"] {
            facts.overloads.insert(OverloadSpan {
                node: "public1".into(),
                resource: resource.into(),
                from: 31,
                to: 98,
                peak_load_pct: None,
            });
        }
        let suggested = suggest_constraints(&facts);
        assert_eq!(
            identities(&suggested),
            vec![
                "avoid(d(frontend,large),public1)".to_string(),
                "avoid(d(load_balancer,large),public1)".to_string(),
            ]
        );
    }

    #[test]
    fn unexplained_cross_node_timeout_suggests_affinity() {
        let mut facts = FactBase::default();
        deployed(
            &mut facts,
            &[("api", "large", "private1"), ("redis", "large", "private3")],
        );
        facts.timeouts.insert(("api".into(), "redis".into(), 40));
        let suggested = suggest_constraints(&facts);
        assert_eq!(
            identities(&suggested),
            vec!["affinity(d(api,large),d(redis,large))"]
        );
    }

    #[test]
    fn congestion_and_disconnection_route_to_avoids_not_affinity() {
        let mut facts = FactBase::default();
        deployed(
            &mut facts,
            &[("api", "large", "private1"), ("redis", "large", "private3")],
        );
        facts.timeouts.insert(("api".into(), "redis".into(), 40));
        facts
            .congestions
            .insert(("private1".into(), "private3".into(), 40));
        facts.disconnections.insert(("private3".into(), 40));
        let suggested = suggest_constraints(&facts);
        assert_eq!(
            identities(&suggested),
            vec![
                "avoid(d(api,large),private1)",
                "avoid(d(redis,large),private3)"
            ]
        );
    }

    #[test]
    fn reverse_direction_congestion_also_suppresses_the_affinity() {
        let mut facts = FactBase::default();
        deployed(
            &mut facts,
            &[("api", "large", "private1"), ("redis", "large", "private3")],
        );
        facts.timeouts.insert(("api".into(), "redis".into(), 40));
        // congested towards the consumer only
        facts
            .congestions
            .insert(("private3".into(), "private1".into(), 40));
        let suggested = suggest_constraints(&facts);
        assert_eq!(
            identities(&suggested),
            vec!["avoid(d(redis,large),private3)"]
        );
    }

    #[test]
    fn a_race_during_overload_suggests_antiaffinity_and_suppresses_avoid() {
        let mut facts = FactBase::default();
        deployed(
            &mut facts,
            &[("api", "large", "private1"), ("etcd", "large", "private1")],
        );
        facts.unreachables.insert(("api".into(), 55));
        facts.overloads.insert(OverloadSpan {
            node: "private1".into(),
            resource: "cpu".into(),
            from: 55,
            to: 55,
            peak_load_pct: Some(120),
        });
        facts.races.insert(RaceFact::new(
            "private1",
            "cpu",
            ("api", "large"),
            ("etcd", "large"),
            55,
        ));
        let suggested = suggest_constraints(&facts);
        assert_eq!(
            identities(&suggested),
            vec!["antiaffinity(d(api,large),d(etcd,large))"]
        );
    }

    #[test]
    fn internal_errors_count_as_distress_for_rule_four() {
        let mut facts = FactBase::default();
        deployed(&mut facts, &[("api", "large", "private1")]);
        facts.internals.insert(("api".into(), 12));
        facts.overloads.insert(OverloadSpan {
            node: "private1".into(),
            resource: "ram".into(),
            from: 10,
            to: 20,
            peak_load_pct: None,
        });
        let suggested = suggest_constraints(&facts);
        assert_eq!(identities(&suggested), vec!["avoid(d(api,large),private1)"]);
    }

    #[test]
    fn disconnected_node_distress_avoids_even_while_racing() {
        let mut facts = FactBase::default();
        deployed(
            &mut facts,
            &[("api", "large", "private1"), ("etcd", "large", "private1")],
        );
        facts.unreachables.insert(("api".into(), 7));
        facts.disconnections.insert(("private1".into(), 7));
        let suggested = suggest_constraints(&facts);
        assert_eq!(identities(&suggested), vec!["avoid(d(api,large),private1)"]);
    }

    #[test]
    fn co_located_timeouts_and_undeployed_components_are_ignored() {
        let mut facts = FactBase::default();
        deployed(
            &mut facts,
            &[("api", "large", "private1"), ("etcd", "large", "private1")],
        );
        facts.timeouts.insert(("api".into(), "etcd".into(), 3));
        facts.timeouts.insert(("api".into(), "ghost".into(), 3));
        facts.unreachables.insert(("ghost".into(), 9));
        assert!(suggest_constraints(&facts).is_empty());
    }

    #[test]
    fn repeated_events_across_ticks_deduplicate() {
        let mut facts = FactBase::default();
        deployed(
            &mut facts,
            &[("api", "large", "private1"), ("redis", "large", "private3")],
        );
        for t in 0..50 {
            facts.timeouts.insert(("api".into(), "redis".into(), t));
        }
        let suggested = suggest_constraints(&facts);
        assert_eq!(suggested.len(), 1);
    }
}
