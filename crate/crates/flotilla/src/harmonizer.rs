//! Harmonizer: reconciles the failure and energy enhancers' suggestions
//! before they reach the solver.
//!
//! A *conflict* is an `Affinity` and an `AntiAffinity` over the same
//! normalized (component, flavour) endpoint pair coming from different
//! provenances — flavour-exact, so suggestions about different flavours of
//! the same components never clash. The configured [`Priority`] resolves it:
//! the prioritized side's constraint survives, the other is dropped; with no
//! priority both are dropped. A contradiction *within* one provenance is
//! dropped pairwise whatever the priority, since no preference can break the
//! tie. `Avoid` constraints are never dropped here: conflicts between avoids
//! and what the infrastructure can actually satisfy are the solver's job to
//! relax.

use crate::model::{ConstraintKind, FlavourRef, Provenance, SoftConstraint};
use std::collections::BTreeMap;

/// Which enhancer wins when resilience and sustainability disagree.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Priority {
    #[default]
    Failure,
    Energy,
    NoPriority,
}

impl std::fmt::Display for Priority {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Priority::Failure => write!(f, "failure"),
            Priority::Energy => write!(f, "energy"),
            Priority::NoPriority => write!(f, "none"),
        }
    }
}

impl std::str::FromStr for Priority {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "failure" => Ok(Priority::Failure),
            "energy" => Ok(Priority::Energy),
            "none" => Ok(Priority::NoPriority),
            other => Err(format!(
                "unknown priority {other:?} (expected failure, energy, or none)"
            )),
        }
    }
}

/// A constraint removed during harmonization, with the reason it lost.
#[derive(Clone, Debug, PartialEq)]
pub struct DroppedConstraint {
    pub constraint: SoftConstraint,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct HarmonizeOutcome {
    pub kept: Vec<SoftConstraint>,
    pub dropped: Vec<DroppedConstraint>,
}

type PairKey = (FlavourRef, FlavourRef);

fn pair_key(kind: &ConstraintKind) -> Option<PairKey> {
    kind.pair().map(|(a, b)| (a.clone(), b.clone()))
}

fn is_affinity(kind: &ConstraintKind) -> bool {
    matches!(kind, ConstraintKind::Affinity { .. })
}

/// Merge the two enhancers' constraint lists under the given priority.
///
/// Constraints are classified by their own provenance tag. Duplicate
/// identities are deduplicated first (a constraint suggested by both
/// enhancers is kept once, as its failure-side copy), so the returned
/// `kept` and `dropped` sets partition the deduplicated input. Output
/// order: failure constraints sorted by text, then energy constraints by
/// descending weight (ties by text).
pub fn harmonize(
    failure_cs: &[SoftConstraint],
    energy_cs: &[SoftConstraint],
    priority: Priority,
) -> HarmonizeOutcome {
    // Deduplicate by identity within each provenance; across provenances the
    // failure copy wins.
    let mut failure: BTreeMap<String, SoftConstraint> = BTreeMap::new();
    let mut energy: BTreeMap<String, SoftConstraint> = BTreeMap::new();
    for sc in failure_cs.iter().chain(energy_cs.iter()) {
        match sc.provenance {
            Provenance::Failure => {
                failure.entry(sc.identity()).or_insert_with(|| sc.clone());
            }
            Provenance::Energy => {
                energy.entry(sc.identity()).or_insert_with(|| sc.clone());
            }
        }
    }
    for id in failure.keys() {
        energy.remove(id);
    }

    let mut dropped: Vec<DroppedConstraint> = Vec::new();

    // Contradictions within one provenance: no priority can break the tie, so
    // both sides go.
    for side in [&mut failure, &mut energy] {
        let mut by_pair: BTreeMap<PairKey, Vec<String>> = BTreeMap::new();
        for (id, sc) in side.iter() {
            if let Some(key) = pair_key(&sc.kind) {
                by_pair.entry(key).or_default().push(id.clone());
            }
        }
        for ids in by_pair.values() {
            let kinds: Vec<bool> = ids.iter().map(|id| is_affinity(&side[id].kind)).collect();
            if kinds.iter().any(|k| *k) && kinds.iter().any(|k| !*k) {
                for id in ids {
                    let sc = side.remove(id).expect("present");
                    let other = ids.iter().find(|o| *o != id).expect("pairwise");
                    dropped.push(DroppedConstraint {
                        reason: format!(
                            "contradicts {other} suggested by the same enhancer; dropped pairwise"
                        ),
                        constraint: sc,
                    });
                }
            }
        }
    }

    // Cross-provenance conflicts: an affinity on one side vs an anti-affinity
    // on the other over the same flavour-exact pair.
    let failure_pairs: BTreeMap<PairKey, String> = failure
        .iter()
        .filter_map(|(id, sc)| pair_key(&sc.kind).map(|k| (k, id.clone())))
        .collect();
    let energy_pairs: BTreeMap<PairKey, String> = energy
        .iter()
        .filter_map(|(id, sc)| pair_key(&sc.kind).map(|k| (k, id.clone())))
        .collect();
    for (key, f_id) in &failure_pairs {
        let Some(e_id) = energy_pairs.get(key) else {
            continue;
        };
        if is_affinity(&failure[f_id].kind) == is_affinity(&energy[e_id].kind) {
            continue; // same kind on both sides is agreement, not conflict
        }
        match priority {
            Priority::Failure => {
                let sc = energy.remove(e_id).expect("present");
                dropped.push(DroppedConstraint {
                    reason: format!("conflicts with {f_id}; failure constraints take priority"),
                    constraint: sc,
                });
            }
            Priority::Energy => {
                let sc = failure.remove(f_id).expect("present");
                dropped.push(DroppedConstraint {
                    reason: format!("conflicts with {e_id}; energy constraints take priority"),
                    constraint: sc,
                });
            }
            Priority::NoPriority => {
                let f_sc = failure.remove(f_id).expect("present");
                let e_sc = energy.remove(e_id).expect("present");
                dropped.push(DroppedConstraint {
                    reason: format!("conflicts with {e_id} and no priority is set; both dropped"),
                    constraint: f_sc,
                });
                dropped.push(DroppedConstraint {
                    reason: format!("conflicts with {f_id} and no priority is set; both dropped"),
                    constraint: e_sc,
                });
            }
        }
    }

    let mut kept: Vec<SoftConstraint> = failure.into_values().collect();
    let mut energy_kept: Vec<SoftConstraint> = energy.into_values().collect();
    energy_kept.sort_by(|a, b| {
        b.weight
            .partial_cmp(&a.weight)
            .unwrap()
            .then_with(|| a.identity().cmp(&b.identity()))
    });
    kept.extend(energy_kept);
    dropped.sort_by_key(|a| a.constraint.identity());
    HarmonizeOutcome { kept, dropped }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(c: &str, fc: &str, s: &str, fs: &str) -> (FlavourRef, FlavourRef) {
        (FlavourRef::new(c, fc), FlavourRef::new(s, fs))
    }

    fn f_anti(c: &str, fc: &str, s: &str, fs: &str) -> SoftConstraint {
        let (a, b) = pair(c, fc, s, fs);
        SoftConstraint::failure(ConstraintKind::anti_affinity(a, b))
    }

    fn f_avoid(c: &str, fc: &str, n: &str) -> SoftConstraint {
        SoftConstraint::failure(ConstraintKind::avoid(c, fc, n))
    }

    fn e_aff(c: &str, fc: &str, s: &str, fs: &str, w: f64) -> SoftConstraint {
        let (a, b) = pair(c, fc, s, fs);
        SoftConstraint::energy(ConstraintKind::affinity(a, b), w, w * 100.0)
    }

    fn e_avoid(c: &str, fc: &str, n: &str, w: f64) -> SoftConstraint {
        SoftConstraint::energy(ConstraintKind::avoid(c, fc, n), w, w * 100.0)
    }

    fn ids(cs: &[SoftConstraint]) -> Vec<String> {
        cs.iter().map(|c| c.identity()).collect()
    }

    #[test]
    fn failure_priority_keeps_the_failure_side_of_a_conflict() {
        let f = vec![f_anti("frontend", "large", "load_balancer", "large")];
        let e = vec![e_aff("frontend", "large", "load_balancer", "large", 0.9)];
        let out = harmonize(&f, &e, Priority::Failure);
        assert_eq!(
            ids(&out.kept),
            vec!["antiaffinity(d(frontend,large),d(load_balancer,large))"]
        );
        assert_eq!(out.dropped.len(), 1);
        assert_eq!(
            out.dropped[0].constraint.identity(),
            "affinity(d(frontend,large),d(load_balancer,large))"
        );
        assert!(out.dropped[0]
            .reason
            .contains("failure constraints take priority"));
    }

    #[test]
    fn energy_priority_keeps_the_energy_side() {
        let f = vec![f_anti("frontend", "large", "load_balancer", "large")];
        let e = vec![e_aff("frontend", "large", "load_balancer", "large", 0.9)];
        let out = harmonize(&f, &e, Priority::Energy);
        assert_eq!(
            ids(&out.kept),
            vec!["affinity(d(frontend,large),d(load_balancer,large))"]
        );
        assert_eq!(out.dropped.len(), 1);
        assert_eq!(
            out.dropped[0].constraint.identity(),
            "antiaffinity(d(frontend,large),d(load_balancer,large))"
        );
    }

    #[test]
    fn no_priority_drops_both_sides() {
        let f = vec![f_anti("frontend", "large", "load_balancer", "large")];
        let e = vec![e_aff("frontend", "large", "load_balancer", "large", 0.9)];
        let out = harmonize(&f, &e, Priority::NoPriority);
        assert!(out.kept.is_empty());
        assert_eq!(out.dropped.len(), 2);
    }

    #[test]
    fn disjoint_inputs_pass_through_in_order() {
        let f = vec![
            f_avoid("frontend", "large", "public1"),
            f_anti("a", "l", "b", "l"),
        ];
        let e = vec![
            e_avoid("identity_provider", "large", "private5", 0.413),
            e_avoid("database", "large", "private1", 1.0),
            e_avoid("identity_provider", "large", "private3", 0.883),
        ];
        let out = harmonize(&f, &e, Priority::Failure);
        assert!(out.dropped.is_empty());
        assert_eq!(
            ids(&out.kept),
            vec![
                // failure first, by text
                "antiaffinity(d(a,l),d(b,l))",
                "avoid(d(frontend,large),public1)",
                // then energy by descending weight
                "avoid(d(database,large),private1)",
                "avoid(d(identity_provider,large),private3)",
                "avoid(d(identity_provider,large),private5)",
            ]
        );
    }

    #[test]
    fn conflicts_are_flavour_exact() {
        let f = vec![f_anti("a", "large", "b", "large")];
        let e = vec![e_aff("a", "tiny", "b", "tiny", 0.5)];
        let out = harmonize(&f, &e, Priority::NoPriority);
        assert_eq!(out.kept.len(), 2);
        assert!(out.dropped.is_empty());
    }

    #[test]
    fn avoids_are_never_dropped() {
        let f = vec![f_avoid("db", "large", "n1"), f_anti("a", "l", "b", "l")];
        let e = vec![
            e_avoid("db", "large", "n2", 0.7),
            e_aff("a", "l", "b", "l", 0.9),
        ];
        for priority in [Priority::Failure, Priority::Energy, Priority::NoPriority] {
            let out = harmonize(&f, &e, priority);
            let kept = ids(&out.kept);
            assert!(kept.contains(&"avoid(d(db,large),n1)".to_string()));
            assert!(kept.contains(&"avoid(d(db,large),n2)".to_string()));
            assert!(out
                .dropped
                .iter()
                .all(|d| !matches!(d.constraint.kind, ConstraintKind::Avoid { .. })));
        }
    }

    #[test]
    fn same_enhancer_contradictions_drop_pairwise_regardless_of_priority() {
        let f = vec![
            SoftConstraint::failure(ConstraintKind::affinity(
                FlavourRef::new("a", "l"),
                FlavourRef::new("b", "l"),
            )),
            f_anti("a", "l", "b", "l"),
        ];
        let out = harmonize(&f, &[], Priority::Failure);
        assert!(out.kept.is_empty());
        assert_eq!(out.dropped.len(), 2);
        assert!(out
            .dropped
            .iter()
            .all(|d| d.reason.contains("same enhancer")));
    }

    #[test]
    fn duplicate_across_lists_is_kept_once_as_the_failure_copy() {
        let f = vec![f_avoid("db", "large", "n1")];
        let e = vec![e_avoid("db", "large", "n1", 0.8)];
        let out = harmonize(&f, &e, Priority::NoPriority);
        assert_eq!(out.kept.len(), 1);
        assert_eq!(out.kept[0].provenance, Provenance::Failure);
        assert!(out.dropped.is_empty());
    }

    #[test]
    fn harmonization_is_idempotent() {
        let f = vec![
            f_anti("frontend", "large", "load_balancer", "large"),
            f_avoid("x", "l", "n"),
        ];
        let e = vec![
            e_aff("frontend", "large", "load_balancer", "large", 0.9),
            e_avoid("db", "large", "n1", 1.0),
        ];
        for priority in [Priority::Failure, Priority::Energy, Priority::NoPriority] {
            let first = harmonize(&f, &e, priority);
            let (kept_f, kept_e): (Vec<_>, Vec<_>) = first
                .kept
                .iter()
                .cloned()
                .partition(|c| c.provenance == Provenance::Failure);
            let second = harmonize(&kept_f, &kept_e, priority);
            assert_eq!(second.kept, first.kept);
            assert!(second.dropped.is_empty());
        }
    }

    #[test]
    fn kept_and_dropped_partition_the_deduplicated_input() {
        let f = vec![
            f_anti("frontend", "large", "load_balancer", "large"),
            f_avoid("x", "l", "n"),
        ];
        let e = vec![
            e_aff("frontend", "large", "load_balancer", "large", 0.9),
            e_avoid("db", "large", "n1", 1.0),
        ];
        let out = harmonize(&f, &e, Priority::NoPriority);
        let mut all: Vec<String> = ids(&out.kept);
        all.extend(out.dropped.iter().map(|d| d.constraint.identity()));
        all.sort();
        let mut expected: Vec<String> = f.iter().chain(e.iter()).map(|c| c.identity()).collect();
        expected.sort();
        assert_eq!(all, expected);
    }
}
