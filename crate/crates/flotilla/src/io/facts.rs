//! Fact bases: the Prolog-style digest of one simulated round, as consumed by
//! the constraint enhancers.
//!
//! ```text
//! deployedTo(api, large, private1).
//! unreachable(frontend, 31).
//! overload(public1, cpu, 31, 98).
//! race(public1, cpu, frontend, large, load_balancer, large, 31).
//! ```
//!
//! Overloads are interval facts: per-tick events with no gap coalesce into a
//! single `overload(node, resource, from, to[, peak_load_pct])` span.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::model::{ApplicationSpec, InfrastructureSpec, Violation};

use super::ParseError;

/// Directed per-tick congestion between two nodes.
pub type Congestion = (String, String, u64);

/// One coalesced overload interval.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct OverloadSpan {
    pub node: String,
    pub resource: String,
    pub from: u64,
    pub to: u64,
    /// Peak observed load in percent of effective capacity, when known.
    pub peak_load_pct: Option<u32>,
}

impl OverloadSpan {
    pub fn covers(&self, tick: u64) -> bool {
        (self.from..=self.to).contains(&tick)
    }
}

/// Two co-located components competing for the same resource at one tick.
/// The (component, flavour) pairs are kept in sorted order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct RaceFact {
    pub node: String,
    pub resource: String,
    pub c1: String,
    pub f1: String,
    pub c2: String,
    pub f2: String,
    pub tick: u64,
}

impl RaceFact {
    pub fn new(node: &str, resource: &str, a: (&str, &str), b: (&str, &str), tick: u64) -> Self {
        let (first, second) = if a <= b { (a, b) } else { (b, a) };
        RaceFact {
            node: node.to_string(),
            resource: resource.to_string(),
            c1: first.0.to_string(),
            f1: first.1.to_string(),
            c2: second.0.to_string(),
            f2: second.1.to_string(),
            tick,
        }
    }

    pub fn involves(&self, component: &str) -> bool {
        self.c1 == component || self.c2 == component
    }
}

/// Everything the enhancers know about one round.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FactBase {
    /// (component, flavour, node)
    pub deployed: BTreeSet<(String, String, String)>,
    /// (consumer, provider, tick)
    pub timeouts: BTreeSet<(String, String, u64)>,
    /// (component, tick) — internal error while serving
    pub internals: BTreeSet<(String, u64)>,
    /// (component, tick)
    pub unreachables: BTreeSet<(String, u64)>,
    /// (from, to, tick) — directed
    pub congestions: BTreeSet<Congestion>,
    /// (node, tick)
    pub disconnections: BTreeSet<(String, u64)>,
    pub overloads: BTreeSet<OverloadSpan>,
    pub races: BTreeSet<RaceFact>,
}

impl FactBase {
    pub fn deployment_of(&self, component: &str) -> Option<(&str, &str)> {
        self.deployed
            .iter()
            .find(|(c, _, _)| c == component)
            .map(|(_, f, n)| (f.as_str(), n.as_str()))
    }

    pub fn is_congested(&self, from: &str, to: &str, tick: u64) -> bool {
        self.congestions
            .iter()
            .any(|(a, b, t)| a == from && b == to && *t == tick)
    }

    pub fn is_disconnected(&self, node: &str, tick: u64) -> bool {
        self.disconnections
            .iter()
            .any(|(n, t)| n == node && *t == tick)
    }

    pub fn overloads_at<'a>(
        &'a self,
        node: &'a str,
        tick: u64,
    ) -> impl Iterator<Item = &'a OverloadSpan> + 'a {
        self.overloads
            .iter()
            .filter(move |o| o.node == node && o.covers(tick))
    }

    pub fn races_at<'a>(
        &'a self,
        node: &'a str,
        tick: u64,
    ) -> impl Iterator<Item = &'a RaceFact> + 'a {
        self.races
            .iter()
            .filter(move |r| r.node == node && r.tick == tick)
    }

    /// Check that every referenced name exists in the given specifications.
    pub fn validate(&self, app: &ApplicationSpec, infra: &InfrastructureSpec) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut bad = |m: String| out.push(Violation { message: m });
        let comp_ok = |c: &str| app.component(c).is_some();
        let node_ok = |n: &str| infra.node(n).is_some();

        for (c, f, n) in &self.deployed {
            match app.component(c) {
                None => bad(format!("deployedTo references unknown component {c}")),
                Some(comp) if comp.flavour(f).is_none() => {
                    bad(format!("deployedTo references unknown flavour {c}/{f}"))
                }
                _ => {}
            }
            if !node_ok(n) {
                bad(format!("deployedTo references unknown node {n}"));
            }
        }
        for (c, s, _) in &self.timeouts {
            for name in [c, s] {
                if !comp_ok(name) {
                    bad(format!("timeoutEvent references unknown component {name}"));
                }
            }
        }
        for (c, _) in self.internals.iter().chain(self.unreachables.iter()) {
            if !comp_ok(c) {
                bad(format!("event references unknown component {c}"));
            }
        }
        for (a, b, _) in &self.congestions {
            for n in [a, b] {
                if !node_ok(n) {
                    bad(format!("congested references unknown node {n}"));
                }
            }
        }
        for (n, _) in &self.disconnections {
            if !node_ok(n) {
                bad(format!("disconnected references unknown node {n}"));
            }
        }
        for o in &self.overloads {
            if !node_ok(&o.node) {
                bad(format!("overload references unknown node {}", o.node));
            }
            if o.from > o.to {
                bad(format!(
                    "overload interval {}..{} is reversed",
                    o.from, o.to
                ));
            }
        }
        for r in &self.races {
            if !node_ok(&r.node) {
                bad(format!("race references unknown node {}", r.node));
            }
            for c in [&r.c1, &r.c2] {
                if !comp_ok(c) {
                    bad(format!("race references unknown component {c}"));
                }
            }
        }
        out
    }
}

pub fn emit_fact_base(fb: &FactBase) -> String {
    let mut out = String::new();
    for (c, f, n) in &fb.deployed {
        writeln!(out, "deployedTo({c}, {f}, {n}).").unwrap();
    }
    for (c, t) in &fb.unreachables {
        writeln!(out, "unreachable({c}, {t}).").unwrap();
    }
    for (c, t) in &fb.internals {
        writeln!(out, "internal({c}, {t}).").unwrap();
    }
    for (c, s, t) in &fb.timeouts {
        writeln!(out, "timeoutEvent({c}, {s}, {t}).").unwrap();
    }
    for (a, b, t) in &fb.congestions {
        writeln!(out, "congested({a}, {b}, {t}).").unwrap();
    }
    for (n, t) in &fb.disconnections {
        writeln!(out, "disconnected({n}, {t}).").unwrap();
    }
    for o in &fb.overloads {
        match o.peak_load_pct {
            Some(p) => writeln!(
                out,
                "overload({}, {}, {}, {}, {p}).",
                o.node, o.resource, o.from, o.to
            )
            .unwrap(),
            None => writeln!(
                out,
                "overload({}, {}, {}, {}).",
                o.node, o.resource, o.from, o.to
            )
            .unwrap(),
        }
    }
    for r in &fb.races {
        writeln!(
            out,
            "race({}, {}, {}, {}, {}, {}, {}).",
            r.node, r.resource, r.c1, r.f1, r.c2, r.f2, r.tick
        )
        .unwrap();
    }
    out
}

pub fn parse_fact_base(text: &str) -> Result<FactBase, ParseError> {
    let mut fb = FactBase::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') || line.starts_with('#') {
            continue;
        }
        let body = line
            .strip_suffix('.')
            .ok_or_else(|| ParseError::at(line_no, "missing '.' terminator"))?;
        let (head, args) = split_functor(body, line_no)?;
        let arg = |i: usize| -> &str { args[i].as_str() };
        let tick = |i: usize| -> Result<u64, ParseError> {
            args[i]
                .parse()
                .map_err(|_| ParseError::at(line_no, format!("bad tick {:?}", args[i])))
        };
        match (head.as_str(), args.len()) {
            ("deployedTo", 3) => {
                fb.deployed
                    .insert((arg(0).into(), arg(1).into(), arg(2).into()));
            }
            ("unreachable", 2) => {
                fb.unreachables.insert((arg(0).into(), tick(1)?));
            }
            ("internal", 2) => {
                fb.internals.insert((arg(0).into(), tick(1)?));
            }
            ("timeoutEvent", 3) => {
                fb.timeouts.insert((arg(0).into(), arg(1).into(), tick(2)?));
            }
            ("congested", 3) => {
                fb.congestions
                    .insert((arg(0).into(), arg(1).into(), tick(2)?));
            }
            ("disconnected", 2) => {
                fb.disconnections.insert((arg(0).into(), tick(1)?));
            }
            ("overload", 4 | 5) => {
                let peak = if args.len() == 5 {
                    Some(args[4].parse().map_err(|_| {
                        ParseError::at(line_no, format!("bad load percentage {:?}", args[4]))
                    })?)
                } else {
                    None
                };
                let span = OverloadSpan {
                    node: arg(0).into(),
                    resource: arg(1).into(),
                    from: tick(2)?,
                    to: tick(3)?,
                    peak_load_pct: peak,
                };
                if span.from > span.to {
                    return Err(ParseError::at(line_no, "overload interval is reversed"));
                }
                fb.overloads.insert(span);
            }
            ("race", 7) => {
                fb.races.insert(RaceFact::new(
                    arg(0),
                    arg(1),
                    (arg(2), arg(3)),
                    (arg(4), arg(5)),
                    tick(6)?,
                ));
            }
            (other, n) => {
                return Err(ParseError::at(
                    line_no,
                    format!("unknown fact {other:?} with {n} arguments"),
                ))
            }
        }
    }
    Ok(fb)
}

fn split_functor(body: &str, line_no: usize) -> Result<(String, Vec<String>), ParseError> {
    let open = body
        .find('(')
        .ok_or_else(|| ParseError::at(line_no, format!("expected a fact, got {body:?}")))?;
    let close = body
        .rfind(')')
        .ok_or_else(|| ParseError::at(line_no, "missing closing ')'"))?;
    if close != body.trim_end().len() - 1 || close < open {
        return Err(ParseError::at(line_no, "malformed fact"));
    }
    let head = body[..open].trim().to_string();
    let args = body[open + 1..close]
        .split(',')
        .map(|a| a.trim().to_string())
        .collect::<Vec<_>>();
    if args.iter().any(|a| a.is_empty() || a.contains('(')) {
        return Err(ParseError::at(line_no, "malformed fact arguments"));
    }
    Ok((head, args))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FactBase {
        let mut fb = FactBase::default();
        fb.deployed
            .insert(("api".into(), "large".into(), "private1".into()));
        fb.deployed
            .insert(("frontend".into(), "large".into(), "public1".into()));
        fb.unreachables.insert(("frontend".into(), 31));
        fb.timeouts.insert(("frontend".into(), "api".into(), 40));
        fb.congestions
            .insert(("public1".into(), "private1".into(), 40));
        fb.disconnections.insert(("private3".into(), 12));
        fb.internals.insert(("api".into(), 55));
        fb.overloads.insert(OverloadSpan {
            node: "public1".into(),
            resource: "cpu".into(),
            from: 31,
            to: 98,
            peak_load_pct: Some(107),
        });
        fb.races.insert(RaceFact::new(
            "public1",
            "cpu",
            ("load_balancer", "large"),
            ("frontend", "large"),
            31,
        ));
        fb
    }

    #[test]
    fn races_normalize_their_component_pair() {
        let r = RaceFact::new("n", "cpu", ("zeta", "large"), ("alpha", "tiny"), 3);
        assert_eq!(r.c1, "alpha");
        assert_eq!(r.c2, "zeta");
        assert!(r.involves("zeta"));
    }

    #[test]
    fn emission_is_sorted_and_round_trips() {
        let fb = sample();
        let text = emit_fact_base(&fb);
        assert!(text.starts_with("deployedTo(api, large, private1).\n"));
        assert!(text.contains("overload(public1, cpu, 31, 98, 107).\n"));
        assert!(text.contains("race(public1, cpu, frontend, large, load_balancer, large, 31).\n"));
        assert_eq!(parse_fact_base(&text).unwrap(), fb);
    }

    #[test]
    fn four_argument_overload_parses_without_peak() {
        let fb = parse_fact_base("overload(public1, cpu, 31, 98).\n").unwrap();
        let span = fb.overloads.iter().next().unwrap();
        assert_eq!(span.peak_load_pct, None);
        assert!(span.covers(31) && span.covers(98) && !span.covers(99));
    }

    #[test]
    fn rejects_unknown_and_malformed_facts() {
        assert!(parse_fact_base("mystery(a, b).").is_err());
        assert!(parse_fact_base("unreachable(frontend, soon).").is_err());
        assert!(parse_fact_base("overload(n, cpu, 9, 3).").is_err());
        assert!(parse_fact_base("unreachable(frontend, 31)").is_err());
    }

    #[test]
    fn validation_catches_unknown_names() {
        let app = crate::io::yaml::parse_application(
            "app:\n  name: a\n  components:\n    - name: api\n      flavours:\n        - {name: large, importance: 1, resources: {}}\n",
        )
        .unwrap();
        let infra = crate::io::yaml::parse_infrastructure(
            "infra:\n  nodes:\n    - {name: private1, capacities: {}}\n",
        )
        .unwrap();
        let mut fb = FactBase::default();
        fb.deployed
            .insert(("api".into(), "large".into(), "ghost".into()));
        fb.unreachables.insert(("nobody".into(), 1));
        let violations = fb.validate(&app, &infra);
        assert_eq!(violations.len(), 2);
    }
}
