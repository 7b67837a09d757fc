//! Simulation log lines: `HH:MM|sim|MESSAGE`.
//!
//! The wall-clock timestamp is cosmetic (derived from the tick counter) and
//! ignored on parse; every event message carries its own tick number.
//!
//! ```text
//! 00:00|sim|Placement - {api_large -> private1 | frontend_large -> public1}
//! 00:31|sim|Event Tick-31 fired
//! 00:31|sim|OVERLOAD public1 cpu 107 31
//! 00:31|sim|UNREACHABLE frontend 31
//! 00:31|sim|ENERGY frontend 20.000000 31
//! 00:31|sim|NODEPOWER public1 38.000000 31
//! ```
//!
//! Parsing folds the lines into a [`FactBase`]: the most recent placement
//! block wins, and consecutive per-tick `OVERLOAD` events for one
//! (node, resource) coalesce into a single interval fact carrying the peak
//! load percentage.

use std::collections::BTreeMap;

use super::facts::{FactBase, OverloadSpan, RaceFact};
use super::ParseError;

/// One line of simulation log, sans timestamp.
#[derive(Clone, Debug, PartialEq)]
pub enum LogLine {
    /// `Event Tick-31 fired`
    Tick { tick: u64 },
    /// `Placement - {api_large -> private1 | ...}`, component-sorted
    Placement {
        entries: Vec<(String, String, String)>,
    },
    /// `OVERLOAD node resource load_pct tick`
    Overload {
        node: String,
        resource: String,
        load_pct: u32,
        tick: u64,
    },
    /// `UNREACHABLE component tick`
    Unreachable { component: String, tick: u64 },
    /// `INTERNAL component tick`
    Internal { component: String, tick: u64 },
    /// `TIMEOUT consumer provider tick`
    Timeout {
        consumer: String,
        provider: String,
        tick: u64,
    },
    /// `CONGESTED from to tick`
    Congested { from: String, to: String, tick: u64 },
    /// `DISCONNECTED node tick`
    Disconnected { node: String, tick: u64 },
    /// `RACE node resource comp1 flavour1 comp2 flavour2 tick`
    Race {
        node: String,
        resource: String,
        c1: String,
        f1: String,
        c2: String,
        f2: String,
        tick: u64,
    },
    /// `ENERGY component watts tick`
    Energy {
        component: String,
        watts: f64,
        tick: u64,
    },
    /// `NODEPOWER node watts tick`
    NodePower { node: String, watts: f64, tick: u64 },
}

impl LogLine {
    /// The tick stamped into the cosmetic timestamp.
    fn timestamp_tick(&self) -> u64 {
        match self {
            LogLine::Tick { tick }
            | LogLine::Overload { tick, .. }
            | LogLine::Unreachable { tick, .. }
            | LogLine::Internal { tick, .. }
            | LogLine::Timeout { tick, .. }
            | LogLine::Congested { tick, .. }
            | LogLine::Disconnected { tick, .. }
            | LogLine::Race { tick, .. }
            | LogLine::Energy { tick, .. }
            | LogLine::NodePower { tick, .. } => *tick,
            LogLine::Placement { .. } => 0,
        }
    }

    pub fn message(&self) -> String {
        match self {
            LogLine::Tick { tick } => format!("Event Tick-{tick} fired"),
            LogLine::Placement { entries } => {
                let body = entries
                    .iter()
                    .map(|(c, f, n)| format!("{c}_{f} -> {n}"))
                    .collect::<Vec<_>>()
                    .join(" | ");
                format!("Placement - {{{body}}}")
            }
            LogLine::Overload {
                node,
                resource,
                load_pct,
                tick,
            } => {
                format!("OVERLOAD {node} {resource} {load_pct} {tick}")
            }
            LogLine::Unreachable { component, tick } => format!("UNREACHABLE {component} {tick}"),
            LogLine::Internal { component, tick } => format!("INTERNAL {component} {tick}"),
            LogLine::Timeout {
                consumer,
                provider,
                tick,
            } => {
                format!("TIMEOUT {consumer} {provider} {tick}")
            }
            LogLine::Congested { from, to, tick } => format!("CONGESTED {from} {to} {tick}"),
            LogLine::Disconnected { node, tick } => format!("DISCONNECTED {node} {tick}"),
            LogLine::Race {
                node,
                resource,
                c1,
                f1,
                c2,
                f2,
                tick,
            } => {
                format!("RACE {node} {resource} {c1} {f1} {c2} {f2} {tick}")
            }
            LogLine::Energy {
                component,
                watts,
                tick,
            } => {
                format!("ENERGY {component} {watts:.6} {tick}")
            }
            LogLine::NodePower { node, watts, tick } => {
                format!("NODEPOWER {node} {watts:.6} {tick}")
            }
        }
    }

    /// Render the full `HH:MM|sim|message` line (one tick = one minute of
    /// wall-clock for the cosmetic stamp).
    pub fn render(&self) -> String {
        let tick = self.timestamp_tick();
        format!(
            "{:02}:{:02}|sim|{}",
            (tick / 60) % 24,
            tick % 60,
            self.message()
        )
    }
}

/// Result of folding one log: round facts plus the power samples needed by
/// the energy pipeline.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedLog {
    pub facts: FactBase,
    /// component → (tick, watts) samples, in log order
    pub service_power: BTreeMap<String, Vec<(u64, f64)>>,
    /// node → (tick, watts) samples
    pub node_power: BTreeMap<String, Vec<(u64, f64)>>,
}

pub fn parse_simulation_log(text: &str) -> Result<ParsedLog, ParseError> {
    let mut out = ParsedLog::default();
    // (node, resource) → per-tick (tick, pct) in arrival order
    let mut overload_ticks: BTreeMap<(String, String), Vec<(u64, u32)>> = BTreeMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end();
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '|');
        let (_stamp, _source, message) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => {
                return Err(ParseError::at(
                    line_no,
                    format!("expected `timestamp|source|message`, got {line:?}"),
                ))
            }
        };
        let parsed = parse_message(message, line_no)?;
        match parsed {
            LogLine::Tick { .. } => {}
            LogLine::Placement { entries } => {
                out.facts.deployed = entries.into_iter().collect();
            }
            LogLine::Overload {
                node,
                resource,
                load_pct,
                tick,
            } => {
                overload_ticks
                    .entry((node, resource))
                    .or_default()
                    .push((tick, load_pct));
            }
            LogLine::Unreachable { component, tick } => {
                out.facts.unreachables.insert((component, tick));
            }
            LogLine::Internal { component, tick } => {
                out.facts.internals.insert((component, tick));
            }
            LogLine::Timeout {
                consumer,
                provider,
                tick,
            } => {
                out.facts.timeouts.insert((consumer, provider, tick));
            }
            LogLine::Congested { from, to, tick } => {
                out.facts.congestions.insert((from, to, tick));
            }
            LogLine::Disconnected { node, tick } => {
                out.facts.disconnections.insert((node, tick));
            }
            LogLine::Race {
                node,
                resource,
                c1,
                f1,
                c2,
                f2,
                tick,
            } => {
                out.facts.races.insert(RaceFact::new(
                    &node,
                    &resource,
                    (&c1, &f1),
                    (&c2, &f2),
                    tick,
                ));
            }
            LogLine::Energy {
                component,
                watts,
                tick,
            } => {
                out.service_power
                    .entry(component)
                    .or_default()
                    .push((tick, watts));
            }
            LogLine::NodePower { node, watts, tick } => {
                out.node_power.entry(node).or_default().push((tick, watts));
            }
        }
    }

    for ((node, resource), mut ticks) in overload_ticks {
        ticks.sort();
        ticks.dedup_by_key(|(t, _)| *t);
        let mut run: Option<(u64, u64, u32)> = None;
        for (tick, pct) in ticks {
            run = match run {
                Some((from, to, peak)) if tick == to + 1 => Some((from, tick, peak.max(pct))),
                Some((from, to, peak)) => {
                    out.facts.overloads.insert(OverloadSpan {
                        node: node.clone(),
                        resource: resource.clone(),
                        from,
                        to,
                        peak_load_pct: Some(peak),
                    });
                    Some((tick, tick, pct))
                }
                None => Some((tick, tick, pct)),
            };
        }
        if let Some((from, to, peak)) = run {
            out.facts.overloads.insert(OverloadSpan {
                node,
                resource,
                from,
                to,
                peak_load_pct: Some(peak),
            });
        }
    }
    Ok(out)
}

fn parse_message(message: &str, line_no: usize) -> Result<LogLine, ParseError> {
    if let Some(rest) = message.strip_prefix("Event Tick-") {
        let tick = rest
            .strip_suffix(" fired")
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| ParseError::at(line_no, format!("bad tick event {message:?}")))?;
        return Ok(LogLine::Tick { tick });
    }
    if let Some(rest) = message.strip_prefix("Placement - ") {
        let body = rest
            .strip_prefix('{')
            .and_then(|r| r.strip_suffix('}'))
            .ok_or_else(|| ParseError::at(line_no, "placement block must be braced"))?;
        let mut entries = Vec::new();
        if !body.trim().is_empty() {
            for piece in body.split('|') {
                let (lhs, node) = piece.split_once("->").ok_or_else(|| {
                    ParseError::at(line_no, format!("bad placement entry {piece:?}"))
                })?;
                let (component, flavour) = lhs.trim().rsplit_once('_').ok_or_else(|| {
                    ParseError::at(
                        line_no,
                        format!("placement entry {piece:?} lacks a flavour"),
                    )
                })?;
                entries.push((
                    component.to_string(),
                    flavour.to_string(),
                    node.trim().to_string(),
                ));
            }
        }
        return Ok(LogLine::Placement { entries });
    }

    let fields: Vec<&str> = message.split_whitespace().collect();
    let bad = |what: &str| ParseError::at(line_no, format!("bad {what} line {message:?}"));
    let tick =
        |s: &str, what: &str| -> Result<u64, ParseError> { s.parse().map_err(|_| bad(what)) };
    match fields.as_slice() {
        ["OVERLOAD", node, resource, pct, t] => Ok(LogLine::Overload {
            node: node.to_string(),
            resource: resource.to_string(),
            load_pct: pct.parse().map_err(|_| bad("OVERLOAD"))?,
            tick: tick(t, "OVERLOAD")?,
        }),
        ["UNREACHABLE", component, t] => Ok(LogLine::Unreachable {
            component: component.to_string(),
            tick: tick(t, "UNREACHABLE")?,
        }),
        ["INTERNAL", component, t] => Ok(LogLine::Internal {
            component: component.to_string(),
            tick: tick(t, "INTERNAL")?,
        }),
        ["TIMEOUT", consumer, provider, t] => Ok(LogLine::Timeout {
            consumer: consumer.to_string(),
            provider: provider.to_string(),
            tick: tick(t, "TIMEOUT")?,
        }),
        ["CONGESTED", from, to, t] => Ok(LogLine::Congested {
            from: from.to_string(),
            to: to.to_string(),
            tick: tick(t, "CONGESTED")?,
        }),
        ["DISCONNECTED", node, t] => Ok(LogLine::Disconnected {
            node: node.to_string(),
            tick: tick(t, "DISCONNECTED")?,
        }),
        ["RACE", node, resource, c1, f1, c2, f2, t] => Ok(LogLine::Race {
            node: node.to_string(),
            resource: resource.to_string(),
            c1: c1.to_string(),
            f1: f1.to_string(),
            c2: c2.to_string(),
            f2: f2.to_string(),
            tick: tick(t, "RACE")?,
        }),
        ["ENERGY", component, watts, t] => Ok(LogLine::Energy {
            component: component.to_string(),
            watts: watts.parse().map_err(|_| bad("ENERGY"))?,
            tick: tick(t, "ENERGY")?,
        }),
        ["NODEPOWER", node, watts, t] => Ok(LogLine::NodePower {
            node: node.to_string(),
            watts: watts.parse().map_err(|_| bad("NODEPOWER"))?,
            tick: tick(t, "NODEPOWER")?,
        }),
        _ => Err(ParseError::at(
            line_no,
            format!("unrecognized log message {message:?}"),
        )),
    }
}
