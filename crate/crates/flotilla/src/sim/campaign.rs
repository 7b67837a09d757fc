//! Multi-round adaptation campaigns.
//!
//! A campaign pits several placement strategies ("modes") against the same
//! scenario schedule over a fixed number of rounds. Each round is: place →
//! simulate → write the round log → parse the log back → run the enhancers on
//! the parsed facts → harmonize → feed the surviving constraints (and spec
//! revisions) into the next round's solve. The feedback deliberately travels
//! through the rendered log text, exactly as it would between separate
//! processes, so the text formats are exercised end to end.
//!
//! All outputs are deterministic: rows sort by (mode name, round), files are
//! emitted with fixed formatting, and the only randomness — baseline
//! tie-breaking — is seeded from the config.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{
    enhance_round, EnergyConfig, KbError, KnowledgeBase, RoundObservations, Thresholds,
};
use crate::failure::suggest_constraints;
use crate::harmonizer::{harmonize, Priority};
use crate::io::facts::FactBase;
use crate::io::{
    emit_constraints, emit_deployment, parse_application, parse_infrastructure,
    parse_simulation_log, ParseError, ParsedLog,
};
use crate::model::{ApplicationSpec, Assignment, Deployment, InfrastructureSpec, SoftConstraint};
use crate::sim::baselines::best_fit;
use crate::sim::{run_round, Scenario, SimError, Target};
use crate::solver::{solve_with_relaxation, PlacementProblem, SolveOutcome, DEFAULT_TIME_LIMIT};

/// Placement strategy compared by a campaign. The serialized names are the
/// config-file and CSV vocabulary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Capacity-greedy baseline, re-run identically every round.
    #[serde(rename = "bestfit")]
    BestFit,
    /// Exact solver, no enhancer feedback.
    #[serde(rename = "solver-only")]
    SolverOnly,
    /// Solver plus the emission enhancer.
    #[serde(rename = "solver+energy")]
    SolverEnergy,
    /// Solver plus the failure enhancer.
    #[serde(rename = "solver+failure")]
    SolverFailure,
    /// Solver plus both enhancers and the harmonizer.
    #[serde(rename = "full-freeda")]
    Full,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::BestFit,
        Mode::SolverOnly,
        Mode::SolverEnergy,
        Mode::SolverFailure,
        Mode::Full,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::BestFit => "bestfit",
            Mode::SolverOnly => "solver-only",
            Mode::SolverEnergy => "solver+energy",
            Mode::SolverFailure => "solver+failure",
            Mode::Full => "full-freeda",
        }
    }

    pub fn uses_solver(&self) -> bool {
        !matches!(self, Mode::BestFit)
    }

    pub fn uses_failure(&self) -> bool {
        matches!(self, Mode::SolverFailure | Mode::Full)
    }

    pub fn uses_energy(&self) -> bool {
        matches!(self, Mode::SolverEnergy | Mode::Full)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode {s:?} (expected one of bestfit, solver-only, solver+energy, solver+failure, full-freeda)"))
    }
}

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("campaign i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("campaign config: {0}")]
    Config(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Kb(#[from] KbError),
}

fn config_err(msg: impl Into<String>) -> CampaignError {
    CampaignError::Config(msg.into())
}

/// A fully resolved campaign: specs loaded, policies expanded, defaults
/// applied.
#[derive(Clone, Debug)]
pub struct CampaignSpec {
    pub app: ApplicationSpec,
    pub infra: InfrastructureSpec,
    pub rounds: u32,
    pub ticks_per_round: u64,
    pub tick_minutes: f64,
    pub seed: u64,
    pub modes: Vec<Mode>,
    pub priority: Priority,
    pub time_limit: Duration,
    pub max_drop_k: Option<usize>,
    pub thresholds: Thresholds,
    /// Scenario library; policies reference entries by name.
    pub scenarios: Vec<Scenario>,
    /// Per round, the application scenarios active that round.
    pub application_policy: Vec<Vec<String>>,
    /// Per round, the infrastructure scenarios active that round.
    pub infrastructure_policy: Vec<Vec<String>>,
}

#[derive(Deserialize)]
struct CampaignFileWrapper {
    campaign: CampaignFile,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CampaignFile {
    application: String,
    infrastructure: String,
    rounds: u32,
    #[serde(default = "default_ticks")]
    ticks_per_round: u64,
    #[serde(default = "default_tick_minutes")]
    tick_minutes: f64,
    #[serde(default)]
    seed: u64,
    modes: Vec<Mode>,
    #[serde(default)]
    priority: Option<String>,
    #[serde(default)]
    time_limit_s: Option<u64>,
    #[serde(default)]
    max_drop_k: Option<usize>,
    #[serde(default)]
    thresholds: Option<Thresholds>,
    #[serde(default)]
    scenarios: Vec<Scenario>,
    #[serde(default)]
    application_policy: Option<String>,
    #[serde(default)]
    infrastructure_policy: Option<String>,
}

fn default_ticks() -> u64 {
    super::DEFAULT_TICKS_PER_ROUND
}

fn default_tick_minutes() -> f64 {
    super::DEFAULT_TICK_MINUTES
}

/// Expand an update-policy expression like `"[a, b] * 2 + [] * 1"` into one
/// scenario-name list per round. The term counts must add up to `rounds`.
pub fn parse_policy(text: &str, rounds: u32) -> Result<Vec<Vec<String>>, CampaignError> {
    let mut out: Vec<Vec<String>> = Vec::new();
    for term in text.split('+') {
        let term = term.trim();
        let (list_part, count_part) = term
            .rsplit_once('*')
            .ok_or_else(|| config_err(format!("policy term {term:?} is not `[names] * count`")))?;
        let list_part = list_part.trim();
        let inner = list_part
            .strip_prefix('[')
            .and_then(|s| s.strip_suffix(']'))
            .ok_or_else(|| {
                config_err(format!(
                    "policy term {term:?} must bracket its scenario list"
                ))
            })?;
        let names: Vec<String> = inner
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect();
        let count: u32 = count_part
            .trim()
            .parse()
            .map_err(|_| config_err(format!("policy term {term:?} has a non-integer count")))?;
        for _ in 0..count {
            out.push(names.clone());
        }
    }
    if out.len() != rounds as usize {
        return Err(config_err(format!(
            "policy expands to {} rounds but the campaign has {rounds}",
            out.len()
        )));
    }
    Ok(out)
}

/// Load and fully validate a campaign config file. The `application` and
/// `infrastructure` paths are resolved relative to the config's directory.
pub fn load_campaign(path: &Path) -> Result<CampaignSpec, CampaignError> {
    let text = fs::read_to_string(path)?;
    let wrapper: CampaignFileWrapper =
        serde_yaml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let file = wrapper.campaign;
    let base = path.parent().unwrap_or_else(|| Path::new("."));

    let app_text = fs::read_to_string(base.join(&file.application))?;
    let app = parse_application(&app_text)?;
    let infra_text = fs::read_to_string(base.join(&file.infrastructure))?;
    let infra = parse_infrastructure(&infra_text)?;

    if file.rounds == 0 {
        return Err(config_err("a campaign needs at least one round"));
    }
    if file.modes.is_empty() {
        return Err(config_err("a campaign needs at least one mode"));
    }
    let mut seen_modes = BTreeSet::new();
    for mode in &file.modes {
        if !seen_modes.insert(mode.as_str()) {
            return Err(config_err(format!("mode {mode} listed twice")));
        }
    }

    let priority = match file.priority.as_deref() {
        None => Priority::default(),
        Some(p) => p.parse().map_err(CampaignError::Config)?,
    };

    let mut by_name: BTreeMap<&str, &Scenario> = BTreeMap::new();
    for scenario in &file.scenarios {
        if by_name.insert(&scenario.name, scenario).is_some() {
            return Err(config_err(format!(
                "scenario {:?} defined twice",
                scenario.name
            )));
        }
        scenario
            .validate(&app, &infra, file.ticks_per_round)
            .map_err(|e| config_err(e.to_string()))?;
    }

    let expand = |policy: &Option<String>| -> Result<Vec<Vec<String>>, CampaignError> {
        match policy {
            None => Ok(vec![Vec::new(); file.rounds as usize]),
            Some(text) => parse_policy(text, file.rounds),
        }
    };
    let application_policy = expand(&file.application_policy)?;
    let infrastructure_policy = expand(&file.infrastructure_policy)?;
    for (policy, wants_app, label) in [
        (&application_policy, true, "application"),
        (&infrastructure_policy, false, "infrastructure"),
    ] {
        for name in policy.iter().flatten() {
            let Some(scenario) = by_name.get(name.as_str()) else {
                return Err(config_err(format!(
                    "{label} policy references unknown scenario {name:?}"
                )));
            };
            let is_app = matches!(scenario.target, Target::ComponentEnergy { .. });
            if is_app != wants_app {
                return Err(config_err(format!(
                    "scenario {name:?} targets the {}, so it cannot appear in the {label} policy",
                    if is_app {
                        "application"
                    } else {
                        "infrastructure"
                    }
                )));
            }
        }
    }

    Ok(CampaignSpec {
        app,
        infra,
        rounds: file.rounds,
        ticks_per_round: file.ticks_per_round,
        tick_minutes: file.tick_minutes,
        seed: file.seed,
        modes: file.modes,
        priority,
        time_limit: file
            .time_limit_s
            .map(Duration::from_secs)
            .unwrap_or(DEFAULT_TIME_LIMIT),
        max_drop_k: file.max_drop_k,
        thresholds: file.thresholds.unwrap_or_default(),
        scenarios: file.scenarios,
        application_policy,
        infrastructure_policy,
    })
}

/// One metrics.csv row.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub round: u32,
    pub mode: Mode,
    pub downtime_pct: f64,
    pub app_quality_pct: f64,
    pub energy_kwh: f64,
    pub co2_g: f64,
    pub changes: usize,
}

/// Render rows as the canonical CSV, sorted by (mode name, round).
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut sorted: Vec<&MetricsRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        a.mode
            .as_str()
            .cmp(b.mode.as_str())
            .then(a.round.cmp(&b.round))
    });
    let mut out =
        String::from("round,mode,downtime_pct,app_quality_pct,energy_kwh,co2_g,changes\n");
    for r in sorted {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{}\n",
            r.round, r.mode, r.downtime_pct, r.app_quality_pct, r.energy_kwh, r.co2_g, r.changes
        ));
    }
    out
}

/// What a finished campaign returns (everything is also on disk).
#[derive(Clone, Debug, Default)]
pub struct CampaignReport {
    pub rows: Vec<MetricsRow>,
    /// Human-readable events: relaxations, timeouts, halted modes.
    pub notes: Vec<String>,
}

/// Rebuild the enhancer inputs from parsed log text: the deployment the log
/// reports, and the power observations keyed by that deployment.
pub fn observations_from_log(
    parsed: &ParsedLog,
    tick_minutes: f64,
    infra: &InfrastructureSpec,
) -> (Deployment, RoundObservations) {
    let placement = Deployment::new(
        parsed
            .facts
            .deployed
            .iter()
            .map(|(c, f, n)| Assignment::new(c, f, n))
            .collect(),
    );
    let mut obs = RoundObservations {
        tick_minutes,
        ..Default::default()
    };
    for (component, samples) in &parsed.service_power {
        let Some(assignment) = placement.get(component) else {
            continue;
        };
        let series: Vec<f64> = samples.iter().map(|(_, w)| *w).collect();
        obs.service_power.insert(
            (
                component.clone(),
                assignment.flavour.clone(),
                assignment.node.clone(),
            ),
            series,
        );
    }
    obs.node_intensity = infra
        .nodes
        .iter()
        .map(|n| (n.name.clone(), n.carbon_intensity))
        .collect();
    (placement, obs)
}

/// Replace every observed flavour's power rating with the knowledge base's
/// mean observed draw, leaving never-observed flavours untouched.
pub fn revise_application(app: &ApplicationSpec, kb: &KnowledgeBase) -> ApplicationSpec {
    let mut revised = app.clone();
    for component in &mut revised.components {
        for flavour in &mut component.flavours {
            let observed: Vec<f64> = kb
                .service_profiles
                .iter()
                .filter(|((c, f, _), _)| *c == component.name && *f == flavour.name)
                .map(|(_, profile)| profile.avg_w)
                .collect();
            if !observed.is_empty() {
                flavour.energy_w = observed.iter().sum::<f64>() / observed.len() as f64;
            }
        }
    }
    revised
}

/// Mark nodes that disconnected during the round as unavailable for the next
/// placement. Derived fresh from the original spec each round: a node is only
/// excluded while the logs keep reporting it down.
pub fn revise_infrastructure(infra: &InfrastructureSpec, facts: &FactBase) -> InfrastructureSpec {
    let down: BTreeSet<&str> = facts
        .disconnections
        .iter()
        .map(|(n, _)| n.as_str())
        .collect();
    let mut revised = infra.clone();
    for node in &mut revised.nodes {
        if down.contains(node.name.as_str()) {
            node.available = false;
        }
    }
    revised
}

/// Run every mode of the campaign, writing artifacts under `out_dir`:
///
/// ```text
/// out_dir/metrics.csv
/// out_dir/<mode>/round-N/{deployment.txt, simulation.log,
///                         failure.constraints, energy.constraints,
///                         constraints.next}
/// out_dir/<mode>/kb.json          (energy-aware modes)
/// out_dir/<mode>/notes.txt        (when noteworthy events occurred)
/// out_dir/charts/<metric>.svg     (when `charts` is set)
/// ```
pub fn run_campaign(
    spec: &CampaignSpec,
    out_dir: &Path,
    charts: bool,
) -> Result<CampaignReport, CampaignError> {
    for scenario in &spec.scenarios {
        scenario
            .validate(&spec.app, &spec.infra, spec.ticks_per_round)
            .map_err(|e| config_err(e.to_string()))?;
    }
    let library: BTreeMap<&str, &Scenario> = spec
        .scenarios
        .iter()
        .map(|s| (s.name.as_str(), s))
        .collect();
    let round_hours = spec.ticks_per_round as f64 * spec.tick_minutes / 60.0;
    let energy_cfg = EnergyConfig {
        thresholds: spec.thresholds,
        round_hours,
        ..EnergyConfig::default()
    };

    fs::create_dir_all(out_dir)?;
    let mut report = CampaignReport::default();

    for &mode in &spec.modes {
        let mode_dir = out_dir.join(mode.as_str());
        fs::create_dir_all(&mode_dir)?;
        let mut kb = KnowledgeBase::default();
        let mut previous: Option<Deployment> = None;
        let mut constraints: Vec<SoftConstraint> = Vec::new();
        let mut solve_app = spec.app.clone();
        let mut solve_infra = spec.infra.clone();
        let mut notes: Vec<String> = Vec::new();

        for round in 0..spec.rounds {
            // 1. Place.
            let placement = if mode.uses_solver() {
                let mut problem = PlacementProblem::new(&solve_app, &solve_infra)
                    .with_enforced(constraints.clone());
                problem.time_limit = spec.time_limit;
                problem.round_hours = round_hours;
                if let Some(prev) = previous.as_ref() {
                    problem = problem.with_previous(prev);
                }
                let result = solve_with_relaxation(&problem, spec.max_drop_k);
                if !result.dropped.is_empty() {
                    notes.push(format!(
                        "round {round}: relaxed {} constraint(s): {}",
                        result.dropped.len(),
                        result
                            .dropped
                            .iter()
                            .map(|c| c.identity())
                            .collect::<Vec<_>>()
                            .join(", ")
                    ));
                }
                match result.outcome {
                    SolveOutcome::Optimal { deployment, .. } => deployment,
                    SolveOutcome::TimedOut {
                        best_so_far: Some((deployment, _)),
                    } => {
                        notes.push(format!(
                            "round {round}: solver hit the time limit; using its best incumbent"
                        ));
                        deployment
                    }
                    SolveOutcome::TimedOut { best_so_far: None } => {
                        notes.push(format!(
                            "round {round}: solver hit the time limit with no deployment; mode halted"
                        ));
                        break;
                    }
                    SolveOutcome::Unsatisfiable => {
                        notes.push(format!(
                            "round {round}: no satisfactory deployment exists even after relaxing all soft constraints; mode halted"
                        ));
                        break;
                    }
                }
            } else {
                best_fit(&spec.app, &spec.infra, spec.seed)
            };

            // 2. Simulate against the *original* specs.
            let mut active: Vec<Scenario> = Vec::new();
            for name in spec.application_policy[round as usize]
                .iter()
                .chain(&spec.infrastructure_policy[round as usize])
            {
                let scenario = library.get(name.as_str()).ok_or_else(|| {
                    config_err(format!("policy references unknown scenario {name:?}"))
                })?;
                active.push((*scenario).clone());
            }
            let trace = run_round(
                &placement,
                &spec.app,
                &spec.infra,
                &active,
                spec.ticks_per_round,
                spec.tick_minutes,
                spec.seed,
            )?;

            // 3. Record metrics.
            let changes = match &previous {
                None => placement.len(),
                Some(prev) => placement.changes_from(prev),
            };
            report.rows.push(MetricsRow {
                round,
                mode,
                downtime_pct: trace.metrics.downtime_pct,
                app_quality_pct: trace.metrics.app_quality_pct,
                energy_kwh: trace.metrics.energy_kwh,
                co2_g: trace.metrics.co2_g,
                changes,
            });

            // 4. Write the round's artifacts.
            let round_dir = mode_dir.join(format!("round-{round}"));
            fs::create_dir_all(&round_dir)?;
            fs::write(
                round_dir.join("deployment.txt"),
                emit_deployment(&placement),
            )?;
            let log_text = trace.emit_log();
            fs::write(round_dir.join("simulation.log"), &log_text)?;

            // 5. Close the loop through the log text.
            let parsed = parse_simulation_log(&log_text)?;
            let (observed_placement, observations) =
                observations_from_log(&parsed, spec.tick_minutes, &spec.infra);
            let failure_cs = if mode.uses_failure() {
                let cs = suggest_constraints(&parsed.facts);
                fs::write(round_dir.join("failure.constraints"), emit_constraints(&cs))?;
                cs
            } else {
                Vec::new()
            };
            let energy_cs = if mode.uses_energy() {
                let cs = enhance_round(
                    &mut kb,
                    &spec.app,
                    &spec.infra,
                    &observed_placement,
                    &observations,
                    &energy_cfg,
                );
                fs::write(round_dir.join("energy.constraints"), emit_constraints(&cs))?;
                cs
            } else {
                Vec::new()
            };
            if mode.uses_solver() {
                let outcome = harmonize(&failure_cs, &energy_cs, spec.priority);
                constraints = outcome.kept;
                fs::write(
                    round_dir.join("constraints.next"),
                    emit_constraints(&constraints),
                )?;
                solve_infra = revise_infrastructure(&spec.infra, &parsed.facts);
                if mode.uses_energy() {
                    solve_app = revise_application(&spec.app, &kb);
                }
            }
            previous = Some(placement);
        }

        if mode.uses_energy() {
            kb.save(&mode_dir.join("kb.json"))?;
        }
        if !notes.is_empty() {
            fs::write(
                mode_dir.join("notes.txt"),
                format!("{}\n", notes.join("\n")),
            )?;
            report
                .notes
                .extend(notes.into_iter().map(|n| format!("{mode}: {n}")));
        }
    }

    fs::write(out_dir.join("metrics.csv"), metrics_csv(&report.rows))?;
    if charts {
        write_charts(&report.rows, &out_dir.join("charts"))?;
    }
    Ok(report)
}

/// Extracts one plottable value from a metrics row.
type MetricGetter = fn(&MetricsRow) -> f64;

/// One SVG line chart per metric, plotting every mode over the rounds.
fn write_charts(rows: &[MetricsRow], dir: &Path) -> Result<(), CampaignError> {
    fs::create_dir_all(dir)?;
    let metrics: [(&str, MetricGetter); 5] = [
        ("downtime_pct", |r| r.downtime_pct),
        ("app_quality_pct", |r| r.app_quality_pct),
        ("energy_kwh", |r| r.energy_kwh),
        ("co2_g", |r| r.co2_g),
        ("changes", |r| r.changes as f64),
    ];
    for (name, value) in metrics {
        let mut series: BTreeMap<&str, Vec<(u32, f64)>> = BTreeMap::new();
        for row in rows {
            series
                .entry(row.mode.as_str())
                .or_default()
                .push((row.round, value(row)));
        }
        for points in series.values_mut() {
            points.sort_by_key(|(round, _)| *round);
        }
        fs::write(dir.join(format!("{name}.svg")), chart_svg(name, &series))?;
    }
    Ok(())
}

fn chart_svg(title: &str, series: &BTreeMap<&str, Vec<(u32, f64)>>) -> String {
    const W: f64 = 760.0;
    const H: f64 = 420.0;
    const L: f64 = 70.0;
    const R: f64 = 200.0;
    const T: f64 = 46.0;
    const B: f64 = 46.0;
    const PALETTE: [&str; 5] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"];

    let max_round = series
        .values()
        .flatten()
        .map(|(r, _)| *r)
        .max()
        .unwrap_or(0);
    let max_value = series
        .values()
        .flatten()
        .map(|(_, v)| *v)
        .fold(0.0_f64, f64::max);
    let x_span = max_round.max(1) as f64;
    let y_span = if max_value > 0.0 {
        max_value * 1.05
    } else {
        1.0
    };
    let x = |round: u32| L + (round as f64 / x_span) * (W - L - R);
    let y = |v: f64| H - B - (v / y_span) * (H - T - B);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {W} {H}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{L}\" y=\"24\" font-size=\"16\" font-weight=\"bold\">{title}</text>\n"
    ));
    // Horizontal grid with value labels.
    for i in 0..=4 {
        let v = y_span * i as f64 / 4.0;
        let gy = y(v);
        svg.push_str(&format!(
            "<line x1=\"{L}\" y1=\"{gy:.1}\" x2=\"{:.1}\" y2=\"{gy:.1}\" stroke=\"#ddd\"/>\n",
            W - R
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" fill=\"#555\">{v:.2}</text>\n",
            L - 6.0,
            gy + 4.0
        ));
    }
    // Round ticks.
    for round in 0..=max_round {
        let gx = x(round);
        svg.push_str(&format!(
            "<text x=\"{gx:.1}\" y=\"{:.1}\" text-anchor=\"middle\" fill=\"#555\">{round}</text>\n",
            H - B + 18.0
        ));
    }
    svg.push_str(&format!(
        "<line x1=\"{L}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#333\"/>\n",
        H - B,
        W - R,
        H - B
    ));
    svg.push_str(&format!(
        "<line x1=\"{L}\" y1=\"{T}\" x2=\"{L}\" y2=\"{:.1}\" stroke=\"#333\"/>\n",
        H - B
    ));
    for (i, (mode, points)) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = points
            .iter()
            .map(|(r, v)| format!("{:.1},{:.1}", x(*r), y(*v)))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{colour}\" stroke-width=\"2\"/>\n",
            path.join(" ")
        ));
        for (r, v) in points {
            svg.push_str(&format!(
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{colour}\"/>\n",
                x(*r),
                y(*v)
            ));
        }
        let ly = T + 18.0 * i as f64;
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{colour}\" stroke-width=\"2\"/>\n",
            W - R + 14.0,
            W - R + 40.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\">{mode}</text>\n",
            W - R + 46.0,
            ly + 4.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Shape;
    use crate::testutil::{app, component, flavour, mesh, node, uses};

    fn mini_app() -> ApplicationSpec {
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
        app("web", vec![fe, lb])
    }

    fn mini_infra() -> InfrastructureSpec {
        mesh(vec![
            node("public1", &[("cpu", 2000.0), ("ram", 2560.0)], 475.0),
            node("public2", &[("cpu", 2000.0), ("ram", 2560.0)], 475.0),
        ])
    }

    fn sag_scenarios() -> Vec<Scenario> {
        vec![
            Scenario {
                name: "cpu-sag".into(),
                target: Target::NodeResource {
                    node: "public1".into(),
                    resource: "cpu".into(),
                },
                shape: Shape::Constant {
                    delta: -600.0,
                    from: 31,
                    to: 98,
                },
            },
            Scenario {
                name: "ram-sag".into(),
                target: Target::NodeResource {
                    node: "public1".into(),
                    resource: "ram".into(),
                },
                shape: Shape::Constant {
                    delta: -1200.0,
                    from: 31,
                    to: 98,
                },
            },
        ]
    }

    fn mini_spec(modes: Vec<Mode>, rounds: u32) -> CampaignSpec {
        CampaignSpec {
            app: mini_app(),
            infra: mini_infra(),
            rounds,
            ticks_per_round: 120,
            tick_minutes: 1.0,
            seed: 7,
            modes,
            priority: Priority::Failure,
            time_limit: Duration::from_secs(60),
            max_drop_k: None,
            thresholds: Thresholds::default(),
            scenarios: sag_scenarios(),
            application_policy: vec![Vec::new(); rounds as usize],
            infrastructure_policy: vec![
                vec!["cpu-sag".to_string(), "ram-sag".to_string()];
                rounds as usize
            ],
        }
    }

    #[test]
    fn policy_expressions_expand_term_by_term() {
        let policy = parse_policy("[a, b] * 2 + [] * 1 + [c] * 3", 6).unwrap();
        assert_eq!(policy.len(), 6);
        assert_eq!(policy[0], vec!["a".to_string(), "b".to_string()]);
        assert_eq!(policy[1], policy[0]);
        assert!(policy[2].is_empty());
        assert_eq!(policy[3], vec!["c".to_string()]);
        assert_eq!(policy[5], policy[3]);

        assert!(parse_policy("[a] * 2", 3).is_err(), "count mismatch");
        assert!(parse_policy("[a] + [b]", 2).is_err(), "missing multiplier");
        assert!(parse_policy("a * 2", 2).is_err(), "missing brackets");
        assert!(parse_policy("[a] * x", 1).is_err(), "bad count");
    }

    #[test]
    fn solver_only_mode_reports_constant_metrics() {
        let spec = mini_spec(vec![Mode::SolverOnly], 3);
        let dir = tempfile::tempdir().unwrap();
        let report = run_campaign(&spec, dir.path(), false).unwrap();
        assert_eq!(report.rows.len(), 3);
        // Both components land on the lexicographically least node and stay.
        assert_eq!(report.rows[0].changes, 2);
        assert_eq!(report.rows[1].changes, 0);
        assert_eq!(report.rows[2].changes, 0);
        for row in &report.rows {
            assert!((row.downtime_pct - 68.0 / 120.0 * 100.0).abs() < 1e-9);
            assert_eq!(row.app_quality_pct, 100.0);
        }
        let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert!(
            csv.starts_with("round,mode,downtime_pct,app_quality_pct,energy_kwh,co2_g,changes\n")
        );
        assert_eq!(csv.lines().count(), 4);
        assert!(dir
            .path()
            .join("solver-only/round-2/deployment.txt")
            .exists());
        assert!(dir
            .path()
            .join("solver-only/round-2/simulation.log")
            .exists());
        // No enhancers ran, so the carried constraint set is empty.
        let next =
            fs::read_to_string(dir.path().join("solver-only/round-0/constraints.next")).unwrap();
        assert_eq!(next, "");
    }

    #[test]
    fn failure_feedback_splits_the_colocated_pair() {
        let spec = mini_spec(vec![Mode::SolverFailure], 3);
        let dir = tempfile::tempdir().unwrap();
        let report = run_campaign(&spec, dir.path(), false).unwrap();
        assert!(report.rows[0].downtime_pct > 0.0);
        assert_eq!(report.rows[1].downtime_pct, 0.0);
        assert_eq!(report.rows[2].downtime_pct, 0.0);
        // Round 0 races on both starved resources produce an anti-affinity.
        let fed = fs::read_to_string(
            dir.path()
                .join("solver+failure/round-0/failure.constraints"),
        )
        .unwrap();
        assert!(fed.contains("antiaffinity(d(frontend,large),d(load_balancer,large))"));
        // One component moved in round 1, then the split placement holds.
        assert_eq!(report.rows[1].changes, 1);
        assert_eq!(report.rows[2].changes, 0);
        let d1 =
            fs::read_to_string(dir.path().join("solver+failure/round-1/deployment.txt")).unwrap();
        // The lexicographically least split keeps frontend in place.
        assert!(d1.contains("frontend large public1"));
        assert!(d1.contains("load_balancer large public2"));
    }

    #[test]
    fn energy_feedback_steers_off_the_dirty_node() {
        // One service, one dirty and one clean node; the emission threshold
        // sits between the two projected impacts.
        let application = app(
            "solo",
            vec![component(
                "svc",
                true,
                vec![flavour("large", 3, &[("cpu", 100.0)], 20.0)],
            )],
        );
        let infrastructure = mesh(vec![
            node("dirty", &[("cpu", 1000.0)], 475.0),
            node("green", &[("cpu", 1000.0)], 100.0),
        ]);
        let spec = CampaignSpec {
            app: application,
            infra: infrastructure,
            rounds: 3,
            ticks_per_round: 120,
            tick_minutes: 1.0,
            seed: 7,
            modes: vec![Mode::SolverEnergy],
            priority: Priority::Failure,
            time_limit: Duration::from_secs(60),
            max_drop_k: None,
            // svc on dirty: 20 W × 2 h × 475 g/kWh = 19 g; on green: 4 g.
            thresholds: Thresholds {
                service_gco2: 5.0,
                connection_gco2: 5.0,
            },
            scenarios: Vec::new(),
            application_policy: vec![Vec::new(); 3],
            infrastructure_policy: vec![Vec::new(); 3],
        };
        let dir = tempfile::tempdir().unwrap();
        let report = run_campaign(&spec, dir.path(), false).unwrap();
        // Round 0 lands on the lexicographically least node (dirty), the
        // enhancer flags it, round 1 relocates, and the move sticks.
        assert!((report.rows[0].co2_g - 19.0).abs() < 1e-9);
        assert!((report.rows[1].co2_g - 4.0).abs() < 1e-9);
        assert!((report.rows[2].co2_g - 4.0).abs() < 1e-9);
        assert_eq!(report.rows[1].changes, 1);
        assert_eq!(report.rows[2].changes, 0);
        let cs = fs::read_to_string(dir.path().join("solver+energy/round-0/energy.constraints"))
            .unwrap();
        assert!(cs.contains("avoid(d(svc,large),dirty,1.0)."));
        assert!(dir.path().join("solver+energy/kb.json").exists());
    }

    #[test]
    fn bestfit_mode_repeats_its_placement_every_round() {
        let spec = mini_spec(vec![Mode::BestFit], 3);
        let dir = tempfile::tempdir().unwrap();
        let report = run_campaign(&spec, dir.path(), false).unwrap();
        assert_eq!(report.rows[0].changes, 2);
        assert_eq!(report.rows[1].changes, 0);
        assert_eq!(report.rows[2].changes, 0);
        let d0 = fs::read_to_string(dir.path().join("bestfit/round-0/deployment.txt")).unwrap();
        let d2 = fs::read_to_string(dir.path().join("bestfit/round-2/deployment.txt")).unwrap();
        assert_eq!(d0, d2);
    }

    #[test]
    fn campaigns_are_byte_deterministic() {
        let spec = mini_spec(vec![Mode::SolverFailure, Mode::BestFit], 2);
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run_campaign(&spec, a.path(), true).unwrap();
        run_campaign(&spec, b.path(), true).unwrap();
        for rel in [
            "metrics.csv",
            "solver+failure/round-0/simulation.log",
            "solver+failure/round-1/deployment.txt",
            "solver+failure/round-0/constraints.next",
            "charts/co2_g.svg",
        ] {
            let left = fs::read_to_string(a.path().join(rel)).unwrap();
            let right = fs::read_to_string(b.path().join(rel)).unwrap();
            assert_eq!(left, right, "{rel} differs between identical runs");
        }
    }

    #[test]
    fn metrics_rows_sort_by_mode_name_then_round() {
        let row = |mode, round| MetricsRow {
            round,
            mode,
            downtime_pct: 0.0,
            app_quality_pct: 100.0,
            energy_kwh: 0.5,
            co2_g: 10.0,
            changes: 0,
        };
        let csv = metrics_csv(&[
            row(Mode::SolverOnly, 1),
            row(Mode::BestFit, 0),
            row(Mode::SolverOnly, 0),
            row(Mode::Full, 0),
        ]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("0,bestfit,"));
        assert!(lines[2].starts_with("0,full-freeda,"));
        assert!(lines[3].starts_with("0,solver-only,"));
        assert!(lines[4].starts_with("1,solver-only,"));
        assert!(lines[1].contains("0.000000,100.000000,0.500000,10.000000,0"));
    }

    #[test]
    fn config_files_load_resolve_and_validate() {
        let dir = tempfile::tempdir().unwrap();
        let app_yaml = crate::io::emit_application(&mini_app());
        let infra_yaml = crate::io::emit_infrastructure(&mini_infra());
        fs::write(dir.path().join("application.yaml"), &app_yaml).unwrap();
        fs::write(dir.path().join("infrastructure.yaml"), &infra_yaml).unwrap();
        let config = r#"
campaign:
  application: application.yaml
  infrastructure: infrastructure.yaml
  rounds: 2
  ticks_per_round: 120
  tick_minutes: 1.0
  seed: 7
  modes: [bestfit, solver-only, solver+failure, solver+energy, full-freeda]
  priority: failure
  time_limit_s: 60
  scenarios:
    - name: cpu-sag
      target: { node: public1, resource: cpu }
      shape: { kind: constant, delta: -600.0, from: 31, to: 98 }
  infrastructure_policy: "[cpu-sag] * 2"
"#;
        let path = dir.path().join("campaign.yaml");
        fs::write(&path, config).unwrap();
        let spec = load_campaign(&path).unwrap();
        assert_eq!(spec.rounds, 2);
        assert_eq!(spec.modes.len(), 5);
        assert_eq!(spec.modes[4], Mode::Full);
        assert_eq!(spec.priority, Priority::Failure);
        assert_eq!(
            spec.infrastructure_policy,
            vec![vec!["cpu-sag".to_string()]; 2]
        );
        assert_eq!(spec.application_policy, vec![Vec::<String>::new(); 2]);
        assert_eq!(spec.time_limit, Duration::from_secs(60));

        // An infrastructure scenario cannot drive the application policy.
        let bad = config.replace(
            "infrastructure_policy: \"[cpu-sag] * 2\"",
            "application_policy: \"[cpu-sag] * 2\"",
        );
        fs::write(&path, bad).unwrap();
        let err = load_campaign(&path).unwrap_err().to_string();
        assert!(
            err.contains("cannot appear in the application policy"),
            "{err}"
        );

        // Policy length must match the round count.
        let bad = config.replace("\"[cpu-sag] * 2\"", "\"[cpu-sag] * 3\"");
        fs::write(&path, bad).unwrap();
        assert!(load_campaign(&path).is_err());

        // Unknown scenario names are rejected.
        let bad = config.replace("\"[cpu-sag] * 2\"", "\"[mystery] * 2\"");
        fs::write(&path, bad).unwrap();
        assert!(load_campaign(&path).is_err());

        // Duplicate modes are rejected.
        let bad = config.replace("modes: [bestfit, solver-only", "modes: [bestfit, bestfit");
        fs::write(&path, bad).unwrap();
        assert!(load_campaign(&path).is_err());
    }
}
