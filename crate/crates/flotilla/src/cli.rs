//! The `flotilla` command line: one subcommand per pipeline stage, plus the
//! campaign driver that chains them.
//!
//! Exit codes are a stable contract:
//! - 0 — success;
//! - 1 — input error (unreadable/invalid files or flags);
//! - 2 — no satisfactory deployment exists;
//! - 3 — the solver hit its time limit.
//!
//! Environment variables are never consulted; every input is an explicit
//! file or flag, so runs are reproducible from the command line alone.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::energy::{enhance_round, EnergyConfig, KnowledgeBase, Thresholds};
use crate::failure::suggest_constraints;
use crate::harmonizer::{harmonize, Priority};
use crate::io::{
    emit_application, emit_constraints, emit_deployment, emit_infrastructure, parse_application,
    parse_constraints, parse_deployment, parse_infrastructure, parse_simulation_log,
};
use crate::model::{ApplicationSpec, Deployment, InfrastructureSpec, Provenance, SoftConstraint};
use crate::sim::campaign::{
    load_campaign, observations_from_log, revise_application, revise_infrastructure, run_campaign,
    MetricsRow,
};
use crate::sim::{run_round, Scenario};
use crate::solver::{
    brute_force_oracle, solve_with_relaxation, Objective, PlacementProblem, RelaxationResult,
    SolveOutcome, DEFAULT_ROUND_HOURS,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_UNSAT: i32 = 2;
pub const EXIT_TIMEOUT: i32 = 3;

#[derive(Parser)]
#[command(
    name = "flotilla",
    version,
    about = "Plan flavoured microservice deployments and drive them through closed-loop simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute an optimal deployment (exact branch-and-bound with relaxation).
    Solve(SolveArgs),
    /// Exhaustively enumerate the optimum as an independent cross-check.
    Oracle(OracleArgs),
    /// Distill a simulation log into constraints, knowledge, and spec updates.
    Enhance(EnhanceArgs),
    /// Reconcile failure and energy constraint files under a priority.
    Harmonize(HarmonizeArgs),
    /// Simulate one round of a deployment under scenario schedules.
    Simulate(SimulateArgs),
    /// Run a multi-round comparison campaign from a config file.
    Campaign(CampaignArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    /// Maximize the summed importance of assigned flavours.
    First,
    /// Keep as many existing (flavour, node) assignments as possible.
    Redeploy,
}

#[derive(Args)]
struct SolveArgs {
    /// Application spec (YAML).
    application: PathBuf,
    /// Infrastructure spec (YAML).
    infrastructure: PathBuf,
    /// Soft constraints to enforce (constraint text file).
    #[arg(long)]
    constraints: Option<PathBuf>,
    /// Previous deployment file; defaults the objective to `redeploy`.
    #[arg(long)]
    previous: Option<PathBuf>,
    /// Solve objective (defaults to `first`, or `redeploy` when --previous is given).
    #[arg(long, value_enum)]
    objective: Option<ObjectiveArg>,
    /// Wall-clock solve limit in seconds.
    #[arg(long, default_value_t = 300)]
    time_limit: u64,
    /// Cap on how many soft constraints relaxation may drop.
    #[arg(long)]
    max_drop_k: Option<usize>,
    /// Planning horizon in hours for the energy and carbon budgets.
    #[arg(long, default_value_t = DEFAULT_ROUND_HOURS)]
    round_hours: f64,
    /// Output directory for deployment.txt and model.txt.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    /// Application spec (YAML).
    application: PathBuf,
    /// Infrastructure spec (YAML).
    infrastructure: PathBuf,
    /// Soft constraints to enforce (constraint text file).
    #[arg(long)]
    constraints: Option<PathBuf>,
    /// Previous deployment file; defaults the objective to `redeploy`.
    #[arg(long)]
    previous: Option<PathBuf>,
    /// Solve objective (defaults to `first`, or `redeploy` when --previous is given).
    #[arg(long, value_enum)]
    objective: Option<ObjectiveArg>,
    /// Planning horizon in hours for the energy and carbon budgets.
    #[arg(long, default_value_t = DEFAULT_ROUND_HOURS)]
    round_hours: f64,
    /// Output directory for deployment.txt.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct EnhanceArgs {
    /// Simulation log to analyze.
    log: PathBuf,
    /// Knowledge-base JSON file, read if present and updated in place.
    kb: PathBuf,
    /// Application spec (YAML).
    #[arg(long)]
    application: PathBuf,
    /// Infrastructure spec (YAML).
    #[arg(long)]
    infrastructure: PathBuf,
    /// Wall-clock minutes represented by one log tick.
    #[arg(long, default_value_t = 1.0)]
    tick_minutes: f64,
    /// Per-round emission threshold for one service, in gCO2.
    #[arg(long, default_value_t = 25.0)]
    service_gco2: f64,
    /// Per-round emission threshold for one connection, in gCO2.
    #[arg(long, default_value_t = 25.0)]
    connection_gco2: f64,
    /// Output directory for constraint files and revised spec copies.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct HarmonizeArgs {
    /// Failure-enhancer constraint file.
    failure: PathBuf,
    /// Energy-enhancer constraint file.
    energy: PathBuf,
    /// Which enhancer wins a conflict: failure, energy, or none.
    #[arg(long, default_value = "failure", value_parser = parse_priority)]
    priority: Priority,
    /// Output directory for constraints.next.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Application spec (YAML).
    application: PathBuf,
    /// Infrastructure spec (YAML).
    infrastructure: PathBuf,
    /// Deployment file to simulate.
    deployment: PathBuf,
    /// YAML list of scenarios active this round.
    #[arg(long)]
    scenarios: Option<PathBuf>,
    /// Ticks in the round.
    #[arg(long, default_value_t = crate::sim::DEFAULT_TICKS_PER_ROUND)]
    ticks: u64,
    /// Wall-clock minutes represented by one tick.
    #[arg(long, default_value_t = crate::sim::DEFAULT_TICK_MINUTES)]
    tick_minutes: f64,
    /// Seed (reserved for strategies with tie-breaking; rounds are deterministic).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for simulation.log.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct CampaignArgs {
    /// Campaign config (YAML).
    config: PathBuf,
    /// Output directory for metrics, per-round artifacts, and charts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also emit SVG line charts per metric.
    #[arg(long)]
    charts: bool,
}

fn parse_priority(s: &str) -> Result<Priority, String> {
    s.parse()
}

/// Parse the command line and execute it, returning the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INPUT,
            };
            let _ = err.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Solve(args) => cmd_solve(&args),
        Command::Oracle(args) => cmd_oracle(&args),
        Command::Enhance(args) => cmd_enhance(&args),
        Command::Harmonize(args) => cmd_harmonize(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Campaign(args) => cmd_campaign(&args),
    };
    match result {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            EXIT_INPUT
        }
    }
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn write(path: &Path, content: &str) -> Result<(), String> {
    fs::write(path, content).map_err(|e| format!("{}: {e}", path.display()))
}

fn ensure_dir(path: &Path) -> Result<(), String> {
    fs::create_dir_all(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_specs(
    app_path: &Path,
    infra_path: &Path,
) -> Result<(ApplicationSpec, InfrastructureSpec), String> {
    let app =
        parse_application(&read(app_path)?).map_err(|e| format!("{}: {e}", app_path.display()))?;
    let infra = parse_infrastructure(&read(infra_path)?)
        .map_err(|e| format!("{}: {e}", infra_path.display()))?;
    Ok((app, infra))
}

fn load_constraints(path: &Option<PathBuf>) -> Result<Vec<SoftConstraint>, String> {
    match path {
        None => Ok(Vec::new()),
        // For solving, the provenance tag is irrelevant (only the kind and
        // weight matter); a mixed harmonized file parses fine this way.
        Some(p) => parse_constraints(&read(p)?, Provenance::Failure)
            .map_err(|e| format!("{}: {e}", p.display())),
    }
}

fn load_previous(path: &Option<PathBuf>) -> Result<Option<Deployment>, String> {
    match path {
        None => Ok(None),
        Some(p) => parse_deployment(&read(p)?)
            .map(Some)
            .map_err(|e| format!("{}: {e}", p.display())),
    }
}

fn effective_objective(arg: Option<ObjectiveArg>, has_previous: bool) -> Objective {
    match arg {
        Some(ObjectiveArg::First) => Objective::MaximizeImportance,
        Some(ObjectiveArg::Redeploy) => Objective::MinimizeChanges,
        None if has_previous => Objective::MinimizeChanges,
        None => Objective::MaximizeImportance,
    }
}

/// Render the solved constraint model — the solver's explanation artifact:
/// everything that bounded the search, plus what the search concluded.
fn model_dump(problem: &PlacementProblem, result: &RelaxationResult) -> String {
    let mut out = String::new();
    let app = problem.app;
    let infra = problem.infra;
    out.push_str(&format!("application {}\n", app.name));
    out.push_str(&format!(
        "budgets monetary {} energy_kwh {} carbon_g {} over {} h\n",
        app.budgets.monetary, app.budgets.energy_kwh, app.budgets.carbon_g, problem.round_hours
    ));
    for c in &app.components {
        out.push_str(&format!(
            "component {} {}\n",
            c.name,
            if c.mandatory { "mandatory" } else { "optional" }
        ));
        for f in &c.flavours {
            let demands: Vec<String> = f
                .resources
                .iter()
                .map(|(r, v)| format!("{r}={v}"))
                .collect();
            out.push_str(&format!(
                "  flavour {} importance {} energy_w {} demands [{}]\n",
                f.name,
                f.importance,
                f.energy_w,
                demands.join(", ")
            ));
            for (attr, req) in &f.attributes {
                let accepted: Vec<String> = req.0.iter().map(|v| v.to_string()).collect();
                out.push_str(&format!(
                    "    requires {attr} in [{}]\n",
                    accepted.join(", ")
                ));
            }
            for dep in &f.uses {
                out.push_str(&format!(
                    "    uses {} (min importance {}{}{})\n",
                    dep.component,
                    dep.min_importance,
                    dep.max_latency_ms
                        .map(|v| format!(", max latency {v} ms"))
                        .unwrap_or_default(),
                    dep.min_availability
                        .map(|v| format!(", min availability {v}"))
                        .unwrap_or_default(),
                ));
            }
        }
    }
    for n in &infra.nodes {
        let caps: Vec<String> = n
            .capacities
            .iter()
            .map(|(r, v)| format!("{r}={v}"))
            .collect();
        let attrs: Vec<String> = n
            .attributes
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        out.push_str(&format!(
            "node {} {} caps [{}] attrs [{}] intensity {}\n",
            n.name,
            if n.available {
                "available"
            } else {
                "unavailable"
            },
            caps.join(", "),
            attrs.join(", "),
            n.carbon_intensity
        ));
    }
    for l in &infra.links {
        out.push_str(&format!(
            "link {} -- {} latency {} ms availability {}\n",
            l.a, l.b, l.latency_ms, l.availability
        ));
    }
    out.push_str(&format!(
        "objective {}\n",
        match problem.objective {
            Objective::MaximizeImportance => "maximize importance".to_string(),
            Objective::MinimizeChanges => format!(
                "minimize changes from {} previous assignments",
                problem.previous.map(|d| d.len()).unwrap_or(0)
            ),
        }
    ));
    out.push_str(&format!(
        "enforced soft constraints {}\n",
        result.enforced.len()
    ));
    for c in &result.enforced {
        out.push_str(&format!("  {}\n", c.render()));
    }
    if !result.dropped.is_empty() {
        out.push_str(&format!("dropped by relaxation {}\n", result.dropped.len()));
        for c in &result.dropped {
            out.push_str(&format!("  {}\n", c.render()));
        }
    }
    out.push_str(&match &result.outcome {
        SolveOutcome::Optimal { objective, .. } => format!(
            "outcome optimal kept {} importance {}\n",
            objective.kept, objective.importance
        ),
        SolveOutcome::Unsatisfiable => "outcome unsatisfiable\n".to_string(),
        SolveOutcome::TimedOut {
            best_so_far: Some((_, objective)),
        } => format!(
            "outcome timeout with incumbent kept {} importance {}\n",
            objective.kept, objective.importance
        ),
        SolveOutcome::TimedOut { best_so_far: None } => {
            "outcome timeout without incumbent\n".to_string()
        }
    });
    out
}

fn cmd_solve(args: &SolveArgs) -> Result<i32, String> {
    let (app, infra) = load_specs(&args.application, &args.infrastructure)?;
    let constraints = load_constraints(&args.constraints)?;
    let previous = load_previous(&args.previous)?;

    let mut problem = PlacementProblem::new(&app, &infra).with_enforced(constraints);
    if let Some(prev) = previous.as_ref() {
        problem = problem.with_previous(prev);
    }
    problem = problem.with_objective(effective_objective(args.objective, previous.is_some()));
    problem.time_limit = Duration::from_secs(args.time_limit);
    problem.round_hours = args.round_hours;

    let result = solve_with_relaxation(&problem, args.max_drop_k);
    ensure_dir(&args.out)?;
    write(&args.out.join("model.txt"), &model_dump(&problem, &result))?;
    if !result.dropped.is_empty() {
        println!(
            "relaxed {} soft constraint(s): {}",
            result.dropped.len(),
            result
                .dropped
                .iter()
                .map(|c| c.identity())
                .collect::<Vec<_>>()
                .join(", ")
        );
    }
    match &result.outcome {
        SolveOutcome::Optimal {
            deployment,
            objective,
        } => {
            write(
                &args.out.join("deployment.txt"),
                &emit_deployment(deployment),
            )?;
            println!(
                "optimal: {} components deployed, importance {}",
                deployment.len(),
                objective.importance
            );
            if let Some(prev) = previous.as_ref() {
                println!(
                    "kept {} assignments, {} changes",
                    objective.kept,
                    deployment.changes_from(prev)
                );
            }
            Ok(EXIT_OK)
        }
        SolveOutcome::Unsatisfiable => {
            println!("no satisfactory deployment (even after relaxation)");
            Ok(EXIT_UNSAT)
        }
        SolveOutcome::TimedOut { best_so_far } => {
            match best_so_far {
                Some((deployment, _)) => {
                    write(
                        &args.out.join("deployment.txt"),
                        &emit_deployment(deployment),
                    )?;
                    println!("time limit reached; wrote the best incumbent found");
                }
                None => println!("time limit reached with no incumbent"),
            }
            Ok(EXIT_TIMEOUT)
        }
    }
}

fn cmd_oracle(args: &OracleArgs) -> Result<i32, String> {
    let (app, infra) = load_specs(&args.application, &args.infrastructure)?;
    let constraints = load_constraints(&args.constraints)?;
    let previous = load_previous(&args.previous)?;

    let mut problem = PlacementProblem::new(&app, &infra).with_enforced(constraints);
    if let Some(prev) = previous.as_ref() {
        problem = problem.with_previous(prev);
    }
    problem = problem.with_objective(effective_objective(args.objective, previous.is_some()));
    problem.round_hours = args.round_hours;

    match brute_force_oracle(&problem).map_err(|e| e.to_string())? {
        SolveOutcome::Optimal {
            deployment,
            objective,
        } => {
            ensure_dir(&args.out)?;
            write(
                &args.out.join("deployment.txt"),
                &emit_deployment(&deployment),
            )?;
            println!(
                "oracle optimum: {} components deployed, kept {} importance {}",
                deployment.len(),
                objective.kept,
                objective.importance
            );
            Ok(EXIT_OK)
        }
        SolveOutcome::Unsatisfiable => {
            println!("oracle: no satisfactory deployment");
            Ok(EXIT_UNSAT)
        }
        SolveOutcome::TimedOut { .. } => unreachable!("the oracle has no time limit"),
    }
}

fn cmd_enhance(args: &EnhanceArgs) -> Result<i32, String> {
    let (app, infra) = load_specs(&args.application, &args.infrastructure)?;
    let parsed = parse_simulation_log(&read(&args.log)?)
        .map_err(|e| format!("{}: {e}", args.log.display()))?;
    let mut kb = if args.kb.exists() {
        KnowledgeBase::load(&args.kb).map_err(|e| format!("{}: {e}", args.kb.display()))?
    } else {
        KnowledgeBase::default()
    };

    let (placement, observations) = observations_from_log(&parsed, args.tick_minutes, &infra);
    let round_ticks = parsed
        .service_power
        .values()
        .map(|s| s.len())
        .max()
        .unwrap_or(0);
    let round_hours = if round_ticks > 0 {
        round_ticks as f64 * args.tick_minutes / 60.0
    } else {
        DEFAULT_ROUND_HOURS
    };
    let cfg = EnergyConfig {
        thresholds: Thresholds {
            service_gco2: args.service_gco2,
            connection_gco2: args.connection_gco2,
        },
        round_hours,
        ..EnergyConfig::default()
    };

    let failure_cs = suggest_constraints(&parsed.facts);
    let energy_cs = enhance_round(&mut kb, &app, &infra, &placement, &observations, &cfg);

    ensure_dir(&args.out)?;
    write(
        &args.out.join("failure.constraints"),
        &emit_constraints(&failure_cs),
    )?;
    write(
        &args.out.join("energy.constraints"),
        &emit_constraints(&energy_cs),
    )?;
    kb.save(&args.kb)
        .map_err(|e| format!("{}: {e}", args.kb.display()))?;
    write(
        &args.out.join("application.yaml"),
        &emit_application(&revise_application(&app, &kb)),
    )?;
    write(
        &args.out.join("infrastructure.yaml"),
        &emit_infrastructure(&revise_infrastructure(&infra, &parsed.facts)),
    )?;
    println!(
        "failure constraints: {}; energy constraints: {}; knowledge base: {}",
        failure_cs.len(),
        energy_cs.len(),
        args.kb.display()
    );
    Ok(EXIT_OK)
}

fn cmd_harmonize(args: &HarmonizeArgs) -> Result<i32, String> {
    let failure_cs = parse_constraints(&read(&args.failure)?, Provenance::Failure)
        .map_err(|e| format!("{}: {e}", args.failure.display()))?;
    let energy_cs = parse_constraints(&read(&args.energy)?, Provenance::Energy)
        .map_err(|e| format!("{}: {e}", args.energy.display()))?;
    let outcome = harmonize(&failure_cs, &energy_cs, args.priority);
    ensure_dir(&args.out)?;
    write(
        &args.out.join("constraints.next"),
        &emit_constraints(&outcome.kept),
    )?;
    println!(
        "kept {} constraint(s), dropped {}",
        outcome.kept.len(),
        outcome.dropped.len()
    );
    for dropped in &outcome.dropped {
        println!(
            "dropped {}: {}",
            dropped.constraint.identity(),
            dropped.reason
        );
    }
    Ok(EXIT_OK)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<i32, String> {
    let (app, infra) = load_specs(&args.application, &args.infrastructure)?;
    let deployment = parse_deployment(&read(&args.deployment)?)
        .map_err(|e| format!("{}: {e}", args.deployment.display()))?;
    let scenarios: Vec<Scenario> = match &args.scenarios {
        None => Vec::new(),
        Some(p) => serde_yaml::from_str(&read(p)?).map_err(|e| format!("{}: {e}", p.display()))?,
    };
    let trace = run_round(
        &deployment,
        &app,
        &infra,
        &scenarios,
        args.ticks,
        args.tick_minutes,
        args.seed,
    )
    .map_err(|e| e.to_string())?;
    ensure_dir(&args.out)?;
    write(&args.out.join("simulation.log"), &trace.emit_log())?;
    println!(
        "downtime {:.2}% quality {:.2}% energy {:.6} kWh co2 {:.6} g",
        trace.metrics.downtime_pct,
        trace.metrics.app_quality_pct,
        trace.metrics.energy_kwh,
        trace.metrics.co2_g
    );
    Ok(EXIT_OK)
}

fn cmd_campaign(args: &CampaignArgs) -> Result<i32, String> {
    let spec = load_campaign(&args.config).map_err(|e| e.to_string())?;
    let report = run_campaign(&spec, &args.out, args.charts).map_err(|e| e.to_string())?;

    // Summary table: one line per mode, aggregated over its completed rounds.
    let mut by_mode: Vec<(&str, Vec<&MetricsRow>)> = Vec::new();
    for row in &report.rows {
        match by_mode
            .iter_mut()
            .find(|(name, _)| *name == row.mode.as_str())
        {
            Some((_, rows)) => rows.push(row),
            None => by_mode.push((row.mode.as_str(), vec![row])),
        }
    }
    by_mode.sort_by_key(|(name, _)| *name);
    println!("mode            rounds  mean_downtime%  final_co2_g  total_changes");
    for (name, rows) in &by_mode {
        let mean_downtime = rows.iter().map(|r| r.downtime_pct).sum::<f64>() / rows.len() as f64;
        let final_co2 = rows
            .iter()
            .max_by_key(|r| r.round)
            .map(|r| r.co2_g)
            .unwrap_or(0.0);
        let total_changes: usize = rows.iter().map(|r| r.changes).sum();
        println!(
            "{name:<15} {:>6}  {mean_downtime:>14.2}  {final_co2:>11.3}  {total_changes:>13}",
            rows.len()
        );
    }
    for note in &report.notes {
        println!("note: {note}");
    }
    println!("metrics: {}", args.out.join("metrics.csv").display());
    Ok(EXIT_OK)
}
