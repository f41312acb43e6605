use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use netadapt::adapt::{run_scenario, PlannerKind, RunConfig};
use netadapt::expr::WeightExpr;
use netadapt::harness::experiment::{default_sweep_values, run_experiment, run_sweep, ExperimentSpec, SweepAxis};
use netadapt::harness::scenario_io::{load_scenario, metrics_csv, network_json, MetricsRow};
use netadapt::harness::topology::{gen_full_topology, gen_mnp_topology, mnp_node_count};
use netadapt::planner::GpConfig;
use netadapt::sim::Scenario;

#[derive(Parser)]
#[command(
    name = "netadapt",
    version,
    about = "SDN traffic-engineering simulator with a self-adaptive link-weight planner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct PlannerArgs {
    /// Generation budget (default: the scenario's suggestion, else 200)
    #[arg(long)]
    generations: Option<usize>,
    /// Population size
    #[arg(long)]
    population: Option<usize>,
    /// Congestion threshold, overriding the scenario's
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario with one planner; prints the event log and writes metrics
    Replay {
        #[arg(long)]
        scenario: PathBuf,
        /// genadapt | reroute | static-unit | static-invbw
        #[arg(long, default_value = "genadapt", value_parser = parse_planner)]
        planner: PlannerKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Metrics CSV (default: stdout after the event log)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Event log file (default: stdout)
        #[arg(long)]
        events: Option<PathBuf>,
        /// Per-tick stream CSV
        #[arg(long)]
        ticks: Option<PathBuf>,
        /// Log link weights and per-generation planner progress
        #[arg(long)]
        trace: bool,
        /// Use this weight expression instead of searching for one
        #[arg(long, value_parser = parse_expr)]
        expr: Option<WeightExpr>,
        /// Fill the planner-time column (wall clock, so not reproducible)
        #[arg(long)]
        timings: bool,
        #[command(flatten)]
        gp: PlannerArgs,
    },
    /// Run several planners over a range of seeds; writes metrics CSV and prints statistics
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        /// Repeat to compare several planners (default: genadapt and reroute)
        #[arg(long = "planner", value_parser = parse_planner)]
        planners: Vec<PlannerKind>,
        /// First seed; runs use seed..seed+runs
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 30)]
        runs: u64,
        /// Metrics CSV (default: stdout)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Statistics table file (default: stderr)
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long)]
        timings: bool,
        #[command(flatten)]
        gp: PlannerArgs,
    },
    /// Time the planner on complete graphs of growing size or load
    Sweep {
        #[arg(long, value_enum, default_value_t = Axis::Nodes)]
        axis: Axis,
        /// Comma-separated sweep values (default 5,10,...,50)
        #[arg(long, value_delimiter = ',')]
        values: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        runs: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        gp: PlannerArgs,
    },
    /// Write a topology as JSON
    GenTopo {
        #[arg(long, value_enum)]
        kind: TopoKind,
        #[arg(long)]
        nodes: Option<usize>,
        /// Number of disjoint paths (mnp only)
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Nodes,
    Requests,
}

#[derive(Clone, Copy, ValueEnum)]
enum TopoKind {
    Full,
    Mnp,
}

fn parse_planner(s: &str) -> Result<PlannerKind, String> {
    s.parse()
}

fn parse_expr(s: &str) -> Result<WeightExpr, String> {
    s.parse::<WeightExpr>().map_err(|e| e.to_string())
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), String> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load(path: &Path, gp: &PlannerArgs) -> Result<Scenario, String> {
    let mut s = load_scenario(path).map_err(|e| e.to_string())?;
    if let Some(t) = gp.threshold {
        s.threshold = t;
        s.validate().map_err(|e| e.to_string())?;
    }
    Ok(s)
}

fn run_config(gp: &PlannerArgs, scenario_budget: Option<usize>, trace: bool) -> Result<RunConfig, String> {
    let mut cfg = GpConfig::default();
    if let Some(g) = gp.generations.or(scenario_budget) {
        cfg.max_generations = g;
    }
    if let Some(p) = gp.population {
        cfg.population_size = p;
    }
    if let Some(t) = gp.threshold {
        cfg.threshold = t;
    }
    cfg.validate()?;
    Ok(RunConfig {
        gp: cfg,
        trace,
        ..RunConfig::default()
    })
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Replay {
            scenario,
            planner,
            seed,
            out,
            events,
            ticks,
            trace,
            expr,
            timings,
            gp,
        } => {
            let sc = load(&scenario, &gp)?;
            let mut cfg = run_config(&gp, sc.max_generations, trace)?;
            cfg.fixed_expr = expr;
            let result = run_scenario(&sc, planner, &cfg, seed).map_err(|e| e.to_string())?;
            emit(events.as_deref(), &result.event_log())?;
            if let Some(p) = ticks {
                emit(Some(&p), &result.metrics.tick_csv())?;
            }
            let rows = [MetricsRow {
                planner: planner.to_string(),
                seed,
                metrics: result.metrics,
            }];
            let csv = metrics_csv(&rows, timings).map_err(|e| e.to_string())?;
            if out.is_none() && events.is_none() {
                println!();
            }
            emit(out.as_deref(), &csv)
        }
        Command::Compare {
            scenario,
            planners,
            seed,
            runs,
            out,
            stats,
            timings,
            gp,
        } => {
            if runs == 0 {
                return Err("--runs must be at least 1".into());
            }
            let sc = load(&scenario, &gp)?;
            let cfg = run_config(&gp, sc.max_generations, false)?;
            let planners = if planners.is_empty() {
                vec![PlannerKind::GenAdapt, PlannerKind::Reroute]
            } else {
                planners
            };
            let spec = ExperimentSpec {
                scenario: sc,
                planners: planners.clone(),
                runs,
                base_seed: seed,
            };
            let result = run_experiment(&spec, &cfg);
            let csv = metrics_csv(&result.metrics_rows(), timings).map_err(|e| e.to_string())?;
            emit(out.as_deref(), &csv)?;
            let table = result.table(&planners);
            match stats {
                Some(p) => emit(Some(&p), &table)?,
                None => eprint!("{table}"),
            }
            Ok(())
        }
        Command::Sweep {
            axis,
            values,
            seed,
            runs,
            out,
            gp,
        } => {
            if runs == 0 {
                return Err("--runs must be at least 1".into());
            }
            let cfg = run_config(&gp, None, false)?;
            let axis = match axis {
                Axis::Nodes => SweepAxis::Nodes,
                Axis::Requests => SweepAxis::Requests,
            };
            let values = if values.is_empty() {
                default_sweep_values()
            } else {
                values
            };
            let result = run_sweep(axis, &values, &cfg, runs, seed)?;
            emit(out.as_deref(), &result.csv())?;
            if let Some(f) = result.fit {
                let x = match axis {
                    SweepAxis::Nodes => "link",
                    SweepAxis::Requests => "request",
                };
                eprintln!(
                    "mean plan time ~ {:.4} ms per {x} + {:.3} ms (R^2 = {:.4})",
                    f.slope, f.intercept, f.r_squared
                );
            }
            Ok(())
        }
        Command::GenTopo {
            kind,
            nodes,
            paths,
            out,
        } => {
            let network = match kind {
                TopoKind::Full => gen_full_topology(nodes.ok_or("--nodes is required for full")?),
                TopoKind::Mnp => {
                    let p = paths.ok_or("--paths is required for mnp")?;
                    gen_mnp_topology(nodes.unwrap_or(mnp_node_count(p)), p).map(|t| t.0)
                }
            }
            .map_err(|e| e.to_string())?;
            emit(out.as_deref(), &network_json(&network))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
