//! The periodic monitor / analyze / plan / execute loop over the simulator.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::baselines::{reroute_only_plan, StaticPolicy, DEFAULT_K_PATHS};
use crate::expr::WeightExpr;
use crate::netmodel::{argmax_utilization, Demands, Flow, NetError, NetworkStructure, RequestId};
use crate::planner::{
    compute_surrogate, find_flows_causing_congestion, in_original_order, run_genplan, split_flows, BadFlowSelection,
    BestSol, EvalFrame, GenerationSummary, GpConfig, PlanError, INFEASIBLE_FITNESS, RESOLVED_BELOW,
};
use crate::routing::{compute_link_weights, RoutingError, WeightFunction};
use crate::sim::{MetricsRecord, Scenario, SimError, Simulator};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdaptError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("planner failed: {0}")]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("adaptation period must be at least one tick")]
    ZeroDelta,
}

/// Generator for planner decisions in run `seed`.
pub fn planner_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for bandwidth jitter in run `seed`, independent of the planner stream.
pub fn noise_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Monitored state handed to a planner; bandwidths are frozen at the monitored tick.
pub struct Snapshot<'a> {
    pub network: &'a NetworkStructure,
    pub flows: &'a [Flow],
    pub demands: &'a Demands,
    pub weight_fn: &'a WeightFunction,
    pub tick: u64,
}

#[derive(Clone, Debug)]
pub struct PlanOutcome {
    /// All flows, in snapshot order.
    pub new_flows: Vec<Flow>,
    /// Replacement weight function, if the planner changes it.
    pub weight_fn: Option<WeightFunction>,
    pub fitness: f64,
    pub moved: Vec<RequestId>,
    pub generations: usize,
    pub wall_time: Duration,
    pub history: Vec<GenerationSummary>,
    pub best_sol: Option<BestSol>,
}

impl PlanOutcome {
    pub fn resolved(&self) -> bool {
        self.fitness < RESOLVED_BELOW
    }
}

pub trait Planner {
    fn name(&self) -> &'static str;
    fn plan(&mut self, snapshot: &Snapshot, best_sol: &BestSol, rng: &mut ChaCha8Rng)
        -> Result<PlanOutcome, PlanError>;
}

/// Evolves a new weight expression and re-routes the flows it picks.
pub struct GenPlanner {
    pub cfg: GpConfig,
}

impl Planner for GenPlanner {
    fn name(&self) -> &'static str {
        "genadapt"
    }

    fn plan(&mut self, s: &Snapshot, best_sol: &BestSol, rng: &mut ChaCha8Rng) -> Result<PlanOutcome, PlanError> {
        let out = run_genplan(s.network, s.flows, s.demands, best_sol, &self.cfg, rng)?;
        Ok(PlanOutcome {
            weight_fn: Some(WeightFunction::learned(out.best_expr.clone())),
            fitness: out.best_fitness,
            moved: out.bad_flows,
            generations: out.generations_used,
            wall_time: out.wall_time,
            history: out.history,
            best_sol: Some(out.best_sol_out),
            new_flows: out.new_flows,
        })
    }
}

/// Always answers with one given expression; used to replay a known planner result.
pub struct FixedExprPlanner {
    pub expr: WeightExpr,
    pub cfg: GpConfig,
}

impl FixedExprPlanner {
    /// Moves the newest flows off the congested link, so the replay does not depend on the seed.
    pub fn new(expr: WeightExpr, cfg: GpConfig) -> Self {
        FixedExprPlanner {
            expr,
            cfg: GpConfig {
                bad_flow_selection: BadFlowSelection::Latest,
                ..cfg
            },
        }
    }
}

impl Planner for FixedExprPlanner {
    fn name(&self) -> &'static str {
        "fixed"
    }

    fn plan(&mut self, s: &Snapshot, _: &BestSol, rng: &mut ChaCha8Rng) -> Result<PlanOutcome, PlanError> {
        let started = std::time::Instant::now();
        let cfg = &self.cfg;
        let bad = find_flows_causing_congestion(
            s.network,
            s.flows,
            s.demands,
            cfg.threshold,
            cfg.bad_flow_selection,
            rng,
        )?;
        let (kept, moved) = split_flows(s.flows, &bad);
        let (fitness, new_flows) =
            match compute_surrogate(s.network, &kept, &moved, s.demands, &self.expr, cfg.threshold) {
                Ok(flows) => {
                    let frame = EvalFrame::new(s.network, s.flows, &bad, s.demands, cfg);
                    (frame.score_flows(&flows)?, in_original_order(s.flows, flows))
                }
                Err(RoutingError::Unreachable { .. }) => (INFEASIBLE_FITNESS, s.flows.to_vec()),
                Err(e) => return Err(e.into()),
            };
        Ok(PlanOutcome {
            new_flows,
            weight_fn: Some(WeightFunction::learned(self.expr.clone())),
            fitness,
            moved: bad.iter().map(|&i| s.flows[i].request_id).collect(),
            generations: 0,
            wall_time: started.elapsed(),
            history: Vec::new(),
            best_sol: None,
        })
    }
}

/// Moves individual flows between candidate paths; never changes the weight function.
pub struct ReroutePlanner {
    pub cfg: GpConfig,
    pub k_paths: usize,
}

impl Planner for ReroutePlanner {
    fn name(&self) -> &'static str {
        "reroute"
    }

    fn plan(&mut self, s: &Snapshot, _: &BestSol, rng: &mut ChaCha8Rng) -> Result<PlanOutcome, PlanError> {
        let out = reroute_only_plan(s.network, s.flows, s.demands, &self.cfg, self.k_paths, rng)?;
        Ok(PlanOutcome {
            new_flows: out.new_flows,
            weight_fn: None,
            fitness: out.best_fitness,
            moved: out.bad_flows,
            generations: out.generations_used,
            wall_time: out.wall_time,
            history: Vec::new(),
            best_sol: None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptState {
    pub current_weight_fn: WeightFunction,
    pub best_sol: BestSol,
    pub delta_ticks: u64,
}

impl AdaptState {
    pub fn new(current_weight_fn: WeightFunction, best_sol_capacity: usize) -> Self {
        AdaptState {
            current_weight_fn,
            best_sol: BestSol::new(best_sol_capacity),
            delta_ticks: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub tick: u64,
    pub max_util: f64,
    pub congested: bool,
    pub planned: bool,
    pub resolved: Option<bool>,
    pub fitness: Option<f64>,
    pub moved: Vec<RequestId>,
    pub generations: usize,
    pub wall_time: Duration,
    pub history: Vec<GenerationSummary>,
}

/// One pass of the loop on the state after the last simulated tick.
///
/// Plans only when the peak utilization strictly exceeds the threshold. A plan that clears
/// congestion swaps in its flows and weight function together; otherwise nothing changes and
/// the report is flagged unresolved.
pub fn genadapt_step(
    sim: &mut Simulator,
    adapt: &mut AdaptState,
    planner: &mut dyn Planner,
    rng: &mut ChaCha8Rng,
) -> Result<StepReport, AdaptError> {
    let tick = sim.tick().saturating_sub(1);
    let util = sim.utilization()?;
    let max_util = argmax_utilization(sim.network(), &util).map_or(0.0, |(_, u)| u);
    let congested = max_util > sim.threshold();
    let mut report = StepReport {
        tick,
        max_util,
        congested,
        planned: false,
        resolved: None,
        fitness: None,
        moved: Vec::new(),
        generations: 0,
        wall_time: Duration::ZERO,
        history: Vec::new(),
    };
    if !congested {
        return Ok(report);
    }
    let outcome = {
        let snapshot = Snapshot {
            network: sim.network(),
            flows: sim.flows(),
            demands: sim.demands(),
            weight_fn: &adapt.current_weight_fn,
            tick,
        };
        planner.plan(&snapshot, &adapt.best_sol, rng)?
    };
    let resolved = outcome.resolved();
    if let Some(b) = outcome.best_sol {
        adapt.best_sol = b;
    }
    if resolved {
        if let Some(wf) = &outcome.weight_fn {
            adapt.current_weight_fn = wf.clone();
        }
        sim.apply(&outcome.new_flows, outcome.weight_fn);
    }
    sim.record_plan(outcome.wall_time, resolved);
    report.planned = true;
    report.resolved = Some(resolved);
    report.fitness = Some(outcome.fitness);
    report.moved = outcome.moved;
    report.generations = outcome.generations;
    report.wall_time = outcome.wall_time;
    report.history = outcome.history;
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PlannerKind {
    GenAdapt,
    Reroute,
    StaticUnit,
    StaticInvBw,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 4] = [
        PlannerKind::GenAdapt,
        PlannerKind::Reroute,
        PlannerKind::StaticUnit,
        PlannerKind::StaticInvBw,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PlannerKind::GenAdapt => "genadapt",
            PlannerKind::Reroute => "reroute",
            PlannerKind::StaticUnit => "static-unit",
            PlannerKind::StaticInvBw => "static-invbw",
        }
    }

    pub fn static_policy(self) -> Option<StaticPolicy> {
        match self {
            PlannerKind::StaticUnit => Some(StaticPolicy::Unit),
            PlannerKind::StaticInvBw => Some(StaticPolicy::InverseBandwidth),
            _ => None,
        }
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlannerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PlannerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown planner '{s}' (expected genadapt, reroute, static-unit or static-invbw)"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    Arrival,
    RoutingFailure,
    Weights,
    CongestionDetected,
    PlanStart,
    Generation,
    PlanEnd,
    Applied,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Arrival => "arrival",
            EventKind::RoutingFailure => "routing-failure",
            EventKind::Weights => "weights",
            EventKind::CongestionDetected => "congestion-detected",
            EventKind::PlanStart => "plan-start",
            EventKind::Generation => "generation",
            EventKind::PlanEnd => "plan-end",
            EventKind::Applied => "applied",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub tick: u64,
    pub kind: EventKind,
    pub payload: String,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}", self.tick, self.kind.as_str(), self.payload)
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub gp: GpConfig,
    pub k_paths: usize,
    pub delta_ticks: u64,
    /// Emit weight tables and per-generation planner lines.
    pub trace: bool,
    /// Replace the search with this expression (adaptive planners only).
    pub fixed_expr: Option<WeightExpr>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            gp: GpConfig::default(),
            k_paths: DEFAULT_K_PATHS,
            delta_ticks: 1,
            trace: false,
            fixed_expr: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub metrics: MetricsRecord,
    pub events: Vec<Event>,
    pub final_flows: Vec<Flow>,
    pub final_weight_fn: WeightFunction,
    pub best_sol: BestSol,
}

impl RunOutput {
    pub fn event_log(&self) -> String {
        self.events.iter().map(|e| format!("{e}\n")).collect()
    }
}

fn weights_payload(sim: &Simulator) -> Result<String, NetError> {
    let net = sim.network();
    let util = sim.utilization()?;
    let w = compute_link_weights(net, &util, sim.weight_fn(), sim.threshold());
    Ok(net
        .link_ids()
        .map(|id| format!("{}={}@{:.3}", net.describe_link(id), w[id.0], util[id.0]))
        .collect::<Vec<_>>()
        .join(" "))
}

/// Simulates `scenario` from `initial` weights, running `planner` every `delta_ticks` ticks
/// when one is given.
pub fn simulate(
    scenario: &Scenario,
    initial: WeightFunction,
    mut planner: Option<&mut dyn Planner>,
    cfg: &RunConfig,
    seed: u64,
) -> Result<RunOutput, AdaptError> {
    if cfg.delta_ticks == 0 {
        return Err(AdaptError::ZeroDelta);
    }
    let mut sim = Simulator::new(scenario.clone(), initial.clone(), noise_rng(seed))?;
    let mut adapt = AdaptState {
        delta_ticks: cfg.delta_ticks,
        ..AdaptState::new(initial, cfg.gp.best_sol_capacity())
    };
    let mut rng = planner_rng(seed);
    let mut events = Vec::new();
    let mut push = |tick, kind, payload: String| events.push(Event { tick, kind, payload });

    while !sim.is_finished() {
        let report = sim.advance_tick()?;
        let tick = report.sample.tick;
        for a in &report.arrivals {
            match &a.result {
                Ok(f) => push(
                    tick,
                    EventKind::Arrival,
                    format!("r{} {}", a.request_id, f.describe(sim.network())),
                ),
                Err(e) => push(tick, EventKind::RoutingFailure, format!("r{} {e}", a.request_id)),
            }
        }
        if cfg.trace && !report.arrivals.is_empty() {
            push(tick, EventKind::Weights, weights_payload(&sim)?);
        }
        let Some(p) = planner.as_deref_mut() else {
            continue;
        };
        if tick % adapt.delta_ticks != 0 || !report.sample.congested {
            continue;
        }
        push(
            tick,
            EventKind::CongestionDetected,
            format!("max_util={:.3}", report.sample.max_util),
        );
        push(
            tick,
            EventKind::PlanStart,
            format!("planner={} flows={}", p.name(), sim.flows().len()),
        );
        let before = sim.flows().to_vec();
        let step = genadapt_step(&mut sim, &mut adapt, p, &mut rng)?;
        if cfg.trace {
            for g in &step.history {
                push(
                    tick,
                    EventKind::Generation,
                    format!("{} {:.6} {}", g.generation, g.best_fitness, g.best_expr),
                );
            }
        }
        let moved: Vec<String> = step.moved.iter().map(|id| format!("r{id}")).collect();
        push(
            tick,
            EventKind::PlanEnd,
            format!(
                "fitness={:.6} resolved={} generations={} bad={}",
                step.fitness.unwrap_or(INFEASIBLE_FITNESS),
                step.resolved == Some(true),
                step.generations,
                moved.join(",")
            ),
        );
        if step.resolved == Some(true) {
            let changed: Vec<String> = sim
                .flows()
                .iter()
                .zip(&before)
                .filter(|(a, b)| a != b)
                .map(|(f, _)| format!("r{} {}", f.request_id, f.describe(sim.network())))
                .collect();
            let wf = match sim.weight_fn() {
                WeightFunction::Learned { expr } => expr.to_string(),
                other => format!("{other:?}"),
            };
            push(
                tick,
                EventKind::Applied,
                format!("weights={wf} moved=[{}]", changed.join("; ")),
            );
            if cfg.trace {
                push(tick, EventKind::Weights, weights_payload(&sim)?);
            }
        }
    }
    Ok(RunOutput {
        final_flows: sim.flows().to_vec(),
        final_weight_fn: sim.weight_fn().clone(),
        best_sol: adapt.best_sol,
        metrics: sim.into_metrics(),
        events,
    })
}

/// Runs `scenario` under planner `kind` with every random choice derived from `seed`.
///
/// Adaptive planners start from inverse-bandwidth weights. The planner's threshold follows the
/// scenario's.
pub fn run_scenario(
    scenario: &Scenario,
    kind: PlannerKind,
    cfg: &RunConfig,
    seed: u64,
) -> Result<RunOutput, AdaptError> {
    let gp = GpConfig {
        threshold: scenario.threshold,
        ..cfg.gp.clone()
    };
    if let Some(policy) = kind.static_policy() {
        return simulate(scenario, policy.weight_function(&scenario.network), None, cfg, seed);
    }
    let initial = WeightFunction::inverse_bandwidth_for(&scenario.network);
    let mut planner: Box<dyn Planner> = match (kind, &cfg.fixed_expr) {
        (PlannerKind::GenAdapt, Some(e)) => Box::new(FixedExprPlanner::new(e.clone(), gp)),
        (PlannerKind::GenAdapt, None) => Box::new(GenPlanner { cfg: gp }),
        _ => Box::new(ReroutePlanner {
            cfg: gp,
            k_paths: cfg.k_paths,
        }),
    };
    simulate(scenario, initial, Some(planner.as_mut()), cfg, seed)
}

/// Runs `scenario` under GenAdapt.
pub fn run_adaptive(scenario: &Scenario, cfg: &RunConfig, seed: u64) -> Result<MetricsRecord, AdaptError> {
    Ok(run_scenario(scenario, PlannerKind::GenAdapt, cfg, seed)?.metrics)
}
