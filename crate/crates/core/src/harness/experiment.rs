//! Multi-seed comparisons between planners and the planner-time scalability sweep.

use std::fmt::Write as _;
use std::time::Duration;

use crate::adapt::{run_scenario, PlannerKind, RunConfig};
use crate::netmodel::Request;
use crate::sim::{MetricsRecord, Scenario};

use super::scenario_io::MetricsRow;
use super::stats::{a12_effect_size, linear_fit, mean, wilcoxon_rank_sum, LinearFit};
use super::topology::{gen_full_topology, TopologyError};

#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub planners: Vec<PlannerKind>,
    pub runs: u64,
    pub base_seed: u64,
}

impl ExperimentSpec {
    pub fn new(scenario: Scenario, planners: Vec<PlannerKind>) -> Self {
        ExperimentSpec {
            scenario,
            planners,
            runs: 30,
            base_seed: 0,
        }
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> {
        let base = self.base_seed;
        (0..self.runs).map(move |i| base + i)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    CongestionOccurrences,
    CongestionDuration,
    PacketLoss,
}

impl Metric {
    pub const ALL: [Metric; 3] = [
        Metric::CongestionOccurrences,
        Metric::CongestionDuration,
        Metric::PacketLoss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::CongestionOccurrences => "congestion_occurrences",
            Metric::CongestionDuration => "congestion_duration_s",
            Metric::PacketLoss => "packet_loss_pct",
        }
    }

    pub fn of(self, m: &MetricsRecord) -> f64 {
        match self {
            Metric::CongestionOccurrences => m.congestion_occurrences as f64,
            Metric::CongestionDuration => m.congestion_duration_ticks as f64,
            Metric::PacketLoss => m.packet_loss_ratio * 100.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunRow {
    pub planner: PlannerKind,
    pub seed: u64,
    pub result: Result<MetricsRecord, String>,
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub a: PlannerKind,
    pub b: PlannerKind,
    pub metric: Metric,
    pub a12: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    /// Sorted by the experiment's planner order, then seed.
    pub rows: Vec<RunRow>,
    pub comparisons: Vec<Comparison>,
}

impl ExperimentResult {
    /// Metric values of the successful runs of `planner`, in seed order.
    pub fn values(&self, planner: PlannerKind, metric: Metric) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.planner == planner)
            .filter_map(|r| r.result.as_ref().ok())
            .map(|m| metric.of(m))
            .collect()
    }

    pub fn mean(&self, planner: PlannerKind, metric: Metric) -> f64 {
        mean(&self.values(planner, metric))
    }

    pub fn metrics_rows(&self) -> Vec<MetricsRow> {
        self.rows
            .iter()
            .filter_map(|r| {
                r.result.as_ref().ok().map(|m| MetricsRow {
                    planner: r.planner.to_string(),
                    seed: r.seed,
                    metrics: m.clone(),
                })
            })
            .collect()
    }

    pub fn failures(&self) -> Vec<&RunRow> {
        self.rows.iter().filter(|r| r.result.is_err()).collect()
    }

    /// Per-planner means followed by pairwise effect sizes and p-values.
    pub fn table(&self, planners: &[PlannerKind]) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<14}", "planner");
        for m in Metric::ALL {
            let _ = write!(out, " {:>24}", m.name());
        }
        out.push('\n');
        for &p in planners {
            let _ = write!(out, "{:<14}", p.as_str());
            for m in Metric::ALL {
                let _ = write!(out, " {:>24.4}", self.mean(p, m));
            }
            out.push('\n');
        }
        if !self.comparisons.is_empty() {
            out.push('\n');
            let _ = writeln!(out, "{:<28} {:<24} {:>8} {:>10}", "pair", "metric", "A12", "p");
            for c in &self.comparisons {
                let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
                let _ = writeln!(
                    out,
                    "{:<28} {:<24} {:>8} {:>10}",
                    format!("{} vs {}", c.a, c.b),
                    c.metric.name(),
                    fmt(c.a12),
                    fmt(c.p_value)
                );
            }
        }
        for r in self.failures() {
            let _ = writeln!(
                out,
                "failed: {} seed {}: {}",
                r.planner,
                r.seed,
                r.result.as_ref().unwrap_err()
            );
        }
        out
    }
}

/// Runs every planner on every seed. A failing run is recorded in its row and does not stop the
/// experiment.
pub fn run_experiment(spec: &ExperimentSpec, cfg: &RunConfig) -> ExperimentResult {
    let mut rows = Vec::new();
    for &planner in &spec.planners {
        for seed in spec.seeds() {
            let result = run_scenario(&spec.scenario, planner, cfg, seed)
                .map(|o| o.metrics)
                .map_err(|e| e.to_string());
            rows.push(RunRow { planner, seed, result });
        }
    }
    let mut result = ExperimentResult {
        rows,
        comparisons: Vec::new(),
    };
    for (i, &a) in spec.planners.iter().enumerate() {
        for &b in &spec.planners[i + 1..] {
            for metric in Metric::ALL {
                let (va, vb) = (result.values(a, metric), result.values(b, metric));
                result.comparisons.push(Comparison {
                    a,
                    b,
                    metric,
                    a12: a12_effect_size(&va, &vb).ok(),
                    p_value: wilcoxon_rank_sum(&va, &vb).ok(),
                });
            }
        }
    }
    result
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    /// Complete graphs of growing size carrying a fixed load.
    Nodes,
    /// A fixed complete graph carrying a growing number of requests.
    Requests,
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nodes" => Ok(SweepAxis::Nodes),
            "requests" => Ok(SweepAxis::Requests),
            _ => Err(format!("unknown sweep axis '{s}' (expected nodes or requests)")),
        }
    }
}

/// Total bandwidth of the simultaneous requests in every sweep scenario.
pub const SWEEP_TOTAL_MBPS: f64 = 150.0;
pub const SWEEP_FIXED_NODES: usize = 5;
pub const SWEEP_FIXED_REQUESTS: usize = 5;
/// Each sweep run is timed this many times and the fastest kept.
pub const SWEEP_TIMING_REPEATS: usize = 3;

/// `requests` equal requests from node 0 to node 1 on FULL(`nodes`), all arriving at tick 0,
/// together carrying [`SWEEP_TOTAL_MBPS`].
pub fn sweep_scenario(nodes: usize, requests: usize) -> Result<Scenario, TopologyError> {
    let network = gen_full_topology(nodes)?;
    let mbps = SWEEP_TOTAL_MBPS / requests as f64;
    let reqs = (1..=requests as u32)
        .map(|id| Request::constant(id, 0, 1, 0, mbps))
        .collect();
    Ok(Scenario::new(network, reqs, 1))
}

#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub nodes: usize,
    pub links: usize,
    pub requests: usize,
    pub mean_plan_time: Duration,
    pub max_plan_time: Duration,
    pub resolved_runs: usize,
    pub runs: usize,
}

impl SweepPoint {
    pub const CSV_HEADER: &'static str = "nodes,links,requests,mean_plan_time_ms,max_plan_time_ms,resolved_runs,runs";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{:.3},{:.3},{},{}",
            self.nodes,
            self.links,
            self.requests,
            self.mean_plan_time.as_secs_f64() * 1e3,
            self.max_plan_time.as_secs_f64() * 1e3,
            self.resolved_runs,
            self.runs
        )
    }
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
    /// Mean planner time (ms) against link count or request count.
    pub fit: Option<LinearFit>,
}

impl SweepResult {
    pub fn csv(&self) -> String {
        let mut out = format!("{}\n", SweepPoint::CSV_HEADER);
        for p in &self.points {
            out.push_str(&p.csv_line());
            out.push('\n');
        }
        out
    }
}

/// Times one planner call per seed at each sweep value, keeping the fastest of
/// [`SWEEP_TIMING_REPEATS`] identical runs.
///
/// The planner runs its full generation budget (early stopping is disabled) so the measured
/// time reflects the cost of a call rather than how soon a lucky seed finds a fix.
pub fn run_sweep(
    axis: SweepAxis,
    values: &[usize],
    cfg: &RunConfig,
    runs: u64,
    base_seed: u64,
) -> Result<SweepResult, String> {
    let mut cfg = cfg.clone();
    cfg.gp.early_stop_below = 0.0;
    let scenarios = values
        .iter()
        .map(|&v| match axis {
            SweepAxis::Nodes => sweep_scenario(v, SWEEP_FIXED_REQUESTS),
            SweepAxis::Requests => sweep_scenario(SWEEP_FIXED_NODES, v),
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let seeds: Vec<u64> = (base_seed..base_seed + runs).collect();
    // Runs are deterministic per seed, so repeats differ only in machine noise. Repeats go
    // round the whole sweep so a slow spell lands on one repeat of many points rather than
    // every repeat of one point; the fastest repeat is kept.
    let mut best: Vec<Vec<Vec<Duration>>> = vec![vec![Vec::new(); seeds.len()]; scenarios.len()];
    let mut resolved = vec![0; scenarios.len()];
    for repeat in 0..SWEEP_TIMING_REPEATS {
        for (i, scenario) in scenarios.iter().enumerate() {
            for (j, &seed) in seeds.iter().enumerate() {
                let m = run_scenario(scenario, PlannerKind::GenAdapt, &cfg, seed)
                    .map_err(|e| e.to_string())?
                    .metrics;
                let slot = &mut best[i][j];
                if repeat == 0 {
                    *slot = m.planner_times;
                    resolved[i] += usize::from(m.planner_invocations > 0 && m.unresolved_plans == 0);
                } else {
                    slot.iter_mut()
                        .zip(&m.planner_times)
                        .for_each(|(b, &t)| *b = (*b).min(t));
                }
            }
        }
    }
    let points: Vec<SweepPoint> = scenarios
        .iter()
        .zip(best)
        .zip(resolved)
        .map(|((scenario, per_seed), resolved_runs)| {
            let times: Vec<Duration> = per_seed.into_iter().flatten().collect();
            let mean_plan_time = if times.is_empty() {
                Duration::ZERO
            } else {
                times.iter().sum::<Duration>() / times.len() as u32
            };
            SweepPoint {
                nodes: scenario.network.node_count(),
                links: scenario.network.link_count(),
                requests: scenario.requests.len(),
                mean_plan_time,
                max_plan_time: times.iter().copied().max().unwrap_or_default(),
                resolved_runs,
                runs: runs as usize,
            }
        })
        .collect();
    let xs: Vec<f64> = points
        .iter()
        .map(|p| match axis {
            SweepAxis::Nodes => p.links as f64,
            SweepAxis::Requests => p.requests as f64,
        })
        .collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean_plan_time.as_secs_f64() * 1e3).collect();
    Ok(SweepResult {
        axis,
        fit: linear_fit(&xs, &ys).ok(),
        points,
    })
}

/// 5, 10, ..., 50.
pub fn default_sweep_values() -> Vec<usize> {
    (1..=10).map(|i| 5 * i).collect()
}
