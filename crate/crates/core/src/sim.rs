//! Time-stepped fluid traffic simulator.
//!
//! One tick is one simulated second. At every tick newly arrived requests are routed (in id
//! order) under the current weight function, per-request bandwidths are sampled, and the
//! resulting link utilizations are monitored for congestion and loss.

use std::time::Duration;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::{
    argmax_utilization, link_loads, utilizations, Demands, Flow, NetError, NetworkStructure, Request, RequestId,
    RequestTable,
};
use crate::routing::{route_request, RoutingError, WeightFunction};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("request {id} arrives at tick {arrival}, not before the end of the run ({duration})")]
    ArrivalOutOfRange { id: RequestId, arrival: u64, duration: u64 },
    #[error("threshold must lie in (0, 1], got {0}")]
    BadThreshold(f64),
    #[error("bandwidth noise must lie in [0, 1), got {0}")]
    BadNoise(f64),
    #[error("simulation already finished at tick {0}")]
    Finished(u64),
    #[error(transparent)]
    Net(#[from] NetError),
}

fn default_threshold() -> f64 {
    0.8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub network: NetworkStructure,
    pub requests: Vec<Request>,
    pub duration_ticks: u64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Relative amplitude of uniform per-tick bandwidth jitter.
    #[serde(default)]
    pub bandwidth_noise: f64,
    /// Planner generation budget suited to this topology, if the scenario suggests one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_generations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl Scenario {
    pub fn new(network: NetworkStructure, requests: Vec<Request>, duration_ticks: u64) -> Self {
        Scenario {
            network,
            requests,
            duration_ticks,
            threshold: default_threshold(),
            bandwidth_noise: 0.0,
            max_generations: None,
            description: None,
        }
    }

    pub fn validate(&self) -> Result<RequestTable, SimError> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(SimError::BadThreshold(self.threshold));
        }
        if !(0.0..1.0).contains(&self.bandwidth_noise) {
            return Err(SimError::BadNoise(self.bandwidth_noise));
        }
        for r in &self.requests {
            r.validate(&self.network)?;
            if r.arrival_tick >= self.duration_ticks {
                return Err(SimError::ArrivalOutOfRange {
                    id: r.id,
                    arrival: r.arrival_tick,
                    duration: self.duration_ticks,
                });
            }
        }
        Ok(RequestTable::new(self.requests.iter().cloned())?)
    }
}

/// Traffic dropped on overloaded links and traffic offered by active flows during one tick (Mb).
pub fn packet_loss_for_tick(
    network: &NetworkStructure,
    flows: &[Flow],
    demands: &Demands,
) -> Result<(f64, f64), NetError> {
    let loads = link_loads(network, flows, demands)?;
    let dropped = loads
        .iter()
        .zip(network.links())
        .map(|(load, l)| (load - l.bandwidth_mbps).max(0.0))
        .sum();
    let mut offered = 0.0;
    for f in flows {
        offered += demands.get(f.request_id)?;
    }
    Ok((dropped, offered))
}

/// 1 on a transition into congestion, else 0.
pub fn count_congestion_episode(prev_congested: bool, now_congested: bool) -> u64 {
    u64::from(!prev_congested && now_congested)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TickSample {
    pub tick: u64,
    pub max_util: f64,
    pub congested: bool,
    pub dropped_mb: f64,
    pub offered_mb: f64,
}

impl TickSample {
    pub const CSV_HEADER: &'static str = "tick,max_util,congested,dropped_mb,offered_mb";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{:.6},{},{:.6},{:.6}",
            self.tick,
            self.max_util,
            u8::from(self.congested),
            self.dropped_mb,
            self.offered_mb
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsRecord {
    pub congestion_occurrences: u64,
    pub congestion_duration_ticks: u64,
    pub packet_loss_ratio: f64,
    pub dropped_mb: f64,
    pub offered_mb: f64,
    pub planner_invocations: u64,
    pub unresolved_plans: u64,
    pub routing_failures: u64,
    pub planner_times: Vec<Duration>,
    pub per_tick: Vec<TickSample>,
}

impl MetricsRecord {
    pub fn per_tick_max_util(&self) -> Vec<f64> {
        self.per_tick.iter().map(|s| s.max_util).collect()
    }

    pub fn mean_plan_time(&self) -> Option<Duration> {
        if self.planner_times.is_empty() {
            return None;
        }
        Some(self.planner_times.iter().sum::<Duration>() / self.planner_times.len() as u32)
    }

    /// The per-tick stream as CSV text, header included.
    pub fn tick_csv(&self) -> String {
        let mut out = String::from(TickSample::CSV_HEADER);
        out.push('\n');
        for s in &self.per_tick {
            out.push_str(&s.csv_line());
            out.push('\n');
        }
        out
    }
}

/// Outcome of routing one arrival.
#[derive(Clone, Debug, PartialEq)]
pub struct Arrival {
    pub request_id: RequestId,
    pub result: Result<Flow, RoutingError>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TickReport {
    pub sample: TickSample,
    pub arrivals: Vec<Arrival>,
}

pub struct Simulator {
    scenario: Scenario,
    requests: RequestTable,
    tick: u64,
    flows: Vec<Flow>,
    demands: Demands,
    weight_fn: WeightFunction,
    noise: ChaCha8Rng,
    prev_congested: bool,
    metrics: MetricsRecord,
}

impl Simulator {
    /// `noise` only drives bandwidth jitter and is never touched when jitter is off.
    pub fn new(scenario: Scenario, weight_fn: WeightFunction, noise: ChaCha8Rng) -> Result<Self, SimError> {
        let requests = scenario.validate()?;
        Ok(Simulator {
            scenario,
            requests,
            tick: 0,
            flows: Vec::new(),
            demands: Demands::default(),
            weight_fn,
            noise,
            prev_congested: false,
            metrics: MetricsRecord::default(),
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn network(&self) -> &NetworkStructure {
        &self.scenario.network
    }

    pub fn requests(&self) -> &RequestTable {
        &self.requests
    }

    pub fn threshold(&self) -> f64 {
        self.scenario.threshold
    }

    /// The next tick to be simulated.
    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn is_finished(&self) -> bool {
        self.tick >= self.scenario.duration_ticks
    }

    pub fn flows(&self) -> &[Flow] {
        &self.flows
    }

    /// Bandwidths sampled at the last simulated tick.
    pub fn demands(&self) -> &Demands {
        &self.demands
    }

    pub fn weight_fn(&self) -> &WeightFunction {
        &self.weight_fn
    }

    pub fn metrics(&self) -> &MetricsRecord {
        &self.metrics
    }

    /// Per-link utilization of the current flows at the last sampled bandwidths.
    pub fn utilization(&self) -> Result<Vec<f64>, NetError> {
        let loads = link_loads(self.network(), &self.flows, &self.demands)?;
        Ok(utilizations(self.network(), &loads))
    }

    fn sample_demands(&mut self, tick: u64) -> Demands {
        let noise = self.scenario.bandwidth_noise;
        let mut d = Demands::default();
        for r in self.requests.iter().filter(|r| r.arrival_tick <= tick) {
            let base = r.bandwidth_at(tick);
            let factor = if noise > 0.0 {
                1.0 + self.noise.gen_range(-noise..=noise)
            } else {
                1.0
            };
            d.insert(r.id, base * factor);
        }
        d
    }

    /// Simulates one tick: samples bandwidths, routes arrivals, then monitors the network.
    pub fn advance_tick(&mut self) -> Result<TickReport, SimError> {
        if self.is_finished() {
            return Err(SimError::Finished(self.tick));
        }
        let tick = self.tick;
        self.demands = self.sample_demands(tick);
        let arriving: Vec<Request> = self
            .requests
            .iter()
            .filter(|r| r.arrival_tick == tick)
            .cloned()
            .collect();
        let mut arrivals = Vec::with_capacity(arriving.len());
        for r in &arriving {
            let result = route_request(
                self.network(),
                &self.flows,
                &self.demands,
                &self.weight_fn,
                self.scenario.threshold,
                r,
            );
            match &result {
                Ok(f) => self.flows.push(f.clone()),
                Err(_) => self.metrics.routing_failures += 1,
            }
            arrivals.push(Arrival {
                request_id: r.id,
                result,
            });
        }

        let util = self.utilization()?;
        let max_util = argmax_utilization(self.network(), &util).map_or(0.0, |(_, u)| u);
        let congested = max_util > self.scenario.threshold;
        let (dropped_mb, offered_mb) = packet_loss_for_tick(self.network(), &self.flows, &self.demands)?;
        let m = &mut self.metrics;
        m.congestion_occurrences += count_congestion_episode(self.prev_congested, congested);
        m.congestion_duration_ticks += u64::from(congested);
        m.dropped_mb += dropped_mb;
        m.offered_mb += offered_mb;
        let sample = TickSample {
            tick,
            max_util,
            congested,
            dropped_mb,
            offered_mb,
        };
        m.per_tick.push(sample);
        self.prev_congested = congested;
        self.tick += 1;
        Ok(TickReport { sample, arrivals })
    }

    /// Swaps in re-routed flows (matched by request) and optionally a new weight function.
    pub fn apply(&mut self, new_flows: &[Flow], weight_fn: Option<WeightFunction>) {
        for f in self.flows.iter_mut() {
            if let Some(n) = new_flows.iter().find(|n| n.request_id == f.request_id) {
                if n.path != f.path {
                    *f = n.clone();
                }
            }
        }
        if let Some(wf) = weight_fn {
            self.weight_fn = wf;
        }
    }

    pub fn record_plan(&mut self, wall_time: Duration, resolved: bool) {
        self.metrics.planner_invocations += 1;
        self.metrics.planner_times.push(wall_time);
        self.metrics.unresolved_plans += u64::from(!resolved);
    }

    /// Runs every remaining tick without adaptation.
    pub fn run_to_end(&mut self) -> Result<(), SimError> {
        while !self.is_finished() {
            self.advance_tick()?;
        }
        Ok(())
    }

    pub fn into_metrics(self) -> MetricsRecord {
        let mut m = self.metrics;
        m.packet_loss_ratio = if m.offered_mb > 0.0 {
            (m.dropped_mb / m.offered_mb).min(1.0)
        } else {
            0.0
        };
        m
    }
}
