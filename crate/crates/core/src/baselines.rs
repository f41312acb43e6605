//! Comparison planners: a genetic re-router that moves individual flows between precomputed
//! candidate paths without touching the weight function, and plain static shortest-path routing.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::netmodel::{Demands, Flow, LinkId, NetworkStructure, NodeId, RequestId};
use crate::planner::{
    find_flows_causing_congestion, in_original_order, tournament, EvalFrame, GpConfig, PlanError, RESOLVED_BELOW,
};
use crate::routing::{shortest_weighted_path, RoutingError, WeightFunction};
use crate::sim::{MetricsRecord, Scenario, SimError, Simulator};

pub const DEFAULT_K_PATHS: usize = 8;

const BANNED: u64 = u32::MAX as u64;

fn path_nodes(network: &NetworkStructure, path: &[LinkId], src: NodeId) -> Vec<NodeId> {
    let mut nodes = vec![src];
    nodes.extend(path.iter().map(|l| network.link(*l).dst));
    nodes
}

/// Fewest-hop path avoiding the banned links and nodes.
fn hop_path_avoiding(
    network: &NetworkStructure,
    src: NodeId,
    dst: NodeId,
    banned_links: &[LinkId],
    banned_nodes: &[NodeId],
) -> Option<Vec<LinkId>> {
    let mut weights = vec![1u64; network.link_count()];
    for id in network.link_ids() {
        let l = network.link(id);
        if banned_nodes.contains(&l.src) || banned_nodes.contains(&l.dst) {
            weights[id.0] = BANNED;
        }
    }
    for l in banned_links {
        weights[l.0] = BANNED;
    }
    let path = shortest_weighted_path(network, &weights, src, dst).ok()?;
    path.iter().all(|l| weights[l.0] == 1).then_some(path)
}

/// Up to `k` loop-free paths from `src` to `dst` in order of hop count (ties by node sequence).
pub fn k_shortest_paths(
    network: &NetworkStructure,
    src: NodeId,
    dst: NodeId,
    k: usize,
) -> Result<Vec<Vec<LinkId>>, RoutingError> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let first = shortest_weighted_path(network, &vec![1; network.link_count()], src, dst)?;
    let mut found = vec![first];
    let mut candidates: BTreeSet<(usize, Vec<NodeId>, Vec<LinkId>)> = BTreeSet::new();
    while found.len() < k {
        let prev = found.last().expect("non-empty").clone();
        let prev_nodes = path_nodes(network, &prev, src);
        for i in 0..prev.len() {
            let spur = prev_nodes[i];
            let root = &prev[..i];
            let banned_links: Vec<LinkId> = found
                .iter()
                .filter(|p| p.len() > i && &p[..i] == root)
                .map(|p| p[i])
                .collect();
            let Some(spur_path) = hop_path_avoiding(network, spur, dst, &banned_links, &prev_nodes[..i]) else {
                continue;
            };
            let mut total = root.to_vec();
            total.extend(spur_path);
            if !found.contains(&total) {
                candidates.insert((total.len(), path_nodes(network, &total, src), total));
            }
        }
        match candidates.pop_first() {
            Some((_, _, p)) => found.push(p),
            None => break,
        }
    }
    Ok(found)
}

#[derive(Clone, Debug)]
pub struct RerouteOutput {
    /// All flows, in input order, with the bad ones moved.
    pub new_flows: Vec<Flow>,
    pub resolved: bool,
    pub best_fitness: f64,
    pub bad_flows: Vec<RequestId>,
    pub generations_used: usize,
    pub wall_time: Duration,
}

fn one_point<R: Rng + ?Sized>(rng: &mut R, a: &[usize], b: &[usize]) -> (Vec<usize>, Vec<usize>) {
    if a.len() < 2 {
        return (a.to_vec(), b.to_vec());
    }
    let cut = rng.gen_range(1..a.len());
    let mut c1 = a[..cut].to_vec();
    c1.extend_from_slice(&b[cut..]);
    let mut c2 = b[..cut].to_vec();
    c2.extend_from_slice(&a[cut..]);
    (c1, c2)
}

/// Genetic search over per-flow path choices among the `k` fewest-hop alternatives; the
/// population, generation budget, operator rates and fitness match the expression planner.
pub fn reroute_only_plan<R: Rng + ?Sized>(
    network: &NetworkStructure,
    old_flows: &[Flow],
    demands: &Demands,
    cfg: &GpConfig,
    k: usize,
    rng: &mut R,
) -> Result<RerouteOutput, PlanError> {
    let started = Instant::now();
    let bad_idx =
        find_flows_causing_congestion(network, old_flows, demands, cfg.threshold, cfg.bad_flow_selection, rng)?;
    let frame = EvalFrame::new(network, old_flows, &bad_idx, demands, cfg);
    let bad_flows = bad_idx.iter().map(|&i| old_flows[i].request_id).collect();
    if bad_idx.is_empty() {
        let fit = frame.score_flows(old_flows)?;
        return Ok(RerouteOutput {
            new_flows: old_flows.to_vec(),
            resolved: fit < RESOLVED_BELOW,
            best_fitness: fit,
            bad_flows,
            generations_used: 0,
            wall_time: started.elapsed(),
        });
    }

    let mut options = Vec::with_capacity(frame.bad.len());
    for f in &frame.bad {
        let (first, last) = (f.path[0], *f.path.last().expect("non-empty flow"));
        let (src, dst) = (network.link(first).src, network.link(last).dst);
        options.push(k_shortest_paths(network, src, dst, k.max(1))?);
    }
    let assemble = |genome: &[usize]| -> Vec<Flow> {
        let mut flows = frame.kept.clone();
        for ((f, opts), &g) in frame.bad.iter().zip(&options).zip(genome) {
            flows.push(Flow::new(f.request_id, opts[g].clone()));
        }
        flows
    };

    let mut population: Vec<Vec<usize>> = (0..cfg.population_size)
        .map(|_| options.iter().map(|o| rng.gen_range(0..o.len())).collect())
        .collect();
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut generation = 0;
    loop {
        let mut scores = Vec::with_capacity(population.len());
        for g in &population {
            let fit = frame.score_flows(&assemble(g))?;
            if best.as_ref().is_none_or(|b| fit < b.1) {
                best = Some((g.clone(), fit));
            }
            scores.push(fit);
        }
        let best_fit = best.as_ref().expect("evaluated").1;
        if best_fit < cfg.early_stop_below || generation >= cfg.max_generations {
            break;
        }
        let mut next = Vec::with_capacity(cfg.population_size);
        while next.len() < cfg.population_size {
            let a = &population[tournament(&scores, cfg.tournament_size, rng)];
            let b = &population[tournament(&scores, cfg.tournament_size, rng)];
            let (c1, c2) = if rng.gen::<f64>() < cfg.crossover_rate {
                one_point(rng, a, b)
            } else {
                (a.clone(), b.clone())
            };
            for mut child in [c1, c2] {
                for (gene, opts) in child.iter_mut().zip(&options) {
                    if opts.len() > 1 && rng.gen::<f64>() < cfg.mutation_rate {
                        let alt = rng.gen_range(0..opts.len() - 1);
                        *gene = if alt >= *gene { alt + 1 } else { alt };
                    }
                }
                if next.len() < cfg.population_size {
                    next.push(child);
                }
            }
        }
        population = next;
        generation += 1;
    }

    let (genome, best_fitness) = best.expect("evaluated");
    Ok(RerouteOutput {
        new_flows: in_original_order(old_flows, assemble(&genome)),
        resolved: best_fitness < RESOLVED_BELOW,
        best_fitness,
        bad_flows,
        generations_used: generation,
        wall_time: started.elapsed(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StaticPolicy {
    Unit,
    InverseBandwidth,
}

impl StaticPolicy {
    pub fn weight_function(self, network: &NetworkStructure) -> WeightFunction {
        match self {
            StaticPolicy::Unit => WeightFunction::Unit,
            StaticPolicy::InverseBandwidth => WeightFunction::inverse_bandwidth_for(network),
        }
    }
}

/// Full simulation with fixed weights and no adaptation.
pub fn run_static(scenario: &Scenario, policy: StaticPolicy, seed: u64) -> Result<MetricsRecord, SimError> {
    let wf = policy.weight_function(&scenario.network);
    let mut sim = Simulator::new(scenario.clone(), wf, crate::adapt::noise_rng(seed))?;
    sim.run_to_end()?;
    Ok(sim.into_metrics())
}
