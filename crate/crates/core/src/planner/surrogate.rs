//! Picking the flows to move and re-routing them under a candidate weight expression, with flow
//! bandwidths frozen at the monitored tick.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::expr::WeightExpr;
use crate::netmodel::{argmax_utilization, link_loads, Demands, Flow, NetworkStructure};
use crate::routing::{shortest_weighted_path, RoutingError, WeightFunction};

use super::PlanError;

/// Which flow on the most congested link gets removed next.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BadFlowSelection {
    /// Uniformly random among the flows crossing the link.
    #[default]
    Random,
    /// The most recently established flow crossing the link.
    Latest,
}

/// Indices (ascending, i.e. arrival order) of flows whose removal brings every link to or below
/// `threshold`. Empty when the network is not congested.
pub fn find_flows_causing_congestion<R: Rng + ?Sized>(
    network: &NetworkStructure,
    flows: &[Flow],
    demands: &Demands,
    threshold: f64,
    selection: BadFlowSelection,
    rng: &mut R,
) -> Result<Vec<usize>, PlanError> {
    let mut loads = link_loads(network, flows, demands)?;
    let mut removed = vec![false; flows.len()];
    let mut bad = Vec::new();
    loop {
        let util: Vec<f64> = loads
            .iter()
            .zip(network.links())
            .map(|(l, link)| l / link.bandwidth_mbps)
            .collect();
        let Some((link, u)) = argmax_utilization(network, &util) else {
            break;
        };
        if u <= threshold {
            break;
        }
        let candidates: Vec<usize> = (0..flows.len())
            .filter(|&i| !removed[i] && flows[i].contains(link))
            .collect();
        let pick = match selection {
            _ if candidates.is_empty() => return Err(PlanError::NoRemovableFlow(link)),
            BadFlowSelection::Random => candidates[rng.gen_range(0..candidates.len())],
            BadFlowSelection::Latest => *candidates.last().expect("non-empty"),
        };
        removed[pick] = true;
        bad.push(pick);
        let bw = demands.get(flows[pick].request_id)?;
        for l in &flows[pick].path {
            loads[l.0] -= bw;
        }
    }
    bad.sort_unstable();
    Ok(bad)
}

/// Splits `flows` into (kept, bad) given the indices of the bad ones.
pub fn split_flows(flows: &[Flow], bad: &[usize]) -> (Vec<Flow>, Vec<Flow>) {
    let mut kept = Vec::with_capacity(flows.len() - bad.len());
    let mut moved = Vec::with_capacity(bad.len());
    for (i, f) in flows.iter().enumerate() {
        if bad.binary_search(&i).is_ok() {
            moved.push(f.clone());
        } else {
            kept.push(f.clone());
        }
    }
    (kept, moved)
}

/// Re-routes `bad` one flow at a time on top of `kept`, refreshing link utilization and weights
/// after every placement. Returns the kept flows followed by the re-routed ones.
pub fn compute_surrogate(
    network: &NetworkStructure,
    kept: &[Flow],
    bad: &[Flow],
    demands: &Demands,
    expr: &WeightExpr,
    threshold: f64,
) -> Result<Vec<Flow>, RoutingError> {
    let wf = WeightFunction::learned(expr.clone());
    reroute_with(network, kept, bad, demands, &wf, threshold)
}

pub(crate) fn reroute_with(
    network: &NetworkStructure,
    kept: &[Flow],
    bad: &[Flow],
    demands: &Demands,
    wf: &WeightFunction,
    threshold: f64,
) -> Result<Vec<Flow>, RoutingError> {
    let mut loads = link_loads(network, kept, demands)?;
    let mut weights: Vec<u64> = network
        .link_ids()
        .map(|id| {
            let u = loads[id.0] / network.link(id).bandwidth_mbps;
            wf.link_weight(network, id, u, threshold)
        })
        .collect();
    let mut out = kept.to_vec();
    out.reserve(bad.len());
    for f in bad {
        let (Some(first), Some(last)) = (f.path.first(), f.path.last()) else {
            continue;
        };
        let (src, dst) = (network.link(*first).src, network.link(*last).dst);
        let path = shortest_weighted_path(network, &weights, src, dst)?;
        let bw = demands.get(f.request_id)?;
        for l in &path {
            loads[l.0] += bw;
            let u = loads[l.0] / network.link(*l).bandwidth_mbps;
            weights[l.0] = wf.link_weight(network, *l, u, threshold);
        }
        out.push(Flow::new(f.request_id, path));
    }
    Ok(out)
}
