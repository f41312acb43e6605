//! Link weights and shortest-weighted-path data forwarding.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{to_link_weight, EvalContext, WeightExpr};
use crate::netmodel::{link_loads, utilizations, Demands, Flow, LinkId, NetError, NetworkStructure, NodeId, Request};

/// How the forwarding layer turns link state into integer weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightFunction {
    Unit,
    InverseBandwidth { reference_mbps: f64 },
    Learned { expr: WeightExpr },
}

impl WeightFunction {
    /// Inverse-bandwidth weights referenced to the fastest link, which gets weight 1.
    pub fn inverse_bandwidth_for(network: &NetworkStructure) -> Self {
        let reference_mbps = network.links().iter().map(|l| l.bandwidth_mbps).fold(0.0, f64::max);
        WeightFunction::InverseBandwidth {
            reference_mbps: if reference_mbps > 0.0 { reference_mbps } else { 1.0 },
        }
    }

    pub fn learned(expr: WeightExpr) -> Self {
        WeightFunction::Learned { expr }
    }

    pub fn link_weight(&self, network: &NetworkStructure, link: LinkId, utilization: f64, threshold: f64) -> u64 {
        let l = network.link(link);
        match self {
            WeightFunction::Unit => 1,
            WeightFunction::InverseBandwidth { reference_mbps } => {
                (reference_mbps / l.bandwidth_mbps).round().max(1.0) as u64
            }
            WeightFunction::Learned { expr } => to_link_weight(
                expr,
                &EvalContext {
                    bandwidth_mbps: l.bandwidth_mbps,
                    delay_ms: l.delay_ms,
                    utilization,
                    threshold,
                },
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RoutingError {
    #[error("source and destination are both {0}")]
    SameEndpoints(NodeId),
    #[error("node {0} is not in the network")]
    UnknownNode(NodeId),
    #[error("no path from {src} to {dst}")]
    Unreachable { src: NodeId, dst: NodeId },
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Weight of every link given per-link utilization.
pub fn compute_link_weights(network: &NetworkStructure, util: &[f64], wf: &WeightFunction, threshold: f64) -> Vec<u64> {
    network
        .link_ids()
        .map(|id| wf.link_weight(network, id, util[id.0], threshold))
        .collect()
}

/// Weights for the state given by `flows` carrying `demands`.
pub fn weights_for_state(
    network: &NetworkStructure,
    flows: &[Flow],
    demands: &Demands,
    wf: &WeightFunction,
    threshold: f64,
) -> Result<Vec<u64>, NetError> {
    let util = utilizations(network, &link_loads(network, flows, demands)?);
    Ok(compute_link_weights(network, &util, wf, threshold))
}

/// Minimum-weight path from `src` to `dst`.
///
/// Among equal-weight paths the one with fewer hops wins, then the lexicographically smallest
/// node sequence, so the result is a deterministic function of the inputs.
pub fn shortest_weighted_path(
    network: &NetworkStructure,
    weights: &[u64],
    src: NodeId,
    dst: NodeId,
) -> Result<Vec<LinkId>, RoutingError> {
    for n in [src, dst] {
        if !network.contains_node(n) {
            return Err(RoutingError::UnknownNode(n));
        }
    }
    if src == dst {
        return Err(RoutingError::SameEndpoints(src));
    }
    // label: (total weight, hops, node sequence); extending a path preserves label order
    type Label = (u64, u32, Vec<NodeId>);
    let n = network.node_count();
    let mut best: Vec<Option<(Label, Vec<LinkId>)>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    best[src.0 as usize] = Some(((0, 0, vec![src]), Vec::new()));
    heap.push(Reverse((0u64, 0u32, vec![src])));

    while let Some(Reverse(label)) = heap.pop() {
        let at = *label.2.last().expect("non-empty");
        let ai = at.0 as usize;
        if done[ai] || best[ai].as_ref().map(|b| &b.0) != Some(&label) {
            continue;
        }
        done[ai] = true;
        if at == dst {
            break;
        }
        let path = best[ai].as_ref().expect("set").1.clone();
        for &lid in network.out_links(at) {
            let next = network.link(lid).dst;
            let ni = next.0 as usize;
            if done[ni] {
                continue;
            }
            let mut nodes = label.2.clone();
            nodes.push(next);
            let cand = (label.0.saturating_add(weights[lid.0]), label.1 + 1, nodes);
            if best[ni].as_ref().is_none_or(|b| cand < b.0) {
                let mut p = path.clone();
                p.push(lid);
                heap.push(Reverse(cand.clone()));
                best[ni] = Some((cand, p));
            }
        }
    }
    best[dst.0 as usize]
        .take()
        .map(|(_, p)| p)
        .ok_or(RoutingError::Unreachable { src, dst })
}

pub fn path_weight(path: &[LinkId], weights: &[u64]) -> u64 {
    path.iter().map(|l| weights[l.0]).sum()
}

/// Routes a newly arrived request on the current state; existing flows are left untouched.
pub fn route_request(
    network: &NetworkStructure,
    flows: &[Flow],
    demands: &Demands,
    wf: &WeightFunction,
    threshold: f64,
    request: &Request,
) -> Result<Flow, RoutingError> {
    let weights = weights_for_state(network, flows, demands, wf, threshold)?;
    let path = shortest_weighted_path(network, &weights, request.source, request.dest)?;
    Ok(Flow::new(request.id, path))
}
