//! Static network structure, requests, flows and link utilization accounting.
//!
//! A [`NetworkStructure`] is a directed graph whose links carry a bandwidth (Mbps) and a nominal
//! delay (ms). Requests ask for a time-varying bandwidth between two nodes; each routed request is
//! served by exactly one [`Flow`]. Link utilization is the summed bandwidth of the flows crossing a
//! link divided by the link's bandwidth, and is allowed to exceed 1.0.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type RequestId = u32;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index of a link inside its [`NetworkStructure`].
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub usize);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub src: NodeId,
    pub dst: NodeId,
    pub bandwidth_mbps: f64,
    pub delay_ms: f64,
}

impl Link {
    pub fn new(src: u32, dst: u32, bandwidth_mbps: f64, delay_ms: f64) -> Self {
        Link {
            src: NodeId(src),
            dst: NodeId(dst),
            bandwidth_mbps,
            delay_ms,
        }
    }

    pub fn key(&self) -> (NodeId, NodeId) {
        (self.src, self.dst)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("network has no links")]
    NoLinks,
    #[error("node ids must be dense 0..{expected}, found {found}")]
    SparseNodes { expected: usize, found: NodeId },
    #[error("link {index} references unknown node {node}")]
    UnknownNode { index: usize, node: NodeId },
    #[error("link {index} is a self loop on node {node}")]
    SelfLoop { index: usize, node: NodeId },
    #[error("link {index} has non-positive {field}: {value}")]
    NonPositive {
        index: usize,
        field: &'static str,
        value: f64,
    },
    #[error("duplicate link {src}->{dst}")]
    DuplicateLink { src: NodeId, dst: NodeId },
    #[error("unknown request id {0}")]
    UnknownRequest(RequestId),
    #[error("duplicate request id {0}")]
    DuplicateRequest(RequestId),
    #[error("request {id}: {reason}")]
    InvalidRequest { id: RequestId, reason: String },
}

#[derive(Serialize, Deserialize)]
struct RawNetwork {
    nodes: Vec<NodeId>,
    links: Vec<Link>,
}

/// Directed graph of nodes and links with static properties.
///
/// Node ids are dense (`0..node_count`) and at most one link exists per ordered node pair, so a
/// link is identified either by its [`LinkId`] or by its `(src, dst)` pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNetwork", into = "RawNetwork")]
pub struct NetworkStructure {
    nodes: Vec<NodeId>,
    links: Vec<Link>,
    index: HashMap<(NodeId, NodeId), LinkId>,
    out: Vec<Vec<LinkId>>,
}

impl TryFrom<RawNetwork> for NetworkStructure {
    type Error = NetError;

    fn try_from(raw: RawNetwork) -> Result<Self, NetError> {
        let mut nodes = raw.nodes;
        nodes.sort();
        for (i, n) in nodes.iter().enumerate() {
            if n.0 as usize != i {
                return Err(NetError::SparseNodes {
                    expected: nodes.len(),
                    found: *n,
                });
            }
        }
        NetworkStructure::new(nodes.len(), raw.links)
    }
}

impl From<NetworkStructure> for RawNetwork {
    fn from(n: NetworkStructure) -> Self {
        RawNetwork {
            nodes: n.nodes,
            links: n.links,
        }
    }
}

impl NetworkStructure {
    /// Builds a network over nodes `0..node_count`, checking every link invariant.
    pub fn new(node_count: usize, links: Vec<Link>) -> Result<Self, NetError> {
        let nodes: Vec<NodeId> = (0..node_count as u32).map(NodeId).collect();
        let mut index = HashMap::with_capacity(links.len());
        let mut out = vec![Vec::new(); node_count];
        for (i, link) in links.iter().enumerate() {
            for node in [link.src, link.dst] {
                if node.0 as usize >= node_count {
                    return Err(NetError::UnknownNode { index: i, node });
                }
            }
            if link.src == link.dst {
                return Err(NetError::SelfLoop {
                    index: i,
                    node: link.src,
                });
            }
            for (field, value) in [("bandwidth_mbps", link.bandwidth_mbps), ("delay_ms", link.delay_ms)] {
                if !value.is_finite() || value <= 0.0 {
                    return Err(NetError::NonPositive { index: i, field, value });
                }
            }
            if index.insert(link.key(), LinkId(i)).is_some() {
                return Err(NetError::DuplicateLink {
                    src: link.src,
                    dst: link.dst,
                });
            }
            out[link.src.0 as usize].push(LinkId(i));
        }
        Ok(NetworkStructure {
            nodes,
            links,
            index,
            out,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0]
    }

    pub fn link_ids(&self) -> impl Iterator<Item = LinkId> + '_ {
        (0..self.links.len()).map(LinkId)
    }

    pub fn find_link(&self, src: NodeId, dst: NodeId) -> Option<LinkId> {
        self.index.get(&(src, dst)).copied()
    }

    /// Links leaving `node`, in declaration order.
    pub fn out_links(&self, node: NodeId) -> &[LinkId] {
        self.out.get(node.0 as usize).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn contains_node(&self, node: NodeId) -> bool {
        (node.0 as usize) < self.nodes.len()
    }

    /// Renders a link as `src->dst`.
    pub fn describe_link(&self, id: LinkId) -> String {
        let l = self.link(id);
        format!("{}->{}", l.src, l.dst)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub from_tick: u64,
    pub mbps: f64,
}

/// Bandwidth demanded by a request over time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthProfile {
    Constant(f64),
    /// Piecewise-constant profile; each step holds until the next one starts.
    Steps(Vec<Step>),
}

impl BandwidthProfile {
    pub fn at(&self, tick: u64) -> f64 {
        match self {
            BandwidthProfile::Constant(v) => *v,
            BandwidthProfile::Steps(steps) => steps
                .iter()
                .take_while(|s| s.from_tick <= tick)
                .last()
                .or_else(|| steps.first())
                .map_or(0.0, |s| s.mbps),
        }
    }

    fn check(&self) -> Result<(), String> {
        match self {
            BandwidthProfile::Constant(v) if !(*v >= 0.0 && v.is_finite()) => {
                Err(format!("negative or non-finite bandwidth {v}"))
            }
            BandwidthProfile::Constant(_) => Ok(()),
            BandwidthProfile::Steps(steps) => {
                if steps.is_empty() {
                    return Err("empty step profile".into());
                }
                if let Some(s) = steps.iter().find(|s| !(s.mbps >= 0.0 && s.mbps.is_finite())) {
                    return Err(format!("negative or non-finite bandwidth {}", s.mbps));
                }
                if steps.windows(2).any(|w| w[0].from_tick >= w[1].from_tick) {
                    return Err("steps must have strictly increasing from_tick".into());
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: RequestId,
    pub source: NodeId,
    pub dest: NodeId,
    pub arrival_tick: u64,
    pub bandwidth_profile: BandwidthProfile,
}

impl Request {
    pub fn constant(id: RequestId, source: u32, dest: u32, arrival_tick: u64, mbps: f64) -> Self {
        Request {
            id,
            source: NodeId(source),
            dest: NodeId(dest),
            arrival_tick,
            bandwidth_profile: BandwidthProfile::Constant(mbps),
        }
    }

    pub fn bandwidth_at(&self, tick: u64) -> f64 {
        self.bandwidth_profile.at(tick)
    }

    pub fn validate(&self, network: &NetworkStructure) -> Result<(), NetError> {
        let invalid = |reason: String| NetError::InvalidRequest { id: self.id, reason };
        for (name, node) in [("source", self.source), ("dest", self.dest)] {
            if !network.contains_node(node) {
                return Err(invalid(format!("{name} node {node} not in network")));
            }
        }
        if self.source == self.dest {
            return Err(invalid("source equals dest".into()));
        }
        self.bandwidth_profile.check().map_err(invalid)
    }
}

/// Requests keyed by id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RequestTable {
    by_id: BTreeMap<RequestId, Request>,
}

impl RequestTable {
    pub fn new(requests: impl IntoIterator<Item = Request>) -> Result<Self, NetError> {
        let mut by_id = BTreeMap::new();
        for r in requests {
            let id = r.id;
            if by_id.insert(id, r).is_some() {
                return Err(NetError::DuplicateRequest(id));
            }
        }
        Ok(RequestTable { by_id })
    }

    pub fn get(&self, id: RequestId) -> Result<&Request, NetError> {
        self.by_id.get(&id).ok_or(NetError::UnknownRequest(id))
    }

    /// Requests in id order.
    pub fn iter(&self) -> impl Iterator<Item = &Request> {
        self.by_id.values()
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }
}

/// The directed link path serving one request.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Flow {
    pub request_id: RequestId,
    pub path: Vec<LinkId>,
}

impl Flow {
    pub fn new(request_id: RequestId, path: Vec<LinkId>) -> Self {
        Flow { request_id, path }
    }

    pub fn contains(&self, link: LinkId) -> bool {
        self.path.contains(&link)
    }

    /// Node sequence visited by the path (empty for an empty path).
    pub fn nodes(&self, network: &NetworkStructure) -> Vec<NodeId> {
        let mut nodes = Vec::with_capacity(self.path.len() + 1);
        if let Some(first) = self.path.first() {
            nodes.push(network.link(*first).src);
        }
        nodes.extend(self.path.iter().map(|l| network.link(*l).dst));
        nodes
    }

    pub fn describe(&self, network: &NetworkStructure) -> String {
        self.nodes(network)
            .iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join("->")
    }

    pub fn delay_ms(&self, network: &NetworkStructure) -> f64 {
        self.path.iter().map(|l| network.link(*l).delay_ms).sum()
    }
}

/// Per-request bandwidth frozen at one tick.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Demands {
    mbps: BTreeMap<RequestId, f64>,
}

impl Demands {
    /// Bandwidth of every request that has arrived by `tick`.
    pub fn sample(requests: &RequestTable, tick: u64) -> Self {
        let mbps = requests
            .iter()
            .filter(|r| r.arrival_tick <= tick)
            .map(|r| (r.id, r.bandwidth_at(tick)))
            .collect();
        Demands { mbps }
    }

    /// Bandwidth at `tick` of exactly the requests served by `flows`.
    pub fn for_flows(requests: &RequestTable, flows: &[Flow], tick: u64) -> Result<Self, NetError> {
        let mut mbps = BTreeMap::new();
        for f in flows {
            mbps.insert(f.request_id, requests.get(f.request_id)?.bandwidth_at(tick));
        }
        Ok(Demands { mbps })
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (RequestId, f64)>) -> Self {
        Demands {
            mbps: pairs.into_iter().collect(),
        }
    }

    pub fn get(&self, id: RequestId) -> Result<f64, NetError> {
        self.mbps.get(&id).copied().ok_or(NetError::UnknownRequest(id))
    }

    pub fn insert(&mut self, id: RequestId, mbps: f64) {
        self.mbps.insert(id, mbps);
    }
}

/// Throughput (Mbps) carried by every link, indexed by [`LinkId`].
pub fn link_loads(network: &NetworkStructure, flows: &[Flow], demands: &Demands) -> Result<Vec<f64>, NetError> {
    let mut loads = vec![0.0; network.link_count()];
    for f in flows {
        let bw = demands.get(f.request_id)?;
        for l in &f.path {
            loads[l.0] += bw;
        }
    }
    Ok(loads)
}

/// Converts per-link loads into utilization ratios.
pub fn utilizations(network: &NetworkStructure, loads: &[f64]) -> Vec<f64> {
    loads
        .iter()
        .zip(network.links())
        .map(|(load, link)| load / link.bandwidth_mbps)
        .collect()
}

/// Highest utilization and its link; ties go to the lexicographically smallest `(src, dst)`.
pub fn argmax_utilization(network: &NetworkStructure, util: &[f64]) -> Option<(LinkId, f64)> {
    let mut best: Option<(LinkId, f64)> = None;
    for id in network.link_ids() {
        let u = util[id.0];
        best = match best {
            None => Some((id, u)),
            Some((b, bu)) => {
                if u > bu || (u == bu && network.link(id).key() < network.link(b).key()) {
                    Some((id, u))
                } else {
                    Some((b, bu))
                }
            }
        };
    }
    best
}

pub fn throughput_of_link(flows: &[Flow], requests: &RequestTable, link: LinkId, tick: u64) -> Result<f64, NetError> {
    let mut total = 0.0;
    for f in flows {
        let bw = requests.get(f.request_id)?.bandwidth_at(tick);
        if f.contains(link) {
            total += bw;
        }
    }
    Ok(total)
}

pub fn utilization_of_link(
    network: &NetworkStructure,
    flows: &[Flow],
    requests: &RequestTable,
    link: LinkId,
    tick: u64,
) -> Result<f64, NetError> {
    Ok(throughput_of_link(flows, requests, link, tick)? / network.link(link).bandwidth_mbps)
}

pub fn max_utilization(
    network: &NetworkStructure,
    flows: &[Flow],
    requests: &RequestTable,
    tick: u64,
) -> Result<(LinkId, f64), NetError> {
    let demands = Demands::for_flows(requests, flows, tick)?;
    let util = utilizations(network, &link_loads(network, flows, &demands)?);
    argmax_utilization(network, &util).ok_or(NetError::NoLinks)
}

/// Snapshot of the flows and per-link utilization at one tick.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkState {
    pub tick: u64,
    pub flows: Vec<Flow>,
    pub util: Vec<f64>,
}

impl NetworkState {
    pub fn observe(
        network: &NetworkStructure,
        flows: Vec<Flow>,
        demands: &Demands,
        tick: u64,
    ) -> Result<Self, NetError> {
        let util = utilizations(network, &link_loads(network, &flows, demands)?);
        Ok(NetworkState { tick, flows, util })
    }

    pub fn max_utilization(&self, network: &NetworkStructure) -> Option<(LinkId, f64)> {
        argmax_utilization(network, &self.util)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FlowViolation {
    #[error("flow serves request {flow} but was checked against request {request}")]
    RequestMismatch { flow: RequestId, request: RequestId },
    #[error("flow has no links")]
    Empty,
    #[error("link index {0} is not in the network")]
    UnknownLink(usize),
    #[error("path starts at {found}, request source is {expected}")]
    WrongSource { expected: NodeId, found: NodeId },
    #[error("path ends at {found}, request dest is {expected}")]
    WrongDest { expected: NodeId, found: NodeId },
    #[error("links {at} and {next} are not contiguous", next = at + 1)]
    NonContiguous { at: usize },
    #[error("path revisits node {0}")]
    NotSimple(NodeId),
}

/// Checks that `flow` is a simple directed path from the request's source to its dest.
pub fn validate_flow(flow: &Flow, request: &Request, network: &NetworkStructure) -> Result<(), FlowViolation> {
    if flow.request_id != request.id {
        return Err(FlowViolation::RequestMismatch {
            flow: flow.request_id,
            request: request.id,
        });
    }
    if flow.path.is_empty() {
        return Err(FlowViolation::Empty);
    }
    if let Some(bad) = flow.path.iter().find(|l| l.0 >= network.link_count()) {
        return Err(FlowViolation::UnknownLink(bad.0));
    }
    let first = network.link(flow.path[0]);
    if first.src != request.source {
        return Err(FlowViolation::WrongSource {
            expected: request.source,
            found: first.src,
        });
    }
    for (i, pair) in flow.path.windows(2).enumerate() {
        if network.link(pair[0]).dst != network.link(pair[1]).src {
            return Err(FlowViolation::NonContiguous { at: i });
        }
    }
    let last = network.link(*flow.path.last().unwrap());
    if last.dst != request.dest {
        return Err(FlowViolation::WrongDest {
            expected: request.dest,
            found: last.dst,
        });
    }
    let mut seen = vec![false; network.node_count()];
    for n in flow.nodes(network) {
        if std::mem::replace(&mut seen[n.0 as usize], true) {
            return Err(FlowViolation::NotSimple(n));
        }
    }
    Ok(())
}
