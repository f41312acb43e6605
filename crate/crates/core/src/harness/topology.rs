//! Synthetic topologies: complete graphs and graphs of node-disjoint paths between two nodes.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::{Link, NetError, NetworkStructure, NodeId};

pub const DEFAULT_BANDWIDTH_MBPS: f64 = 100.0;
pub const DEFAULT_DELAY_MS: f64 = 25.0;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("a complete graph needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("{p} disjoint paths of hop lengths 1..={p} need {expected} nodes, got {n}")]
    InconsistentMnp { n: usize, p: usize, expected: usize },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Io(#[from] super::scenario_io::ScenarioIoError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologySpec {
    Full { n: usize },
    Mnp { n: usize, p: usize },
    FromFile(PathBuf),
}

impl TopologySpec {
    pub fn build(&self) -> Result<NetworkStructure, TopologyError> {
        match self {
            TopologySpec::Full { n } => gen_full_topology(*n),
            TopologySpec::Mnp { n, p } => Ok(gen_mnp_topology(*n, *p)?.0),
            TopologySpec::FromFile(path) => Ok(super::scenario_io::load_network(path)?),
        }
    }
}

/// Complete directed graph on `n` nodes with default link properties.
pub fn gen_full_topology(n: usize) -> Result<NetworkStructure, TopologyError> {
    if n < 2 {
        return Err(TopologyError::TooFewNodes(n));
    }
    let mut links = Vec::with_capacity(n * (n - 1));
    for a in 0..n as u32 {
        for b in 0..n as u32 {
            if a != b {
                links.push(Link::new(a, b, DEFAULT_BANDWIDTH_MBPS, DEFAULT_DELAY_MS));
            }
        }
    }
    Ok(NetworkStructure::new(n, links)?)
}

/// Node count of `p` disjoint paths with hop lengths `1..=p` between two end nodes.
pub fn mnp_node_count(p: usize) -> usize {
    2 + p * p.saturating_sub(1) / 2
}

/// `p` node-disjoint bidirectional paths between node 0 (source) and node 1 (destination).
///
/// Path `k` has `k` hops; intermediates are numbered consecutively from 2 in path order.
pub fn gen_mnp_topology(n: usize, p: usize) -> Result<(NetworkStructure, NodeId, NodeId), TopologyError> {
    let expected = mnp_node_count(p);
    if p == 0 || n != expected {
        return Err(TopologyError::InconsistentMnp { n, p, expected });
    }
    let mut links = Vec::new();
    let mut next = 2u32;
    for k in 1..=p {
        let mut hops = vec![0u32];
        for _ in 1..k {
            hops.push(next);
            next += 1;
        }
        hops.push(1);
        for w in hops.windows(2) {
            links.push(Link::new(w[0], w[1], DEFAULT_BANDWIDTH_MBPS, DEFAULT_DELAY_MS));
            links.push(Link::new(w[1], w[0], DEFAULT_BANDWIDTH_MBPS, DEFAULT_DELAY_MS));
        }
    }
    Ok((NetworkStructure::new(n, links)?, NodeId(0), NodeId(1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::k_shortest_paths;

    #[test]
    fn full_link_counts() {
        for (n, links) in [(2, 2), (5, 20), (10, 90)] {
            assert_eq!(gen_full_topology(n).unwrap().link_count(), links);
        }
        assert!(matches!(gen_full_topology(1), Err(TopologyError::TooFewNodes(1))));
    }

    #[test]
    fn mnp_shapes() {
        let (n, s, d) = gen_mnp_topology(5, 3).unwrap();
        let paths = k_shortest_paths(&n, s, d, 10).unwrap();
        assert_eq!(paths.iter().map(Vec::len).collect::<Vec<_>>(), vec![1, 2, 3]);
        let nodes: Vec<Vec<u32>> = paths
            .iter()
            .map(|p| {
                let mut v = vec![0];
                v.extend(p.iter().map(|l| n.link(*l).dst.0));
                v
            })
            .collect();
        assert_eq!(nodes, vec![vec![0, 1], vec![0, 2, 1], vec![0, 3, 4, 1]]);

        let (n, s, d) = gen_mnp_topology(8, 4).unwrap();
        let paths = k_shortest_paths(&n, s, d, 10).unwrap();
        assert_eq!(paths.iter().map(Vec::len).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
        assert_eq!(n.link_count(), 20);

        let (n, _, _) = gen_mnp_topology(2, 1).unwrap();
        assert_eq!(n.link_count(), 2);
        assert!(matches!(
            gen_mnp_topology(6, 3),
            Err(TopologyError::InconsistentMnp { expected: 5, .. })
        ));
    }

    #[test]
    fn mnp_paths_are_node_disjoint() {
        for p in 1..=6 {
            let (n, s, d) = gen_mnp_topology(mnp_node_count(p), p).unwrap();
            let paths = k_shortest_paths(&n, s, d, 100).unwrap();
            assert_eq!(paths.len(), p);
            let mut seen = std::collections::BTreeSet::new();
            for path in &paths {
                for l in &path[..path.len() - 1] {
                    assert!(seen.insert(n.link(*l).dst));
                }
            }
        }
    }
}
