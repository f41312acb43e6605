//! Three-part fitness: peak utilization, re-routing cost and total delay.

use std::collections::HashMap;

use crate::netmodel::{link_loads, utilizations, Demands, Flow, LinkId, NetworkStructure};

use super::PlanError;

/// Fitness assigned to candidates whose re-routing hits an unreachable endpoint.
pub const INFEASIBLE_FITNESS: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitnessComponents {
    /// Highest link utilization under the new flows.
    pub fit1: f64,
    /// Summed link insertions and deletions from old to new flows.
    pub fit2: usize,
    /// Summed link delay (ms) over every (flow, link) incidence of the new flows.
    pub fit3: f64,
}

/// Length of the longest common subsequence of two link sequences.
pub fn lcs_len(a: &[LinkId], b: &[LinkId]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Link insertions plus deletions needed to turn `f` into `g`.
pub fn lcs_flow_distance(f: &Flow, g: &Flow) -> usize {
    f.path.len() + g.path.len() - 2 * lcs_len(&f.path, &g.path)
}

pub fn fitness_components(
    network: &NetworkStructure,
    new_flows: &[Flow],
    old_flows: &[Flow],
    demands: &Demands,
) -> Result<FitnessComponents, PlanError> {
    if new_flows.len() != old_flows.len() {
        return Err(PlanError::RequestSetMismatch);
    }
    let old: HashMap<_, _> = old_flows.iter().map(|f| (f.request_id, f)).collect();
    let mut fit2 = 0;
    for f in new_flows {
        let before = old.get(&f.request_id).ok_or(PlanError::RequestSetMismatch)?;
        fit2 += lcs_flow_distance(before, f);
    }
    let util = utilizations(network, &link_loads(network, new_flows, demands)?);
    let fit1 = util.iter().copied().fold(0.0, f64::max);
    let fit3 = new_flows.iter().map(|f| f.delay_ms(network)).sum();
    Ok(FitnessComponents { fit1, fit2, fit3 })
}

/// `x / (x + 1)`, mapping `[0, inf)` onto `[0, 1)`.
pub fn normalize(x: f64) -> f64 {
    x / (x + 1.0)
}

/// Piecewise fitness in `[0, 3]`; values of 2 or more mean congestion is not resolved.
pub fn combined_fitness(fit1: f64, fit2: f64, fit3: f64, threshold: f64) -> f64 {
    weighted_fitness(fit1, fit2, fit3, threshold, 1.0, 1.0)
}

pub fn weighted_fitness(fit1: f64, fit2: f64, fit3: f64, threshold: f64, cost_weight: f64, delay_weight: f64) -> f64 {
    if fit1 >= threshold {
        normalize(fit1) + 2.0
    } else {
        cost_weight * normalize(fit2) + delay_weight * normalize(fit3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{Link, NodeId};
    use proptest::prelude::*;

    fn three_paths() -> NetworkStructure {
        let mut links = Vec::new();
        for (a, b) in [(0, 1), (0, 2), (2, 1), (0, 3), (3, 4), (4, 1)] {
            links.push(Link::new(a, b, 100.0, 25.0));
            links.push(Link::new(b, a, 100.0, 25.0));
        }
        NetworkStructure::new(5, links).unwrap()
    }

    fn lid(n: &NetworkStructure, a: u32, b: u32) -> LinkId {
        n.find_link(NodeId(a), NodeId(b)).unwrap()
    }

    #[test]
    fn lcs_distance_examples() {
        let n = three_paths();
        let direct = Flow::new(1, vec![lid(&n, 0, 1)]);
        let middle = Flow::new(1, vec![lid(&n, 0, 2), lid(&n, 2, 1)]);
        assert_eq!(lcs_flow_distance(&direct, &direct), 0);
        assert_eq!(lcs_flow_distance(&direct, &middle), 3);
        // a->b->c->d vs a->b->e->d share only a->b
        let (a, b, c, d, e) = (LinkId(0), LinkId(1), LinkId(2), LinkId(3), LinkId(4));
        let f = Flow::new(1, vec![a, b, c]);
        let g = Flow::new(1, vec![a, d, e]);
        assert_eq!(lcs_flow_distance(&f, &g), 4);
    }

    #[test]
    fn component_examples() {
        let n = three_paths();
        let d = lid(&n, 0, 1);
        let mid = vec![lid(&n, 0, 2), lid(&n, 2, 1)];
        let demands = Demands::from_pairs([(1, 30.0), (2, 30.0), (3, 30.0)]);
        let old = vec![Flow::new(1, vec![d]), Flow::new(2, vec![d]), Flow::new(3, vec![d])];
        let c = fitness_components(&n, &old, &old, &demands).unwrap();
        assert_eq!(c.fit2, 0);

        let new = vec![Flow::new(1, vec![d]), Flow::new(2, vec![d]), Flow::new(3, mid.clone())];
        let c = fitness_components(&n, &new, &old, &demands).unwrap();
        assert!((c.fit1 - 0.6).abs() < 1e-12);
        assert_eq!(c.fit2, 3);
        assert_eq!(c.fit3, 100.0);

        let single = vec![Flow::new(1, mid)];
        let demands = Demands::from_pairs([(1, 10.0)]);
        assert_eq!(fitness_components(&n, &single, &single, &demands).unwrap().fit3, 50.0);
    }

    #[test]
    fn mismatched_request_sets() {
        let n = three_paths();
        let demands = Demands::from_pairs([(1, 1.0), (2, 1.0)]);
        let a = vec![Flow::new(1, vec![LinkId(0)])];
        let b = vec![Flow::new(2, vec![LinkId(0)])];
        assert_eq!(
            fitness_components(&n, &a, &b, &demands),
            Err(PlanError::RequestSetMismatch)
        );
        assert_eq!(
            fitness_components(&n, &a, &[], &demands),
            Err(PlanError::RequestSetMismatch)
        );
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(0.0), 0.0);
        assert_eq!(normalize(1.0), 0.5);
        assert_eq!(normalize(3.0), 0.75);
    }

    #[test]
    fn combined_examples() {
        assert!((combined_fitness(0.9, 0.0, 0.0, 0.8) - (0.9 / 1.9 + 2.0)).abs() < 1e-12);
        assert!((combined_fitness(0.9, 0.0, 0.0, 0.8) - 2.4737).abs() < 1e-4);
        assert_eq!(combined_fitness(0.6, 0.0, 0.0, 0.8), 0.0);
        assert!((combined_fitness(0.6, 3.0, 100.0, 0.8) - (0.75 + 100.0 / 101.0)).abs() < 1e-12);
        assert!((combined_fitness(0.6, 3.0, 100.0, 0.8) - 1.7401).abs() < 1e-4);
        // exactly at the threshold is penalized
        assert!(combined_fitness(0.8, 0.0, 0.0, 0.8) >= 2.0);
    }

    fn brute_lcs(a: &[LinkId], b: &[LinkId]) -> usize {
        // longest subsequence of `a` (by subset enumeration) that is also a subsequence of `b`
        let mut best = 0;
        for mask in 0u32..(1 << a.len()) {
            let sub: Vec<_> = (0..a.len()).filter(|i| mask & (1 << i) != 0).map(|i| a[i]).collect();
            let mut it = b.iter();
            if sub.iter().all(|x| it.any(|y| y == x)) {
                best = best.max(sub.len());
            }
        }
        best
    }

    proptest! {
        #[test]
        fn lcs_matches_subset_enumeration(
            a in proptest::collection::vec(0usize..6, 0..=8),
            b in proptest::collection::vec(0usize..6, 0..=8),
        ) {
            let a: Vec<_> = a.into_iter().map(LinkId).collect();
            let b: Vec<_> = b.into_iter().map(LinkId).collect();
            let expected = a.len() + b.len() - 2 * brute_lcs(&a, &b);
            prop_assert_eq!(lcs_flow_distance(&Flow::new(0, a), &Flow::new(0, b)), expected);
        }

        #[test]
        fn combined_range_and_threshold(fit1 in 0.0f64..5.0, fit2 in 0.0f64..1e6, fit3 in 0.0f64..1e6) {
            let f = combined_fitness(fit1, fit2, fit3, 0.8);
            prop_assert!((0.0..=3.0).contains(&f));
            prop_assert_eq!(f < 2.0, fit1 < 0.8);
        }
    }
}
