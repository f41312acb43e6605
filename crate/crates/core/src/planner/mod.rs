//! Genetic-programming planner.
//!
//! On a congested snapshot the planner first picks a minimal random set of flows whose removal
//! clears congestion. It then evolves link-weight expressions; each candidate is scored by
//! re-routing the removed flows under the weights it induces and measuring peak utilization,
//! re-routing cost and delay. The best expression and its re-routed flows are returned, together
//! with the best half of the final population for seeding the next invocation.

pub mod fitness;
pub mod surrogate;

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Grammar, WeightExpr};
use crate::netmodel::{Demands, Flow, LinkId, NetError, NetworkStructure, RequestId};
use crate::routing::RoutingError;

pub use fitness::{
    combined_fitness, fitness_components, lcs_flow_distance, normalize, weighted_fitness, FitnessComponents,
    INFEASIBLE_FITNESS,
};
pub use surrogate::{compute_surrogate, find_flows_causing_congestion, split_flows, BadFlowSelection};

/// Fitness values below this mean the candidate clears congestion.
pub const RESOLVED_BELOW: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("new and old flows do not serve the same requests")]
    RequestSetMismatch,
    #[error("congested link {0:?} carries no removable flow")]
    NoRemovableFlow(LinkId),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpConfig {
    pub population_size: usize,
    pub max_generations: usize,
    pub mutation_rate: f64,
    pub crossover_rate: f64,
    pub tournament_size: usize,
    pub grammar: Grammar,
    pub threshold: f64,
    pub early_stop_below: f64,
    pub cost_weight: f64,
    pub delay_weight: f64,
    pub bad_flow_selection: BadFlowSelection,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            population_size: 10,
            max_generations: 200,
            mutation_rate: 0.1,
            crossover_rate: 0.7,
            tournament_size: 7,
            grammar: Grammar::default(),
            threshold: 0.8,
            early_stop_below: 2.0,
            cost_weight: 1.0,
            delay_weight: 1.0,
            bad_flow_selection: BadFlowSelection::Random,
        }
    }
}

impl GpConfig {
    pub fn with_generations(mut self, max_generations: usize) -> Self {
        self.max_generations = max_generations;
        self
    }

    /// Half the population, rounded up.
    pub fn best_sol_capacity(&self) -> usize {
        self.population_size.div_ceil(2)
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, rate) in [
            ("mutation_rate", self.mutation_rate),
            ("crossover_rate", self.crossover_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(format!("{name} must lie in [0, 1], got {rate}"));
            }
        }
        if self.population_size == 0 || self.tournament_size == 0 || self.grammar.max_depth == 0 {
            return Err("population_size, tournament_size and max_depth must be at least 1".into());
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(format!("threshold must lie in (0, 1], got {}", self.threshold));
        }
        if self.grammar.const_min > self.grammar.const_max {
            return Err("const_min exceeds const_max".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Individual {
    pub expr: WeightExpr,
    pub fitness: Option<f64>,
}

impl Individual {
    pub fn new(expr: WeightExpr) -> Self {
        Individual { expr, fitness: None }
    }

    fn score(&self) -> f64 {
        self.fitness.unwrap_or(INFEASIBLE_FITNESS)
    }
}

/// Expressions carried from one planner invocation to the next.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BestSol {
    pub capacity: usize,
    pub entries: Vec<WeightExpr>,
}

impl BestSol {
    pub fn new(capacity: usize) -> Self {
        BestSol {
            capacity,
            entries: Vec::new(),
        }
    }

    pub fn with_entries(capacity: usize, mut entries: Vec<WeightExpr>) -> Self {
        entries.truncate(capacity);
        BestSol { capacity, entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationSummary {
    pub generation: usize,
    pub best_fitness: f64,
    pub best_expr: WeightExpr,
}

#[derive(Clone, Debug)]
pub struct PlannerOutput {
    pub best_expr: WeightExpr,
    pub best_fitness: f64,
    /// Re-routed flows, in the order of the input flows.
    pub new_flows: Vec<Flow>,
    pub bad_flows: Vec<RequestId>,
    pub best_sol_out: BestSol,
    pub generations_used: usize,
    pub evaluations: usize,
    pub history: Vec<GenerationSummary>,
    pub wall_time: Duration,
}

impl PlannerOutput {
    pub fn resolved(&self) -> bool {
        self.best_fitness < RESOLVED_BELOW
    }
}

/// Frozen inputs shared by every fitness evaluation of one planner run.
pub(crate) struct EvalFrame<'a> {
    pub network: &'a NetworkStructure,
    pub old_flows: &'a [Flow],
    pub kept: Vec<Flow>,
    pub bad: Vec<Flow>,
    pub demands: &'a Demands,
    pub cfg: &'a GpConfig,
}

impl<'a> EvalFrame<'a> {
    pub fn new(
        network: &'a NetworkStructure,
        old_flows: &'a [Flow],
        bad_indices: &[usize],
        demands: &'a Demands,
        cfg: &'a GpConfig,
    ) -> Self {
        let (kept, bad) = split_flows(old_flows, bad_indices);
        EvalFrame {
            network,
            old_flows,
            kept,
            bad,
            demands,
            cfg,
        }
    }

    pub fn score_flows(&self, new_flows: &[Flow]) -> Result<f64, PlanError> {
        let c = fitness_components(self.network, new_flows, self.old_flows, self.demands)?;
        Ok(weighted_fitness(
            c.fit1,
            c.fit2 as f64,
            c.fit3,
            self.cfg.threshold,
            self.cfg.cost_weight,
            self.cfg.delay_weight,
        ))
    }

    /// Fitness of `expr` and the flows it produces; unreachable re-routes score the maximum.
    pub fn evaluate(&self, expr: &WeightExpr) -> Result<(f64, Option<Vec<Flow>>), PlanError> {
        match compute_surrogate(
            self.network,
            &self.kept,
            &self.bad,
            self.demands,
            expr,
            self.cfg.threshold,
        ) {
            Ok(flows) => Ok((self.score_flows(&flows)?, Some(flows))),
            Err(RoutingError::Unreachable { .. }) => Ok((INFEASIBLE_FITNESS, None)),
            Err(e) => Err(e.into()),
        }
    }
}

/// Puts `new` flows back into the order of `old`, matched by request.
pub(crate) fn in_original_order(old: &[Flow], new: Vec<Flow>) -> Vec<Flow> {
    let mut by_req: HashMap<RequestId, Flow> = new.into_iter().map(|f| (f.request_id, f)).collect();
    old.iter().filter_map(|f| by_req.remove(&f.request_id)).collect()
}

/// Index of the tournament winner: the lowest fitness among `size` distinct random entrants
/// (the whole population when `size` is at least its length), ties to the lower index.
pub fn tournament<R: Rng + ?Sized>(scores: &[f64], size: usize, rng: &mut R) -> usize {
    let entrants: Vec<usize> = if size >= scores.len() {
        (0..scores.len()).collect()
    } else {
        index::sample(rng, scores.len(), size).into_vec()
    };
    entrants
        .into_iter()
        .min_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)))
        .expect("non-empty population")
}

/// Offspring for the next generation: tournament-selected pairs are crossed with probability
/// `crossover_rate` (cloned otherwise) and each child is mutated with probability
/// `mutation_rate`.
pub fn breed<R: Rng + ?Sized>(population: &[Individual], rng: &mut R, cfg: &GpConfig) -> Vec<Individual> {
    let scores: Vec<f64> = population.iter().map(Individual::score).collect();
    let mut out = Vec::with_capacity(cfg.population_size);
    while out.len() < cfg.population_size {
        let a = &population[tournament(&scores, cfg.tournament_size, rng)].expr;
        let b = &population[tournament(&scores, cfg.tournament_size, rng)].expr;
        let (c1, c2) = if rng.gen::<f64>() < cfg.crossover_rate {
            cfg.grammar.crossover(rng, a, b)
        } else {
            (a.clone(), b.clone())
        };
        for child in [c1, c2] {
            let child = if rng.gen::<f64>() < cfg.mutation_rate {
                cfg.grammar.mutate(rng, &child)
            } else {
                child
            };
            if out.len() < cfg.population_size {
                out.push(Individual::new(child));
            }
        }
    }
    out
}

/// Runs the planner on a frozen snapshot of `old_flows` carrying `demands`.
///
/// The initial population is `best_sol_in` (re-evaluated here) topped up with grow trees. The
/// search stops once the best fitness drops below `early_stop_below` or after `max_generations`
/// rounds of breeding, and reports the best individual seen in any generation.
pub fn run_genplan<R: Rng + ?Sized>(
    network: &NetworkStructure,
    old_flows: &[Flow],
    demands: &Demands,
    best_sol_in: &BestSol,
    cfg: &GpConfig,
    rng: &mut R,
) -> Result<PlannerOutput, PlanError> {
    let started = Instant::now();
    let bad_idx =
        find_flows_causing_congestion(network, old_flows, demands, cfg.threshold, cfg.bad_flow_selection, rng)?;
    let frame = EvalFrame::new(network, old_flows, &bad_idx, demands, cfg);

    let mut population: Vec<Individual> = best_sol_in
        .entries
        .iter()
        .take(cfg.population_size)
        .cloned()
        .map(Individual::new)
        .collect();
    while population.len() < cfg.population_size {
        population.push(Individual::new(cfg.grammar.grow(rng, cfg.grammar.max_depth)));
    }

    let mut best: Option<(WeightExpr, f64, Vec<Flow>)> = None;
    let mut history = Vec::new();
    let mut evaluations = 0;
    let mut generation = 0;
    loop {
        for ind in population.iter_mut() {
            let (fit, flows) = frame.evaluate(&ind.expr)?;
            evaluations += 1;
            ind.fitness = Some(fit);
            if let Some(flows) = flows {
                if best.as_ref().is_none_or(|b| fit < b.1) {
                    best = Some((ind.expr.clone(), fit, flows));
                }
            }
        }
        let gen_best = population
            .iter()
            .min_by(|a, b| a.score().total_cmp(&b.score()))
            .expect("non-empty population");
        history.push(GenerationSummary {
            generation,
            best_fitness: gen_best.score(),
            best_expr: gen_best.expr.clone(),
        });
        let best_fit = best.as_ref().map_or(INFEASIBLE_FITNESS, |b| b.1);
        if best_fit < cfg.early_stop_below || generation >= cfg.max_generations {
            break;
        }
        population = breed(&population, rng, cfg);
        generation += 1;
    }

    let best_sol_out = select_best_sol(&population, best.as_ref().map(|b| &b.0), cfg.best_sol_capacity());
    let (best_expr, best_fitness, flows) = match best {
        Some(b) => b,
        // every candidate was infeasible: keep the current flows
        None => (population[0].expr.clone(), INFEASIBLE_FITNESS, old_flows.to_vec()),
    };
    Ok(PlannerOutput {
        best_expr,
        best_fitness,
        new_flows: in_original_order(old_flows, flows),
        bad_flows: bad_idx.iter().map(|&i| old_flows[i].request_id).collect(),
        best_sol_out,
        generations_used: generation,
        evaluations,
        history,
        wall_time: started.elapsed(),
    })
}

/// Best distinct expressions of the final generation; the overall best replaces the last slot
/// when it is not already among them.
fn select_best_sol(population: &[Individual], overall: Option<&WeightExpr>, capacity: usize) -> BestSol {
    let mut ranked: Vec<&Individual> = population.iter().collect();
    ranked.sort_by(|a, b| a.score().total_cmp(&b.score()));
    let mut entries: Vec<WeightExpr> = Vec::with_capacity(capacity);
    for ind in ranked {
        if entries.len() == capacity {
            break;
        }
        if !entries.contains(&ind.expr) {
            entries.push(ind.expr.clone());
        }
    }
    if let Some(o) = overall {
        if capacity >= 2 && !entries.contains(o) {
            if entries.len() == capacity {
                entries.pop();
            }
            entries.push(o.clone());
        }
    }
    BestSol { capacity, entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{Link, NodeId};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn three_paths() -> NetworkStructure {
        let mut links = Vec::new();
        for (a, b) in [(0, 1), (0, 2), (2, 1), (0, 3), (3, 4), (4, 1)] {
            links.push(Link::new(a, b, 100.0, 25.0));
            links.push(Link::new(b, a, 100.0, 25.0));
        }
        NetworkStructure::new(5, links).unwrap()
    }

    fn congested(n: &NetworkStructure) -> (Vec<Flow>, Demands) {
        let d = n.find_link(NodeId(0), NodeId(1)).unwrap();
        let flows = (1..=3).map(|i| Flow::new(i, vec![d])).collect();
        (flows, Demands::from_pairs((1..=3).map(|i| (i, 30.0))))
    }

    fn max_util(n: &NetworkStructure, flows: &[Flow], d: &Demands) -> f64 {
        let loads = crate::netmodel::link_loads(n, flows, d).unwrap();
        crate::netmodel::utilizations(n, &loads).into_iter().fold(0.0, f64::max)
    }

    #[test]
    fn resolves_three_path_congestion() {
        let n = three_paths();
        let (flows, d) = congested(&n);
        let cfg = GpConfig::default().with_generations(300);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let out = run_genplan(&n, &flows, &d, &BestSol::new(5), &cfg, &mut rng).unwrap();
        assert!(out.best_fitness < 2.0);
        assert!(max_util(&n, &out.new_flows, &d) <= 0.8);
        assert_eq!(out.new_flows.len(), 3);
        assert!(out
            .new_flows
            .iter()
            .zip(&flows)
            .all(|(a, b)| a.request_id == b.request_id));
        assert!(out.best_sol_out.len() <= 5);
    }

    #[test]
    fn reused_solution_stops_in_first_generation() {
        let n = three_paths();
        let (flows, d) = congested(&n);
        let cfg = GpConfig::default();
        let seed = BestSol::with_entries(5, vec![WeightExpr::headroom_square()]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = run_genplan(&n, &flows, &d, &seed, &cfg, &mut rng).unwrap();
        assert_eq!(out.generations_used, 0);
        assert!(out.history[0].best_fitness < 2.0);
    }

    #[test]
    fn zero_generations_evaluates_initial_population_only() {
        let n = three_paths();
        let (flows, d) = congested(&n);
        let cfg = GpConfig::default().with_generations(0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = run_genplan(&n, &flows, &d, &BestSol::new(5), &cfg, &mut rng).unwrap();
        assert_eq!(out.generations_used, 0);
        assert_eq!(out.evaluations, cfg.population_size);
        assert_eq!(out.history.len(), 1);
    }

    #[test]
    fn seeded_runs_are_reproducible() {
        let n = three_paths();
        let (flows, d) = congested(&n);
        let cfg = GpConfig::default();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let o = run_genplan(&n, &flows, &d, &BestSol::new(5), &cfg, &mut rng).unwrap();
            (
                o.best_expr,
                o.best_fitness.to_bits(),
                o.new_flows,
                o.best_sol_out,
                o.history,
            )
        };
        assert_eq!(run(8), run(8));
    }

    #[test]
    fn best_sol_contains_final_generation_best() {
        let n = three_paths();
        let (flows, d) = congested(&n);
        // force several generations by making early stopping impossible
        let cfg = GpConfig {
            early_stop_below: 0.0,
            max_generations: 15,
            ..GpConfig::default()
        };
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = run_genplan(&n, &flows, &d, &BestSol::new(5), &cfg, &mut rng).unwrap();
            let last = out.history.last().unwrap();
            assert!(out.best_sol_out.entries.contains(&last.best_expr));
            assert!(out.best_sol_out.len() <= cfg.best_sol_capacity());
            assert_eq!(out.generations_used, 15);
        }
    }

    #[test]
    fn breed_clones_identical_population() {
        let pop = vec![
            Individual {
                expr: WeightExpr::headroom_square(),
                fitness: Some(1.0)
            };
            10
        ];
        let cfg = GpConfig {
            mutation_rate: 0.0,
            ..GpConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let kids = breed(&pop, &mut rng, &cfg);
        assert_eq!(kids.len(), 10);
        // crossover of identical parents can still rearrange subtrees, but never invent labels
        for k in &kids {
            assert!(k.expr.depth() <= 5);
            let mut a = k.expr.labels();
            a.sort();
            assert!(a
                .iter()
                .all(|l| ["/", "*", "-", "1.5", "threshold", "util"].contains(&l.as_str())));
        }
        let cfg = GpConfig {
            mutation_rate: 0.0,
            crossover_rate: 0.0,
            ..GpConfig::default()
        };
        assert!(breed(&pop, &mut rng, &cfg).iter().all(|k| k.expr == pop[0].expr));
    }

    #[test]
    fn tournament_covering_population_picks_best() {
        let scores = [2.5, 1.0, 0.0, 2.1];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            assert_eq!(tournament(&scores, 7, &mut rng), 2);
        }
        assert_eq!(tournament(&[1.0, 1.0, 1.0], 3, &mut rng), 0);
    }

    #[test]
    fn breed_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let g = Grammar::default();
        let pop: Vec<Individual> = (0..10)
            .map(|i| Individual {
                expr: g.grow(&mut rng, 5),
                fitness: Some(i as f64 * 0.3),
            })
            .collect();
        let cfg = GpConfig::default();
        let a = breed(&pop, &mut ChaCha8Rng::seed_from_u64(99), &cfg);
        let b = breed(&pop, &mut ChaCha8Rng::seed_from_u64(99), &cfg);
        assert_eq!(a, b);
    }

    #[test]
    fn every_fitness_in_range_and_consistent() {
        let n = three_paths();
        let (flows, d) = congested(&n);
        let cfg = GpConfig::default();
        let frame = EvalFrame::new(&n, &flows, &[2], &d, &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..500 {
            let e = cfg.grammar.grow(&mut rng, 5);
            let (fit, new) = frame.evaluate(&e).unwrap();
            assert!((0.0..=3.0).contains(&fit));
            let new = new.unwrap();
            let mut ids: Vec<_> = new.iter().map(|f| f.request_id).collect();
            ids.sort();
            assert_eq!(ids, vec![1, 2, 3]);
            assert_eq!(fit < 2.0, max_util(&n, &new, &d) < 0.8);
        }
    }
}
