//! Topologies, scenario files, experiments and statistics.

pub mod experiment;
pub mod scenario_io;
pub mod stats;
pub mod topology;

pub use experiment::{run_experiment, run_sweep, ExperimentResult, ExperimentSpec, Metric, SweepAxis};
pub use scenario_io::{load_scenario, save_metrics, save_scenario, MetricsRow};
pub use stats::{a12_effect_size, linear_fit, wilcoxon_rank_sum};
pub use topology::{gen_full_topology, gen_mnp_topology, TopologySpec};
