//! Traffic-engineering simulator for software-defined networks with a self-adaptive planner
//! that evolves link-weight expressions by genetic programming.
//!
//! The pieces, bottom up: [`netmodel`] (graph, requests, flows), [`expr`] (weight expressions),
//! [`routing`] (weights and shortest paths), [`planner`] (the expression search), [`sim`] (the
//! tick-based simulator), [`adapt`] (the adaptation loop), [`baselines`] (comparison planners)
//! and [`harness`] (files, experiments, statistics).

pub mod adapt;
pub mod baselines;
pub mod expr;
pub mod harness;
pub mod netmodel;
pub mod planner;
pub mod routing;
pub mod sim;
