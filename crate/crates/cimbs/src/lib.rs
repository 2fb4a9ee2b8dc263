//! Continuous influence maximization with budget saving.
//!
//! Given a directed influence graph, strategy activation functions, a convex
//! cost with budget k and balance lambda, the solvers in this crate maximize
//! the budget-balanced influence spread g(x) + lambda (k - c(x)) over the
//! feasible region using reverse-influence-sampling-backed gradient methods,
//! plus a greedy baseline and a stochastic-gradient reference on the
//! original objective.

pub mod budget;
pub mod cli;
pub mod config;
pub mod diffusion;
pub mod error;
pub mod fixtures;
pub mod graph;
pub mod objective;
pub mod optimize;
pub mod oracle;
pub mod pipeline;
pub mod rng;
pub mod rrset;
pub mod strategy;

pub use budget::{BudgetModel, CostKind};
pub use error::{Error, Result};
pub use graph::{DirectedGraph, NodeId, WeightMode};
pub use objective::ObjectiveBundle;
pub use optimize::{AlgoKind, OptimizerSpec, Termination};
pub use pipeline::{solve, Solution, SolveConfig};
pub use rrset::{RRCollection, ResampleMode};
pub use strategy::{Scenario, ScenarioKind, StrategyModel};
