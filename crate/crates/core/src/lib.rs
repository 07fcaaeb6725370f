//! Spatial EV charging-station choice as a dynamical system.
//!
//! EVs arriving at demand sites pick a station by a softmin over travel time
//! plus queueing delay. The crate computes the resulting equilibrium through
//! its concave Lagrange dual, integrates the closed-loop fluid dynamics,
//! solves the planner's min-cost flow for comparison, and checks the fluid
//! picture against a discrete-event simulation.
//!
//! Units: time in minutes, rates in EV/min, occupancies in EVs.

pub mod dual;
pub mod error;
pub mod exec;
pub mod fluid;
pub mod model;
pub mod sim;
pub mod social;
pub mod solver;
pub mod spatial;

pub use error::{Error, Result};
pub use exec::Exec;
pub use model::{DemandModel, Matrix, Multipliers, PatienceDistribution, ProblemInstance, QueueState, RoutingMatrix};
pub use solver::{solve_equilibrium, EquilibriumSolution, SolverConfig, SolverMethod};
