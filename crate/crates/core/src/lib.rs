//! SIR epidemics with arbitrary recovery-time distributions on random
//! regular networks.
//!
//! The crate provides an event-driven network simulator, deterministic
//! mean-field and pairwise models integrated by a shared Volterra stepping
//! core, ODE and delay-equation solvers for recovery laws that admit them,
//! and threshold and final-size analytics.

pub mod analytics;
pub mod dist;
pub mod graph;
pub mod par;
pub mod sim;
pub mod special;
pub mod trajectory;
pub mod volterra;

pub use dist::{DistError, Kind, RecoveryDistribution};
pub use graph::{Graph, GraphError, NodeState, PairCounts};
pub use par::Execution;
pub use sim::{run_ensemble, run_single, Ensemble, EnsembleConfig, EpidemicParams, GraphSource, SimError, SimOutcome};
pub use trajectory::{Meta, Series, Trajectory};
pub use volterra::{solve_meanfield, solve_pairwise, ModelParams, ModelSolution, SolverConfig, SolverError};
