//! Coevolving prisoner's dilemma on adaptive networks: an event-driven
//! microsimulation, pair-approximation and approximate-master-equation
//! solvers, and a sweep harness.

pub mod ame;
pub mod error;
pub mod graph;
pub mod io;
pub mod ode;
pub mod pa;
pub mod params;
pub mod sim;
pub mod solve;
pub mod sweep;

pub use ame::{solve_ame, CompartmentGrid, GridMoments, NeighborEstimates};
pub use error::{Error, Result};
pub use graph::{Edge, EdgeKind, NodeState, PlayerGraph, TypeCounts};
pub use pa::solve_pa;
pub use params::{GameParams, Variant};
pub use sim::{run, run_fresh, RunOptions, RunOutcome, SamplePolicy, Simulation, Termination};
pub use solve::{SolveOptions, SolvePoint, SolveResult};
pub use sweep::{
    run_replicates, sweep_grid, trajectory_average, Method, RunSummary, SweepRow, SweepSpec,
};
