//! Heterogeneous bounded-confidence (SBC) and bounded-influence (SBI) opinion
//! dynamics.
//!
//! Each agent holds an opinion and a positive bound. At every step all agents
//! move simultaneously to the average opinion of their out-neighbors in the
//! state-dependent proximity digraph. The crate builds that digraph, splits it
//! into closed-, moderate- and open-minded components, computes the limit the
//! system would reach if its topology froze, evaluates sufficient conditions
//! for the topology to stay frozen, and predicts the rate and direction of
//! convergence of open-minded agents from their leader components.
//!
//! ```
//! use opinion_lab::{fvct, simulate, Model, OpinionState, SimOptions};
//!
//! let state = OpinionState::new(vec![0.0, 0.6, 1.0], vec![0.25, 1.0, 0.25], Model::Sbc)?;
//! let limit = fvct(&state)?;
//! assert!((limit[1] - 0.5).abs() < 1e-12);
//!
//! let traj = simulate(&state, &SimOptions::default())?;
//! assert_eq!(traj.epochs.len(), 1);
//! # Ok::<(), opinion_lab::Error>(())
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod canonical;
pub mod classify;
pub mod digraph;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod fixtures;
pub mod io;
pub mod leader;
pub mod matrix;
pub mod stability;
pub mod state;

pub use canonical::{canonical_decomposition, fvct, CanonicalDecomposition, Snapshot};
pub use classify::{classify, Classification, MindClass};
pub use digraph::{build_digraph, build_digraph_with_tolerance, strongly_connected_components, ProximityDigraph};
pub use dynamics::{per_step_factor, pseudo_stable_check, simulate, step, SimOptions, Simulation, Termination, Trajectory};
pub use error::{Error, Result};
pub use experiment::{emit_results, run_campaign, ExperimentConfig, RunRecord};
pub use leader::{leader_assignment, verify_direction_prediction, verify_rate_prediction, LeaderAssignment};
pub use matrix::{adjacency_matrix, m_star, spectral_radius, AdjacencyMatrix};
pub use stability::{
    check_agreement_sufficient, check_equal_topology, check_limit_equilibrium, equi_topology_distance,
    in_neighborhood, invariant_equi_topology_distance, is_agreement_vector, is_equilibrium, StabilityReport,
};
pub use state::{Model, OpinionState};
