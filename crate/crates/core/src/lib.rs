//! Distributed service restoration for radial distribution feeders.
//!
//! The crate is `no_std` and only needs `alloc`. It contains the whole
//! algorithmic pipeline:
//!
//! - [`feeder`]: network, scenario and solver configuration data.
//! - [`clustering`]: cluster count selection and bottom-up tree partitioning.
//! - [`subproblem`]: per-cluster convex restoration programs over the horizon.
//! - [`qp`]: an embedded operator-splitting QP solver with polishing.
//! - [`ncadmm`]: the consensus ADMM runtime (relax, drive, project, polish)
//!   plus the hard-projection baseline and the plan feasibility checker.
//! - [`oracle`]: exhaustive enumeration over Boolean decisions for small
//!   feeders, used to certify plan quality.
//!
//! File formats, the CLI and threaded execution live in the `restora` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod clustering;
pub mod feeder;
pub mod fixtures;
pub(crate) mod math;
pub mod ncadmm;
pub mod oracle;
pub mod qp;
pub mod subproblem;

pub use clustering::{
    bottom_up_cluster, default_relaxation, derive_adjacency, optimal_cluster_count, subtree_sizes, ClusterId,
    Clustering, RootedTree, TopologyError,
};
pub use feeder::{
    make_scenario, validate_feeder, Base, CapBank, DerUnit, Feeder, FeederError, Line, LineKind,
    Load, Mode, Node, NodeId, Scenario, ScenarioError, SolverConfig, SubstationCapacity,
    ValidationReport, Violation,
};
pub use ncadmm::{
    plan_feasibility_check, project_boolean, prox_boolean, run_restoration, update_t,
    ConvergenceTrace, FeasibilityReport, Phase, RestorationPlan,
};
pub use oracle::{enumerate_assignments, lp_relaxation, oracle_solve, OracleError, OracleResult};
pub use qp::{polygonize_soc, solve, QpSettings, Solution, SolveStatus};
pub use subproblem::{build_subproblem, classify_variables, fix_binaries, ConvexProgram, VarIndex};
