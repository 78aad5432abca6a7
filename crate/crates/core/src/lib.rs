//! Weight-balanced k-means for weighted point sets.
//!
//! The assignment step of Lloyd's algorithm is replaced by a linear program
//! over cluster-size bounds `κ⁻ ≤ |C| ≤ κ⁺`, solved to a vertex. Points may be
//! split fractionally between clusters, and every vertex comes with a power
//! diagram that certifies it.

pub mod constraints;
pub mod data;
pub mod dsu;
pub mod error;
pub mod kernel;
pub mod kmeans;
pub mod lp;
pub mod oracle;
pub mod parallel;
pub mod power;

pub use data::{
    centroid, centroids, objective_theta, shape, squared_error, Assignment, Centroids, ClusterBounds,
    SiteSet, WeightedDataset,
};
pub use error::{Error, Result};
pub use lp::{build_lp, solve_vertex, unconstrained_reduction_check, Basis, LPSolution, PartitionLP, Var};
pub use parallel::Execution;
pub use power::{
    sigma_feasibility_lp, sigma_from_duals, verify_feasible, verify_strongly_feasible, FeasibilityCertificate,
    PowerDiagram, SharedPoint, Verdict, Witness,
};
pub use kmeans::{
    classical_kmeans, init_sites, multi_start, run, ClassicalOutput, InitStrategy, IterationRecord, MultiStartOutput,
    RunConfig, RunOutput, RunTrace, RunVerdict,
};
pub use kernel::{kernel_lp_costs, kernel_run, kernel_run_with, ImplicitSite, KernelFunction, KernelMatrix, KernelRunOutput};
pub use constraints::{dispersion_constant, expand_assignment, merge_must_link, IndexMapping, MustLinkGroups};
pub use oracle::{
    brute_force_integral, enumerate_optimal_vertices, explicit_feature_map, IntegralOptimum, TinyInstance,
    VertexEnumeration,
};
