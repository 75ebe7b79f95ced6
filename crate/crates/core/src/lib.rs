//! Alpha-fair user clustering for clustered cell-free networks.
//!
//! A network of `L` single-antenna base stations and `K` users is split into
//! `M` non-overlapping subnetworks. The base stations are grouped once by
//! balanced k-means ([`partition`]); users are then assigned to subnetworks
//! by maximizing an alpha-fair utility of the subnetwork ergodic sum
//! capacities, which are approximated by their deterministic equivalents
//! ([`capacity`]).
//!
//! The relaxed problem is handled by one of four solvers depending on the
//! fairness parameter ([`fairness::classify_case`]):
//!
//! | case | objective shape | solver |
//! |------|-----------------|--------|
//! | 1 | concave | [`solvers::ffw`] (Frank-Wolfe with an entropic transport oracle) |
//! | 2 | convex | [`solvers::ccrp`] (convex-concave relaxation homotopy) |
//! | 3 | neither | [`solvers::gnccp`] (graduated nonconvexity/concavity) |
//! | 4 | max-min | [`solvers::agp`] (alternating gradient projection) |
//!
//! Capacities are computed in nats and reported in bits.

pub mod capacity;
pub mod error;
pub mod experiment;
pub mod fairness;
pub mod partition;
pub mod projections;
pub mod scenario;
pub mod solvers;

pub use capacity::{Assignment, BsPartition, DeIterations, DeModel, ThetaMatrix};
pub use error::{Error, Result};
pub use fairness::{AlphaParam, CaseId, MetricsRecord};
pub use scenario::Scenario;
pub use solvers::{Decomposition, SolverConfig, SolverReport};

/// Natural-log capacities to bits.
pub fn nats_to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}
