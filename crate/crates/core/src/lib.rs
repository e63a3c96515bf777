//! Differentially private release of hierarchical origin/destination data.
//!
//! Trips between the leaves of two geographic hierarchies are arranged as a
//! tree of range counts ([`tree`]). [`release`] walks that tree top-down,
//! noising each parent's children with the discrete Gaussian mechanism and
//! snapping them back to non-negative integers that sum to the parent with the
//! Chebyshev-distance solver in [`intopt`]. [`baselines`], [`synth`] and
//! [`eval`] provide comparison mechanisms, benchmark data and metrics.

pub mod baselines;
pub mod dp;
pub mod eval;
pub mod hierarchy;
pub mod intopt;
pub mod io;
pub mod release;
pub mod synth;
pub mod tree;
pub mod trips;

pub use dp::{PrivacyBudget, PrivacyType, SensitivityModel};
pub use hierarchy::{AreaRef, PartitionHierarchy};
pub use intopt::{intopt_fast, intopt_simple, OptProblem, OptSolution, Order};
pub use release::{release, DPRelease, OrderStrategy, ReleaseConfig};
pub use tree::{build_tree, HierTree, NodeKey, TreeMode};
pub use trips::TripTable;
