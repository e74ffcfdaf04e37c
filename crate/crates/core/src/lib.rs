//! Simulator for decentralized non-convex consensus optimization.
//!
//! `m` nodes on an undirected graph each hold a local objective and jointly
//! minimise its average, exchanging vectors with neighbours through a doubly
//! stochastic mixing matrix. Implements GT-STORM (gradient tracking with a
//! recursive momentum estimator) and the DSGD and GNSD baselines, together
//! with exact invariant checks, step-size admissibility constants and a
//! CLI harness.

pub mod algorithms;
pub mod checks;
pub mod config;
pub mod data;
pub mod harness;
pub mod metrics;
pub mod objectives;
pub mod stacked;
pub mod theory;
pub mod topology;
