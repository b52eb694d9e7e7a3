//! Weighted sum-rate power control for an interference network that shares
//! the air with a latent, uncontrollable sub-network.
//!
//! The crate provides the classic WMMSE iteration, a synthetic-control
//! estimator of receiver interference trained offline on randomized power
//! allocations, the SC-WMMSE iteration that mixes counterfactual and factual
//! receiver updates, and a Monte-Carlo harness that reproduces the
//! convergence, robustness, scalability and ablation experiments.

pub mod config;
pub mod error;
pub mod harness;
pub mod latentnet;
pub mod netgen;
pub mod rates;
pub mod rng;
pub mod sc_wmmse;
pub mod synthctl;
pub mod wmmse;

pub use error::{Result, SimError};
