//! Stochastic-geometry laboratory for M-tier heterogeneous networks that
//! share an unlicensed channel through opportunistic CSMA/CA.
//!
//! The crate has five parts:
//!
//! - [`model`]: domain types (channels, association weights, tiers) and
//!   validated network configuration;
//! - [`numerics`]: quadrature, special functions, fixed-point iteration and a
//!   derivative-free maximizer;
//! - [`analytics`]: closed-form / quadrature evaluation of association
//!   probabilities, cell-load statistics, channel-access probabilities,
//!   Shannon-transform spectrum-efficiency bounds and per-user throughputs;
//! - [`simcore`]: a Monte Carlo point-process simulator producing the same
//!   report fields empirically;
//! - [`traffic`]: decentralized and centralized traffic-management schemes on
//!   top of the analytic model.

pub mod analytics;
pub mod model;
pub mod numerics;
pub mod scenarios;
pub mod simcore;
pub mod traffic;
