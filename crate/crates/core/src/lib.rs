//! System-level downlink simulator for vehicle handover in ultra-dense
//! small-cell networks.
//!
//! The pipeline has three stages:
//!
//! 1. [`mobility`] moves vehicles along a three-route road network and
//!    produces a labelled trajectory dataset.
//! 2. [`ml`] trains route classifiers (linear SVM, CART tree, random forest)
//!    on that dataset and reports their accuracy metrics.
//! 3. [`campaign`] drops small cells by a Poisson point process
//!    ([`deployment`]), evaluates per-tic SINR ([`radio`]) and runs the
//!    handover state machine ([`handover`]) with and without route
//!    prediction, counting handovers.

pub mod campaign;
pub mod config;
pub mod deployment;
mod error;
pub mod handover;
pub mod ml;
pub mod mobility;
pub mod radio;

pub use error::{Error, Result};

/// Identifier of a route in the road network (0, 1 or 2).
pub type RouteId = u8;

/// Index of a small cell in its deployment.
pub type SiteId = usize;

/// Number of routes in the road network.
pub const NUM_ROUTES: usize = 3;
