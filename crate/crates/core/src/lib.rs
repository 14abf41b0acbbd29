//! Topology identification for distribution grids from DER and substation
//! measurements.
//!
//! The pipeline is a quadratic discriminant classifier ([`model`]), a
//! per-class box-constrained QP that reconstructs missing or suspect
//! measurements ([`recovery`]), and a mixture likelihood-ratio test that
//! decides when a measured unit should be replaced by its reconstruction
//! ([`anomaly`]). [`simgen`] generates labelled data from a small
//! linearized feeder and [`eval`] runs the evaluation protocol.

pub mod anomaly;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod model;
pub mod qp;
pub mod recovery;
pub mod schema;
pub mod simgen;
pub mod stats;

pub use error::{Error, ErrorKind, Result};
