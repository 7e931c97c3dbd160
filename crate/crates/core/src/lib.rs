//! Heavy-traffic analysis of parallel-server systems with job–server
//! compatibility constraints under redundancy scheduling.
//!
//! The crate computes exact product-form quantities of the pre-limit system,
//! decomposes the system into critically loaded components, builds the
//! heavy-traffic limit law of the scaled queue-length vector, and checks all
//! of it against exhaustive oracles and simulation.

pub mod analytic;
pub mod cli;
pub mod criticality;
pub mod error;
pub mod fixtures;
pub mod model;
pub mod moments;
pub mod prelimit;
pub mod scalar;
pub mod simulator;
pub mod verify;

pub use error::{Error, Result};
pub use model::{SystemModel, TrajectorySpec};
pub use scalar::{Scalar, Q};
