//! MapReduce over a wireless interference channel.
//!
//! The crate covers the whole shuffle pipeline of a one-shot linear scheme:
//!
//! - [`model`]: system parameters, symmetric file placement with empty-file
//!   padding, reduce-function assignment and per-node demand sets.
//! - [`scheduler`]: block schedules for the shuffle phase, a feasibility
//!   checker based on the side-information / zero-forcing counting conditions,
//!   and an exhaustive minimum-block oracle for tiny instances.
//! - [`beamforming`]: seeded channel generation, zero-forcing beamformers for
//!   virtual transmitters, block transmission over AWGN and receiver-side
//!   side-information cancellation.
//! - [`metrics`]: closed-form loads, TDMA baselines, time sharing, the
//!   replication-profile converse and tradeoff tables.
//!
//! Node, file and reduce-function indices are 1-based at every public
//! boundary.

pub mod beamforming;
pub mod metrics;
pub mod model;
pub mod scheduler;

/// Exact rational used for computation and communication loads.
pub type Rational = num_rational::Ratio<i64>;

pub use model::{
    IntermediateValueId, ModelError, Placement, ReduceAssignment, SystemParams,
};
pub use scheduler::{Block, Delivery, Schedule};
