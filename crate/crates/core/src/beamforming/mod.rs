//! Physical layer of the shuffle: channels, zero-forcing precoders, block
//! transmission and side-information decoding.
//!
//! A delivered value `(q, n)` is sent by the virtual transmitter `S_n` (all
//! nodes that mapped file `n`) with a unit-norm vector chosen in the null
//! space of the receivers that neither want it nor cache it.

mod channel;
mod link;
mod precoder;

use thiserror::Error;

use crate::model::{IntermediateValueId, ModelError, NodeId};

pub use channel::{generate_channel, ChannelMatrix, MAX_REJECTION_ROUNDS};
pub use link::{
    audit_csv, db_to_linear, decode_block, residual_interference, simulate_block,
    transmit_block, AuditRow, BlockOutcome, BlockReception, DecodeStatus, LinkConfig, Packet,
    PacketStore, ReceiverOutcome,
};
pub use precoder::{build_block_beamformers, zero_forcing_vector, BeamformingPlan, Stream};

pub use num_complex::Complex64;

/// Numerical thresholds. All are absolute except where noted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Null-space residual, scaled by `max(1, max |h|)`.
    pub zf_tol: f64,
    /// Relative L2 decode error with noise off.
    pub residual_tol: f64,
    /// Minimum `|h_{k,S}ᵀ v|` at the intended receiver.
    pub gain_floor: f64,
    /// Minimum `σ_min / σ_max` of checked channel submatrices.
    pub rank_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { zf_tol: 1e-9, residual_tol: 1e-6, gain_floor: 1e-6, rank_tol: 1e-8 }
    }
}

pub const DEFAULT_H_MIN: f64 = 0.1;
pub const DEFAULT_H_MAX: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BeamformingError {
    #[error("magnitude bounds must satisfy 0 < h_min < h_max, got ({h_min}, {h_max})")]
    InvalidBounds { h_min: f64, h_max: f64 },
    #[error("channel needs at least one node")]
    NoNodes,
    #[error("no well-conditioned channel after {rounds} draws")]
    RejectionLimit { rounds: u32 },
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error("empty transmitter set")]
    EmptySupport,
    #[error("cannot null {nulled} receivers with {support} transmit antennas")]
    Infeasible { nulled: usize, support: usize },
    #[error("{value}: intended receiver {to} already maps the file")]
    ReceiverCaches { value: IntermediateValueId, to: NodeId },
    #[error("{value}: intended gain {gain:.3e} below floor")]
    WeakGain { value: IntermediateValueId, gain: f64 },
    #[error("null-space residual {residual:.3e} above tolerance")]
    ZfResidual { residual: f64 },
    #[error("no packet for {0}")]
    MissingPacket(IntermediateValueId),
    #[error("transmit power must be positive, got {0}")]
    InvalidPower(f64),
    #[error("invalid channel document: {0}")]
    Document(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}
