//! Shuffle-phase block schedules.
//!
//! A [`Block`] delivers one intermediate value to each of its receivers; a
//! [`Schedule`] is the ordered list of blocks. [`schedule`] builds the
//! achievable schedule for a symmetric placement, [`validate_schedule`] checks
//! any schedule against the one-shot counting conditions and
//! [`brute_force_min_blocks`] finds the true minimum on tiny instances.

mod build;
mod flow;
mod oracle;
mod validate;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{IntermediateValueId, ModelError, NodeId, Placement};

pub use build::{schedule, schedule_high_r, schedule_low_r, schedule_with, PaddingPolicy};
pub use oracle::{brute_force_min_blocks, DEFAULT_ORACLE_CAP, ORACLE_DEMAND_LIMIT};
pub use validate::{
    block_is_admissible, validate_block, validate_schedule, BlockCheck, FeasibilityReport,
    ValueCheck,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("placement is not the grouped symmetric placement")]
    NotSymmetric,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("receiver {0} appears twice in one block")]
    DuplicateReceiver(NodeId),
    #[error("{0} is delivered twice in one block")]
    DuplicateValue(IntermediateValueId),
    #[error("block receivers {declared:?} do not match delivery targets {actual:?}")]
    ReceiverMismatch { declared: Vec<NodeId>, actual: Vec<NodeId> },
    #[error("T={declared} does not match {actual} blocks")]
    BlockCountMismatch { declared: usize, actual: usize },
    #[error("total demand {demand} exceeds oracle limit {limit}")]
    DemandTooLarge { demand: u64, limit: u64 },
    #[error("no schedule with at most {cap} blocks exists")]
    CapExceeded { cap: u32 },
    #[error("invalid schedule document: {0}")]
    Document(String),
}

/// Intermediate value `value` sent to receiver `to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Delivery {
    pub value: IntermediateValueId,
    pub to: NodeId,
}

impl Delivery {
    pub const fn new(q: u32, n: u32, to: NodeId) -> Self {
        Delivery { value: IntermediateValueId::new(q, n), to }
    }
}

/// One transmission block: `D_ℓ` with a bijection onto the receivers `R_ℓ`.
/// Deliveries are kept sorted by receiver.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Block {
    deliveries: Vec<Delivery>,
}

impl Block {
    pub fn new(mut deliveries: Vec<Delivery>) -> Result<Self, ScheduleError> {
        deliveries.sort_by_key(|d| (d.to, d.value));
        for pair in deliveries.windows(2) {
            if pair[0].to == pair[1].to {
                return Err(ScheduleError::DuplicateReceiver(pair[0].to));
            }
        }
        let mut seen = BTreeSet::new();
        for d in &deliveries {
            if !seen.insert(d.value) {
                return Err(ScheduleError::DuplicateValue(d.value));
            }
        }
        Ok(Block { deliveries })
    }

    pub fn deliveries(&self) -> &[Delivery] {
        &self.deliveries
    }

    /// `R_ℓ`, ascending.
    pub fn receivers(&self) -> Vec<NodeId> {
        self.deliveries.iter().map(|d| d.to).collect()
    }

    /// `D_ℓ`, ascending in `(q, n)`.
    pub fn delivered(&self) -> BTreeSet<IntermediateValueId> {
        self.deliveries.iter().map(|d| d.value).collect()
    }

    pub fn intended(&self, value: IntermediateValueId) -> Option<NodeId> {
        self.deliveries.iter().find(|d| d.value == value).map(|d| d.to)
    }

    pub fn len(&self) -> usize {
        self.deliveries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deliveries.is_empty()
    }

    /// Every delivered value belongs to a padding file.
    pub fn is_vacuous(&self, placement: &Placement) -> bool {
        !self.is_empty() && self.deliveries.iter().all(|d| placement.is_padding(d.value.n))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Schedule {
    blocks: Vec<Block>,
}

impl Schedule {
    pub fn new(blocks: Vec<Block>) -> Self {
        Schedule { blocks }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Number of blocks `T`.
    pub fn t(&self) -> usize {
        self.blocks.len()
    }

    pub fn deliveries(&self) -> impl Iterator<Item = &Delivery> {
        self.blocks.iter().flat_map(|b| b.deliveries.iter())
    }

    pub fn delivery_count(&self) -> usize {
        self.blocks.iter().map(Block::len).sum()
    }

    /// Keeps only deliveries matching `keep` and drops blocks left empty.
    pub fn filter(&self, mut keep: impl FnMut(&Delivery) -> bool) -> Schedule {
        let blocks = self
            .blocks
            .iter()
            .filter_map(|b| {
                let kept: Vec<_> = b.deliveries.iter().copied().filter(&mut keep).collect();
                (!kept.is_empty()).then_some(Block { deliveries: kept })
            })
            .collect();
        Schedule { blocks }
    }

    /// The schedule restricted to real (non-padding) files.
    pub fn effective(&self, placement: &Placement) -> Schedule {
        self.filter(|d| !placement.is_padding(d.value.n))
    }

    /// 1-based indices of blocks that only carry padding values.
    pub fn vacuous_blocks(&self, placement: &Placement) -> Vec<usize> {
        self.blocks
            .iter()
            .enumerate()
            .filter(|(_, b)| b.is_vacuous(placement))
            .map(|(i, _)| i + 1)
            .collect()
    }

    pub fn to_document(&self) -> ScheduleDocument {
        ScheduleDocument {
            t: self.blocks.len(),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockDocument {
                    receivers: b.receivers(),
                    deliveries: b
                        .deliveries
                        .iter()
                        .map(|d| DeliveryDocument { q: d.value.q, n: d.value.n, to: d.to })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &ScheduleDocument) -> Result<Self, ScheduleError> {
        if doc.t != doc.blocks.len() {
            return Err(ScheduleError::BlockCountMismatch {
                declared: doc.t,
                actual: doc.blocks.len(),
            });
        }
        let blocks = doc
            .blocks
            .iter()
            .map(|b| {
                let block = Block::new(
                    b.deliveries.iter().map(|d| Delivery::new(d.q, d.n, d.to)).collect(),
                )?;
                let mut declared = b.receivers.clone();
                declared.sort_unstable();
                let actual = block.receivers();
                if declared != actual {
                    return Err(ScheduleError::ReceiverMismatch { declared, actual });
                }
                Ok(block)
            })
            .collect::<Result<_, _>>()?;
        Ok(Schedule { blocks })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("schedule serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ScheduleError> {
        let doc: ScheduleDocument =
            serde_json::from_str(text).map_err(|e| ScheduleError::Document(e.to_string()))?;
        Self::from_document(&doc)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleDocument {
    #[serde(rename = "T")]
    pub t: usize,
    pub blocks: Vec<BlockDocument>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockDocument {
    pub receivers: Vec<NodeId>,
    pub deliveries: Vec<DeliveryDocument>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryDocument {
    pub q: u32,
    pub n: u32,
    pub to: NodeId,
}
