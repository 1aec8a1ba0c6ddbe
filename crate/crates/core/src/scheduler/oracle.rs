//! Exact minimum block count by exhaustive search over demand subsets.

use super::validate::nulled;
use super::{Block, Delivery, Schedule, ScheduleError};
use crate::model::{demand_set, Placement, ReduceAssignment};

/// Largest total demand the oracle accepts.
pub const ORACLE_DEMAND_LIMIT: u64 = 12;

pub const DEFAULT_ORACLE_CAP: u32 = 8;

/// Minimum `T` over all partitions of the demand set into admissible blocks,
/// with one witness schedule.
///
/// Dynamic program over subsets of the demand: the block holding the lowest
/// remaining value is enumerated among the submasks containing it, so every
/// partition is visited once.
pub fn brute_force_min_blocks(
    p: &Placement,
    a: &ReduceAssignment,
    cap: u32,
) -> Result<(u32, Schedule), ScheduleError> {
    let demand = demand_set(p, a)?;
    let total = demand.total();
    if total > ORACLE_DEMAND_LIMIT {
        return Err(ScheduleError::DemandTooLarge { demand: total, limit: ORACLE_DEMAND_LIMIT });
    }
    let items: Vec<Delivery> = demand.iter().map(|(to, value)| Delivery { value, to }).collect();
    let count = items.len();
    let full = (1usize << count) - 1;

    let admissible: Vec<bool> = (0..=full).map(|mask| admissible(mask, &items, p)).collect();

    const UNSET: u32 = u32::MAX;
    let mut best = vec![UNSET; full + 1];
    let mut choice = vec![0usize; full + 1];
    best[0] = 0;
    // Masks in increasing order: every `mask ^ sub` is smaller than `mask`.
    for mask in 1..=full {
        let low = mask & mask.wrapping_neg();
        let rest = mask ^ low;
        let mut sub = rest;
        loop {
            let block = sub | low;
            if admissible[block] {
                let candidate = best[mask ^ block].saturating_add(1);
                if candidate < best[mask] {
                    best[mask] = candidate;
                    choice[mask] = block;
                }
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }

    let t = best[full];
    if t > cap {
        return Err(ScheduleError::CapExceeded { cap });
    }
    let mut blocks = Vec::with_capacity(t as usize);
    let mut mask = full;
    while mask != 0 {
        let block = choice[mask];
        blocks.push(Block::new(
            (0..count).filter(|i| block >> i & 1 == 1).map(|i| items[i]).collect(),
        )?);
        mask ^= block;
    }
    Ok((t, Schedule::new(blocks)))
}

fn admissible(mask: usize, items: &[Delivery], p: &Placement) -> bool {
    let chosen: Vec<&Delivery> =
        items.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, d)| d).collect();
    let mut receivers: Vec<_> = chosen.iter().map(|d| d.to).collect();
    receivers.sort_unstable();
    if receivers.windows(2).any(|w| w[0] == w[1]) {
        return false;
    }
    chosen.iter().all(|d| {
        let support = p.support_set(d.value.n).expect("demanded files exist");
        nulled(&receivers, d.to, support).len() < support.len()
    })
}
