//! Counting-condition feasibility checks for arbitrary schedules.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use super::{Block, Schedule};
use crate::model::{demand_set, IntermediateValueId, NodeId, Placement, ReduceAssignment};

/// One delivered value. `nulled` is `J_n = R ∖ ({k} ∪ S_n)` and
/// `zf_slack = |S_n| − 1 − |J_n|`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValueCheck {
    pub q: u32,
    pub n: u32,
    pub to: NodeId,
    pub support_size: u32,
    pub nulled: Vec<NodeId>,
    pub zf_slack: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockCheck {
    /// 1-based.
    pub block: usize,
    pub size: usize,
    /// `min{2·min θ, K}` over the files in this block.
    pub bound: u32,
    pub values: Vec<ValueCheck>,
    pub vacuous: bool,
    pub ok: bool,
}

impl BlockCheck {
    pub fn min_slack(&self) -> Option<i64> {
        self.values.iter().map(|v| v.zf_slack).min()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FeasibilityReport {
    pub ok: bool,
    pub per_block: Vec<BlockCheck>,
    pub violations: Vec<String>,
}

impl FeasibilityReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text table, one row per block, followed by any violations.
    pub fn to_table(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for FeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>6} {:>4} {:>6}  {:<24} status", "block", "|D|", "bound", "zf_slack")?;
        for b in &self.per_block {
            let slacks = b.values.iter().map(|v| v.zf_slack.to_string()).collect::<Vec<_>>();
            let status = match (b.ok, b.vacuous) {
                (false, _) => "VIOLATION",
                (true, true) => "ok (vacuous)",
                (true, false) => "ok",
            };
            writeln!(
                f,
                "{:>6} {:>4} {:>6}  {:<24} {}",
                b.block,
                b.size,
                b.bound,
                slacks.join(","),
                status
            )?;
        }
        writeln!(
            f,
            "T={} feasible={}",
            self.per_block.len(),
            if self.ok { "yes" } else { "no" }
        )?;
        for v in &self.violations {
            writeln!(f, "violation: {v}")?;
        }
        Ok(())
    }
}

/// Counting condition alone: every value in `block` has `|J_n| ≤ |S_n| − 1`.
/// Values of unknown files are inadmissible.
pub fn block_is_admissible(block: &Block, p: &Placement) -> bool {
    let receivers = block.receivers();
    block.deliveries().iter().all(|d| match p.support_set(d.value.n) {
        Ok(support) => nulled(&receivers, d.to, support).len() < support.len(),
        Err(_) => false,
    })
}

pub(crate) fn nulled(receivers: &[NodeId], to: NodeId, support: &[NodeId]) -> Vec<NodeId> {
    receivers.iter().copied().filter(|&j| j != to && !support.contains(&j)).collect()
}

/// Checks one block in isolation (no coverage or disjointness).
pub fn validate_block(block: &Block, p: &Placement, a: &ReduceAssignment) -> BlockCheck {
    check_block(1, block, p, a, &mut Vec::new())
}

fn check_block(
    index: usize,
    block: &Block,
    p: &Placement,
    a: &ReduceAssignment,
    violations: &mut Vec<String>,
) -> BlockCheck {
    let receivers = block.receivers();
    let before = violations.len();
    let mut values = Vec::with_capacity(block.len());
    let mut min_theta = u32::MAX;
    for d in block.deliveries() {
        let IntermediateValueId { q, n } = d.value;
        if d.to == 0 || d.to > p.k() {
            violations.push(format!("block {index}: receiver {} out of range", d.to));
            continue;
        }
        let support = match p.support_set(n) {
            Ok(s) => s,
            Err(_) => {
                violations.push(format!("block {index}: file {n} out of range"));
                continue;
            }
        };
        if a.owner(q) != Some(d.to) {
            violations.push(format!("block {index}: node {} does not reduce function {q}", d.to));
        }
        if p.maps(d.to, n) {
            violations.push(format!(
                "block {index}: node {} already maps file {n}, {} is not demanded",
                d.to, d.value
            ));
        }
        let j = nulled(&receivers, d.to, support);
        let zf_slack = support.len() as i64 - 1 - j.len() as i64;
        if zf_slack < 0 {
            violations.push(format!(
                "block {index}: {} to node {} must be nulled at {} receivers with only {} transmitters",
                d.value,
                d.to,
                j.len(),
                support.len()
            ));
        }
        min_theta = min_theta.min(support.len() as u32);
        values.push(ValueCheck {
            q,
            n,
            to: d.to,
            support_size: support.len() as u32,
            nulled: j,
            zf_slack,
        });
    }
    let bound = if values.is_empty() { 0 } else { (2 * min_theta).min(p.k()) };
    BlockCheck {
        block: index,
        size: block.len(),
        bound,
        values,
        vacuous: block.is_vacuous(p),
        ok: violations.len() == before,
    }
}

/// Checks every block plus exact, disjoint coverage of the demand set.
pub fn validate_schedule(s: &Schedule, p: &Placement, a: &ReduceAssignment) -> FeasibilityReport {
    let mut violations = Vec::new();
    let per_block: Vec<BlockCheck> = s
        .blocks()
        .iter()
        .enumerate()
        .map(|(i, b)| check_block(i + 1, b, p, a, &mut violations))
        .collect();

    match demand_set(p, a) {
        Ok(demand) => {
            let mut seen: BTreeSet<(NodeId, IntermediateValueId)> = BTreeSet::new();
            for (i, b) in s.blocks().iter().enumerate() {
                for d in b.deliveries() {
                    if !seen.insert((d.to, d.value)) {
                        violations.push(format!(
                            "block {}: {} to node {} was already delivered",
                            i + 1,
                            d.value,
                            d.to
                        ));
                    }
                }
            }
            for (node, value) in demand.iter() {
                if !seen.contains(&(node, value)) {
                    violations.push(format!("{value} for node {node} is never delivered"));
                }
            }
        }
        Err(e) => violations.push(format!("demand set unavailable: {e}")),
    }

    FeasibilityReport { ok: violations.is_empty(), per_block, violations }
}
