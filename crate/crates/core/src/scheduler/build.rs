//! Achievable schedules for the grouped symmetric placement.

use std::collections::{BTreeMap, VecDeque};

use num_integer::binomial;

use super::flow::FlowGraph;
use super::{Block, Delivery, Schedule, ScheduleError};
use crate::model::{
    demand_set, granularity, lex_subsets, IntermediateValueId, NodeId, Placement,
    ReduceAssignment,
};

/// How padding values share blocks with real values.
///
/// Both policies produce the same `T` and identical schedules when the
/// placement has no padding files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PaddingPolicy {
    /// Subsets `S_{k,i}` in lexicographic order, lowest unsent `(q, n)` first.
    InOrder,
    /// Packs real values into few blocks so that dropping the padding values
    /// leaves a short effective schedule; never longer than `InOrder`.
    #[default]
    PackReal,
}

/// Above this many candidate edges the quota search is replaced by a greedy
/// real-first fill.
const FLOW_EDGE_LIMIT: usize = 20_000;

pub fn schedule(p: &Placement, a: &ReduceAssignment) -> Result<Schedule, ScheduleError> {
    schedule_with(p, a, PaddingPolicy::default())
}

/// Dispatches on `r` for a symmetric placement. `r = K` yields an empty
/// schedule.
pub fn schedule_with(
    p: &Placement,
    a: &ReduceAssignment,
    policy: PaddingPolicy,
) -> Result<Schedule, ScheduleError> {
    let r = p.symmetric_load().ok_or(ScheduleError::NotSymmetric)?;
    check_assignment(p, a)?;
    let k = p.k();
    if r >= k {
        Ok(Schedule::default())
    } else if 2 * r >= k {
        high_r(p, a)
    } else {
        low_r(p, a, r, policy)
    }
}

/// Every block serves all `K` nodes, one value each.
pub fn schedule_high_r(p: &Placement, a: &ReduceAssignment) -> Result<Schedule, ScheduleError> {
    let r = p.symmetric_load().ok_or(ScheduleError::NotSymmetric)?;
    check_assignment(p, a)?;
    if 2 * r < p.k() || r >= p.k() {
        return Err(ScheduleError::Precondition(format!(
            "high-r schedule needs K/2 <= r < K, got r={r}, K={}",
            p.k()
        )));
    }
    high_r(p, a)
}

/// Subset-copy schedule over the `2r`-subsets of nodes.
pub fn schedule_low_r(p: &Placement, a: &ReduceAssignment) -> Result<Schedule, ScheduleError> {
    let r = p.symmetric_load().ok_or(ScheduleError::NotSymmetric)?;
    check_assignment(p, a)?;
    if 2 * r >= p.k() {
        return Err(ScheduleError::Precondition(format!(
            "low-r schedule needs 2r < K, got r={r}, K={}",
            p.k()
        )));
    }
    low_r(p, a, r, PaddingPolicy::default())
}

fn check_assignment(p: &Placement, a: &ReduceAssignment) -> Result<(), ScheduleError> {
    if a.k() != p.k() {
        return Err(ScheduleError::Precondition(format!(
            "assignment has {} nodes, placement has {}",
            a.k(),
            p.k()
        )));
    }
    let per = a.q() / a.k();
    if a.sets().iter().any(|w| w.len() as u32 != per) || per * a.k() != a.q() {
        return Err(ScheduleError::Precondition(
            "every node must reduce exactly Q/K functions".into(),
        ));
    }
    Ok(())
}

fn high_r(p: &Placement, a: &ReduceAssignment) -> Result<Schedule, ScheduleError> {
    let demand = demand_set(p, a)?;
    let queues: Vec<Vec<IntermediateValueId>> = demand
        .per_node()
        .iter()
        .map(|g| {
            let mut values: Vec<_> = g.iter().copied().collect();
            values.sort_by_key(|v| (p.is_padding(v.n), v.q, v.n));
            values
        })
        .collect();
    let t = queues[0].len();
    if queues.iter().any(|g| g.len() != t) {
        return Err(ScheduleError::Precondition("demand sizes differ across nodes".into()));
    }
    let blocks = (0..t)
        .map(|i| {
            Block::new(
                queues
                    .iter()
                    .enumerate()
                    .map(|(node, g)| Delivery { value: g[i], to: node as NodeId + 1 })
                    .collect(),
            )
        })
        .collect::<Result<_, _>>()?;
    Ok(Schedule::new(blocks))
}

/// For one receiver set `R`: each member with the indices of the `r`-subsets
/// of `R ∖ {k}` in lexicographic order.
type GroupLayout = Vec<(NodeId, Vec<usize>)>;

fn low_r(
    p: &Placement,
    a: &ReduceAssignment,
    r: u32,
    policy: PaddingPolicy,
) -> Result<Schedule, ScheduleError> {
    let literal = low_r_build(p, a, r, false)?;
    if policy == PaddingPolicy::InOrder || p.padding() == 0 {
        return Ok(literal);
    }
    // The quota search is a heuristic; keep the literal order when it wins.
    let packed = low_r_build(p, a, r, true)?;
    if packed.effective(p).t() <= literal.effective(p).t() {
        Ok(packed)
    } else {
        Ok(literal)
    }
}

fn low_r_build(
    p: &Placement,
    a: &ReduceAssignment,
    r: u32,
    pack: bool,
) -> Result<Schedule, ScheduleError> {
    let k = p.k();
    let subsets = lex_subsets(k, r);
    let n_sets = subsets.len();
    let index: BTreeMap<&[NodeId], usize> =
        subsets.iter().enumerate().map(|(i, s)| (s.as_slice(), i)).collect();
    let n_total = p.n_total();
    let n0 = granularity(k, r);
    if u64::from(n_total) % n0 != 0 {
        return Err(ScheduleError::Precondition(format!(
            "Ñ={n_total} is not a multiple of N0={n0}"
        )));
    }
    let copies = (u64::from(n_total) / n0) as usize * (a.q() / k) as usize;
    let per_copy = binomial(2 * r - 1, r) as usize;

    let slot = |node: NodeId, s: usize| (node as usize - 1) * n_sets + s;
    // With `pack` off every value lands in `real`, which is then the single
    // (q, n)-ordered queue per `A_{k,S}`.
    let mut real = vec![VecDeque::new(); k as usize * n_sets];
    let mut pad = vec![VecDeque::new(); k as usize * n_sets];
    for node in 1..=k {
        for &q in a.functions(node) {
            for n in 1..=n_total {
                let s = (n as usize - 1) % n_sets;
                if subsets[s].contains(&node) {
                    continue;
                }
                let value = IntermediateValueId::new(q, n);
                if pack && p.is_padding(n) {
                    pad[slot(node, s)].push_back(value);
                } else {
                    real[slot(node, s)].push_back(value);
                }
            }
        }
    }

    let layouts: Vec<GroupLayout> = lex_subsets(k, 2 * r)
        .into_iter()
        .map(|big| {
            big.iter()
                .map(|&node| {
                    let rest: Vec<NodeId> = big.iter().copied().filter(|&x| x != node).collect();
                    let sets = lex_subsets(rest.len() as u32, r)
                        .into_iter()
                        .map(|pick| {
                            let s: Vec<NodeId> =
                                pick.iter().map(|&i| rest[i as usize - 1]).collect();
                            index[s.as_slice()]
                        })
                        .collect();
                    (node, sets)
                })
                .collect()
        })
        .collect();
    // Group g is copy `g % copies` of receiver set `g / copies`.
    let groups = layouts.len() * copies;

    let real_slots = if pack {
        let rho: Vec<usize> = real.iter().map(VecDeque::len).collect();
        Some(choose_real_slots(&layouts, copies, per_copy, &rho, slot))
    } else {
        None
    };

    let mut blocks = Vec::with_capacity(groups * per_copy);
    for g in 0..groups {
        let layout = &layouts[g / copies];
        let orders: Vec<Vec<(usize, bool)>> = layout
            .iter()
            .enumerate()
            .map(|(pos, (_, sets))| match &real_slots {
                None => sets.iter().map(|&s| (s, false)).collect(),
                Some(chosen) => {
                    let mask = &chosen[g][pos];
                    let mut order: Vec<(usize, bool)> =
                        sets.iter().zip(mask).filter(|(_, &m)| m).map(|(&s, _)| (s, true)).collect();
                    order.extend(sets.iter().zip(mask).filter(|(_, &m)| !m).map(|(&s, _)| (s, false)));
                    order
                }
            })
            .collect();
        for i in 0..per_copy {
            let deliveries = layout
                .iter()
                .zip(&orders)
                .map(|((node, _), order)| {
                    let (s, is_real) = order[i];
                    let queue = if is_real || real_slots.is_none() {
                        &mut real[slot(*node, s)]
                    } else {
                        &mut pad[slot(*node, s)]
                    };
                    let value = queue.pop_front().expect("A_{k,S} has one value per copy");
                    Delivery { value, to: *node }
                })
                .collect();
            blocks.push(Block::new(deliveries)?);
        }
    }
    debug_assert!(real.iter().chain(&pad).all(VecDeque::is_empty));
    Ok(Schedule::new(blocks))
}

/// Decides, per group and receiver, which subsets carry real values.
///
/// Receiver `k` in group `g` may take at most one real value per subset and
/// at most `quota[g]` real values overall. Quotas start at the smallest
/// uniform level admitting a full assignment (a max flow saturating every
/// real value) and are then lowered group by group; the effective block count
/// of a group is its quota.
fn choose_real_slots(
    layouts: &[GroupLayout],
    copies: usize,
    per_copy: usize,
    rho: &[usize],
    slot: impl Fn(NodeId, usize) -> usize + Copy,
) -> Vec<Vec<Vec<bool>>> {
    let groups = layouts.len() * copies;
    let edges: usize = layouts.iter().map(|l| l.len() * per_copy).sum::<usize>() * copies;
    if edges > FLOW_EDGE_LIMIT {
        return greedy_real_slots(layouts, copies, rho, slot);
    }
    let total: usize = rho.iter().sum();
    let feasible = |quota: &[usize]| quota_flow(layouts, copies, rho, slot, quota).0 == total;

    let (mut lo, mut hi) = (0, per_copy);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if feasible(&vec![mid; groups]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let lower = |order: &mut dyn Iterator<Item = usize>| {
        let mut quota = vec![lo; groups];
        for g in order {
            let (mut a, mut b) = (0, quota[g]);
            while a < b {
                let mid = (a + b) / 2;
                quota[g] = mid;
                if feasible(&quota) {
                    b = mid;
                } else {
                    a = mid + 1;
                }
            }
            quota[g] = a;
        }
        quota
    };
    let backward = lower(&mut (0..groups).rev());
    let forward = lower(&mut (0..groups));
    let quota = if forward.iter().sum::<usize>() < backward.iter().sum::<usize>() {
        forward
    } else {
        backward
    };
    let (flow, chosen) = quota_flow(layouts, copies, rho, slot, &quota);
    debug_assert_eq!(flow, total);
    chosen
}

fn quota_flow(
    layouts: &[GroupLayout],
    copies: usize,
    rho: &[usize],
    slot: impl Fn(NodeId, usize) -> usize,
    quota: &[usize],
) -> (usize, Vec<Vec<Vec<bool>>>) {
    const SOURCE: usize = 0;
    const SINK: usize = 1;
    let unit_base = 2;
    let mut next = unit_base + rho.len();
    let members: usize = layouts.iter().map(Vec::len).sum::<usize>() * copies;
    let mut graph = FlowGraph::new(next + members);
    for (u, &count) in rho.iter().enumerate() {
        if count > 0 {
            graph.add_edge(SOURCE, unit_base + u, count as u64);
        }
    }
    let mut edge_ids = Vec::with_capacity(layouts.len() * copies);
    for (g, &q) in quota.iter().enumerate() {
        let layout = &layouts[g / copies];
        let mut per_member = Vec::with_capacity(layout.len());
        for (node, sets) in layout {
            let member = next;
            next += 1;
            graph.add_edge(member, SINK, q as u64);
            let ids: Vec<Option<usize>> = sets
                .iter()
                .map(|&s| {
                    let u = slot(*node, s);
                    (rho[u] > 0 && q > 0).then(|| graph.add_edge(unit_base + u, member, 1))
                })
                .collect();
            per_member.push(ids);
        }
        edge_ids.push(per_member);
    }
    let flow = graph.max_flow(SOURCE, SINK) as usize;
    let chosen = edge_ids
        .iter()
        .map(|group| {
            group
                .iter()
                .map(|ids| ids.iter().map(|id| id.is_some_and(|id| graph.flow(id) > 0)).collect())
                .collect()
        })
        .collect();
    (flow, chosen)
}

fn greedy_real_slots(
    layouts: &[GroupLayout],
    copies: usize,
    rho: &[usize],
    slot: impl Fn(NodeId, usize) -> usize,
) -> Vec<Vec<Vec<bool>>> {
    let mut left = rho.to_vec();
    (0..layouts.len() * copies)
        .map(|g| {
            layouts[g / copies]
                .iter()
                .map(|(node, sets)| {
                    sets.iter()
                        .map(|&s| {
                            let u = slot(*node, s);
                            let take = left[u] > 0;
                            if take {
                                left[u] -= 1;
                            }
                            take
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Instance, SystemParams};

    fn instance(k: u32, q: u32, n: u32, r: u32) -> Instance {
        Instance::symmetric(&SystemParams::new(k, n, q, r).unwrap()).unwrap()
    }

    fn run(inst: &Instance, policy: PaddingPolicy) -> Schedule {
        schedule_with(&inst.placement, &inst.assignment, policy).unwrap()
    }

    #[test]
    fn three_node_single_block() {
        let inst = instance(3, 3, 3, 2);
        let s = run(&inst, PaddingPolicy::PackReal);
        assert_eq!(s.t(), 1);
        assert_eq!(
            s.blocks()[0].deliveries(),
            &[Delivery::new(1, 3, 1), Delivery::new(2, 2, 2), Delivery::new(3, 1, 3)]
        );
    }

    #[test]
    fn four_node_example_takes_three_blocks() {
        let inst = instance(4, 4, 6, 2);
        let s = run(&inst, PaddingPolicy::PackReal);
        assert_eq!(s.t(), 3);
        assert!(s.blocks().iter().all(|b| b.receivers() == vec![1, 2, 3, 4]));
        assert_eq!(
            s.blocks()[0].deliveries(),
            &[
                Delivery::new(1, 4, 1),
                Delivery::new(2, 2, 2),
                Delivery::new(3, 1, 3),
                Delivery::new(4, 1, 4)
            ]
        );
    }

    #[test]
    fn five_node_schedule_has_fifteen_blocks() {
        let inst = instance(5, 5, 20, 2);
        for policy in [PaddingPolicy::InOrder, PaddingPolicy::PackReal] {
            let s = run(&inst, policy);
            assert_eq!(s.t(), 15);
            assert!(s.blocks().iter().all(|b| b.len() == 4));
            // Receiver sets in lexicographic order, three blocks each.
            assert_eq!(s.blocks()[0].receivers(), vec![1, 2, 3, 4]);
            assert_eq!(s.blocks()[14].receivers(), vec![2, 3, 4, 5]);
        }
        assert_eq!(run(&inst, PaddingPolicy::InOrder), run(&inst, PaddingPolicy::PackReal));
    }

    #[test]
    fn low_r_first_block_uses_first_subsets() {
        let inst = instance(5, 5, 20, 2);
        let s = run(&inst, PaddingPolicy::InOrder);
        // R = {1,2,3,4}: node 1 takes from S = {2,3}, the 4th 2-subset
        // (file 5), node 2 from {1,3} (file 2), node 3 from {1,2} (file 1),
        // node 4 from {1,2} (file 1).
        assert_eq!(
            s.blocks()[0].deliveries(),
            &[
                Delivery::new(1, 5, 1),
                Delivery::new(2, 2, 2),
                Delivery::new(3, 1, 3),
                Delivery::new(4, 1, 4)
            ]
        );
    }

    #[test]
    fn padded_five_node_schedule_packs_into_eight_blocks() {
        let inst = instance(5, 5, 10, 2);
        let packed = run(&inst, PaddingPolicy::PackReal);
        assert_eq!(packed.t(), 15);
        assert_eq!(packed.effective(&inst.placement).t(), 8);
        let literal = run(&inst, PaddingPolicy::InOrder);
        assert_eq!(literal.t(), 15);
        assert_eq!(literal.effective(&inst.placement).t(), 9);
        assert_eq!(packed.vacuous_blocks(&inst.placement).len(), 7);
    }

    #[test]
    fn padding_goes_last_for_high_r() {
        let inst = instance(4, 4, 5, 2);
        let s = run(&inst, PaddingPolicy::PackReal);
        assert_eq!(s.t(), 3);
        let eff = s.effective(&inst.placement);
        assert_eq!(eff.t(), 3);
        assert_eq!(s.vacuous_blocks(&inst.placement), Vec::<usize>::new());
        let last = &s.blocks()[2];
        assert!(last.deliveries().iter().filter(|d| inst.placement.is_padding(d.value.n)).count() >= 2);
    }

    #[test]
    fn full_replication_is_empty() {
        let inst = instance(3, 3, 3, 3);
        assert_eq!(run(&inst, PaddingPolicy::PackReal).t(), 0);
    }

    #[test]
    fn precondition_errors() {
        let inst = instance(5, 5, 20, 2);
        assert!(matches!(
            schedule_high_r(&inst.placement, &inst.assignment),
            Err(ScheduleError::Precondition(_))
        ));
        let inst = instance(4, 4, 6, 2);
        assert!(matches!(
            schedule_low_r(&inst.placement, &inst.assignment),
            Err(ScheduleError::Precondition(_))
        ));
        let odd = Placement::from_mapped_files(3, 3, 3, vec![vec![1], vec![1, 2], vec![1, 2, 3]])
            .unwrap();
        let a = ReduceAssignment::contiguous(3, 3).unwrap();
        assert_eq!(schedule(&odd, &a), Err(ScheduleError::NotSymmetric));
    }

    #[test]
    fn greedy_fallback_covers_everything() {
        let inst = instance(5, 5, 10, 2);
        let k = 5;
        let subsets = lex_subsets(k, 2);
        let index: BTreeMap<Vec<NodeId>, usize> =
            subsets.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        let layouts: Vec<GroupLayout> = lex_subsets(k, 4)
            .into_iter()
            .map(|big| {
                big.iter()
                    .map(|&node| {
                        let rest: Vec<NodeId> =
                            big.iter().copied().filter(|&x| x != node).collect();
                        let sets = lex_subsets(3, 2)
                            .into_iter()
                            .map(|pick| {
                                index[&pick.iter().map(|&i| rest[i as usize - 1]).collect::<Vec<_>>()]
                            })
                            .collect();
                        (node, sets)
                    })
                    .collect()
            })
            .collect();
        let slot = |node: NodeId, s: usize| (node as usize - 1) * subsets.len() + s;
        let mut rho = vec![0; k as usize * subsets.len()];
        for node in 1..=k {
            for n in 1..=inst.placement.n_real() {
                let s = (n as usize - 1) % subsets.len();
                if !subsets[s].contains(&node) {
                    rho[slot(node, s)] += 1;
                }
            }
        }
        let chosen = greedy_real_slots(&layouts, 1, &rho, slot);
        let placed: usize = chosen.iter().flatten().flatten().filter(|&&c| c).count();
        assert_eq!(placed, rho.iter().sum::<usize>());
    }
}
