use std::collections::BTreeMap;

use num_complex::Complex64;

use super::{BeamformingError, ChannelMatrix, Tolerances};
use crate::model::{IntermediateValueId, NodeId, Placement};
use crate::scheduler::Block;

/// Unit-norm `v` with `h_{j,S}ᵀ v ≈ 0` for every `j ∈ nulled`.
///
/// Row-reduces the stacked `|J| × |S|` channel with partial pivoting, sets the
/// first free variable to one and the others to zero. With no constraints the
/// result is `e₁`.
pub fn zero_forcing_vector(
    h: &ChannelMatrix,
    support: &[NodeId],
    nulled: &[NodeId],
    tol: &Tolerances,
) -> Result<Vec<Complex64>, BeamformingError> {
    if support.is_empty() {
        return Err(BeamformingError::EmptySupport);
    }
    if nulled.len() >= support.len() {
        return Err(BeamformingError::Infeasible { nulled: nulled.len(), support: support.len() });
    }
    let cols = support.len();
    let mut rows: Vec<Vec<Complex64>> =
        nulled.iter().map(|&j| h.channel_vector(j, support)).collect::<Result<_, _>>()?;
    if rows.is_empty() {
        let mut v = vec![Complex64::new(0.0, 0.0); cols];
        v[0] = Complex64::new(1.0, 0.0);
        return Ok(v);
    }

    let scale = rows.iter().flatten().map(|c| c.norm()).fold(0.0, f64::max);
    let eps = tol.rank_tol * scale.max(f64::MIN_POSITIVE);
    let mut pivots: Vec<usize> = Vec::new();
    let mut row = 0;
    for col in 0..cols {
        if row == rows.len() {
            break;
        }
        let best = (row..rows.len())
            .max_by(|&a, &b| rows[a][col].norm().total_cmp(&rows[b][col].norm()))
            .expect("non-empty range");
        if rows[best][col].norm() <= eps {
            continue;
        }
        rows.swap(row, best);
        let lead = rows[row][col];
        for c in &mut rows[row] {
            *c /= lead;
        }
        let pivot = rows[row].clone();
        for (other, r) in rows.iter_mut().enumerate() {
            let factor = r[col];
            if other != row && factor != Complex64::new(0.0, 0.0) {
                for (c, p) in r.iter_mut().zip(&pivot) {
                    *c -= factor * p;
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    let free = (0..cols)
        .find(|c| !pivots.contains(c))
        .ok_or(BeamformingError::Infeasible { nulled: nulled.len(), support: cols })?;

    let mut v = vec![Complex64::new(0.0, 0.0); cols];
    v[free] = Complex64::new(1.0, 0.0);
    for (r, &p) in pivots.iter().enumerate() {
        v[p] = -rows[r][free];
    }
    let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|c| *c /= norm);

    let limit = tol.zf_tol * h.max_magnitude().max(1.0);
    for &j in nulled {
        let residual = dot(&h.channel_vector(j, support)?, &v).norm();
        if residual > limit {
            return Err(BeamformingError::ZfResidual { residual });
        }
    }
    Ok(v)
}

/// `aᵀ b` without conjugation.
pub(crate) fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One delivered value and its precoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    pub value: IntermediateValueId,
    pub to: NodeId,
    /// `S_n`, ascending.
    pub support: Vec<NodeId>,
    /// `J_n = R ∖ ({k} ∪ S_n)`, ascending.
    pub nulled: Vec<NodeId>,
    /// `v_{S_n,q,n}`, unit norm, entries in `support` order.
    pub v: Vec<Complex64>,
    /// `h_{k,S_n}ᵀ v` at the intended receiver.
    pub intended_gain: Complex64,
    /// Fraction of `P` given to this stream. Every antenna in the support
    /// carries at most `1 / share` streams, so per-node power stays `≤ P`.
    pub power_share: f64,
}

/// Precoders for all streams of one block, in delivery order.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingPlan {
    pub receivers: Vec<NodeId>,
    pub streams: Vec<Stream>,
}

impl BeamformingPlan {
    /// `β_{i,q,n}`: antenna `i`'s coefficient for `value`, if `i ∈ S_n`.
    pub fn beta(&self, i: NodeId, value: IntermediateValueId) -> Option<Complex64> {
        let s = self.streams.iter().find(|s| s.value == value)?;
        s.support.iter().position(|&x| x == i).map(|p| s.v[p])
    }

    pub fn stream(&self, value: IntermediateValueId) -> Option<&Stream> {
        self.streams.iter().find(|s| s.value == value)
    }
}

pub fn build_block_beamformers(
    h: &ChannelMatrix,
    block: &Block,
    p: &Placement,
    tol: &Tolerances,
) -> Result<BeamformingPlan, BeamformingError> {
    let receivers = block.receivers();
    let mut load: BTreeMap<NodeId, usize> = BTreeMap::new();
    for d in block.deliveries() {
        for &i in p.support_set(d.value.n)? {
            *load.entry(i).or_default() += 1;
        }
    }
    let streams = block
        .deliveries()
        .iter()
        .map(|d| {
            let support = p.support_set(d.value.n)?.to_vec();
            if support.contains(&d.to) {
                return Err(BeamformingError::ReceiverCaches { value: d.value, to: d.to });
            }
            let nulled: Vec<NodeId> = receivers
                .iter()
                .copied()
                .filter(|&j| j != d.to && !support.contains(&j))
                .collect();
            let v = zero_forcing_vector(h, &support, &nulled, tol)?;
            let intended_gain = dot(&h.channel_vector(d.to, &support)?, &v);
            if intended_gain.norm() < tol.gain_floor {
                return Err(BeamformingError::WeakGain {
                    value: d.value,
                    gain: intended_gain.norm(),
                });
            }
            let busiest = support.iter().map(|i| load[i]).max().expect("support non-empty");
            Ok(Stream {
                value: d.value,
                to: d.to,
                support,
                nulled,
                v,
                intended_gain,
                power_share: 1.0 / busiest as f64,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(BeamformingPlan { receivers, streams })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamforming::generate_channel;
    use crate::model::{Instance, SystemParams};
    use crate::scheduler::Delivery;
    use nalgebra::DMatrix;

    fn channel(k: u32, seed: u64) -> ChannelMatrix {
        generate_channel(k, seed, 0.1, 10.0, 1e-8).unwrap()
    }

    #[test]
    fn no_constraint_gives_first_basis_vector() {
        let h = channel(4, 1);
        let v = zero_forcing_vector(&h, &[2, 3], &[], &Tolerances::default()).unwrap();
        assert_eq!(v, vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
    }

    #[test]
    fn single_antenna_cannot_null() {
        let h = channel(4, 1);
        assert_eq!(
            zero_forcing_vector(&h, &[2], &[1], &Tolerances::default()),
            Err(BeamformingError::Infeasible { nulled: 1, support: 1 })
        );
    }

    #[test]
    fn null_vector_matches_svd_null_space() {
        // v must be orthogonal (in the bilinear sense) to h_{1,{2,3}}, and the
        // conjugated right-singular vector for σ = 0 spans the same line.
        let h = channel(4, 5);
        let v = zero_forcing_vector(&h, &[2, 3], &[1], &Tolerances::default()).unwrap();
        let row = h.channel_vector(1, &[2, 3]).unwrap();
        assert!(dot(&row, &v).norm() < 1e-12);
        let norm: f64 = v.iter().map(|c| c.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-12);

        let a = DMatrix::from_fn(2, 2, |r, c| if r == 0 { row[c] } else { Complex64::new(0.0, 0.0) });
        let svd = a.svd(false, true);
        let v_t = svd.v_t.unwrap();
        let (null_row, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let oracle: Vec<Complex64> = (0..2).map(|c| v_t[(null_row, c)].conj()).collect();
        let overlap: Complex64 = oracle.iter().zip(&v).map(|(o, x)| o.conj() * x).sum();
        assert!((overlap.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn four_node_plan_satisfies_null_conditions() {
        let inst = Instance::symmetric(&SystemParams::new(4, 6, 4, 2).unwrap()).unwrap();
        let block = Block::new(vec![
            Delivery::new(1, 4, 1),
            Delivery::new(2, 3, 2),
            Delivery::new(3, 3, 3),
            Delivery::new(4, 4, 4),
        ])
        .unwrap();
        let h = channel(4, 42);
        let plan = build_block_beamformers(&h, &block, &inst.placement, &Tolerances::default())
            .unwrap();
        assert_eq!(plan.streams.len(), 4);
        // a[4,4] from {2,3} is nulled at node 1; a[1,4] at node 4.
        let s44 = plan.stream(IntermediateValueId::new(4, 4)).unwrap();
        assert_eq!((s44.support.clone(), s44.nulled.clone()), (vec![2, 3], vec![1]));
        let s14 = plan.stream(IntermediateValueId::new(1, 4)).unwrap();
        assert_eq!(s14.nulled, vec![4]);
        for s in &plan.streams {
            for &j in &s.nulled {
                assert!(dot(&h.channel_vector(j, &s.support).unwrap(), &s.v).norm() < 1e-9);
            }
            assert!(s.intended_gain.norm() >= 1e-6);
            // Every node serves two streams.
            assert_eq!(s.power_share, 0.5);
        }
        assert_eq!(plan.beta(2, IntermediateValueId::new(4, 4)), Some(s44.v[0]));
        assert_eq!(plan.beta(1, IntermediateValueId::new(4, 4)), None);
    }

    #[test]
    fn receiver_that_caches_rejected() {
        let inst = Instance::symmetric(&SystemParams::new(4, 6, 4, 2).unwrap()).unwrap();
        let block = Block::new(vec![Delivery::new(1, 1, 1)]).unwrap();
        assert!(matches!(
            build_block_beamformers(&channel(4, 1), &block, &inst.placement, &Tolerances::default()),
            Err(BeamformingError::ReceiverCaches { .. })
        ));
    }

    #[test]
    fn single_stream_plan() {
        let inst = Instance::symmetric(&SystemParams::new(4, 6, 4, 2).unwrap()).unwrap();
        let block = Block::new(vec![Delivery::new(1, 4, 1)]).unwrap();
        let plan =
            build_block_beamformers(&channel(4, 2), &block, &inst.placement, &Tolerances::default())
                .unwrap();
        assert_eq!(plan.streams.len(), 1);
        assert!(plan.streams[0].nulled.is_empty());
        assert_eq!(plan.streams[0].power_share, 1.0);
    }
}
