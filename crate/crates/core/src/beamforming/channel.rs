use itertools::Itertools;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::BeamformingError;
use crate::model::NodeId;

pub const MAX_REJECTION_ROUNDS: u32 = 100;

/// Up to this size every square submatrix is checked; above it all 2×2
/// submatrices plus `SAMPLED_SUBMATRICES` larger ones.
const EXHAUSTIVE_K: u32 = 6;
const SAMPLED_SUBMATRICES: usize = 200;

/// `K × K` coefficients `h_{k,i}`, row = receiver, column = transmitter.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    k: u32,
    h: Vec<Complex64>,
    h_min: f64,
    h_max: f64,
    seed: Option<u64>,
}

impl ChannelMatrix {
    /// Wraps explicit coefficients; the bounds are taken from the data.
    pub fn from_rows(rows: Vec<Vec<Complex64>>) -> Result<Self, BeamformingError> {
        let k = rows.len();
        if k == 0 {
            return Err(BeamformingError::NoNodes);
        }
        if rows.iter().any(|r| r.len() != k) {
            return Err(BeamformingError::Document(format!("channel must be {k}x{k}")));
        }
        let h: Vec<Complex64> = rows.into_iter().flatten().collect();
        let h_min = h.iter().map(|c| c.norm()).fold(f64::INFINITY, f64::min);
        let h_max = h.iter().map(|c| c.norm()).fold(0.0, f64::max);
        Ok(ChannelMatrix { k: k as u32, h, h_min, h_max, seed: None })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.h_min, self.h_max)
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// `h_{k,i}`, 1-based.
    pub fn get(&self, k: NodeId, i: NodeId) -> Result<Complex64, BeamformingError> {
        self.check(k)?;
        self.check(i)?;
        Ok(self.at(k, i))
    }

    pub(crate) fn at(&self, k: NodeId, i: NodeId) -> Complex64 {
        self.h[(k as usize - 1) * self.k as usize + i as usize - 1]
    }

    /// `h_{k,S} = [h_{k,s} for s in S]`, in the order of `support`.
    pub fn channel_vector(
        &self,
        k: NodeId,
        support: &[NodeId],
    ) -> Result<Vec<Complex64>, BeamformingError> {
        if support.is_empty() {
            return Err(BeamformingError::EmptySupport);
        }
        self.check(k)?;
        support.iter().map(|&i| self.check(i).map(|_| self.at(k, i))).collect()
    }

    pub fn max_magnitude(&self) -> f64 {
        self.h.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn rows(&self) -> Vec<Vec<Complex64>> {
        self.h.chunks(self.k as usize).map(<[Complex64]>::to_vec).collect()
    }

    /// JSON array of rows, each an array of `[re, im]` pairs.
    pub fn to_json(&self) -> String {
        let rows: Vec<Vec<[f64; 2]>> =
            self.rows().iter().map(|r| r.iter().map(|c| [c.re, c.im]).collect()).collect();
        serde_json::to_string_pretty(&rows).expect("channel serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, BeamformingError> {
        let rows: Vec<Vec<[f64; 2]>> =
            serde_json::from_str(text).map_err(|e| BeamformingError::Document(e.to_string()))?;
        Self::from_rows(
            rows.into_iter()
                .map(|r| r.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
                .collect(),
        )
    }

    fn check(&self, node: NodeId) -> Result<(), BeamformingError> {
        if node == 0 || node > self.k {
            return Err(BeamformingError::OutOfRange(format!("node {node} with K={}", self.k)));
        }
        Ok(())
    }

    fn submatrix_well_conditioned(&self, rows: &[NodeId], cols: &[NodeId], rank_tol: f64) -> bool {
        let m = DMatrix::from_fn(rows.len(), cols.len(), |r, c| self.at(rows[r], cols[c]));
        let sv = m.singular_values();
        let max = sv.max();
        let min = sv.min();
        max > 0.0 && min > rank_tol * max
    }

    fn well_conditioned(&self, rank_tol: f64, rng: &mut ChaCha8Rng) -> bool {
        let k = self.k;
        let nodes: Vec<NodeId> = (1..=k).collect();
        let exhaustive_up_to = if k <= EXHAUSTIVE_K { k } else { 2 };
        for size in 2..=exhaustive_up_to as usize {
            for rows in nodes.iter().copied().combinations(size) {
                for cols in nodes.iter().copied().combinations(size) {
                    if !self.submatrix_well_conditioned(&rows, &cols, rank_tol) {
                        return false;
                    }
                }
            }
        }
        if k > EXHAUSTIVE_K {
            for _ in 0..SAMPLED_SUBMATRICES {
                let size = rng.random_range(3..=k as usize);
                let pick = |rng: &mut ChaCha8Rng| {
                    let mut v: Vec<NodeId> =
                        sample(rng, k as usize, size).into_iter().map(|i| i as NodeId + 1).collect();
                    v.sort_unstable();
                    v
                };
                let rows = pick(rng);
                let cols = pick(rng);
                if !self.submatrix_well_conditioned(&rows, &cols, rank_tol) {
                    return false;
                }
            }
        }
        true
    }
}

/// Seeded channel with magnitudes in `[h_min, h_max]` and well-conditioned
/// square submatrices.
///
/// Each coefficient keeps the phase of a `CN(0, 1)` draw `g`; its magnitude is
/// `h_min + (h_max − h_min)(1 − e^{−|g|²})`, which is uniform on the interval.
pub fn generate_channel(
    k: u32,
    seed: u64,
    h_min: f64,
    h_max: f64,
    rank_tol: f64,
) -> Result<ChannelMatrix, BeamformingError> {
    if k == 0 {
        return Err(BeamformingError::NoNodes);
    }
    if !(h_min > 0.0 && h_min < h_max && h_max.is_finite()) {
        return Err(BeamformingError::InvalidBounds { h_min, h_max });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_REJECTION_ROUNDS {
        let h = (0..k * k)
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                let g = Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
                let magnitude = h_min + (h_max - h_min) * (1.0 - (-g.norm_sqr()).exp());
                Complex64::from_polar(magnitude, g.arg())
            })
            .collect();
        let channel = ChannelMatrix { k, h, h_min, h_max, seed: Some(seed) };
        if channel.well_conditioned(rank_tol, &mut rng) {
            return Ok(channel);
        }
    }
    Err(BeamformingError::RejectionLimit { rounds: MAX_REJECTION_ROUNDS })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_node_channel() {
        let h = generate_channel(1, 99, 0.1, 10.0, 1e-8).unwrap();
        let c = h.get(1, 1).unwrap().norm();
        assert!((0.1..=10.0).contains(&c));
    }

    #[test]
    fn deterministic_and_bounded() {
        let a = generate_channel(5, 7, 0.1, 10.0, 1e-8).unwrap();
        let b = generate_channel(5, 7, 0.1, 10.0, 1e-8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_channel(5, 8, 0.1, 10.0, 1e-8).unwrap());
        for row in a.rows() {
            for c in row {
                assert!(c.norm() >= 0.1 && c.norm() <= 10.0);
            }
        }
    }

    #[test]
    fn two_by_two_minors_well_conditioned() {
        let h = generate_channel(5, 7, 0.1, 10.0, 1e-8).unwrap();
        let mut checked = 0;
        for rows in (1..=5).combinations(2) {
            for cols in (1..=5).combinations(2) {
                let m = DMatrix::from_fn(2, 2, |r, c| h.at(rows[r], cols[c]));
                let sv = m.singular_values();
                assert!(sv.max() / sv.min() < 1e8);
                checked += 1;
            }
        }
        assert_eq!(checked, 100);
    }

    #[test]
    fn channel_vectors() {
        let h = generate_channel(4, 3, 0.1, 10.0, 1e-8).unwrap();
        assert_eq!(h.channel_vector(1, &[2, 3]).unwrap(), vec![h.at(1, 2), h.at(1, 3)]);
        assert_eq!(h.channel_vector(2, &[4]).unwrap(), vec![h.at(2, 4)]);
        assert_eq!(h.channel_vector(3, &[1, 2, 3, 4]).unwrap(), h.rows()[2]);
        assert_eq!(h.channel_vector(1, &[]), Err(BeamformingError::EmptySupport));
        assert!(matches!(h.channel_vector(5, &[1]), Err(BeamformingError::OutOfRange(_))));
        assert!(matches!(h.channel_vector(1, &[0]), Err(BeamformingError::OutOfRange(_))));
    }

    #[test]
    fn bad_bounds_rejected() {
        assert!(matches!(
            generate_channel(3, 1, 0.0, 1.0, 1e-8),
            Err(BeamformingError::InvalidBounds { .. })
        ));
        assert!(matches!(
            generate_channel(3, 1, 2.0, 1.0, 1e-8),
            Err(BeamformingError::InvalidBounds { .. })
        ));
        assert_eq!(generate_channel(0, 1, 0.1, 1.0, 1e-8), Err(BeamformingError::NoNodes));
    }

    #[test]
    fn impossible_conditioning_hits_round_limit() {
        assert_eq!(
            generate_channel(3, 1, 0.1, 10.0, 1.0),
            Err(BeamformingError::RejectionLimit { rounds: MAX_REJECTION_ROUNDS })
        );
    }

    #[test]
    fn json_round_trip() {
        let h = generate_channel(3, 11, 0.1, 10.0, 1e-8).unwrap();
        let back = ChannelMatrix::from_json(&h.to_json()).unwrap();
        assert_eq!(back.rows(), h.rows());
        let v: serde_json::Value = serde_json::from_str(&h.to_json()).unwrap();
        assert_eq!(v.as_array().unwrap().len(), 3);
        assert_eq!(v[0][0].as_array().unwrap().len(), 2);
    }
}
