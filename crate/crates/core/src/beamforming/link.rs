use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::precoder::dot;
use super::{build_block_beamformers, BeamformingError, BeamformingPlan, ChannelMatrix, Tolerances};
use crate::model::{IntermediateValueId, NodeId, Placement};
use crate::scheduler::{Block, Schedule};

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Coded packet `ã_{q,n} ∈ ℂ^τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub id: IntermediateValueId,
    pub symbols: Vec<Complex64>,
}

impl Packet {
    /// Unit-power QPSK symbols, a deterministic function of `(id, seed)`.
    pub fn qpsk(id: IntermediateValueId, tau: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream((u64::from(id.q) << 32) | u64::from(id.n));
        let a = std::f64::consts::FRAC_1_SQRT_2;
        let symbols = (0..tau)
            .map(|_| {
                let re = if rng.random::<bool>() { a } else { -a };
                let im = if rng.random::<bool>() { a } else { -a };
                Complex64::new(re, im)
            })
            .collect();
        Packet { id, symbols }
    }

    /// Content of an empty padding file.
    pub fn zeros(id: IntermediateValueId, tau: usize) -> Self {
        Packet { id, symbols: vec![Complex64::new(0.0, 0.0); tau] }
    }
}

/// Packets known to the network, keyed by value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PacketStore {
    packets: BTreeMap<IntermediateValueId, Packet>,
}

impl PacketStore {
    /// QPSK packets for every real value in `schedule`, zeros for padding.
    pub fn for_schedule(schedule: &Schedule, p: &Placement, tau: usize, seed: u64) -> Self {
        let mut store = PacketStore::default();
        for d in schedule.deliveries() {
            store.insert(if p.is_padding(d.value.n) {
                Packet::zeros(d.value, tau)
            } else {
                Packet::qpsk(d.value, tau, seed)
            });
        }
        store
    }

    pub fn insert(&mut self, packet: Packet) {
        self.packets.insert(packet.id, packet);
    }

    pub fn get(&self, id: IntermediateValueId) -> Result<&Packet, BeamformingError> {
        self.packets.get(&id).ok_or(BeamformingError::MissingPacket(id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkConfig {
    /// Per-node power `P`, linear.
    pub power: f64,
    pub tau: usize,
    pub noise: bool,
    pub seed: u64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig { power: db_to_linear(30.0), tau: 64, noise: false, seed: 1 }
    }
}

fn amplitude(power: f64, share: f64) -> f64 {
    (power * share).sqrt()
}

/// Received signals `y_k = Σ_i h_{k,i} x_i + z_k` for every receiver of the
/// plan. Noise for block `block_index` comes from its own generator stream.
pub fn transmit_block(
    h: &ChannelMatrix,
    plan: &BeamformingPlan,
    packets: &PacketStore,
    cfg: &LinkConfig,
    block_index: u64,
) -> Result<BTreeMap<NodeId, Vec<Complex64>>, BeamformingError> {
    if cfg.power.is_nan() || cfg.power <= 0.0 {
        return Err(BeamformingError::InvalidPower(cfg.power));
    }
    let zero = Complex64::new(0.0, 0.0);
    let mut x = vec![vec![zero; cfg.tau]; h.k() as usize];
    for s in &plan.streams {
        let packet = packets.get(s.value)?;
        let amp = amplitude(cfg.power, s.power_share);
        for (&i, beta) in s.support.iter().zip(&s.v) {
            let coeff = beta * amp;
            for (xt, a) in x[i as usize - 1].iter_mut().zip(&packet.symbols) {
                *xt += coeff * a;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(block_index);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    Ok(plan
        .receivers
        .iter()
        .map(|&k| {
            let mut y = vec![zero; cfg.tau];
            for i in 1..=h.k() {
                let hki = h.at(k, i);
                for (yt, xt) in y.iter_mut().zip(&x[i as usize - 1]) {
                    *yt += hki * xt;
                }
            }
            if cfg.noise {
                for yt in &mut y {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    *yt += Complex64::new(re, im) * scale;
                }
            }
            (k, y)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeStatus {
    Ok,
    /// Padding value: nothing to recover.
    Vacuous,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverOutcome {
    pub receiver: NodeId,
    pub value: IntermediateValueId,
    pub raw: Vec<Complex64>,
    /// Raw signal minus the cached streams.
    pub cleaned: Vec<Complex64>,
    /// `cleaned / (gain · amplitude)`.
    pub decoded: Vec<Complex64>,
    pub status: DecodeStatus,
    /// `‖decoded − ã‖ / ‖ã‖`; absolute for zero packets.
    pub rel_error: f64,
    /// Largest `|h_{k,S}ᵀ v|²` over streams neither intended for nor cached
    /// at this receiver.
    pub residual_power: f64,
    pub intended_gain: Complex64,
    /// `|gain|² · P · share` over unit noise.
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockReception {
    pub outcomes: Vec<ReceiverOutcome>,
}

impl BlockReception {
    pub fn all_ok(&self) -> bool {
        self.outcomes.iter().all(|o| o.status != DecodeStatus::Failed)
    }
}

/// Per receiver: the largest leaked power from streams that are neither
/// intended for it nor cached there. Zero when there are none.
pub fn residual_interference(h: &ChannelMatrix, plan: &BeamformingPlan) -> Vec<(NodeId, f64)> {
    plan.receivers
        .iter()
        .map(|&k| {
            let leak = plan
                .streams
                .iter()
                .filter(|s| s.to != k && !s.support.contains(&k))
                .map(|s| {
                    let hv = h.channel_vector(k, &s.support).expect("plan indices are valid");
                    dot(&hv, &s.v).norm_sqr()
                })
                .fold(0.0, f64::max);
            (k, leak)
        })
        .collect()
}

/// Side-information cancellation and scaling at every receiver.
pub fn decode_block(
    h: &ChannelMatrix,
    plan: &BeamformingPlan,
    packets: &PacketStore,
    raw: &BTreeMap<NodeId, Vec<Complex64>>,
    cfg: &LinkConfig,
    p: &Placement,
    tol: &Tolerances,
) -> Result<BlockReception, BeamformingError> {
    let leaks: BTreeMap<NodeId, f64> = residual_interference(h, plan).into_iter().collect();
    let outcomes = plan
        .streams
        .iter()
        .map(|s| {
            let k = s.to;
            let y = raw
                .get(&k)
                .ok_or_else(|| BeamformingError::OutOfRange(format!("no signal at node {k}")))?;
            let mut cleaned = y.clone();
            for other in plan.streams.iter().filter(|o| o.support.contains(&k)) {
                let cached = packets.get(other.value)?;
                let g = dot(&h.channel_vector(k, &other.support)?, &other.v)
                    * amplitude(cfg.power, other.power_share);
                for (c, a) in cleaned.iter_mut().zip(&cached.symbols) {
                    *c -= g * a;
                }
            }
            let amp = amplitude(cfg.power, s.power_share);
            let scale = s.intended_gain * amp;
            let decoded: Vec<Complex64> = cleaned.iter().map(|c| c / scale).collect();
            let truth = &packets.get(s.value)?.symbols;
            let err = decoded.iter().zip(truth).map(|(d, a)| (d - a).norm_sqr()).sum::<f64>().sqrt();
            let norm = truth.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            let rel_error = if norm > 0.0 { err / norm } else { err };
            let status = if p.is_padding(s.value.n) {
                DecodeStatus::Vacuous
            } else if cfg.noise {
                let hard_ok = decoded.iter().zip(truth).all(|(d, a)| {
                    d.re.signum() == a.re.signum() && d.im.signum() == a.im.signum()
                });
                if hard_ok { DecodeStatus::Ok } else { DecodeStatus::Failed }
            } else if rel_error <= tol.residual_tol {
                DecodeStatus::Ok
            } else {
                DecodeStatus::Failed
            };
            Ok(ReceiverOutcome {
                receiver: k,
                value: s.value,
                raw: y.clone(),
                cleaned,
                decoded,
                status,
                rel_error,
                residual_power: leaks[&k],
                intended_gain: s.intended_gain,
                snr_db: 10.0 * (s.intended_gain.norm_sqr() * amp * amp).log10(),
            })
        })
        .collect::<Result<_, BeamformingError>>()?;
    Ok(BlockReception { outcomes })
}

/// One row of the residual/SNR audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuditRow {
    pub block: usize,
    pub receiver: NodeId,
    pub intended_gain: f64,
    pub max_residual: f64,
    pub snr_db: f64,
}

pub fn audit_csv(rows: &[AuditRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).expect("audit rows serialize");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockOutcome {
    pub plan: BeamformingPlan,
    pub reception: BlockReception,
    pub audit: Vec<AuditRow>,
}

/// Precode, transmit and decode block `index` (1-based).
pub fn simulate_block(
    h: &ChannelMatrix,
    block: &Block,
    index: usize,
    p: &Placement,
    packets: &PacketStore,
    cfg: &LinkConfig,
    tol: &Tolerances,
) -> Result<BlockOutcome, BeamformingError> {
    let plan = build_block_beamformers(h, block, p, tol)?;
    let raw = transmit_block(h, &plan, packets, cfg, index as u64)?;
    let reception = decode_block(h, &plan, packets, &raw, cfg, p, tol)?;
    let audit = reception
        .outcomes
        .iter()
        .map(|o| AuditRow {
            block: index,
            receiver: o.receiver,
            intended_gain: o.intended_gain.norm(),
            max_residual: o.residual_power,
            snr_db: o.snr_db,
        })
        .collect();
    Ok(BlockOutcome { plan, reception, audit })
}
