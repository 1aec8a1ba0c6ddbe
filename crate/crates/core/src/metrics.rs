//! Closed-form loads, baselines, the replication converse and tradeoff tables.
//!
//! Everything is exact in [`Rational`]; decimals appear only in rendered CSV
//! and JSON.

use std::str::FromStr;

use num_traits::{Signed, ToPrimitive, Zero};
use serde_json::json;
use thiserror::Error;

use crate::model::{Instance, ModelError, Placement, SystemParams};
use crate::scheduler::{schedule_with, PaddingPolicy, ScheduleError};
use crate::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("computation load r={r} outside [1, K={k}]")]
    LoadOutOfRange { r: String, k: u32 },
    #[error("file {n}: replication {theta} outside [1, K={k}]")]
    ReplicationOutOfRange { n: usize, theta: u32, k: u32 },
    #[error("replication profile is empty")]
    EmptyProfile,
    #[error("cannot parse rational from {0:?}")]
    Parse(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

fn ratio(n: u64, d: u64) -> Rational {
    Rational::new(n as i64, d as i64)
}

fn check_load(k: u32, r: Rational) -> Result<(), MetricsError> {
    if k == 0 || r < Rational::from(1) || r > Rational::from(i64::from(k)) {
        return Err(MetricsError::LoadOutOfRange { r: r.to_string(), k });
    }
    Ok(())
}

/// `(1 − r/K) / min{K, 2r}` for any real `r ∈ [1, K]`.
pub fn closed_form_load(k: u32, r: Rational) -> Result<Rational, MetricsError> {
    check_load(k, r)?;
    let k = Rational::from(i64::from(k));
    let size = (r * 2).min(k);
    Ok((Rational::from(1) - r / k) / size)
}

/// Minimum communication load at integer computation load `r`.
pub fn optimal_load(k: u32, r: u32) -> Result<Rational, MetricsError> {
    closed_form_load(k, Rational::from(i64::from(r)))
}

/// One uncoded value per block: `1 − r/K`.
pub fn uncoded_tdma_load(k: u32, r: u32) -> Result<Rational, MetricsError> {
    check_load(k, Rational::from(i64::from(r)))?;
    Ok(Rational::from(1) - ratio(u64::from(r), u64::from(k)))
}

/// One coded value per block: `(1/r)(1 − r/K)`.
pub fn coded_tdma_load(k: u32, r: u32) -> Result<Rational, MetricsError> {
    Ok(uncoded_tdma_load(k, r)? / Rational::from(i64::from(r)))
}

/// Linear interpolation of `f` between `⌊r⌋` and `⌈r⌉`.
fn interpolate(
    k: u32,
    r: Rational,
    f: impl Fn(u32, u32) -> Result<Rational, MetricsError>,
) -> Result<Rational, MetricsError> {
    check_load(k, r)?;
    let lo = r.floor();
    let frac = r - lo;
    let lo = lo.to_integer() as u32;
    if frac.is_zero() {
        return f(k, lo);
    }
    let a = f(k, lo)?;
    let b = f(k, lo + 1)?;
    Ok(a + (b - a) * frac)
}

/// Time sharing between the two neighbouring integer points of the optimal
/// curve.
pub fn time_shared_load(k: u32, r: Rational) -> Result<Rational, MetricsError> {
    interpolate(k, r, optimal_load)
}

pub fn time_shared_uncoded(k: u32, r: Rational) -> Result<Rational, MetricsError> {
    interpolate(k, r, uncoded_tdma_load)
}

pub fn time_shared_coded(k: u32, r: Rational) -> Result<Rational, MetricsError> {
    interpolate(k, r, coded_tdma_load)
}

/// Replication counts `θ_n = |S_n|`, ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplicationProfile {
    k: u32,
    theta: Vec<u32>,
}

impl ReplicationProfile {
    pub fn new(k: u32, mut theta: Vec<u32>) -> Result<Self, MetricsError> {
        if theta.is_empty() {
            return Err(MetricsError::EmptyProfile);
        }
        if let Some((n, &t)) = theta.iter().enumerate().find(|(_, &t)| t == 0 || t > k) {
            return Err(MetricsError::ReplicationOutOfRange { n: n + 1, theta: t, k });
        }
        theta.sort_unstable();
        Ok(ReplicationProfile { k, theta })
    }

    /// Profile over all `Ñ` files, padding included.
    pub fn from_placement(p: &Placement) -> Result<Self, MetricsError> {
        Self::new(p.k(), p.replication_counts())
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn theta(&self) -> &[u32] {
        &self.theta
    }

    /// `Σθ_n / N`.
    pub fn r_avg(&self) -> Rational {
        let total: u64 = self.theta.iter().map(|&t| u64::from(t)).sum();
        ratio(total, self.theta.len() as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConverseBound {
    /// `Σ_n C_n / min{2θ_n, K}`.
    pub sigma_sum: Rational,
    /// `⌈σ_sum⌉`.
    pub blocks: u64,
    /// `C_total = Σ_n C_n`.
    pub c_total: Rational,
    /// `⌈C_total / min{2 r_avg, K}⌉`, never above `blocks`.
    pub averaged_blocks: u64,
}

/// Lower bound on the number of blocks of any one-shot linear scheme with
/// this replication profile, `C_n = (K − θ_n) Q / K`.
pub fn converse_lower_bound(
    profile: &ReplicationProfile,
    q: u32,
) -> Result<ConverseBound, MetricsError> {
    let k = i64::from(profile.k);
    let per_value = Rational::new(i64::from(q), k);
    let mut sigma_sum = Rational::zero();
    let mut c_total = Rational::zero();
    for &t in &profile.theta {
        let t = i64::from(t);
        let c = per_value * (k - t);
        sigma_sum += c / (2 * t).min(k);
        c_total += c;
    }
    let size = (profile.r_avg() * 2).min(Rational::from(k));
    Ok(ConverseBound {
        sigma_sum,
        blocks: sigma_sum.ceil().to_integer() as u64,
        c_total,
        averaged_blocks: (c_total / size).ceil().to_integer() as u64,
    })
}

/// Optimal-curve points read off the published K = 10 tradeoff plot, as
/// `(r, L in hundredths)`.
pub const REFERENCE_CURVE_K10: [(u32, i64); 10] =
    [(1, 45), (2, 20), (3, 7), (4, 6), (5, 5), (6, 4), (7, 3), (8, 2), (9, 1), (10, 0)];

/// Largest accepted gap between a plotted point and the exact value.
pub fn reference_tolerance() -> Rational {
    Rational::new(1, 200)
}

/// A plotted reference point that disagrees with the closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceMismatch {
    pub r: u32,
    pub plotted: Rational,
    pub exact: Rational,
}

/// Mismatch between the reference plot and the closed form at `(K, r)`.
pub fn reference_mismatch(k: u32, r: Rational) -> Option<ReferenceMismatch> {
    if k != 10 || !r.is_integer() {
        return None;
    }
    let r = r.to_integer() as u32;
    let &(_, hundredths) = REFERENCE_CURVE_K10.iter().find(|(x, _)| *x == r)?;
    let plotted = Rational::new(hundredths, 100);
    let exact = optimal_load(k, r).ok()?;
    ((plotted - exact).abs() > reference_tolerance())
        .then_some(ReferenceMismatch { r, plotted, exact })
}

/// One row of a tradeoff table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadReport {
    pub k: u32,
    pub q: u32,
    pub n: u32,
    pub r: Rational,
    pub l_uncoded: Rational,
    pub l_coded: Rational,
    pub l_optimal: Rational,
    /// `None` when no schedule was run.
    pub t_measured: Option<u64>,
    /// `T / (N Q)` with the real file count `N`.
    pub l_measured: Option<Rational>,
    /// `⌈σ_sum⌉` over the padded symmetric placement; `None` for fractional r.
    pub converse_t: Option<u64>,
    pub reference_mismatch: Option<ReferenceMismatch>,
}

impl LoadReport {
    /// Closed forms and the converse, without a schedule run.
    pub fn theory(k: u32, q: u32, n: u32, r: Rational) -> Result<Self, MetricsError> {
        let converse_t = if r.is_integer() {
            let params = SystemParams::new(k, n, q, r.to_integer() as u32)?;
            let placement = Placement::symmetric(&params)?;
            Some(converse_lower_bound(&ReplicationProfile::from_placement(&placement)?, q)?.blocks)
        } else {
            SystemParams::new(k, n, q, 1)?;
            check_load(k, r)?;
            None
        };
        Ok(LoadReport {
            k,
            q,
            n,
            r,
            l_uncoded: time_shared_uncoded(k, r)?,
            l_coded: time_shared_coded(k, r)?,
            l_optimal: time_shared_load(k, r)?,
            t_measured: None,
            l_measured: None,
            converse_t,
            reference_mismatch: reference_mismatch(k, r),
        })
    }

    pub fn with_measurement(mut self, t: u64) -> Self {
        self.t_measured = Some(t);
        self.l_measured = Some(ratio(t, u64::from(self.n) * u64::from(self.q)));
        self
    }
}

/// One row per `r`, sorted ascending. With `simulate`, integer rows also run
/// the scheduler and record the measured block count.
pub fn tradeoff_table(
    k: u32,
    q: u32,
    n: u32,
    r_values: &[Rational],
    simulate: bool,
) -> Result<Vec<LoadReport>, MetricsError> {
    let mut rs = r_values.to_vec();
    rs.sort();
    rs.dedup();
    rs.into_iter()
        .map(|r| {
            let row = LoadReport::theory(k, q, n, r)?;
            if simulate && r.is_integer() {
                let params = SystemParams::new(k, n, q, r.to_integer() as u32)?;
                let inst = Instance::symmetric(&params)?;
                let s = schedule_with(&inst.placement, &inst.assignment, PaddingPolicy::InOrder)?;
                Ok(row.with_measurement(s.t() as u64))
            } else {
                Ok(row)
            }
        })
        .collect()
}

pub const TRADEOFF_CSV_HEADER: &str =
    "K,Q,N,r,L_uncoded,L_coded,L_optimal,T_measured,L_measured,converse_T";

pub fn tradeoff_csv(rows: &[LoadReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRADEOFF_CSV_HEADER.split(',')).expect("in-memory write");
    for row in rows {
        let opt = |v: Option<String>| v.unwrap_or_default();
        w.write_record([
            row.k.to_string(),
            row.q.to_string(),
            row.n.to_string(),
            format_decimal(row.r),
            format_decimal(row.l_uncoded),
            format_decimal(row.l_coded),
            format_decimal(row.l_optimal),
            opt(row.t_measured.map(|t| t.to_string())),
            opt(row.l_measured.map(format_decimal)),
            opt(row.converse_t.map(|t| t.to_string())),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

/// JSON view of a table: exact values as `"a/b"` strings next to decimals,
/// plus every reference-plot mismatch.
pub fn tradeoff_json(rows: &[LoadReport]) -> serde_json::Value {
    let exact = |v: Rational| json!({"exact": format_rational(v), "decimal": to_f64(v)});
    let rows_json: Vec<_> = rows
        .iter()
        .map(|row| {
            json!({
                "K": row.k,
                "Q": row.q,
                "N": row.n,
                "r": exact(row.r),
                "L_uncoded": exact(row.l_uncoded),
                "L_coded": exact(row.l_coded),
                "L_optimal": exact(row.l_optimal),
                "T_measured": row.t_measured,
                "L_measured": row.l_measured.map(exact),
                "converse_T": row.converse_t,
                "reference_mismatch": row.reference_mismatch.is_some(),
            })
        })
        .collect();
    let flags: Vec<_> = rows
        .iter()
        .filter_map(|row| row.reference_mismatch)
        .map(|m| {
            json!({
                "r": m.r,
                "plotted": to_f64(m.plotted),
                "exact": format_rational(m.exact),
                "exact_decimal": to_f64(m.exact),
                "note": format!(
                    "reference plot shows {} at r={}, closed form gives {}",
                    format_decimal(m.plotted), m.r, format_rational(m.exact)
                ),
            })
        })
        .collect();
    json!({"rows": rows_json, "reference_mismatches": flags})
}

pub fn to_f64(v: Rational) -> f64 {
    v.numer().to_f64().unwrap_or(f64::NAN) / v.denom().to_f64().unwrap_or(f64::NAN)
}

/// `a/b`, or `a` for integers.
pub fn format_rational(v: Rational) -> String {
    v.to_string()
}

/// Six significant digits, trailing zeros trimmed.
pub fn format_decimal(v: Rational) -> String {
    format_sig(to_f64(v), 6)
}

pub fn format_sig(x: f64, digits: i32) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (digits - 1 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.') } else { &s };
    if s == "-0" { "0".to_string() } else { s.to_string() }
}

/// Accepts `3`, `3/2` and `1.5`.
pub fn parse_rational(text: &str) -> Result<Rational, MetricsError> {
    let t = text.trim();
    let err = || MetricsError::Parse(text.to_string());
    if let Some((whole, frac)) = t.split_once('.') {
        if frac.is_empty() || !frac.chars().all(|c| c.is_ascii_digit()) || frac.len() > 15 {
            return Err(err());
        }
        let negative = whole.starts_with('-');
        let whole: i64 = if whole.is_empty() || whole == "-" {
            0
        } else {
            whole.parse().map_err(|_| err())?
        };
        let scale = 10i64.pow(frac.len() as u32);
        let frac: i64 = frac.parse().map_err(|_| err())?;
        let magnitude = whole.abs().checked_mul(scale).and_then(|w| w.checked_add(frac)).ok_or_else(err)?;
        let num = if negative { -magnitude } else { magnitude };
        return Ok(Rational::new(num, scale));
    }
    let v = Rational::from_str(t).map_err(|_| err())?;
    Ok(v)
}
