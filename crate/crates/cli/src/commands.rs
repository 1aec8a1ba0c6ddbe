use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use wmr_core::beamforming::{
    audit_csv, generate_channel, simulate_block, BeamformingError, BlockOutcome, DecodeStatus,
    LinkConfig, PacketStore,
};
use wmr_core::metrics::{
    converse_lower_bound, format_rational, to_f64, tradeoff_csv, tradeoff_json, tradeoff_table,
    LoadReport, ReplicationProfile,
};
use wmr_core::model::Instance;
use wmr_core::scheduler::{
    brute_force_min_blocks, schedule, validate_schedule, ScheduleError, ORACLE_DEMAND_LIMIT,
};
use wmr_core::{Rational, Schedule};

use crate::config::RunConfig;
use crate::error::CliError;

const DEFAULT_OUT: &str = "out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum VerifyMode {
    /// Oracle when the demand is small enough, bound only otherwise.
    Auto,
    Bound,
    Oracle,
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| CliError::Io { path: path.clone(), source })?;
    Ok(path)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::config(format!("field `workers`: {e}")))
}

fn exact(v: Rational) -> serde_json::Value {
    json!({"exact": format_rational(v), "decimal": to_f64(v)})
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

pub fn tradeoff(cfg: &RunConfig) -> Result<(), CliError> {
    let (k, n, q) = cfg.dimensions()?;
    let mut grid = cfg.grid()?;
    grid.sort();
    grid.dedup();
    // Rows are independent; each runs on the pool and the order is restored
    // by the indexed collect.
    let rows: Vec<LoadReport> = pool(cfg.workers)?
        .install(|| {
            grid.par_iter()
                .map(|&r| tradeoff_table(k, q, n, &[r], cfg.simulate))
                .collect::<Result<Vec<_>, _>>()
        })?
        .into_iter()
        .flatten()
        .collect();

    let out = cfg.out.clone().unwrap_or_else(|| DEFAULT_OUT.into());
    let csv = tradeoff_csv(&rows);
    let csv_path = write(&out, "tradeoff.csv", &csv)?;
    write(&out, "tradeoff.json", &pretty(&tradeoff_json(&rows)))?;
    print!("{csv}");
    for m in rows.iter().filter_map(|r| r.reference_mismatch) {
        println!(
            "note: reference plot shows {} at r={}, closed form gives {}",
            to_f64(m.plotted),
            m.r,
            format_rational(m.exact)
        );
    }
    println!("wrote {} ({} rows)", csv_path.display(), rows.len());
    Ok(())
}

#[derive(Serialize)]
struct DeliveryRow {
    block: usize,
    receiver: u32,
    q: u32,
    n: u32,
    status: DecodeStatus,
    rel_error: f64,
    snr_db: f64,
}

const DELIVERY_HEADER: &str = "block,receiver,q,n,status,rel_error,snr_db\n";
const RESIDUAL_HEADER: &str = "block,receiver,intended_gain,max_residual,snr_db\n";

fn deliveries_csv(rows: &[DeliveryRow]) -> String {
    if rows.is_empty() {
        return DELIVERY_HEADER.to_string();
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).expect("delivery rows serialize");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

pub fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let inst = cfg.instance()?;
    let (p, a) = (&inst.placement, &inst.assignment);
    let r = p.symmetric_load().ok_or_else(|| {
        CliError::config("simulate needs a symmetric placement with an integer load")
    })?;
    let (k, n, q) = (p.k(), p.n_real(), a.q());
    let s = schedule(p, a)?;
    let feasibility = validate_schedule(&s, p, a);
    let effective = s.effective(p);
    let h = generate_channel(k, cfg.seed, cfg.h_min, cfg.h_max, cfg.tolerances.rank_tol)
        .map_err(|e| CliError::Failure(format!("channel generation failed: {e}")))?;
    let link = LinkConfig { power: cfg.power, tau: cfg.tau, noise: cfg.noise, seed: cfg.seed };
    let packets = PacketStore::for_schedule(&s, p, cfg.tau, cfg.seed);

    let outcomes: Vec<Result<BlockOutcome, BeamformingError>> = pool(cfg.workers)?.install(|| {
        s.blocks()
            .par_iter()
            .enumerate()
            .map(|(i, b)| simulate_block(&h, b, i + 1, p, &packets, &link, &cfg.tolerances))
            .collect()
    });

    let mut audit = Vec::new();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (i, outcome) in outcomes.iter().enumerate() {
        let block = i + 1;
        match outcome {
            Ok(o) => {
                audit.extend(o.audit.iter().copied());
                for d in &o.reception.outcomes {
                    if d.status == DecodeStatus::Failed {
                        failures.push(format!(
                            "block {block}: {} at node {} decoded with relative error {:.3e}",
                            d.value, d.receiver, d.rel_error
                        ));
                    }
                    rows.push(DeliveryRow {
                        block,
                        receiver: d.receiver,
                        q: d.value.q,
                        n: d.value.n,
                        status: d.status,
                        rel_error: d.rel_error,
                        snr_db: d.snr_db,
                    });
                }
            }
            Err(e) => failures.push(format!("block {block}: {e}")),
        }
    }
    if !feasibility.ok {
        failures.extend(feasibility.violations.iter().map(|v| format!("schedule: {v}")));
    }
    let count = |st: DecodeStatus| rows.iter().filter(|d| d.status == st).count();
    let worst = rows
        .iter()
        .filter(|d| d.status == DecodeStatus::Ok)
        .map(|d| d.rel_error)
        .fold(0.0, f64::max);

    let theory = LoadReport::theory(k, q, n, Rational::from(i64::from(r)))?
        .with_measurement(s.t() as u64);
    let nq = i64::from(n) * i64::from(q);
    let report = json!({
        "preset": cfg.preset,
        "K": k,
        "Q": q,
        "N": n,
        "N_total": p.n_total(),
        "r": r,
        "T": s.t(),
        "effective_T": effective.t(),
        "vacuous_blocks": s.vacuous_blocks(p),
        "converse_T": theory.converse_t,
        "L_measured": theory.l_measured.map(exact),
        "L_effective": exact(Rational::new(effective.t() as i64, nq)),
        "L_optimal": exact(theory.l_optimal),
        "L_coded": exact(theory.l_coded),
        "L_uncoded": exact(theory.l_uncoded),
        "seed": cfg.seed,
        "noise": cfg.noise,
        "power": cfg.power,
        "tau": cfg.tau,
        "feasible": feasibility.ok,
        "deliveries": {
            "total": rows.len(),
            "ok": count(DecodeStatus::Ok),
            "vacuous": count(DecodeStatus::Vacuous),
            "failed": count(DecodeStatus::Failed),
        },
        "worst_rel_error": worst,
        "failures": failures,
    });

    let out = cfg.out.clone().unwrap_or_else(|| DEFAULT_OUT.into());
    write(&out, "placement.json", &(inst.to_json() + "\n"))?;
    write(&out, "schedule.json", &(s.to_json() + "\n"))?;
    if p.padding() > 0 {
        write(&out, "effective_schedule.json", &(effective.to_json() + "\n"))?;
    }
    write(&out, "channel.json", &(h.to_json() + "\n"))?;
    let residuals = if audit.is_empty() { RESIDUAL_HEADER.to_string() } else { audit_csv(&audit) };
    write(&out, "residuals.csv", &residuals)?;
    write(&out, "deliveries.csv", &deliveries_csv(&rows))?;
    write(&out, "load_report.json", &pretty(&report))?;

    println!(
        "K={k} Q={q} N={n} r={r}: T={} (effective {}), converse {}, L={}",
        s.t(),
        effective.t(),
        theory.converse_t.map_or("-".into(), |t| t.to_string()),
        theory.l_measured.map_or("-".into(), format_rational),
    );
    println!(
        "deliveries: {} ok, {} vacuous, {} failed; worst relative error {worst:.3e}",
        count(DecodeStatus::Ok),
        count(DecodeStatus::Vacuous),
        count(DecodeStatus::Failed)
    );
    println!("wrote {}", out.display());
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failure(failures.join("\n")))
    }
}

fn describe(inst: &Instance) -> String {
    let p = &inst.placement;
    let load = p.computation_load();
    let kind = if p.symmetric_load().is_some() { "symmetric" } else { "asymmetric" };
    format!(
        "K={} Q={} N={} (padded {}) r={} {kind}",
        p.k(),
        inst.assignment.q(),
        p.n_real(),
        p.n_total(),
        format_rational(load)
    )
}

fn oracle_demand_guard(demand: u64) -> Result<(), CliError> {
    if demand > ORACLE_DEMAND_LIMIT {
        Err(CliError::config(format!(
            "total demand {demand} exceeds the oracle limit {ORACLE_DEMAND_LIMIT}"
        )))
    } else {
        Ok(())
    }
}

fn blocks_text(s: &Schedule) -> String {
    let mut text = String::new();
    for (i, b) in s.blocks().iter().enumerate() {
        let items: Vec<String> =
            b.deliveries().iter().map(|d| format!("{}->{}", d.value, d.to)).collect();
        let _ = writeln!(text, "  block {}: {}", i + 1, items.join(" "));
    }
    text
}

pub fn verify(cfg: &RunConfig, mode: VerifyMode) -> Result<(), CliError> {
    let inst = cfg.instance()?;
    let (p, a) = (&inst.placement, &inst.assignment);
    let demand = inst.demand().total();
    let run_oracle = match mode {
        VerifyMode::Bound => false,
        VerifyMode::Oracle => {
            oracle_demand_guard(demand)?;
            true
        }
        VerifyMode::Auto => demand <= ORACLE_DEMAND_LIMIT,
    };
    let bound = converse_lower_bound(&ReplicationProfile::from_placement(p)?, a.q())?;

    let mut text = String::new();
    let _ = writeln!(text, "instance: {}", describe(&inst));
    let _ = writeln!(text, "demand: {demand} values");
    let _ = writeln!(
        text,
        "converse bound: {} (sigma_sum = {}, averaged {})",
        bound.blocks,
        format_rational(bound.sigma_sum),
        bound.averaged_blocks
    );

    let measured = if p.symmetric_load().is_some() {
        let s = schedule(p, a)?;
        let report = validate_schedule(&s, p, a);
        let _ = writeln!(
            text,
            "measured T: {} ({})",
            s.t(),
            if report.ok { "feasible" } else { "INFEASIBLE" }
        );
        if !report.ok {
            let _ = write!(text, "{report}");
        }
        Some((s.t() as u64, report.ok))
    } else {
        let _ = writeln!(text, "measured T: - (no scheduler for asymmetric placements)");
        None
    };

    let oracle = if run_oracle {
        let (t, _) = brute_force_min_blocks(p, a, u32::MAX)?;
        let _ = writeln!(text, "oracle T_opt: {t}");
        Some(u64::from(t))
    } else {
        let _ = writeln!(text, "oracle T_opt: - (not run)");
        None
    };

    // Symmetric: the scheduler must meet the bound (and the oracle, if run).
    // Asymmetric: the oracle must not beat the bound.
    let verdict = match (measured, oracle) {
        (Some((t, feasible)), o) => Some(feasible && t == bound.blocks && o.is_none_or(|o| o == t)),
        (None, Some(o)) => Some(o >= bound.blocks),
        (None, None) => None,
    };
    let _ = writeln!(
        text,
        "verdict: {}",
        match verdict {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "SKIP (nothing to compare against the bound)",
        }
    );
    print!("{text}");
    if let Some(out) = &cfg.out {
        write(out, "verify.txt", &text)?;
    }
    match verdict {
        Some(false) => Err(CliError::Failure("verification failed".into())),
        _ => Ok(()),
    }
}

pub fn oracle(cfg: &RunConfig, cap: u32) -> Result<(), CliError> {
    let inst = cfg.instance()?;
    let (p, a) = (&inst.placement, &inst.assignment);
    oracle_demand_guard(inst.demand().total())?;
    let bound = converse_lower_bound(&ReplicationProfile::from_placement(p)?, a.q())?;
    let (t, witness) = match brute_force_min_blocks(p, a, cap) {
        Ok(found) => found,
        Err(ScheduleError::CapExceeded { cap }) => {
            return Err(CliError::Failure(format!("no admissible schedule with at most {cap} blocks")))
        }
        Err(e) => return Err(e.into()),
    };
    let mut text = String::new();
    let _ = writeln!(text, "instance: {}", describe(&inst));
    let _ = writeln!(text, "oracle T_opt: {t} (converse bound {})", bound.blocks);
    text.push_str(&blocks_text(&witness));
    print!("{text}");
    if let Some(out) = &cfg.out {
        write(out, "oracle.txt", &text)?;
        write(out, "oracle_schedule.json", &(witness.to_json() + "\n"))?;
    }
    Ok(())
}
