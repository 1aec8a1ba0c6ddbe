//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Expected values are computed here independently of the library (exact
//! rational closed forms, direct counting) wherever the library would
//! otherwise be checking itself.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wmr_core::beamforming::{
    build_block_beamformers, db_to_linear, decode_block, generate_channel, simulate_block,
    transmit_block, ChannelMatrix, DecodeStatus, LinkConfig, PacketStore, Tolerances,
    DEFAULT_H_MAX, DEFAULT_H_MIN,
};
use wmr_core::metrics::{
    coded_tdma_load, converse_lower_bound, optimal_load, reference_mismatch, tradeoff_csv,
    tradeoff_json, tradeoff_table, uncoded_tdma_load, ReplicationProfile,
};
use wmr_core::model::{granularity, Instance, SystemParams};
use wmr_core::scheduler::{
    brute_force_min_blocks, schedule, validate_block, validate_schedule, Block, Delivery,
    Schedule,
};
use wmr_core::{Placement, Rational, ReduceAssignment};

/// Relative L2 decode error allowed with noise off (criteria 2 and 3).
const DECODE_TOL: f64 = 1e-9;
/// Allowed deviation of the SNR-vs-power slope from 1 (criterion 7).
const SLOPE_TOL: f64 = 0.05;
const SLOPE_POWERS_DB: [f64; 3] = [20.0, 30.0, 40.0];
const SLOPE_DRAWS: u64 = 1000;
const EQUIVALENCE_TRIALS: usize = 500;

type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn q(n: i64, d: i64) -> Rational {
    Rational::new(n, d)
}

fn instance(k: u32, q: u32, n: u32, r: u32) -> Instance {
    Instance::symmetric(&SystemParams::new(k, n, q, r).expect("valid params"))
        .expect("symmetric instance")
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Decodes every block of `s` without noise. Returns (real values decoded
/// within tolerance, worst relative error over real values).
fn noiseless_run(inst: &Instance, s: &Schedule, seed: u64) -> Result<(usize, f64), String> {
    let h = generate_channel(inst.placement.k(), seed, DEFAULT_H_MIN, DEFAULT_H_MAX, 1e-8)
        .map_err(|e| e.to_string())?;
    let cfg = LinkConfig { seed, ..LinkConfig::default() };
    let tol = Tolerances::default();
    let packets = PacketStore::for_schedule(s, &inst.placement, cfg.tau, cfg.seed);
    let mut decoded = 0;
    let mut worst: f64 = 0.0;
    for (i, block) in s.blocks().iter().enumerate() {
        let out = simulate_block(&h, block, i + 1, &inst.placement, &packets, &cfg, &tol)
            .map_err(|e| format!("seed {seed}, block {}: {e}", i + 1))?;
        for o in &out.reception.outcomes {
            if o.status == DecodeStatus::Vacuous {
                continue;
            }
            worst = worst.max(o.rel_error);
            if o.status == DecodeStatus::Ok && o.rel_error <= DECODE_TOL {
                decoded += 1;
            }
        }
    }
    Ok((decoded, worst))
}

fn criterion_1() -> Outcome {
    let expected = [(1, q(9, 20)), (2, q(1, 5)), (5, q(1, 20)), (10, q(0, 1))];
    for (r, want) in expected {
        let got = optimal_load(10, r).map_err(|e| e.to_string())?;
        check(got == want, || format!("L*(10,{r}) = {got}, want {want}"))?;
        check(reference_mismatch(10, Rational::from(i64::from(r))).is_none(), || {
            format!("plotted point at r={r} should agree with the closed form")
        })?;
    }
    let coded = coded_tdma_load(10, 2).map_err(|e| e.to_string())?;
    check(coded == q(2, 5), || format!("coded(10,2) = {coded}"))?;
    let uncoded = uncoded_tdma_load(10, 1).map_err(|e| e.to_string())?;
    check(uncoded == q(9, 10), || format!("uncoded(10,1) = {uncoded}"))?;
    Ok("L*(10,r) = 9/20, 1/5, 1/20, 0; coded(10,2) = 2/5; uncoded(10,1) = 9/10".into())
}

fn criterion_2() -> Outcome {
    let inst = instance(4, 4, 6, 2);
    let s = schedule(&inst.placement, &inst.assignment).map_err(|e| e.to_string())?;
    check(s.t() == 3, || format!("T = {}, want 3", s.t()))?;
    let report = validate_schedule(&s, &inst.placement, &inst.assignment);
    check(report.ok, || report.violations.join("; "))?;
    let mut worst: f64 = 0.0;
    for seed in 1..=100 {
        let (decoded, err) = noiseless_run(&inst, &s, seed)?;
        check(decoded == 12, || format!("seed {seed}: {decoded}/12 decoded, worst {err:.2e}"))?;
        worst = worst.max(err);
    }
    Ok(format!("T=3, 12/12 values on 100 seeds, worst relative error {worst:.2e}"))
}

fn criterion_3() -> Outcome {
    let full = instance(5, 5, 20, 2);
    let s = schedule(&full.placement, &full.assignment).map_err(|e| e.to_string())?;
    check(s.t() == 15, || format!("T = {}, want 15", s.t()))?;
    check(s.delivery_count() == 60, || format!("{} deliveries, want 60", s.delivery_count()))?;
    let report = validate_schedule(&s, &full.placement, &full.assignment);
    check(report.ok, || report.violations.join("; "))?;
    let (decoded, worst) = noiseless_run(&full, &s, 1)?;
    check(decoded == 60, || format!("{decoded}/60 decoded, worst {worst:.2e}"))?;

    // Ten real files padded to twenty: files 11..20 are empty.
    let padded = instance(5, 5, 10, 2);
    check(padded.placement.n_total() == 20, || "expected 10 padding files".into())?;
    let sp = schedule(&padded.placement, &padded.assignment).map_err(|e| e.to_string())?;
    check(sp.t() == 15, || format!("padded T = {}, want 15", sp.t()))?;
    let effective = sp.effective(&padded.placement);
    check(effective.t() == 8, || format!("effective schedule has {} blocks, want 8", effective.t()))?;
    check(effective.delivery_count() == 30, || {
        format!("{} real deliveries, want 30", effective.delivery_count())
    })?;
    let real_demand: usize = padded
        .demand()
        .iter()
        .filter(|(_, v)| !padded.placement.is_padding(v.n))
        .count();
    check(real_demand == 30, || format!("real demand {real_demand}"))?;
    for (i, b) in effective.blocks().iter().enumerate() {
        let c = validate_block(b, &padded.placement, &padded.assignment);
        check(c.ok && b.len() <= 4, || format!("effective block {} invalid", i + 1))?;
    }
    let (decoded_real, worst_real) = noiseless_run(&padded, &sp, 1)?;
    check(decoded_real == 30, || format!("{decoded_real}/30 real values decoded"))?;

    // First block of the published eight-block schedule.
    let fig_block = Block::new(vec![
        Delivery::new(2, 8, 2),
        Delivery::new(3, 7, 3),
        Delivery::new(4, 7, 4),
        Delivery::new(5, 8, 5),
    ])
    .map_err(|e| e.to_string())?;
    let c = validate_block(&fig_block, &padded.placement, &padded.assignment);
    check(c.ok && c.values.iter().all(|v| v.zf_slack == 0), || {
        "published first block should be admissible with zero slack".into()
    })?;

    Ok(format!(
        "T=15, 60/60 decoded (worst {worst:.2e}); N=10 run: 8 effective blocks, 30/30 real values (worst {worst_real:.2e})"
    ))
}

fn criterion_4() -> Outcome {
    let mut cases = 0;
    for k in 2..=6u32 {
        for r in 1..k {
            let n = granularity(k, r) as u32;
            let inst = instance(k, k, n, r);
            check(inst.placement.n_total() == n, || format!("K={k} r={r}: unexpected padding"))?;
            let s = schedule(&inst.placement, &inst.assignment).map_err(|e| e.to_string())?;
            let report = validate_schedule(&s, &inst.placement, &inst.assignment);
            check(report.ok, || format!("K={k} r={r}: {}", report.violations.join("; ")))?;
            let profile =
                ReplicationProfile::from_placement(&inst.placement).map_err(|e| e.to_string())?;
            let bound = converse_lower_bound(&profile, k).map_err(|e| e.to_string())?.blocks;
            // ⌈N Q (1 − r/K) / min{2r, K}⌉ in exact integer arithmetic.
            let (k64, r64, n64) = (i64::from(k), i64::from(r), i64::from(n));
            let closed = q(n64 * k64 * (k64 - r64), k64 * (2 * r64).min(k64)).ceil().to_integer();
            check(s.t() as u64 == bound && bound as i64 == closed, || {
                format!("K={k} r={r} N={n}: T={} converse={bound} closed={closed}", s.t())
            })?;
            cases += 1;
        }
    }
    Ok(format!("{cases} (K, r) pairs: T = ⌈σ_sum⌉ = closed form"))
}

fn oracle_case(p: &Placement, a: &ReduceAssignment, achievable: Option<u64>) -> Result<(u64, u64), String> {
    let profile = ReplicationProfile::from_placement(p).map_err(|e| e.to_string())?;
    let bound = converse_lower_bound(&profile, a.q()).map_err(|e| e.to_string())?.blocks;
    let (t_opt, witness) = brute_force_min_blocks(p, a, 12).map_err(|e| e.to_string())?;
    let t_opt = u64::from(t_opt);
    check(validate_schedule(&witness, p, a).ok, || "oracle witness is infeasible".into())?;
    check(t_opt >= bound, || format!("oracle {t_opt} below converse {bound}"))?;
    if let Some(t) = achievable {
        check(t_opt <= t, || format!("oracle {t_opt} above constructed schedule {t}"))?;
        if t == bound {
            check(t_opt == bound, || format!("bound {bound} achievable but oracle gave {t_opt}"))?;
        }
    }
    Ok((t_opt, bound))
}

fn criterion_5() -> Outcome {
    let mut instances = 0;
    let mut tight = 0;
    for k in 2..=4u32 {
        for r in 1..=k {
            for q_mult in 1..=2 {
                let qn = k * q_mult;
                for n in k..=12 {
                    let params = SystemParams::new(k, n, qn, r).map_err(|e| e.to_string())?;
                    let inst = Instance::symmetric(&params).map_err(|e| e.to_string())?;
                    if inst.demand().total() > 12 {
                        continue;
                    }
                    let s = schedule(&inst.placement, &inst.assignment).map_err(|e| e.to_string())?;
                    let (t_opt, bound) = oracle_case(&inst.placement, &inst.assignment, Some(s.t() as u64))
                        .map_err(|e| format!("K={k} Q={qn} N={n} r={r}: {e}"))?;
                    instances += 1;
                    if t_opt == bound {
                        tight += 1;
                    }
                }
            }
        }
    }
    let p = Placement::from_mapped_files(3, 3, 3, vec![vec![1], vec![1, 2], vec![1, 2, 3]])
        .map_err(|e| e.to_string())?;
    let a = ReduceAssignment::contiguous(3, 3).map_err(|e| e.to_string())?;
    let (t_opt, bound) = oracle_case(&p, &a, None).map_err(|e| format!("θ=(1,2,3): {e}"))?;
    check(bound == 2, || format!("θ=(1,2,3) bound {bound}, want 2"))?;
    Ok(format!(
        "{instances} symmetric instances, {tight} meet the bound; θ=(1,2,3): oracle {t_opt} ≥ bound {bound}"
    ))
}

fn random_case(rng: &mut ChaCha8Rng) -> (Placement, ReduceAssignment, Block, u32) {
    loop {
        let k = rng.random_range(2..=6u32);
        let n = rng.random_range(k..=k + 3);
        let mut mapped = vec![Vec::new(); k as usize];
        for file in 1..=n {
            let mask = rng.random_range(1..(1u32 << k));
            for node in 0..k {
                if mask >> node & 1 == 1 {
                    mapped[node as usize].push(file);
                }
            }
        }
        let p = Placement::from_mapped_files(k, n, n, mapped).expect("every file mapped");
        let a = ReduceAssignment::contiguous(k, k).expect("Q = K");
        let demand = Instance::new(p.clone(), a.clone()).expect("consistent").demand();
        let mut nodes: Vec<u32> = (1..=k).filter(|&x| !demand.node(x).is_empty()).collect();
        if nodes.is_empty() {
            continue;
        }
        nodes.shuffle(rng);
        let size = rng.random_range(1..=nodes.len());
        let deliveries = nodes[..size]
            .iter()
            .map(|&node| {
                let g: Vec<_> = demand.node(node).iter().copied().collect();
                Delivery { value: g[rng.random_range(0..g.len())], to: node }
            })
            .collect();
        let block = Block::new(deliveries).expect("one value per receiver");
        return (p, a, block, k);
    }
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let tol = Tolerances::default();
    let (mut feasible, mut infeasible) = (0, 0);
    for trial in 0..EQUIVALENCE_TRIALS {
        let (p, a, block, k) = random_case(&mut rng);
        let seed = rng.random::<u64>();
        let h = generate_channel(k, seed, DEFAULT_H_MIN, DEFAULT_H_MAX, tol.rank_tol)
            .map_err(|e| e.to_string())?;
        let counting = validate_block(&block, &p, &a).ok;
        let numeric = build_block_beamformers(&h, &block, &p, &tol);
        check(counting == numeric.is_ok(), || {
            format!("trial {trial}: counting says {counting}, beamformers say {numeric:?}")
        })?;
        if counting {
            feasible += 1;
        } else {
            infeasible += 1;
        }
    }
    check(feasible > 0 && infeasible > 0, || "sample lacks one of the two verdicts".into())?;
    Ok(format!("{EQUIVALENCE_TRIALS} triples, 0 disagreements ({feasible} feasible, {infeasible} infeasible)"))
}

/// Least-squares slope of y against x.
fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}

fn criterion_7() -> Outcome {
    let inst = instance(4, 4, 6, 2);
    let s = schedule(&inst.placement, &inst.assignment).map_err(|e| e.to_string())?;
    let tol = Tolerances::default();
    let h: ChannelMatrix =
        generate_channel(4, 1, DEFAULT_H_MIN, DEFAULT_H_MAX, tol.rank_tol).map_err(|e| e.to_string())?;
    let plans: Vec<_> = s
        .blocks()
        .iter()
        .map(|b| build_block_beamformers(&h, b, &inst.placement, &tol))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let base = LinkConfig { noise: true, ..LinkConfig::default() };
    let packets = PacketStore::for_schedule(&s, &inst.placement, base.tau, base.seed);

    // snr_db[stream][power]
    let streams: usize = plans.iter().map(|p| p.streams.len()).sum();
    let mut snr_db = vec![Vec::new(); streams];
    for &p_db in &SLOPE_POWERS_DB {
        let mut err = vec![0.0; streams];
        for draw in 0..SLOPE_DRAWS {
            let cfg = LinkConfig { power: db_to_linear(p_db), seed: draw + 1, ..base };
            let mut idx = 0;
            for (b, plan) in plans.iter().enumerate() {
                let raw = transmit_block(&h, plan, &packets, &cfg, b as u64 + 1)
                    .map_err(|e| e.to_string())?;
                let rec = decode_block(&h, plan, &packets, &raw, &cfg, &inst.placement, &tol)
                    .map_err(|e| e.to_string())?;
                for o in &rec.outcomes {
                    let truth = &packets.get(o.value).map_err(|e| e.to_string())?.symbols;
                    let e: f64 = o.decoded.iter().zip(truth).map(|(d, a)| (d - a).norm_sqr()).sum();
                    err[idx] += e / truth.len() as f64;
                    idx += 1;
                }
            }
        }
        for (i, e) in err.iter().enumerate() {
            // Unit-power symbols: SNR = 1 / mean squared error.
            snr_db[i].push(-10.0 * (e / SLOPE_DRAWS as f64).log10());
        }
    }
    let slopes: Vec<f64> = snr_db.iter().map(|y| slope(&SLOPE_POWERS_DB, y)).collect();
    let worst = slopes.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
    check(worst <= SLOPE_TOL, || format!("slopes {slopes:?}"))?;
    let (lo, hi) = slopes.iter().fold((f64::MAX, f64::MIN), |(a, b), &s| (a.min(s), b.max(s)));
    Ok(format!("{streams} streams, {SLOPE_DRAWS} draws/point, slopes in [{lo:.4}, {hi:.4}]"))
}

fn criterion_8() -> Outcome {
    let rs: Vec<Rational> = (1..=10).map(Rational::from).collect();
    let rows = tradeoff_table(10, 360, 2520, &rs, false).map_err(|e| e.to_string())?;
    check(rows.len() == 10, || format!("{} rows", rows.len()))?;
    check(rows[2].l_optimal == q(7, 60), || format!("r=3 row has {}", rows[2].l_optimal))?;
    check(rows[3].l_optimal == q(3, 40), || format!("r=4 row has {}", rows[3].l_optimal))?;
    let flagged: Vec<u32> = rows.iter().filter_map(|r| r.reference_mismatch).map(|m| m.r).collect();
    check(flagged == vec![3, 4], || format!("flagged rows {flagged:?}, want [3, 4]"))?;
    let json = tradeoff_json(&rows);
    let flags = json["reference_mismatches"].as_array().cloned().unwrap_or_default();
    check(
        flags.len() == 2 && flags[0]["exact"] == "7/60" && flags[1]["exact"] == "3/40",
        || format!("report flags {flags:?}"),
    )?;
    let csv = tradeoff_csv(&rows);
    check(csv.contains(",0.116667,") && csv.contains(",0.075,"), || "CSV lacks exact values".into())?;
    Ok("r=3 → 7/60, r=4 → 3/40 emitted; exactly these two rows flagged against the plot".into())
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "closed-form loads", budget: Duration::from_millis(100), run: criterion_1 },
        Criterion { id: 2, name: "four-node example", budget: Duration::from_secs(1), run: criterion_2 },
        Criterion { id: 3, name: "five-node example", budget: Duration::from_secs(5), run: criterion_3 },
        Criterion { id: 4, name: "converse tightness", budget: Duration::from_secs(30), run: criterion_4 },
        Criterion { id: 5, name: "oracle agreement", budget: Duration::from_secs(60), run: criterion_5 },
        Criterion { id: 6, name: "counting vs numerics", budget: Duration::from_secs(60), run: criterion_6 },
        Criterion { id: 7, name: "DoF slope", budget: Duration::from_secs(60), run: criterion_7 },
        Criterion { id: 8, name: "reference plot flags", budget: Duration::from_millis(500), run: criterion_8 },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let result = (c.run)();
        let elapsed = start.elapsed();
        let result = match result {
            Ok(detail) if elapsed > c.budget => {
                Err(format!("{detail}; took {elapsed:.2?}, budget {:.2?}", c.budget))
            }
            other => other,
        };
        match result {
            Ok(detail) => println!("criterion {} PASS {}: {detail} [{elapsed:.2?}]", c.id, c.name),
            Err(why) => {
                failed += 1;
                println!("criterion {} FAIL {}: {why} [{elapsed:.2?}]", c.id, c.name);
            }
        }
    }
    println!("acceptance: {}/{} passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
