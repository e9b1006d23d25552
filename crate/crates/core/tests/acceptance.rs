//! Acceptance gate: one PASS/FAIL line per criterion.

mod common;

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use common::{brute_force_max, central_diff, fim_instance, non_decreasing, non_increasing, small_config};
use ipac_core::beamform::stage1::{discrete_from_matrix, partition_of, stage1_continuous};
use ipac_core::beamform::{objective_matrix, run_two_stage, stage1_objective, stage1_weights};
use ipac_core::channel::assemble_channels;
use ipac_core::geometry::SPEED_OF_LIGHT;
use ipac_core::metrics::fim::delay_gradient;
use ipac_core::metrics::selfcheck::fim_check;
use ipac_core::metrics::{crb_peb, effective_channel, efim_closed_form, fisher_bundle, los_vlos_gain_ratio};
use ipac_core::phase::PhaseProfile;
use ipac_core::scenario::{
    build_scenario, run_sweep, to_csv_string, SweepRow, SweepSpec, SweptParam, S3_PEB_M, S3_RATE_BPSHZ,
};
use ipac_core::{PebMode, PhaseMode, SystemConfig};
use ipac_sdp::{solve, SdpProblem, SolveStatus};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

const Q1: PhaseMode = PhaseMode::Discrete { q_bits: 1 };
const Q2: PhaseMode = PhaseMode::Discrete { q_bits: 2 };

fn sweep(
    id: u8,
    param: SweptParam,
    values: &[f64],
    fixed: Option<f64>,
    modes: &[PhaseMode],
    seeds: &[u64],
) -> Vec<SweepRow> {
    let spec = SweepSpec {
        scenario_id: id,
        swept_param: param,
        values: values.to_vec(),
        fixed_other: fixed,
        phase_modes: modes.to_vec(),
        seeds: seeds.to_vec(),
    };
    let base = build_scenario(id, true).unwrap();
    run_sweep(&spec, &base, 1, false).unwrap()
}

/// Curves keyed by (mode, seed), in sweep order.
fn curves(rows: &[SweepRow], n: usize) -> Vec<(String, u64, Option<Vec<f64>>)> {
    rows.chunks(n)
        .map(|c| {
            let p: Option<Vec<f64>> = c.iter().map(|r| r.power_total_w).collect();
            (c[0].phase_mode.clone(), c[0].seed, p)
        })
        .collect()
}

fn c1() -> Outcome {
    let cfg = build_scenario(1, true).unwrap();
    let t = Instant::now();
    let report = fim_check(&cfg, 20, 1.0).unwrap();
    let secs = t.elapsed().as_secs_f64();
    outcome(
        report.max_rel_error < 1e-4 && secs < 5.0,
        format!(
            "max rel error {:.2e} over 20 instances in {secs:.2} s",
            report.max_rel_error
        ),
    )
}

fn c2() -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 0..50u64 {
        let cfg = small_config(i, 2, 4, (4, 4), &[(i % 2) as u8, 1]);
        let (ch, w, phase) = fim_instance(&cfg);
        for k in 0..2 {
            let schur = fisher_bundle(&ch, &w, &phase, k, 2, true).unwrap().efim;
            let closed = efim_closed_form(&ch, &w, &phase, k, 2).unwrap().efim;
            worst = worst.max((&schur - &closed).norm() / closed.norm());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        worst < 1e-9 && secs < 5.0,
        format!("max rel error {worst:.2e} over 50 instances in {secs:.2} s"),
    )
}

fn c3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let a = Vector3::new(0.0, rng.random_range(-10.0..30.0), rng.random_range(2.0..12.0));
        let u = Vector3::new(rng.random_range(5.0..50.0), rng.random_range(-20.0..40.0), 1.5);
        let g = delay_gradient(&u, &a).unwrap();
        let tau = |x: &[f64]| (Vector3::new(x[0], x[1], x[2]) - a).norm() / SPEED_OF_LIGHT;
        for i in 0..3 {
            let fd = central_diff(tau, u.as_slice(), i, 1e-3);
            worst = worst.max((fd - g[i]).abs() / g.norm());
        }
    }
    outcome(
        worst < 1e-6,
        format!("max rel error {worst:.2e} over 50 UE/anchor pairs"),
    )
}

#[derive(Deserialize)]
struct Case {
    name: String,
    expected_objective: f64,
    problem: SdpProblem,
}

fn c4() -> Outcome {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../sdp/tests/data");
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    let (mut worst_rel, mut worst_gap, mut bad) = (0.0f64, 0.0f64, Vec::new());
    for p in &paths {
        let c: Case = serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
        let s = solve(&c.problem, 1e-9, 100).unwrap();
        let rel = (s.primal_objective - c.expected_objective).abs() / c.expected_objective.abs().max(1.0);
        worst_rel = worst_rel.max(rel);
        worst_gap = worst_gap.max(s.relative_gap);
        if s.status != SolveStatus::Optimal || rel >= 1e-6 || s.relative_gap >= 1e-7 {
            bad.push(c.name);
        }
    }
    outcome(
        paths.len() == 25 && bad.is_empty(),
        format!(
            "{} problems, max rel error {worst_rel:.2e}, max gap {worst_gap:.2e}, failures {bad:?}",
            paths.len()
        ),
    )
}

fn c5() -> Outcome {
    let (mut hits, mut monotone) = (0, true);
    for seed in 0..100u64 {
        let m = 2 + (seed % 2) as usize;
        let cfg = small_config(seed, 2, 2, (1, m), &[1, 1]);
        let ch = assemble_channels(&cfg).unwrap();
        let betas: Vec<f64> = (0..2).map(|k| cfg.beta(k)).collect();
        let b = objective_matrix(&ch, &stage1_weights(&betas));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = discrete_from_matrix(&b, 1, 8, 50, partition_of(&ch), &mut rng, true);
        let best = out.runs.iter().map(|r| r.objective).fold(f64::NEG_INFINITY, f64::max);
        let exact = brute_force_max(&b, 2);
        if best >= exact - 1e-9 * exact.abs() {
            hits += 1;
        }
        monotone &= out
            .runs
            .iter()
            .all(|r| r.trace.windows(2).all(|w| w[1] >= w[0] - 1e-12 * w[0].abs()));
    }
    outcome(
        hits >= 95 && monotone,
        format!("enumeration matched in {hits}/100 seeds, monotone updates: {monotone}"),
    )
}

fn c6() -> Outcome {
    let (mut bounded, mut modulus) = (0, 0.0f64);
    for seed in 0..50u64 {
        let cfg = small_config(seed, 2, 2, (2, 2), &[1, 1]);
        let ch = assemble_channels(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = stage1_continuous(&ch, &[1.0, 1.0], 50, 1e-8, 100, &mut rng).unwrap();
        let b = objective_matrix(&ch, &[1.0, 1.0]);
        let achieved = stage1_objective(&b, &out.profile.v);
        if out.sdr_bound >= achieved - 1e-9 * out.sdr_bound.abs() {
            bounded += 1;
        }
        let target = 1.0 / (ch.n_ris as f64).sqrt();
        modulus = out
            .profile
            .v
            .iter()
            .fold(modulus, |a, z| a.max((z.norm() - target).abs()));
    }
    outcome(
        bounded == 50 && modulus < 1e-9,
        format!("bound held in {bounded}/50 instances, max modulus error {modulus:.1e}"),
    )
}

fn c7() -> Outcome {
    let (mut checked, mut failed) = (0, Vec::new());
    for id in [1u8, 2] {
        for mode in [PhaseMode::Continuous, Q2, Q1, PhaseMode::Random] {
            for rate in [0.5, 2.0, 4.0] {
                let mut cfg = build_scenario(id, true).unwrap();
                cfg.phase_mode = mode;
                cfg.rate_req_bpshz = vec![rate; 3];
                let res = run_two_stage(&cfg).unwrap();
                checked += 1;
                if !res.report.satisfies(&cfg, 1e-3, 1e-3) {
                    failed.push(format!("s{id} {mode:?} r={rate}"));
                }
            }
        }
    }
    let mut worst_mrt = 0.0f64;
    for seed in 0..5u64 {
        let mut cfg = small_config(seed, 1, 1, (4, 4), &[1]);
        cfg.rate_req_bpshz = vec![0.5 + seed as f64];
        cfg.peb_threshold_m = vec![None];
        cfg.phase_mode = PhaseMode::Random;
        let res = run_two_stage(&cfg).unwrap();
        let g = effective_channel(&res.channels, &res.phase, 0, 0);
        let expected = cfg.beta(0) * res.channels.noise_power / g.norm_squared();
        worst_mrt = worst_mrt.max((res.beams.power_total_w - expected).abs() / expected);
    }
    outcome(
        failed.is_empty() && worst_mrt < 1e-4,
        format!("{checked} solutions rechecked, failures {failed:?}; MRT max rel error {worst_mrt:.1e}"),
    )
}

fn c8() -> Outcome {
    let t = Instant::now();
    let seeds: Vec<u64> = (1..=5).collect();
    let modes = [PhaseMode::Continuous, Q2, Q1, PhaseMode::Random];
    let mut notes = Vec::new();

    // Power against rate at a fixed PEB threshold.
    let rates = [0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let rate_rows = sweep(1, SweptParam::RateReq, &rates, Some(1.0), &modes, &seeds);
    let mut rate_ok = true;
    for (mode, seed, p) in curves(&rate_rows, rates.len()) {
        let Some(p) = p else {
            rate_ok = false;
            notes.push(format!("rate sweep {mode}/{seed} has unsolved points"));
            continue;
        };
        let shape = non_decreasing(&p, 1e-6) && p[1] / p[0] <= 1.05 && p[rates.len() - 1] / p[0] >= 1.5;
        if !shape {
            rate_ok = false;
            notes.push(format!("rate sweep {mode}/{seed} shape {p:?}"));
        }
    }

    // Power against PEB threshold at a fixed rate.
    let pebs = [0.3, 0.5, 1.0, 2.0, 5.0, 10.0];
    let peb_rows = sweep(1, SweptParam::PebThreshold, &pebs, Some(1.0), &modes, &seeds);
    let mut peb_ok = true;
    for (mode, seed, p) in curves(&peb_rows, pebs.len()) {
        if !p.is_some_and(|p| non_increasing(&p, 1e-6)) {
            peb_ok = false;
            notes.push(format!("peb sweep {mode}/{seed} not non-increasing"));
        }
    }

    // Scenario 2 ordering.
    let mut ordered = 0;
    for seed in 1..=100u64 {
        let power = |mode| {
            let mut cfg = build_scenario(2, true).unwrap();
            cfg.seed = seed;
            cfg.phase_mode = mode;
            run_two_stage(&cfg).map(|r| r.beams.power_total_w).ok()
        };
        if let (Some(c), Some(q2), Some(q1)) = (power(PhaseMode::Continuous), power(Q2), power(Q1)) {
            if c <= q2 * (1.0 + 1e-6) && q2 <= q1 * (1.0 + 1e-6) {
                ordered += 1;
            }
        }
    }

    // Continuous against random on the rate sweep, at points where the direct
    // path dominates by more than 20 dB.
    let ch = assemble_channels(&build_scenario(1, true).unwrap()).unwrap();
    let gain_db = (0..ch.n_users)
        .map(|k| 10.0 * los_vlos_gain_ratio(&ch, k).log10())
        .fold(f64::INFINITY, f64::min);
    let worst_gap = |rows: &[SweepRow]| {
        let mut worst = 0.0f64;
        for r in rows.iter().filter(|r| r.phase_mode == "random") {
            let c = rows
                .iter()
                .find(|c| c.phase_mode == "continuous" && c.seed == r.seed && c.rate_req_bpshz == r.rate_req_bpshz)
                .unwrap();
            if let (Some(pr), Some(pc)) = (r.power_total_w, c.power_total_w) {
                if pc > 0.0 {
                    worst = worst.max((pr - pc).abs() / pc);
                }
            }
        }
        worst
    };
    let overlap_gap = worst_gap(&rate_rows);
    let overlap_ok = gain_db <= 20.0 || overlap_gap <= 0.10;
    let free_rows = sweep(
        1,
        SweptParam::RateReq,
        &[1.0, 2.0, 4.0, 6.0],
        None,
        &[PhaseMode::Continuous, PhaseMode::Random],
        &seeds,
    );
    let free_gap = worst_gap(&free_rows);

    let secs = t.elapsed().as_secs_f64();
    let pass = rate_ok && peb_ok && ordered >= 90 && overlap_ok && secs < 600.0;
    let mut detail = format!(
        "rate shape {rate_ok}, peb monotone {peb_ok}, scenario 2 ordering {ordered}/100, \
         continuous-vs-random max gap {:.1}% at LoS/VLoS {gain_db:.1} dB ({}), \
         without PEB constraint {:.2}%, {secs:.1} s",
        100.0 * overlap_gap,
        if overlap_ok { "ok" } else { "exceeds 10%" },
        100.0 * free_gap,
    );
    if !notes.is_empty() {
        detail.push_str(&format!("; {}", notes.join("; ")));
    }
    outcome(pass, detail)
}

fn c9() -> Outcome {
    let mut whole = build_scenario(3, true).unwrap();
    whole.ris.partitions = 1;
    whole.peb_mode = PebMode::Strict;
    let singular = run_two_stage(&whole).err().map(|e| e.status()) == Some("singular_information");

    let split = build_scenario(3, true).unwrap();
    let mut rank_ok = true;
    for trial in 0..10u64 {
        let mut cfg: SystemConfig = split.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        for p in cfg.ue_positions_m.iter_mut() {
            p[0] += rng.random_range(-3.0..3.0);
            p[1] += rng.random_range(-3.0..3.0);
        }
        let ch = assemble_channels(&cfg).unwrap();
        let w = common::random_beams(&ch, &mut rng);
        let phase = PhaseProfile::random(ch.n_ris, &mut rng, partition_of(&ch));
        for k in 0..ch.n_users {
            let efim = efim_closed_form(&ch, &w, &phase, k, 2).unwrap().efim;
            rank_ok &= crb_peb(&efim, PebMode::Strict).is_ok_and(|r| r.peb.is_finite() && r.rank == 2);
        }
    }

    let modes = [PhaseMode::Continuous, Q2, Q1];
    let rates = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];
    let pebs = [10.0, 20.0, 30.0, 50.0, 100.0, 300.0];
    let mut rate_mono = true;
    for fixed in [Some(S3_PEB_M), None] {
        let rows = sweep(3, SweptParam::RateReq, &rates, fixed, &modes, &[1, 2]);
        rate_mono &= curves(&rows, rates.len())
            .iter()
            .all(|(_, _, p)| p.as_ref().is_some_and(|p| non_decreasing(p, 1e-6)));
    }
    let peb_rows = sweep(3, SweptParam::PebThreshold, &pebs, Some(S3_RATE_BPSHZ), &modes, &[1, 2]);
    let peb_mono = curves(&peb_rows, pebs.len())
        .iter()
        .all(|(_, _, p)| p.as_ref().is_some_and(|p| non_increasing(p, 1e-6)));
    outcome(
        singular && rank_ok && rate_mono && peb_mono,
        format!(
            "unpartitioned strict singular {singular}, partitioned rank-2 PEB {rank_ok}, \
             rate sweeps (PEB {S3_PEB_M} m and unconstrained) monotone {rate_mono}, PEB sweep monotone {peb_mono}"
        ),
    )
}

fn c10() -> Outcome {
    let spec = SweepSpec {
        scenario_id: 2,
        swept_param: SweptParam::RateReq,
        values: vec![0.0, 1.0, 3.0],
        fixed_other: Some(1.0),
        phase_modes: vec![PhaseMode::Continuous, Q1, PhaseMode::Random],
        seeds: vec![7, 8],
    };
    let base = build_scenario(2, true).unwrap();
    let a = to_csv_string(&run_sweep(&spec, &base, 1, false).unwrap(), 3).unwrap();
    let b = to_csv_string(&run_sweep(&spec, &base, 2, false).unwrap(), 3).unwrap();
    outcome(a == b, format!("{} bytes, identical: {}", a.len(), a == b))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("FIM oracle", c1),
        ("EFIM two-route equivalence", c2),
        ("Jacobian check", c3),
        ("SDP solver", c4),
        ("Stage I discrete optimality", c5),
        ("Stage I continuous", c6),
        ("Stage II feasibility", c7),
        ("Trend reproduction", c8),
        ("Scenario 3 structure", c9),
        ("Determinism", c10),
    ];
    let total = Instant::now();
    let mut passed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = f();
        passed += o.pass as usize;
        println!(
            "{} {:>2} {name}: {} [{:.1} s]",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!(
        "{passed}/{} criteria passed in {:.1} s",
        criteria.len(),
        total.elapsed().as_secs_f64()
    );
}
