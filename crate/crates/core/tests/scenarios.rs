mod common;

use common::{non_decreasing, non_increasing, random_beams};
use ipac_core::beamform::run_two_stage;
use ipac_core::channel::assemble_channels;
use ipac_core::config::w_to_dbm;
use ipac_core::metrics::{crb_peb, efim_closed_form};
use ipac_core::phase::PhaseProfile;
use ipac_core::scenario::{
    build_scenario, default_file_name, emit, partition_ris, run_sweep, to_csv_string, SweepRow, SweepSpec, SweptParam,
    TableFormat,
};
use ipac_core::{CoreError, PebMode, PhaseMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn spec(
    id: u8,
    param: SweptParam,
    values: &[f64],
    fixed: Option<f64>,
    modes: &[PhaseMode],
    seeds: &[u64],
) -> SweepSpec {
    SweepSpec {
        scenario_id: id,
        swept_param: param,
        values: values.to_vec(),
        fixed_other: fixed,
        phase_modes: modes.to_vec(),
        seeds: seeds.to_vec(),
    }
}

fn powers(rows: &[SweepRow]) -> Vec<f64> {
    rows.iter().map(|r| r.power_total_w.expect("solved point")).collect()
}

#[test]
fn presets_follow_the_scenario_list() {
    assert_eq!(build_scenario(1, true).unwrap().obstruction, vec![1, 1, 1]);
    assert_eq!(build_scenario(2, true).unwrap().obstruction, vec![1, 0, 1]);
    let s3 = build_scenario(3, false).unwrap();
    assert_eq!(s3.obstruction, vec![0, 0, 0]);
    assert_eq!(s3.ris.partitions, 3);
    let desk = build_scenario(1, true).unwrap();
    assert_eq!(desk.bs.rows * desk.bs.cols, 4);
    assert_eq!(desk.ris.rows * desk.ris.cols, 16);
    assert_eq!(desk.n_subcarriers, 8);
    let full = build_scenario(1, false).unwrap();
    assert_eq!((full.bs.rows * full.bs.cols, full.ris.rows * full.ris.cols), (16, 144));
    assert_eq!((full.n_subcarriers, full.fc_hz, full.delta_f_hz), (1000, 30e9, 120e3));
    assert!(matches!(build_scenario(4, true), Err(CoreError::InvalidArgument(_))));
}

#[test]
fn partitioning_splits_columns() {
    let base = build_scenario(1, false).unwrap();
    assert_eq!(partition_ris(&base, 1).unwrap(), base);
    let cfg = partition_ris(&base, 3).unwrap();
    let ch = assemble_channels(&cfg).unwrap();
    assert_eq!(ch.segments.len(), 3);
    assert!(ch.segments.iter().all(|s| s.len == 48));
    // Centroids lie on one line through the RIS plane.
    let c: Vec<_> = ch.segments.iter().map(|s| s.geometry.reference_point).collect();
    let cross = (c[1] - c[0]).cross(&(c[2] - c[0]));
    assert!(cross.norm() < 1e-12);
    assert!(partition_ris(&base, 5).is_err());
}

#[test]
fn partitioned_ris_restores_two_dimensional_information() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let whole = {
        let mut c = build_scenario(3, true).unwrap();
        c.ris.partitions = 1;
        c
    };
    let split = build_scenario(3, true).unwrap();
    for (cfg, rank) in [(&whole, 1), (&split, 2)] {
        let ch = assemble_channels(cfg).unwrap();
        let w = random_beams(&ch, &mut rng);
        let phase = PhaseProfile::random(ch.n_ris, &mut rng, ipac_core::beamform::stage1::partition_of(&ch));
        for k in 0..ch.n_users {
            let efim = efim_closed_form(&ch, &w, &phase, k, 2).unwrap().efim;
            let r = crb_peb(&efim, PebMode::Pseudo).unwrap();
            assert_eq!(r.rank, rank);
            if rank == 2 {
                assert!(crb_peb(&efim, PebMode::Strict).unwrap().peb.is_finite());
            }
        }
    }
    let mut strict = whole.clone();
    strict.peb_mode = PebMode::Strict;
    let err = run_two_stage(&strict).unwrap_err();
    assert_eq!(err.status(), "singular_information", "{err}");
}

#[test]
fn rate_sweep_is_monotone_with_a_plateau() {
    let base = build_scenario(1, true).unwrap();
    let s = spec(
        1,
        SweptParam::RateReq,
        &[0.0, 0.5, 1.0, 2.0, 4.0, 6.0],
        Some(1.0),
        &[PhaseMode::Continuous],
        &[1, 2],
    );
    let rows = run_sweep(&s, &base, 2, false).unwrap();
    assert_eq!(rows.len(), 12);
    for chunk in rows.chunks(6) {
        let p = powers(chunk);
        assert!(non_decreasing(&p, 1e-6), "{p:?}");
        assert!(p[1] / p[0] < 1.01, "plateau {p:?}");
        assert!(p[5] / p[0] > 1.5, "rise {p:?}");
    }
}

#[test]
fn peb_sweep_is_non_increasing() {
    let base = build_scenario(2, true).unwrap();
    let s = spec(
        2,
        SweptParam::PebThreshold,
        &[0.3, 1.0, 3.0, 10.0],
        Some(1.0),
        &[PhaseMode::Discrete { q_bits: 2 }],
        &[1],
    );
    let rows = run_sweep(&s, &base, 1, false).unwrap();
    let p = powers(&rows);
    assert!(non_increasing(&p, 1e-6), "{p:?}");
}

#[test]
fn failed_points_stay_in_the_table() {
    let base = build_scenario(1, true).unwrap();
    let s = spec(
        1,
        SweptParam::PebThreshold,
        &[1e-9, 1.0],
        Some(1.0),
        &[PhaseMode::Continuous],
        &[3],
    );
    let rows = run_sweep(&s, &base, 1, false).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].solver_status, "infeasible");
    assert!(rows[0].power_total_w.is_none());
    assert!(rows[1].is_optimal());
}

#[test]
fn invalid_sweeps_are_rejected() {
    let base = build_scenario(1, true).unwrap();
    let descending = spec(1, SweptParam::RateReq, &[2.0, 1.0], None, &[PhaseMode::Random], &[1]);
    assert!(run_sweep(&descending, &base, 1, false).is_err());
    let empty = spec(1, SweptParam::RateReq, &[1.0], None, &[], &[1]);
    assert!(run_sweep(&empty, &base, 1, false).is_err());
}

#[test]
fn tables_are_deterministic_and_round_trip() {
    let base = build_scenario(2, true).unwrap();
    let s = spec(
        2,
        SweptParam::RateReq,
        &[0.0, 1.0],
        None,
        &[PhaseMode::Random, PhaseMode::Continuous],
        &[5, 6],
    );
    let a = run_sweep(&s, &base, 3, false).unwrap();
    let b = run_sweep(&s, &base, 1, false).unwrap();
    assert_eq!(to_csv_string(&a, 3).unwrap(), to_csv_string(&b, 3).unwrap());

    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join(default_file_name(&s, TableFormat::Json));
    emit(&a, 3, TableFormat::Json, &json).unwrap();
    let back: Vec<SweepRow> = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(back, a);
    for r in &a {
        let (w, dbm) = (r.power_total_w.unwrap(), r.power_total_dbm.unwrap());
        assert_eq!(dbm, w_to_dbm(w));
        if w > 0.0 {
            assert!((dbm - 10.0 * (w * 1000.0).log10()).abs() < 1e-12);
        } else {
            assert_eq!(dbm, f64::NEG_INFINITY);
        }
        assert_eq!(r.peb_threshold_m, None);
    }
    assert_eq!(default_file_name(&s, TableFormat::Csv), "s2_rate_random-continuous.csv");
}

#[test]
fn empty_table_is_header_only() {
    let text = to_csv_string(&[], 2).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert_eq!(
        text.trim_end(),
        "scenario_id,phase_mode,q_bits,seed,rate_req_bpshz,peb_threshold_m,power_total_dbm,power_total_w,\
         rate_k1_bpshz,rate_k2_bpshz,peb_k1_m,peb_k2_m,sdr_gap,solver_status,wall_ms"
    );
}

#[test]
fn emit_reports_the_path_on_failure() {
    let err = emit(&[], 1, TableFormat::Csv, std::path::Path::new("/nonexistent/dir/t.csv")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/dir/t.csv"));
}
