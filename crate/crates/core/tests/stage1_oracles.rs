mod common;

use common::{brute_force_max, small_config};
use ipac_core::beamform::stage1::{discrete_from_matrix, partition_of, stage1_continuous};
use ipac_core::beamform::{objective_matrix, stage1_objective, stage1_weights};
use ipac_core::channel::assemble_channels;
use ipac_core::phase::PhaseProfile;
use ipac_core::PhaseMode;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64, m: usize) -> (nalgebra::DMatrix<ipac_core::C64>, Vec<(usize, usize)>) {
    let cfg = small_config(seed, 2, 2, (1, m), &[1, 1]);
    let ch = assemble_channels(&cfg).unwrap();
    let betas: Vec<f64> = (0..2).map(|k| cfg.beta(k)).collect();
    (objective_matrix(&ch, &stage1_weights(&betas)), partition_of(&ch))
}

#[test]
fn multi_start_ascent_matches_enumeration() {
    let mut hits = 0;
    for seed in 0..100u64 {
        let m = 2 + (seed % 2) as usize;
        let (b, part) = instance(seed, m);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = discrete_from_matrix(&b, 1, 8, 50, part, &mut rng, true);
        let best = out.runs.iter().map(|r| r.objective).fold(f64::NEG_INFINITY, f64::max);
        let exact = brute_force_max(&b, 2);
        if best >= exact - 1e-9 * exact.abs() {
            hits += 1;
        }
        for r in &out.runs {
            for w in r.trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-12 * w[0].abs(), "seed {seed}: objective fell {w:?}");
            }
        }
    }
    assert!(hits >= 95, "{hits}/100");
}

#[test]
fn continuous_bound_and_unit_modulus() {
    for seed in 0..50u64 {
        let cfg = small_config(seed, 2, 2, (2, 2), &[1, 1]);
        let ch = assemble_channels(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = stage1_continuous(&ch, &[1.0, 1.0], 50, 1e-8, 100, &mut rng).unwrap();
        let achieved = out.profile.objective.unwrap();
        assert!(out.sdr_bound >= achieved - 1e-9 * out.sdr_bound.abs(), "seed {seed}");
        let target = 1.0 / (ch.n_ris as f64).sqrt();
        assert!(out.profile.v.iter().all(|z| (z.norm() - target).abs() < 1e-9));
        assert_eq!(out.profile.mode, PhaseMode::Continuous);

        let b = objective_matrix(&ch, &[1.0, 1.0]);
        for _ in 0..100 {
            let phases: Vec<f64> = (0..ch.n_ris)
                .map(|_| rng.random::<f64>() * std::f64::consts::TAU)
                .collect();
            let v = PhaseProfile::from_phases(&phases, PhaseMode::Continuous, vec![]).v;
            assert!(stage1_objective(&b, &v) <= out.sdr_bound * (1.0 + 1e-9));
        }
    }
}

#[test]
fn zero_rate_users_drop_out_of_weights() {
    assert_eq!(stage1_weights(&[0.0, 4.0]), vec![0.0, 1.0]);
    assert_eq!(stage1_weights(&[2.0, 4.0, 0.0]), vec![1.0, 0.5, 0.0]);
    assert_eq!(stage1_weights(&[0.0, 0.0]), vec![1.0, 1.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn discrete_profile_sits_on_grid(seed in 0u64..1000, q in 1u32..4) {
        let (b, part) = instance(seed, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = discrete_from_matrix(&b, q, 4, 50, part, &mut rng, false);
        prop_assert!(out.profile.check_invariants().is_ok());
        let levels = out.profile.levels.clone().unwrap();
        prop_assert!(levels.iter().all(|&l| l < 1 << q));
    }

    #[test]
    fn objective_matrix_is_hermitian(seed in 0u64..1000) {
        let (b, _) = instance(seed, 3);
        prop_assert!((&b - b.adjoint()).norm() <= 1e-12 * b.norm());
    }
}
