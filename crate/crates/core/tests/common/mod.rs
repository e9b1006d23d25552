#![allow(dead_code)]

use std::f64::consts::PI;

use ipac_core::beamform::stage1::partition_of;
use ipac_core::channel::{assemble_channels, ChannelSet};
use ipac_core::phase::PhaseProfile;
use ipac_core::scenario::build_scenario;
use ipac_core::{SystemConfig, C64};
use ipac_sdp::complex_gaussian_sample;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Desk-scale Scenario 1 geometry with `k` UEs scattered around the default
/// cluster and a `ris_rows x ris_cols` RIS.
pub fn small_config(seed: u64, k: usize, n_sub: usize, ris: (usize, usize), chi: &[u8]) -> SystemConfig {
    let mut cfg = build_scenario(1, true).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0ff_ee00);
    cfg.ue_positions_m = (0..k)
        .map(|_| [rng.random_range(25.0..40.0), rng.random_range(2.0..16.0), 1.5])
        .collect();
    cfg.obstruction = chi.to_vec();
    cfg.rate_req_bpshz = vec![1.0; k];
    cfg.peb_threshold_m = vec![Some(1.0); k];
    cfg.n_subcarriers = n_sub;
    cfg.ris.rows = ris.0;
    cfg.ris.cols = ris.1;
    cfg.seed = seed;
    cfg.check().unwrap();
    cfg
}

pub fn random_beams<R: Rng>(ch: &ChannelSet, rng: &mut R) -> Vec<Vec<DVector<C64>>> {
    (0..ch.n_subcarriers)
        .map(|_| (0..ch.n_users).map(|_| complex_gaussian_sample(ch.n_tx, rng)).collect())
        .collect()
}

pub fn random_phase<R: Rng>(ch: &ChannelSet, rng: &mut R) -> PhaseProfile {
    PhaseProfile::random(ch.n_ris, rng, partition_of(ch))
}

/// Channels, random beams and random phases for instance `seed`.
pub fn fim_instance(cfg: &SystemConfig) -> (ChannelSet, Vec<Vec<DVector<C64>>>, PhaseProfile) {
    let ch = assemble_channels(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xbeef);
    let w = random_beams(&ch, &mut rng);
    let phase = random_phase(&ch, &mut rng);
    (ch, w, phase)
}

/// `x^T B conj(x)` for `x_m = exp(j 2 pi l_m / L)`.
pub fn grid_objective(b: &DMatrix<C64>, levels: &[usize], n_levels: usize) -> f64 {
    let x = DVector::from_iterator(
        levels.len(),
        levels
            .iter()
            .map(|&l| C64::from_polar(1.0, 2.0 * PI * l as f64 / n_levels as f64)),
    );
    (x.transpose() * b * x.map(|z| z.conj()))[(0, 0)].re
}

/// Exhaustive maximum over all `L^M` level assignments.
pub fn brute_force_max(b: &DMatrix<C64>, n_levels: usize) -> f64 {
    let m = b.nrows();
    let total = n_levels.pow(m as u32);
    let mut best = f64::NEG_INFINITY;
    let mut levels = vec![0; m];
    for code in 0..total {
        let mut c = code;
        for l in levels.iter_mut() {
            *l = c % n_levels;
            c /= n_levels;
        }
        best = best.max(grid_objective(b, &levels, n_levels));
    }
    best
}

/// Every step is at least `-rel_tol * |previous|`.
pub fn non_decreasing(p: &[f64], rel_tol: f64) -> bool {
    p.windows(2).all(|w| w[1] >= w[0] - rel_tol * w[0].abs())
}

pub fn non_increasing(p: &[f64], rel_tol: f64) -> bool {
    p.windows(2).all(|w| w[1] <= w[0] + rel_tol * w[0].abs())
}

/// Central difference of `f` at `x` along coordinate `i`.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut p = x.to_vec();
    let mut m = x.to_vec();
    p[i] += h;
    m[i] -= h;
    (f(&p) - f(&m)) / (2.0 * h)
}
