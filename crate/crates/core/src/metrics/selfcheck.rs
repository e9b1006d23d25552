//! Finite-difference oracle for the channel FIM.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::channel::assemble_channels;
use crate::config::SystemConfig;
use crate::error::Result;
use crate::metrics::fim::{alpha_terms, fim_channel};
use crate::phase::PhaseProfile;
use crate::C64;
use ipac_sdp::complex_gaussian_sample;

/// Relative FD step, scaled per parameter.
pub const FD_STEP: f64 = 1e-6;

/// Noiseless observation on every subcarrier for
/// `eta = [tau_d, tau_r, a_d^R, a_d^I, a_r^R, a_r^I]` nuisance offsets.
fn mu(alpha_d: &[C64], alpha_r: &[C64], chi: f64, eta: &[f64; 6], omegas: &[f64]) -> Vec<C64> {
    let dd = C64::new(eta[2], eta[3]);
    let dr = C64::new(eta[4], eta[5]);
    omegas
        .iter()
        .enumerate()
        .map(|(n, &w)| {
            (alpha_d[n] + dd) * C64::from_polar(chi, -w * eta[0])
                + (alpha_r[n] + dr) * C64::from_polar(1.0, -w * eta[1])
        })
        .collect()
}

/// FIM by central differences of `mu_n`.
pub fn fim_finite_difference(
    alpha_d: &[C64],
    alpha_r: &[C64],
    chi: f64,
    tau_d: f64,
    tau_r: f64,
    omegas: &[f64],
    sigma2: f64,
) -> DMatrix<f64> {
    let wmax = omegas.iter().fold(0.0_f64, |a, w| a.max(w.abs())).max(1.0);
    let amax = alpha_d
        .iter()
        .chain(alpha_r)
        .fold(0.0_f64, |a, z| a.max(z.norm()))
        .max(f64::MIN_POSITIVE);
    let scales = [1.0 / wmax, 1.0 / wmax, amax, amax, amax, amax];
    let base = [tau_d, tau_r, 0.0, 0.0, 0.0, 0.0];
    let derivs: Vec<Vec<C64>> = (0..6)
        .map(|p| {
            let h = FD_STEP * scales[p];
            let mut plus = base;
            let mut minus = base;
            plus[p] += h;
            minus[p] -= h;
            let step = plus[p] - minus[p];
            let a = mu(alpha_d, alpha_r, chi, &plus, omegas);
            let b = mu(alpha_d, alpha_r, chi, &minus, omegas);
            a.iter().zip(&b).map(|(x, y)| (x - y) / step).collect()
        })
        .collect();
    DMatrix::from_fn(6, 6, |r, c| {
        derivs[r]
            .iter()
            .zip(&derivs[c])
            .map(|(x, y)| (x.conj() * y).re)
            .sum::<f64>()
            * 2.0
            / sigma2
    })
}

/// `max |A - B|_{ij} / sqrt(A_ii A_jj)` over entries whose diagonals are
/// nonzero in `reference`.
pub fn normalized_max_error(reference: &DMatrix<f64>, other: &DMatrix<f64>) -> f64 {
    let n = reference.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            let s = (reference[(i, i)] * reference[(j, j)]).sqrt();
            if s > 0.0 {
                worst = worst.max((reference[(i, j)] - other[(i, j)]).abs() / s);
            }
        }
    }
    worst
}

#[derive(Debug, Clone, Serialize)]
pub struct FimCheckReport {
    pub instances: usize,
    pub max_rel_error: f64,
    pub per_instance: Vec<f64>,
}

/// Compares the analytic FIM with the finite-difference oracle on
/// `instances` seeded draws of beams and RIS phases built on `cfg`.
///
/// `delta_f_fault` multiplies the subcarrier spacing seen by the analytic
/// route only; any value other than 1 must make the check fail.
pub fn fim_check(cfg: &SystemConfig, instances: usize, delta_f_fault: f64) -> Result<FimCheckReport> {
    let mut per_instance = Vec::with_capacity(instances);
    for t in 0..instances {
        let mut c = cfg.clone();
        c.seed = cfg.seed.wrapping_add(t as u64);
        let ch = assemble_channels(&c)?;
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed ^ 0x5eed_f1f0);
        let phase = PhaseProfile::random(
            ch.n_ris,
            &mut rng,
            ch.segments.iter().map(|s| (s.start, s.len)).collect(),
        );
        let w: Vec<Vec<DVector<C64>>> = (0..ch.n_subcarriers)
            .map(|_| {
                (0..ch.n_users)
                    .map(|_| complex_gaussian_sample(ch.n_tx, &mut rng))
                    .collect()
            })
            .collect();
        let omegas: Vec<f64> = (0..ch.n_subcarriers).map(|i| ch.omega(i)).collect();
        let faulty: Vec<f64> = omegas.iter().map(|w| w * delta_f_fault).collect();
        for k in 0..ch.n_users {
            let (ad, ar): (Vec<C64>, Vec<C64>) = (0..ch.n_subcarriers)
                .map(|idx| {
                    let (a, r) = alpha_terms(&ch, &w, &phase, k, idx);
                    (a, r[0])
                })
                .unzip();
            let chi = ch.chi[k];
            let (td, tr) = (ch.direct[k].delay_s, ch.reflected_delay(0, k));
            let analytic = fim_channel(&ad, &ar, chi, td, tr, &faulty, ch.noise_power);
            let fd = fim_finite_difference(&ad, &ar, chi, td, tr, &omegas, ch.noise_power);
            per_instance.push(normalized_max_error(&fd, &analytic));
        }
    }
    let max_rel_error = per_instance.iter().fold(0.0_f64, |a, &b| a.max(b));
    Ok(FimCheckReport {
        instances,
        max_rel_error,
        per_instance,
    })
}
