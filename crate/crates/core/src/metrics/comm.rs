use nalgebra::DVector;

use crate::channel::ChannelSet;
use crate::phase::PhaseProfile;
use crate::C64;

/// `G^H (conj(v) .* h_r)`, so that its inner product with `w` equals
/// `h_r^H diag(v) G w`.
pub fn reflected_channel(ch: &ChannelSet, v: &DVector<C64>, k: usize, idx: usize) -> DVector<C64> {
    let x = ch.h_ris_ue[idx][k].zip_map(v, |h, vm| h * vm.conj());
    ch.g_bs_ris[idx].ad_mul(&x)
}

/// Reflected channel through segment `j` only.
pub fn segment_reflected_channel(
    ch: &ChannelSet,
    phase: &PhaseProfile,
    j: usize,
    k: usize,
    idx: usize,
) -> DVector<C64> {
    let s = &ch.segments[j];
    let h = ch.h_ris_ue[idx][k].rows(s.start, s.len);
    let v = phase.v.rows(s.start, s.len);
    let x = h.zip_map(&v, |h, vm| h * vm.conj());
    ch.g_bs_ris[idx].rows(s.start, s.len).ad_mul(&x)
}

/// Effective channel `g = chi h_d + G^H (conj(v) .* h_r)`.
pub fn effective_channel(ch: &ChannelSet, phase: &PhaseProfile, k: usize, idx: usize) -> DVector<C64> {
    reflected_channel(ch, &phase.v, k, idx) + &ch.h_direct[idx][k] * C64::from(ch.chi[k])
}

/// Ratio of the direct-path channel energy of UE `k` to the largest
/// reflected-path energy any unit-modulus profile can reach, summed over
/// subcarriers. Zero when the direct path is blocked.
pub fn los_vlos_gain_ratio(ch: &ChannelSet, k: usize) -> f64 {
    let m = ch.n_ris as f64;
    let (mut los, mut vlos) = (0.0, 0.0);
    for idx in 0..ch.n_subcarriers {
        los += ch.chi[k] * ch.h_direct[idx][k].norm_squared();
        let g = &ch.g_bs_ris[idx];
        let coherent: f64 = (0..ch.n_ris)
            .map(|r| ch.h_ris_ue[idx][k][r].norm() * g.row(r).norm())
            .sum();
        vlos += coherent * coherent / m;
    }
    if vlos > 0.0 {
        los / vlos
    } else {
        f64::INFINITY
    }
}

/// SINR of UE `k` summed over subcarriers, and `log2(1 + sinr)`.
pub fn sinr_rate(ch: &ChannelSet, w: &[Vec<DVector<C64>>], phase: &PhaseProfile, k: usize) -> (f64, f64) {
    let mut signal = 0.0;
    let mut interference = 0.0;
    for idx in 0..ch.n_subcarriers {
        let g = effective_channel(ch, phase, k, idx);
        for (i, wi) in w[idx].iter().enumerate() {
            let p = g.dotc(wi).norm_sqr();
            if i == k {
                signal += p;
            } else {
                interference += p;
            }
        }
    }
    let sinr = signal / (interference + ch.noise_power);
    (sinr, rate_from_sinr(sinr))
}

pub fn rate_from_sinr(sinr: f64) -> f64 {
    (1.0 + sinr).log2()
}
