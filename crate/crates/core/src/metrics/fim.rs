//! ToA Fisher information: channel-parameter FIM, the location Jacobian,
//! Schur-complement EFIM and the per-path closed form.
//!
//! Parameter order for `P` paths is `[tau_1..tau_P, a_1^R, a_1^I, .., a_P^R, a_P^I]`.
//! With the direct path first and one RIS path this is
//! `[tau_d, tau_r, a_d^R, a_d^I, a_r^R, a_r^I]`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};

use crate::channel::ChannelSet;
use crate::error::{CoreError, Result};
use crate::geometry::SPEED_OF_LIGHT;
use crate::metrics::comm::segment_reflected_channel;
use crate::phase::PhaseProfile;
use crate::C64;

/// Noiseless amplitudes and delay of one path; `weight` is the obstruction
/// factor for the direct path and 1 for reflected paths.
#[derive(Debug, Clone, Copy)]
pub struct PathSignal<'a> {
    pub amplitudes: &'a [C64],
    pub delay: f64,
    pub weight: f64,
}

/// Composite amplitudes `(alpha_d, [alpha_r per RIS segment])` on subcarrier
/// `idx` with all symbols equal to +1.
pub fn alpha_terms(
    ch: &ChannelSet,
    w: &[Vec<DVector<C64>>],
    phase: &PhaseProfile,
    k: usize,
    idx: usize,
) -> (C64, Vec<C64>) {
    let omega = ch.omega(idx);
    let wsum = w[idx].iter().fold(DVector::<C64>::zeros(ch.n_tx), |acc, wi| acc + wi);
    let ad = ch.h_direct[idx][k].dotc(&wsum) * C64::from_polar(1.0, omega * ch.direct[k].delay_s);
    let ar = (0..ch.segments.len())
        .map(|j| {
            let g = segment_reflected_channel(ch, phase, j, k, idx);
            g.dotc(&wsum) * C64::from_polar(1.0, omega * ch.reflected_delay(j, k))
        })
        .collect();
    (ad, ar)
}

/// Per-path amplitude sequences used by the EFIM pipeline.
#[derive(Debug, Clone)]
pub struct PathAmplitudes {
    pub direct: Vec<C64>,
    /// `reflected[j][n - 1]` for RIS segment `j`.
    pub reflected: Vec<Vec<C64>>,
}

fn combine(h: &DVector<C64>, beams: &[DVector<C64>], omega: f64, tau: f64) -> C64 {
    let power: f64 = beams.iter().map(|wi| h.dotc(wi).norm_sqr()).sum();
    let composite: C64 = beams.iter().map(|wi| h.dotc(wi)).sum::<C64>() * C64::from_polar(1.0, omega * tau);
    let arg = if composite.norm() > 0.0 { composite.arg() } else { 0.0 };
    C64::from_polar(power.sqrt(), arg)
}

/// Amplitudes whose squared magnitude is `sum_i |h^H w_i|^2`, i.e. the
/// uncorrelated unit-symbol energy, with the phase of the all-ones composite.
pub fn effective_amplitudes(
    ch: &ChannelSet,
    w: &[Vec<DVector<C64>>],
    phase: &PhaseProfile,
    k: usize,
) -> PathAmplitudes {
    let mut direct = Vec::with_capacity(ch.n_subcarriers);
    let mut reflected = vec![Vec::with_capacity(ch.n_subcarriers); ch.segments.len()];
    for idx in 0..ch.n_subcarriers {
        let omega = ch.omega(idx);
        direct.push(combine(&ch.h_direct[idx][k], &w[idx], omega, ch.direct[k].delay_s));
        for (j, r) in reflected.iter_mut().enumerate() {
            let g = segment_reflected_channel(ch, phase, j, k, idx);
            r.push(combine(&g, &w[idx], omega, ch.reflected_delay(j, k)));
        }
    }
    PathAmplitudes { direct, reflected }
}

/// Two-path FIM from the explicit element formulas.
pub fn fim_channel(
    alpha_d: &[C64],
    alpha_r: &[C64],
    chi: f64,
    tau_d: f64,
    tau_r: f64,
    omegas: &[f64],
    sigma2: f64,
) -> DMatrix<f64> {
    let j = C64::i();
    let mut m = DMatrix::<f64>::zeros(6, 6);
    for (n, &w) in omegas.iter().enumerate() {
        let ad = alpha_d[n];
        let ar = alpha_r[n];
        let e_dr = C64::from_polar(1.0, w * (tau_d - tau_r));
        let e_rd = e_dr.conj();
        let x = [
            // (row, col, value)
            (0, 0, w * w * chi * chi * ad.norm_sqr()),
            (0, 1, (ad.conj() * ar * e_dr * (w * w * chi)).re),
            (0, 2, w * chi * chi * ad.im),
            (0, 3, -w * chi * chi * ad.re),
            (0, 4, (j * w * chi * ad.conj() * e_dr).re),
            (0, 5, (-w * chi * ad.conj() * e_dr).re),
            (1, 1, w * w * ar.norm_sqr()),
            (1, 2, (j * w * chi * ar.conj() * e_rd).re),
            (1, 3, (-w * chi * ar.conj() * e_rd).re),
            (1, 4, w * ar.im),
            (1, 5, -w * ar.re),
            (2, 2, chi * chi),
            (3, 3, chi * chi),
            (2, 4, chi * e_dr.re),
            (3, 5, chi * e_dr.re),
            (2, 5, (j * e_dr * chi).re),
            (3, 4, (-j * e_dr * chi).re),
            (4, 4, 1.0),
            (5, 5, 1.0),
        ];
        for (r, c, v) in x {
            m[(r, c)] += v;
        }
    }
    let s = 2.0 / sigma2;
    for r in 0..6 {
        for c in r..6 {
            let v = m[(r, c)] * s;
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
    }
    m
}

/// FIM for any number of paths from the analytic derivatives of
/// `mu_n = sum_p weight_p (alpha_{p,n} + a_p) e^{-j omega_n tau_p}`.
pub fn fim_multipath(paths: &[PathSignal<'_>], omegas: &[f64], sigma2: f64) -> DMatrix<f64> {
    let p = paths.len();
    let dim = 3 * p;
    let mut m = DMatrix::<f64>::zeros(dim, dim);
    let mut d = vec![C64::new(0.0, 0.0); dim];
    for (n, &w) in omegas.iter().enumerate() {
        for (i, path) in paths.iter().enumerate() {
            let e = C64::from_polar(path.weight, -w * path.delay);
            d[i] = -C64::i() * w * path.amplitudes[n] * e;
            d[p + 2 * i] = e;
            d[p + 2 * i + 1] = C64::i() * e;
        }
        for r in 0..dim {
            for c in r..dim {
                m[(r, c)] += (d[r].conj() * d[c]).re;
            }
        }
    }
    let s = 2.0 / sigma2;
    for r in 0..dim {
        for c in r..dim {
            let v = m[(r, c)] * s;
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
    }
    m
}

/// Large-bandwidth approximation `diag{J_tau.., w_1^2, w_1^2, .., w_P^2, w_P^2}`.
///
/// `weights` holds the path weights (`[chi, 1]` for the two-path case).
pub fn fim_orthogonal(fim: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let p = weights.len();
    assert_eq!(fim.nrows(), 3 * p, "FIM size does not match path count");
    let mut out = DMatrix::zeros(3 * p, 3 * p);
    for i in 0..p {
        out[(i, i)] = fim[(i, i)];
        let w2 = weights[i] * weights[i];
        out[(p + 2 * i, p + 2 * i)] = w2;
        out[(p + 2 * i + 1, p + 2 * i + 1)] = w2;
    }
    out
}

/// `d tau / d u = (u - a) / (c |u - a|)` for an anchor at `a`.
pub fn delay_gradient(u: &Vector3<f64>, anchor: &Vector3<f64>) -> Result<Vector3<f64>> {
    let d = u - anchor;
    let n = d.norm();
    if !(n > 0.0) {
        return Err(CoreError::InvalidArgument("UE coincides with an anchor".into()));
    }
    Ok(d / (SPEED_OF_LIGHT * n))
}

/// `Upsilon = d eta / d eta~` for paths anchored at `anchors`, with the
/// position restricted to its first `position_dim` coordinates.
pub fn jacobian_multipath(u: &Vector3<f64>, anchors: &[Vector3<f64>], position_dim: usize) -> Result<DMatrix<f64>> {
    check_dim(position_dim)?;
    let p = anchors.len();
    let mut y = DMatrix::zeros(position_dim + 2 * p, 3 * p);
    for (i, a) in anchors.iter().enumerate() {
        let g = delay_gradient(u, a)?;
        for r in 0..position_dim {
            y[(r, i)] = g[r];
        }
    }
    for i in 0..2 * p {
        y[(position_dim + i, p + i)] = 1.0;
    }
    Ok(y)
}

/// Two-path Jacobian with the BS at `p` and the RIS at `r`.
pub fn jacobian_upsilon(
    u: &Vector3<f64>,
    p: &Vector3<f64>,
    r: &Vector3<f64>,
    position_dim: usize,
) -> Result<DMatrix<f64>> {
    jacobian_multipath(u, &[*p, *r], position_dim)
}

fn check_dim(position_dim: usize) -> Result<()> {
    if position_dim == 2 || position_dim == 3 {
        Ok(())
    } else {
        Err(CoreError::InvalidArgument(format!(
            "position_dim must be 2 or 3, got {position_dim}"
        )))
    }
}

#[derive(Debug, Clone)]
pub struct EfimResult {
    pub j_loc: DMatrix<f64>,
    pub efim: DMatrix<f64>,
    /// Nuisance rows (indices into `j_loc`) removed by the Schur complement.
    pub eliminated: Vec<usize>,
    /// Nuisance rows carrying no information, dropped before elimination.
    pub dropped: Vec<usize>,
}

/// `J_loc = Upsilon J Upsilon^T`, then the Schur complement over the
/// invertible part of the nuisance block.
pub fn efim_position(fim: &DMatrix<f64>, upsilon: &DMatrix<f64>, position_dim: usize) -> Result<EfimResult> {
    if upsilon.ncols() != fim.nrows() || fim.nrows() != fim.ncols() {
        return Err(CoreError::InvalidArgument("FIM and Jacobian sizes disagree".into()));
    }
    let j_loc = upsilon * fim * upsilon.transpose();
    let total = j_loc.nrows();
    let max_diag = (position_dim..total).map(|i| j_loc[(i, i)]).fold(0.0_f64, f64::max);
    let (mut eliminated, mut dropped) = (Vec::new(), Vec::new());
    for i in position_dim..total {
        if j_loc[(i, i)] > 1e-12 * max_diag && j_loc[(i, i)] > 0.0 {
            eliminated.push(i);
        } else {
            dropped.push(i);
        }
    }
    let pos: Vec<usize> = (0..position_dim).collect();
    let jpp = j_loc.select_rows(&pos).select_columns(&pos);
    let efim = if eliminated.is_empty() {
        jpp
    } else {
        let jpn = j_loc.select_rows(&pos).select_columns(&eliminated);
        let jnn = j_loc.select_rows(&eliminated).select_columns(&eliminated);
        let x = match jnn.clone().cholesky() {
            Some(c) => c.solve(&jpn.transpose()),
            None => jnn
                .lu()
                .solve(&jpn.transpose())
                .ok_or_else(|| CoreError::InvalidArgument("nuisance block is singular".into()))?,
        };
        let s = jpp - &jpn * x;
        (&s + s.transpose()) * 0.5
    };
    Ok(EfimResult {
        j_loc,
        efim,
        eliminated,
        dropped,
    })
}

/// Unit path directions `q` restricted to `position_dim` coordinates:
/// the direct leg first, then one per RIS segment.
pub fn path_directions(ch: &ChannelSet, k: usize, position_dim: usize) -> Result<Vec<DVector<f64>>> {
    check_dim(position_dim)?;
    let u = ch.ue_positions[k];
    let mut anchors = vec![ch.bs_position];
    anchors.extend(ch.segments.iter().map(|s| s.geometry.reference_point));
    anchors
        .iter()
        .map(|a| {
            let g = delay_gradient(&u, a)? * SPEED_OF_LIGHT;
            Ok(DVector::from_fn(position_dim, |i, _| g[i]))
        })
        .collect()
}

/// Prefactor `8 pi^2 df^2 / c^2`.
pub fn efim_prefactor(delta_f: f64) -> f64 {
    8.0 * PI * PI * delta_f * delta_f / (SPEED_OF_LIGHT * SPEED_OF_LIGHT)
}

#[derive(Debug, Clone)]
pub struct ClosedFormEfim {
    pub j_d: DMatrix<f64>,
    /// Sum over RIS segments.
    pub j_r: DMatrix<f64>,
    pub j_r_segments: Vec<DMatrix<f64>>,
    pub efim: DMatrix<f64>,
}

/// Per-path EFIMs `J = (8 pi^2 df^2 / c^2) sum_n n^2 rho_n q q^T` with
/// `rho_n = sum_i |h^H w_{n,i}|^2 / sigma^2`, and `efim = chi J_d + sum_j J_r,j`.
pub fn efim_closed_form(
    ch: &ChannelSet,
    w: &[Vec<DVector<C64>>],
    phase: &PhaseProfile,
    k: usize,
    position_dim: usize,
) -> Result<ClosedFormEfim> {
    let q = path_directions(ch, k, position_dim)?;
    let pre = efim_prefactor(ch.delta_f);
    let mut sd = 0.0;
    let mut sr = vec![0.0; ch.segments.len()];
    for idx in 0..ch.n_subcarriers {
        let n2 = ((idx + 1) * (idx + 1)) as f64;
        let rho_d: f64 = w[idx].iter().map(|wi| ch.h_direct[idx][k].dotc(wi).norm_sqr()).sum();
        sd += n2 * rho_d / ch.noise_power;
        for (j, s) in sr.iter_mut().enumerate() {
            let g = segment_reflected_channel(ch, phase, j, k, idx);
            let rho_r: f64 = w[idx].iter().map(|wi| g.dotc(wi).norm_sqr()).sum();
            *s += n2 * rho_r / ch.noise_power;
        }
    }
    let j_d = &q[0] * q[0].transpose() * (pre * sd);
    let j_r_segments: Vec<DMatrix<f64>> = sr
        .iter()
        .enumerate()
        .map(|(j, s)| &q[j + 1] * q[j + 1].transpose() * (pre * s))
        .collect();
    let j_r = j_r_segments
        .iter()
        .fold(DMatrix::zeros(position_dim, position_dim), |a, b| a + b);
    let efim = &j_d * ch.chi[k] + &j_r;
    Ok(ClosedFormEfim {
        j_d,
        j_r,
        j_r_segments,
        efim,
    })
}

/// Everything produced by the channel-parameter route for one UE.
#[derive(Debug, Clone)]
pub struct FisherBundle {
    pub j_eta: DMatrix<f64>,
    pub j_eta_approx: DMatrix<f64>,
    pub upsilon: DMatrix<f64>,
    pub j_loc: DMatrix<f64>,
    pub efim: DMatrix<f64>,
    pub j_d: DMatrix<f64>,
    pub j_r: DMatrix<f64>,
    /// Nuisance rows with no information (obstructed direct path).
    pub dropped_nuisance: Vec<usize>,
}

/// Channel FIM, Jacobian and Schur-complement EFIM. With `orthogonal` the
/// diagonal approximation of the FIM feeds the Schur step.
pub fn fisher_bundle(
    ch: &ChannelSet,
    w: &[Vec<DVector<C64>>],
    phase: &PhaseProfile,
    k: usize,
    position_dim: usize,
    orthogonal: bool,
) -> Result<FisherBundle> {
    let amps = effective_amplitudes(ch, w, phase, k);
    let omegas: Vec<f64> = (0..ch.n_subcarriers).map(|i| ch.omega(i)).collect();
    let chi = ch.chi[k];
    let mut paths = vec![PathSignal {
        amplitudes: &amps.direct,
        delay: ch.direct[k].delay_s,
        weight: chi,
    }];
    for (j, r) in amps.reflected.iter().enumerate() {
        paths.push(PathSignal {
            amplitudes: r,
            delay: ch.reflected_delay(j, k),
            weight: 1.0,
        });
    }
    let j_eta = if paths.len() == 2 {
        fim_channel(
            &amps.direct,
            &amps.reflected[0],
            chi,
            paths[0].delay,
            paths[1].delay,
            &omegas,
            ch.noise_power,
        )
    } else {
        fim_multipath(&paths, &omegas, ch.noise_power)
    };
    let weights: Vec<f64> = paths.iter().map(|p| p.weight).collect();
    let j_eta_approx = fim_orthogonal(&j_eta, &weights);
    let mut anchors = vec![ch.bs_position];
    anchors.extend(ch.segments.iter().map(|s| s.geometry.reference_point));
    let upsilon = jacobian_multipath(&ch.ue_positions[k], &anchors, position_dim)?;
    let source = if orthogonal { &j_eta_approx } else { &j_eta };
    let res = efim_position(source, &upsilon, position_dim)?;

    // Per-path delay information projected on each path's direction,
    // without the obstruction weight.
    let mut j_d = DMatrix::zeros(position_dim, position_dim);
    let mut j_r = DMatrix::zeros(position_dim, position_dim);
    for (i, path) in paths.iter().enumerate() {
        let info: f64 = path
            .amplitudes
            .iter()
            .zip(&omegas)
            .map(|(a, w)| w * w * a.norm_sqr())
            .sum::<f64>()
            * 2.0
            / ch.noise_power;
        let g = upsilon.view((0, i), (position_dim, 1)).into_owned();
        let part = &g * g.transpose() * info;
        if i == 0 {
            j_d += part;
        } else {
            j_r += part;
        }
    }
    Ok(FisherBundle {
        j_eta,
        j_eta_approx,
        upsilon,
        j_loc: res.j_loc,
        efim: res.efim,
        j_d,
        j_r,
        dropped_nuisance: res.dropped,
    })
}
