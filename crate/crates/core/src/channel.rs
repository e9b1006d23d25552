//! Wideband LoS channel assembly for the direct, RIS-UE and BS-RIS legs.
//!
//! Channels are stored as column vectors `h` so that the scalar response to a
//! beamformer `w` is `h^H w`. For subcarrier `n` (1-based) the direct leg is
//! `h_d^H = g_d e^{-j 2 pi n df tau_d} a_B^H`, the RIS-UE leg has the same
//! form with the RIS steering vector, and the BS-RIS matrix is the rank-one
//! product `g_G e^{-j 2 pi n df tau_G} a_R(arrival) a_B(departure)^H`.
//!
//! A partitioned RIS is treated as a stack of sub-arrays, each with its own
//! reference point, delays, angles and gains.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::SystemConfig;
use crate::error::{CoreError, Result};
use crate::geometry::{angles_to, steering_vector, subcarrier_wavelength, ArrayGeometry, SPEED_OF_LIGHT};
use crate::C64;

/// One point-to-point leg seen from its transmitting end.
#[derive(Debug, Clone, PartialEq)]
pub struct PathParams {
    pub delay_s: f64,
    pub distance_m: f64,
    /// Departure azimuth at the transmitting array.
    pub phi: f64,
    /// Departure elevation at the transmitting array.
    pub theta: f64,
    /// Complex gain per subcarrier, index `n - 1`.
    pub gains: Vec<C64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BsRisLink {
    pub delay_s: f64,
    pub distance_m: f64,
    /// Departure angles at the BS toward the RIS (sub-array) centroid.
    pub departure: (f64, f64),
    /// Arrival angles at the RIS, i.e. the direction from the RIS to the BS.
    pub arrival: (f64, f64),
    pub gains: Vec<C64>,
}

/// A contiguous block of RIS elements acting as one virtual anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct RisSegment {
    pub start: usize,
    pub len: usize,
    pub geometry: ArrayGeometry,
    pub bs_link: BsRisLink,
    /// Segment-to-UE legs, one per UE.
    pub ue_paths: Vec<PathParams>,
}

impl RisSegment {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

#[derive(Debug, Clone)]
pub struct ChannelSet {
    pub n_subcarriers: usize,
    pub n_tx: usize,
    pub n_ris: usize,
    pub n_users: usize,
    pub fc: f64,
    pub delta_f: f64,
    pub noise_power: f64,
    pub chi: Vec<f64>,
    pub bs_position: Vector3<f64>,
    pub ue_positions: Vec<Vector3<f64>>,
    pub bs_geometry: ArrayGeometry,
    /// Wavelength per subcarrier, index `n - 1`.
    pub wavelengths: Vec<f64>,
    /// `h_direct[n - 1][k]`, length `n_tx`.
    pub h_direct: Vec<Vec<DVector<C64>>>,
    /// `h_ris_ue[n - 1][k]`, length `n_ris`.
    pub h_ris_ue: Vec<Vec<DVector<C64>>>,
    /// `g_bs_ris[n - 1]`, `n_ris x n_tx`.
    pub g_bs_ris: Vec<DMatrix<C64>>,
    pub direct: Vec<PathParams>,
    pub segments: Vec<RisSegment>,
}

impl ChannelSet {
    /// Angular frequency offset `2 pi n df` of the subcarrier stored at `idx`.
    pub fn omega(&self, idx: usize) -> f64 {
        2.0 * PI * (idx + 1) as f64 * self.delta_f
    }

    /// Total BS-RIS-UE delay through segment `j`.
    pub fn reflected_delay(&self, j: usize, k: usize) -> f64 {
        self.segments[j].bs_link.delay_s + self.segments[j].ue_paths[k].delay_s
    }

    /// Rows of `G_n` belonging to segment `j`.
    pub fn g_segment(&self, j: usize, idx: usize) -> DMatrix<C64> {
        let s = &self.segments[j];
        self.g_bs_ris[idx].rows(s.start, s.len).into_owned()
    }

    pub fn h_ris_segment(&self, j: usize, idx: usize, k: usize) -> DVector<C64> {
        let s = &self.segments[j];
        self.h_ris_ue[idx][k].rows(s.start, s.len).into_owned()
    }
}

fn fnv1a(words: &[u64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for w in words {
        for b in w.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Random phase in `[0, 2 pi)` fixed by the seed and the link endpoints.
fn link_phase(seed: u64, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let mut words = vec![seed];
    words.extend(a.iter().chain(b.iter()).map(|v| v.to_bits()));
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(&words));
    rng.random::<f64>() * 2.0 * PI
}

fn free_space_gains(wavelengths: &[f64], distance: f64, phase: f64) -> Vec<C64> {
    wavelengths
        .iter()
        .map(|l| C64::from_polar(l / (4.0 * PI * distance), phase))
        .collect()
}

fn leg(seed: u64, from: &Vector3<f64>, to: &Vector3<f64>, wavelengths: &[f64]) -> Result<PathParams> {
    let distance = (to - from).norm();
    let (phi, theta) = angles_to(from, to)?;
    Ok(PathParams {
        delay_s: distance / SPEED_OF_LIGHT,
        distance_m: distance,
        phi,
        theta,
        gains: free_space_gains(wavelengths, distance, link_phase(seed, from, to)),
    })
}

/// Delay phasor `e^{-j omega tau}`.
pub fn delay_phasor(omega: f64, tau: f64) -> C64 {
    C64::from_polar(1.0, -omega * tau)
}

/// Builds every leg for every subcarrier. The obstruction flags are carried
/// along but not applied to `h_direct`.
pub fn assemble_channels(cfg: &SystemConfig) -> Result<ChannelSet> {
    cfg.check()?;
    let n_sub = cfg.n_subcarriers;
    let k_users = cfg.n_users();
    let wavelengths: Vec<f64> = (1..=n_sub)
        .map(|n| subcarrier_wavelength(cfg.fc_hz, cfg.delta_f_hz, n))
        .collect();
    let bs = cfg.bs_geometry();
    let ris = cfg.ris_geometry();
    let p = bs.reference_point;
    let ues: Vec<Vector3<f64>> = (0..k_users).map(|k| cfg.ue_position(k)).collect();
    for (k, u) in ues.iter().enumerate() {
        if (u - p).norm() == 0.0 || (u - ris.reference_point).norm() == 0.0 {
            return Err(CoreError::InvalidArgument(format!(
                "UE {k} is collocated with the BS or the RIS"
            )));
        }
    }

    let direct: Vec<PathParams> = ues
        .iter()
        .map(|u| leg(cfg.seed, &p, u, &wavelengths))
        .collect::<Result<_>>()?;

    let parts = cfg.ris.partitions;
    let cols_per = ris.cols / parts;
    let mut segments = Vec::with_capacity(parts);
    for j in 0..parts {
        let geom = ris.column_block(j * cols_per, (j + 1) * cols_per)?;
        let r = geom.reference_point;
        let dist = (r - p).norm();
        let bs_link = BsRisLink {
            delay_s: dist / SPEED_OF_LIGHT,
            distance_m: dist,
            departure: angles_to(&p, &r)?,
            arrival: angles_to(&r, &p)?,
            gains: free_space_gains(&wavelengths, dist, link_phase(cfg.seed, &p, &r)),
        };
        let ue_paths = ues
            .iter()
            .map(|u| leg(cfg.seed, &r, u, &wavelengths))
            .collect::<Result<_>>()?;
        segments.push(RisSegment {
            start: j * geom.n_elements(),
            len: geom.n_elements(),
            geometry: geom,
            bs_link,
            ue_paths,
        });
    }

    let n_tx = bs.n_elements();
    let n_ris = ris.n_elements();
    let mut h_direct = Vec::with_capacity(n_sub);
    let mut h_ris_ue = Vec::with_capacity(n_sub);
    let mut g_bs_ris = Vec::with_capacity(n_sub);
    for (idx, &lambda) in wavelengths.iter().enumerate() {
        let omega = 2.0 * PI * (idx + 1) as f64 * cfg.delta_f_hz;
        let hd: Vec<DVector<C64>> = direct
            .iter()
            .map(|d| {
                let coef = (d.gains[idx] * delay_phasor(omega, d.delay_s)).conj();
                steering_vector(&bs, d.phi, d.theta, lambda) * coef
            })
            .collect();
        let mut hr: Vec<DVector<C64>> = vec![DVector::zeros(n_ris); k_users];
        let mut g = DMatrix::zeros(n_ris, n_tx);
        for s in &segments {
            for (k, path) in s.ue_paths.iter().enumerate() {
                let coef = (path.gains[idx] * delay_phasor(omega, path.delay_s)).conj();
                let a = steering_vector(&s.geometry, path.phi, path.theta, lambda) * coef;
                hr[k].rows_mut(s.start, s.len).copy_from(&a);
            }
            let l = &s.bs_link;
            let a_r = steering_vector(&s.geometry, l.arrival.0, l.arrival.1, lambda);
            let a_b = steering_vector(&bs, l.departure.0, l.departure.1, lambda);
            let coef = l.gains[idx] * delay_phasor(omega, l.delay_s);
            g.rows_mut(s.start, s.len).copy_from(&(a_r * a_b.adjoint() * coef));
        }
        h_direct.push(hd);
        h_ris_ue.push(hr);
        g_bs_ris.push(g);
    }

    Ok(ChannelSet {
        n_subcarriers: n_sub,
        n_tx,
        n_ris,
        n_users: k_users,
        fc: cfg.fc_hz,
        delta_f: cfg.delta_f_hz,
        noise_power: cfg.noise_power(),
        chi: (0..k_users).map(|k| cfg.chi(k)).collect(),
        bs_position: p,
        ue_positions: ues,
        bs_geometry: bs,
        wavelengths,
        h_direct,
        h_ris_ue,
        g_bs_ris,
        direct,
        segments,
    })
}
